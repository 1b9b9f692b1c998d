#include "prolip/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace prolip {

namespace {

constexpr double kLn2 = 0.6931471805599453094172321214581766;
constexpr double kLnPi = 1.1447298858494001741434273513530587;

struct IncDimGrad {
  double d_mu1 = 0.0, d_mu2 = 0.0;
  double d_v1 = 0.0, d_v2 = 0.0;  // w.r.t. log-variances
};

// Per-dimension log integral of p1^2 p2 (constant omitted), with the
// eps-stabilized precisions q = eps / sigma^2 inside A, B, C. Optionally
// fills the partial derivatives w.r.t. mu1, mu2 and the log-variances.
double inc_dim(double mu1, double var1, double mu2, double var2, double eps,
               InclusionForm form, IncDimGrad* grad) {
  const double q1 = eps / var1;
  const double q2 = eps / var2;
  const double A = q1 + 0.5 * q2;
  const double B = 2.0 * q1 * mu1 + q2 * mu2;
  const double C = q1 * mu1 * mu1 + 0.5 * q2 * mu2 * mu2;
  const double log_coeff1 = form == InclusionForm::derived ? -1.0 : -2.0;
  const double log_coeff2 = form == InclusionForm::derived ? -0.5 : -1.0;
  const double m = log_coeff1 * std::log(var1) + log_coeff2 * std::log(var2) -
                   0.5 * std::log(A) + B * B / (4.0 * A) - C;
  if (grad != nullptr) {
    const double B_over_2A = B / (2.0 * A);
    const double dm_dA = -0.5 / A - B * B / (4.0 * A * A);
    const double dm_dB = B_over_2A;
    grad->d_mu1 = dm_dB * 2.0 * q1 - 2.0 * q1 * mu1;
    grad->d_mu2 = dm_dB * q2 - q2 * mu2;
    // d q / d var = -q / var; chain everything through A, B, C plus the
    // direct log-variance terms, then multiply by var for d/d log-var.
    const double dA_dw1 = -q1 / var1;
    const double dB_dw1 = -2.0 * mu1 * q1 / var1;
    const double dC_dw1 = -mu1 * mu1 * q1 / var1;
    const double dm_dw1 = log_coeff1 / var1 + dm_dA * dA_dw1 + dm_dB * dB_dw1 - dC_dw1;
    grad->d_v1 = dm_dw1 * var1;
    const double dA_dw2 = -0.5 * q2 / var2;
    const double dB_dw2 = -mu2 * q2 / var2;
    const double dC_dw2 = -0.5 * mu2 * mu2 * q2 / var2;
    const double dm_dw2 = log_coeff2 / var2 + dm_dA * dA_dw2 + dm_dB * dB_dw2 - dC_dw2;
    grad->d_v2 = dm_dw2 * var2;
  }
  return m;
}

}  // namespace

MatchLabel match_label_from_int(int y) {
  if (y == 1) return MatchLabel::positive;
  if (y == -1) return MatchLabel::negative;
  throw InvalidArgument("match label must be +1 or -1, got " + std::to_string(y));
}

LossParams LossParams::defaults() {
  LossParams p;
  p.eps_inc = eps_from_log(-10.0);
  return p;
}

double LossParams::eps_from_log(double eps_log) { return std::exp(eps_log); }

void LossParams::validate() const {
  if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("LossParams: a must be > 0");
  if (!std::isfinite(b)) throw InvalidArgument("LossParams: b must be finite");
  if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("LossParams: c must be > 0");
  if (!(eps_inc > 0.0) || !std::isfinite(eps_inc)) {
    throw InvalidArgument("LossParams: eps_inc must be > 0");
  }
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0) || !(beta >= 0.0)) {
    throw InvalidArgument("LossParams: alpha1, alpha2, beta must be >= 0");
  }
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double ppcl(const GaussianEmbedding& z_v, const GaussianEmbedding& z_t, MatchLabel y, double a,
            double b) {
  if (!(a > 0.0)) throw InvalidArgument("ppcl: a must be > 0");
  const double s = csd_similarity(z_v, z_t);
  return softplus(static_cast<double>(to_int(y)) * (-a * s + b));
}

double inc_measure(const GaussianEmbedding& z1, const GaussianEmbedding& z2, double eps_inc,
                   InclusionForm form) {
  if (z1.dim() != z2.dim()) throw InvalidArgument("inc_measure: dimension mismatch");
  if (!(eps_inc > 0.0)) throw InvalidArgument("inc_measure: eps_inc must be > 0");
  double total = 0.0;
  for (std::size_t d = 0; d < z1.dim(); ++d) {
    const double m = inc_dim(z1.mu()[d], std::exp(z1.log_var()[d]), z2.mu()[d],
                             std::exp(z2.log_var()[d]), eps_inc, form, nullptr);
    if (!std::isfinite(m)) {
      throw NumericError("inc_measure: non-finite value at dimension " + std::to_string(d));
    }
    total += m;
  }
  return total;
}

double inc_measure_omitted_constant() { return -1.5 * kLn2 - kLnPi; }

double inclusion_hypothesis(const GaussianEmbedding& z1, const GaussianEmbedding& z2,
                            double eps_inc, InclusionForm form) {
  return inc_measure(z1, z2, eps_inc, form) - inc_measure(z2, z1, eps_inc, form);
}

double inclusion_loss(const GaussianEmbedding& z1, const GaussianEmbedding& z2,
                      const LossParams& params) {
  params.validate();
  return softplus(-params.c * inclusion_hypothesis(z1, z2, params.eps_inc, params.form));
}

double vib_loss(const GaussianEmbedding& z) {
  double s = 0.0;
  for (std::size_t d = 0; d < z.dim(); ++d) {
    const double lv = z.log_var()[d];
    s += 0.5 * (z.mu()[d] * z.mu()[d] + std::exp(lv) - lv - 1.0);
  }
  return s;
}

void PairBatch::validate() const {
  const std::size_t n = items.size();
  if (n == 0) throw InvalidArgument("PairBatch: no items");
  const std::size_t dim = items.front().raw_mu.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& it = items[i];
    if (it.raw_mu.empty() || it.raw_mu.size() != it.log_var.size() || it.raw_mu.size() != dim) {
      throw InvalidArgument("PairBatch: item " + std::to_string(i) + " has inconsistent dims");
    }
    double norm_sq = 0.0;
    for (double x : it.raw_mu) {
      if (!std::isfinite(x)) {
        throw InvalidArgument("PairBatch: item " + std::to_string(i) + " has non-finite raw_mu");
      }
      norm_sq += x * x;
    }
    if (!(norm_sq > 0.0)) {
      throw InvalidArgument("PairBatch: item " + std::to_string(i) + " has zero raw_mu");
    }
    for (double v : it.log_var) {
      if (!std::isfinite(v)) {
        throw InvalidArgument("PairBatch: item " + std::to_string(i) + " has non-finite log_var");
      }
    }
  }
  auto check_index = [n](std::size_t idx, const char* where) {
    if (idx >= n) {
      throw InvalidArgument(std::string("PairBatch: ") + where + " index " +
                            std::to_string(idx) + " out of range");
    }
  };
  for (std::size_t i : images) check_index(i, "image");
  for (std::size_t i : texts) check_index(i, "text");
  for (std::size_t i : vib_items) check_index(i, "vib");
  for (const auto& [v, t] : matched) {
    check_index(v, "matched");
    check_index(t, "matched");
  }
  for (const auto& [o, m] : masked_links) {
    check_index(o, "masked");
    check_index(m, "masked");
  }
  if (labels.size() != images.size()) {
    throw InvalidArgument("PairBatch: label rows != image count");
  }
  for (const auto& row : labels) {
    if (row.size() != texts.size()) throw InvalidArgument("PairBatch: label cols != text count");
    for (std::int8_t y : row) {
      if (y != 1 && y != -1) throw InvalidArgument("PairBatch: labels must be +1 or -1");
    }
  }
}

namespace {

struct ItemState {
  std::vector<double> mu;   // normalized
  std::vector<double> var;  // exp(log_var)
  double sum_var = 0.0;
  double raw_norm = 0.0;
};

// Shared forward/backward engine; gradient buffers are filled only when
// `grad` is non-null.
ObjectiveValue evaluate(const PairBatch& batch, const LossParams& params,
                        ObjectiveGradient* grad) {
  params.validate();
  batch.validate();
  const std::size_t n = batch.items.size();
  const std::size_t dim = batch.items.front().raw_mu.size();

  std::vector<ItemState> st(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& it = batch.items[i];
    ItemState& s = st[i];
    s.mu.resize(dim);
    s.var.resize(dim);
    double norm_sq = 0.0;
    for (double x : it.raw_mu) norm_sq += x * x;
    s.raw_norm = std::sqrt(norm_sq);
    for (std::size_t d = 0; d < dim; ++d) {
      s.mu[d] = it.raw_mu[d] / s.raw_norm;
      s.var[d] = std::exp(it.log_var[d]);
      s.sum_var += s.var[d];
    }
  }

  std::vector<std::vector<double>> g_mu, g_v;
  std::vector<double> ppcl_var_coeff;  // per item, times var[d] at the end
  if (grad != nullptr) {
    g_mu.assign(n, std::vector<double>(dim, 0.0));
    g_v.assign(n, std::vector<double>(dim, 0.0));
    ppcl_var_coeff.assign(n, 0.0);
    grad->d_a = 0.0;
    grad->d_b = 0.0;
  }

  ObjectiveValue out;

  // Contrastive grid over images x texts.
  for (std::size_t r = 0; r < batch.images.size(); ++r) {
    const std::size_t vi = batch.images[r];
    for (std::size_t cidx = 0; cidx < batch.texts.size(); ++cidx) {
      const std::size_t ti = batch.texts[cidx];
      const double y = static_cast<double>(batch.labels[r][cidx]);
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += st[vi].mu[d] * st[ti].mu[d];
      const double s = dot - 0.5 * (st[vi].sum_var + st[ti].sum_var);
      const double logit = y * (-params.a * s + params.b);
      out.ppcl += softplus(logit);
      if (grad != nullptr) {
        const double sl = sigmoid(logit);
        const double mu_coeff = sl * (-params.a) * y;
        for (std::size_t d = 0; d < dim; ++d) {
          g_mu[vi][d] += mu_coeff * st[ti].mu[d];
          g_mu[ti][d] += mu_coeff * st[vi].mu[d];
        }
        const double vc = sl * y * params.a * 0.5;
        ppcl_var_coeff[vi] += vc;
        ppcl_var_coeff[ti] += vc;
        grad->d_a += sl * y * (-s);
        grad->d_b += sl * y;
      }
    }
  }

  // One ordered inclusion pair z1-in-z2; returns the weighted loss and
  // accumulates weighted gradients.
  std::vector<double> h_mu1(dim), h_v1(dim), h_mu2(dim), h_v2(dim);
  auto inclusion_pair = [&](std::size_t i1, std::size_t i2, double weight,
                            const char* term) -> double {
    double H = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      IncDimGrad g12, g21;
      const double m12 = inc_dim(st[i1].mu[d], st[i1].var[d], st[i2].mu[d], st[i2].var[d],
                                 params.eps_inc, params.form, grad ? &g12 : nullptr);
      const double m21 = inc_dim(st[i2].mu[d], st[i2].var[d], st[i1].mu[d], st[i1].var[d],
                                 params.eps_inc, params.form, grad ? &g21 : nullptr);
      const double h = m12 - m21;
      if (!std::isfinite(h)) {
        throw NumericError(std::string(term) + ": non-finite hypothesis at dimension " +
                           std::to_string(d));
      }
      H += h;
      if (grad != nullptr) {
        h_mu1[d] = g12.d_mu1 - g21.d_mu2;
        h_v1[d] = g12.d_v1 - g21.d_v2;
        h_mu2[d] = g12.d_mu2 - g21.d_mu1;
        h_v2[d] = g12.d_v2 - g21.d_v1;
      }
    }
    const double loss = weight * softplus(-params.c * H);
    if (grad != nullptr) {
      const double f = weight * (-params.c) * sigmoid(-params.c * H);
      for (std::size_t d = 0; d < dim; ++d) {
        g_mu[i1][d] += f * h_mu1[d];
        g_v[i1][d] += f * h_v1[d];
        g_mu[i2][d] += f * h_mu2[d];
        g_v[i2][d] += f * h_v2[d];
      }
    }
    return loss;
  };

  if (params.alpha1 > 0.0) {
    for (const auto& [v, t] : batch.matched) {
      out.inc_vt += inclusion_pair(v, t, params.alpha1, "inc_vt");
    }
  }
  if (params.alpha2 > 0.0) {
    for (const auto& [orig, masked] : batch.masked_links) {
      out.inc_mask += inclusion_pair(orig, masked, params.alpha2, "inc_mask");
    }
  }

  if (params.beta > 0.0) {
    for (std::size_t i : batch.vib_items) {
      double kl = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double lv = batch.items[i].log_var[d];
        kl += 0.5 * (st[i].mu[d] * st[i].mu[d] + st[i].var[d] - lv - 1.0);
        if (grad != nullptr) {
          g_mu[i][d] += params.beta * st[i].mu[d];
          g_v[i][d] += params.beta * 0.5 * (st[i].var[d] - 1.0);
        }
      }
      out.vib += params.beta * kl;
      if (*std::min_element(batch.items[i].log_var.begin(), batch.items[i].log_var.end()) <=
          GaussianEmbedding::kDefaultLogVarFloor) {
        out.warnings.push_back("vib: item " + std::to_string(i) + " has floor-level variance");
      }
    }
  }

  out.total = out.ppcl + out.inc_vt + out.inc_mask + out.vib;
  if (!std::isfinite(out.total)) {
    const char* term = !std::isfinite(out.ppcl)      ? "ppcl"
                       : !std::isfinite(out.inc_vt)  ? "inc_vt"
                       : !std::isfinite(out.inc_mask) ? "inc_mask"
                                                      : "vib";
    throw NumericError(std::string("total_objective: non-finite ") + term + " term");
  }

  if (grad != nullptr) {
    grad->d_raw_mu.assign(n, std::vector<double>(dim, 0.0));
    grad->d_log_var.assign(n, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        g_v[i][d] += ppcl_var_coeff[i] * st[i].var[d];
        grad->d_log_var[i][d] = g_v[i][d];
      }
      // Through mu = r / ||r||: dL/dr = (g - (mu.g) mu) / ||r||.
      double mu_dot_g = 0.0;
      for (std::size_t d = 0; d < dim; ++d) mu_dot_g += st[i].mu[d] * g_mu[i][d];
      for (std::size_t d = 0; d < dim; ++d) {
        grad->d_raw_mu[i][d] = (g_mu[i][d] - mu_dot_g * st[i].mu[d]) / st[i].raw_norm;
      }
    }
  }
  return out;
}

}  // namespace

ObjectiveValue total_objective(const PairBatch& batch, const LossParams& params) {
  return evaluate(batch, params, nullptr);
}

ObjectiveGradient objective_grad(const PairBatch& batch, const LossParams& params) {
  ObjectiveGradient grad;
  evaluate(batch, params, &grad);
  return grad;
}

}  // namespace prolip
