#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "prolip/errors.hpp"

namespace prolip {

// Per-class mixing proportions over a prompt set. Entries are >= 0 and sum
// to 1 within 1e-8; validated at construction, immutable afterwards.
class PromptWeights {
 public:
  static constexpr double kSimplexTol = 1e-8;

  PromptWeights(std::string class_id, std::vector<double> pi);

  static PromptWeights uniform(std::string class_id, std::size_t n);

  const std::string& class_id() const noexcept { return class_id_; }
  const std::vector<double>& pi() const noexcept { return pi_; }
  std::size_t size() const noexcept { return pi_.size(); }
  double operator[](std::size_t i) const { return pi_[i]; }

 private:
  std::string class_id_;
  std::vector<double> pi_;
};

}  // namespace prolip
