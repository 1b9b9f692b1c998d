#include "prolip/io.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace prolip::io {

namespace {

using nlohmann::json;

json parse_line(const std::string& line, long line_no) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
  }
}

void check_header(const json& header, const std::string& expected_format, long line_no) {
  if (!header.is_object() || !header.contains("format") || !header.contains("version")) {
    throw ParseError("missing format header", line_no);
  }
  if (header.at("format").get<std::string>() != expected_format) {
    throw ParseError("unexpected format '" + header.at("format").get<std::string>() +
                         "', wanted '" + expected_format + "'",
                     line_no);
  }
  const std::string version = header.at("version").get<std::string>();
  const auto dot = version.find('.');
  int major = -1;
  std::from_chars(version.data(), version.data() + (dot == std::string::npos ? version.size() : dot),
                  major);
  if (major != kFormatMajor) {
    throw ParseError("unsupported major version '" + version + "'", line_no);
  }
}

std::string header_line(const std::string& format) {
  json h;
  h["format"] = format;
  h["version"] = kFormatVersion;
  return h.dump();
}

template <typename T>
T get_field(const json& rec, const char* key, long line_no) {
  if (!rec.contains(key)) throw ParseError(std::string("missing field '") + key + "'", line_no);
  try {
    return rec.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + key + "' has the wrong type", line_no);
  }
}

std::vector<std::size_t> attr_indices(const synth::CorpusItem& item) {
  std::vector<std::size_t> idx;
  for (std::size_t a = 0; a < item.attributes.size(); ++a) {
    if (item.attributes[a]) idx.push_back(a);
  }
  return idx;
}

synth::CorpusItem item_from_record(const json& rec, int n_attributes, long line_no) {
  synth::CorpusItem item;
  item.id = get_field<std::string>(rec, "id", line_no);
  item.attributes.assign(static_cast<std::size_t>(n_attributes), 0);
  for (const auto idx : get_field<std::vector<std::size_t>>(rec, "attributes", line_no)) {
    if (idx >= item.attributes.size()) throw ParseError("attribute index out of range", line_no);
    item.attributes[idx] = 1;
  }
  return item;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_file_locked(const std::string& path, const std::string& content) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw InvalidArgument("cannot open '" + path + "' for writing");
  ::flock(fd, LOCK_EX);
  std::size_t written = 0;
  while (written < content.size()) {
    const ssize_t r = ::write(fd, content.data() + written, content.size() - written);
    if (r < 0) {
      ::flock(fd, LOCK_UN);
      ::close(fd);
      throw NumericError("short write to '" + path + "'");
    }
    written += static_cast<std::size_t>(r);
  }
  ::flock(fd, LOCK_UN);
  ::close(fd);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string digest_file(const std::string& path) { return fnv1a64_hex(read_file(path)); }

void save_embeddings(const std::vector<EmbeddingRecord>& records, const std::string& path) {
  std::string out = header_line("prolip-embeddings") + "\n";
  for (const auto& rec : records) {
    json j;
    j["id"] = rec.embedding.id();
    j["mu"] = rec.embedding.mu();
    j["log_var"] = rec.embedding.log_var();
    j["normalized"] = rec.embedding.is_normalized();
    j["modality"] = to_string(rec.modality);
    out += j.dump() + "\n";
  }
  write_file_locked(path, out);
}

std::vector<EmbeddingRecord> load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<EmbeddingRecord> records;
  std::string line;
  long line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json rec = parse_line(line, line_no);
    if (line_no == 1) {
      check_header(rec, "prolip-embeddings", line_no);
      continue;
    }
    auto mu = get_field<std::vector<double>>(rec, "mu", line_no);
    auto log_var = get_field<std::vector<double>>(rec, "log_var", line_no);
    if (mu.size() != log_var.size()) {
      throw ParseError("mu and log_var lengths differ", line_no);
    }
    if (records.empty()) {
      dim = mu.size();
    } else if (mu.size() != dim) {
      throw ParseError("dimension " + std::to_string(mu.size()) + " disagrees with " +
                           std::to_string(dim),
                       line_no);
    }
    const auto id = get_field<std::string>(rec, "id", line_no);
    const bool normalized = get_field<bool>(rec, "normalized", line_no);
    const Modality modality = [&] {
      try {
        return modality_from_string(get_field<std::string>(rec, "modality", line_no));
      } catch (const InvalidArgument& e) {
        throw ParseError(e.what(), line_no);
      }
    }();
    try {
      // Floor below the stored minimum so loading never alters values.
      const double floor =
          std::min(GaussianEmbedding::kDefaultLogVarFloor,
                   log_var.empty() ? 0.0
                                   : *std::min_element(log_var.begin(), log_var.end()) - 1.0);
      records.push_back({GaussianEmbedding::from_parts(id, std::move(mu), std::move(log_var),
                                                       normalized, floor),
                         modality});
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return records;
}

void save_corpus(const synth::SyntheticCorpus& corpus, const std::string& path) {
  std::string out = header_line("prolip-corpus") + "\n";
  {
    json meta;
    meta["kind"] = "meta";
    meta["n_attributes"] = corpus.n_attributes;
    out += meta.dump() + "\n";
  }
  auto emit_items = [&out](const std::vector<synth::CorpusItem>& items, const char* kind,
                           const char* modality) {
    for (const auto& item : items) {
      json j;
      j["kind"] = kind;
      if (modality != nullptr) j["modality"] = modality;
      j["id"] = item.id;
      j["attributes"] = attr_indices(item);
      out += j.dump() + "\n";
    }
  };
  emit_items(corpus.images, "image", nullptr);
  emit_items(corpus.texts, "text", nullptr);
  emit_items(corpus.masked_images, "masked", "image");
  emit_items(corpus.masked_texts, "masked", "text");
  for (const auto& link : corpus.masked_links) {
    json j;
    j["kind"] = "link";
    j["orig"] = link.orig_id;
    j["masked"] = link.masked_id;
    j["modality"] = to_string(link.modality);
    out += j.dump() + "\n";
  }
  write_file_locked(path, out);
}

synth::SyntheticCorpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  synth::SyntheticCorpus corpus;
  std::string line;
  long line_no = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json rec = parse_line(line, line_no);
    if (line_no == 1) {
      check_header(rec, "prolip-corpus", line_no);
      continue;
    }
    const auto kind = get_field<std::string>(rec, "kind", line_no);
    if (kind == "meta") {
      corpus.n_attributes = get_field<int>(rec, "n_attributes", line_no);
      if (corpus.n_attributes <= 0) throw ParseError("n_attributes must be positive", line_no);
      have_meta = true;
    } else if (kind == "image" || kind == "text") {
      if (!have_meta) throw ParseError("item before meta record", line_no);
      auto& sink = kind == "image" ? corpus.images : corpus.texts;
      sink.push_back(item_from_record(rec, corpus.n_attributes, line_no));
    } else if (kind == "masked") {
      if (!have_meta) throw ParseError("item before meta record", line_no);
      const auto modality = get_field<std::string>(rec, "modality", line_no);
      auto& sink = modality == "image" ? corpus.masked_images : corpus.masked_texts;
      sink.push_back(item_from_record(rec, corpus.n_attributes, line_no));
    } else if (kind == "link") {
      synth::MaskedLink link;
      link.orig_id = get_field<std::string>(rec, "orig", line_no);
      link.masked_id = get_field<std::string>(rec, "masked", line_no);
      try {
        link.modality = modality_from_string(get_field<std::string>(rec, "modality", line_no));
      } catch (const InvalidArgument& e) {
        throw ParseError(e.what(), line_no);
      }
      corpus.masked_links.push_back(std::move(link));
    } else {
      throw ParseError("unknown record kind '" + kind + "'", line_no);
    }
  }
  if (!have_meta && line_no > 0) throw ParseError("corpus file lacks a meta record");
  if (have_meta) {
    corpus.match = synth::containment_match(corpus.images, corpus.texts);
    try {
      corpus.validate();
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what());
    }
  }
  return corpus;
}

void save_weights(const std::vector<PromptWeights>& tables, const std::string& path) {
  std::string out = header_line("prolip-weights") + "\n";
  for (const auto& w : tables) {
    json j;
    j["class_id"] = w.class_id();
    j["pi"] = w.pi();
    out += j.dump() + "\n";
  }
  write_file_locked(path, out);
}

std::vector<PromptWeights> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<PromptWeights> tables;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json rec = parse_line(line, line_no);
    if (line_no == 1) {
      check_header(rec, "prolip-weights", line_no);
      continue;
    }
    try {
      tables.emplace_back(get_field<std::string>(rec, "class_id", line_no),
                          get_field<std::vector<double>>(rec, "pi", line_no));
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return tables;
}

void RunManifest::add_input(const std::string& path) { input_digests[path] = digest_file(path); }

void RunManifest::add_output(const std::string& path) { output_digests[path] = digest_file(path); }

void RunManifest::write(const std::string& path) const {
  json j;
  j["format"] = "prolip-manifest";
  j["version"] = kFormatVersion;
  j["command"] = command;
  j["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  j["seed"] = seed;
  j["inputs"] = input_digests;
  j["outputs"] = output_digests;
  write_file_locked(path, j.dump(2) + "\n");
}

}  // namespace prolip::io
