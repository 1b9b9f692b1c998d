#pragma once

// Line-delimited persistence formats, content digests and run manifests.
// Every file starts with a one-line header carrying the format name and
// version; reals are serialized as shortest round-trip decimals so that
// write -> read -> write is byte-identical.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prolip/gaussian.hpp"
#include "prolip/prompt_weights.hpp"
#include "prolip/synth.hpp"

namespace prolip::io {

inline constexpr const char* kFormatVersion = "1.0";
inline constexpr int kFormatMajor = 1;

std::string format_double(double v);  // shortest decimal that round-trips

struct EmbeddingRecord {
  GaussianEmbedding embedding;
  Modality modality = Modality::image;
};

void save_embeddings(const std::vector<EmbeddingRecord>& records, const std::string& path);
std::vector<EmbeddingRecord> load_embeddings(const std::string& path);

void save_corpus(const synth::SyntheticCorpus& corpus, const std::string& path);
synth::SyntheticCorpus load_corpus(const std::string& path);

void save_weights(const std::vector<PromptWeights>& tables, const std::string& path);
std::vector<PromptWeights> load_weights(const std::string& path);

// Whole-file write under an exclusive advisory lock.
void write_file_locked(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// FNV-1a 64-bit digest, hex encoded.
std::string fnv1a64_hex(const std::string& bytes);
std::string digest_file(const std::string& path);

struct RunManifest {
  std::vector<std::string> command;
  std::string config_json;  // serialized config snapshot
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_digests;   // path as given -> digest
  std::map<std::string, std::string> output_digests;

  void add_input(const std::string& path);
  void add_output(const std::string& path);
  void write(const std::string& path) const;
};

}  // namespace prolip::io
