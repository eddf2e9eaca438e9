#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geomrel/types.hpp"

namespace geomrel {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LayerView = Eigen::Map<const RowMatrixXf, Eigen::Unaligned, Eigen::OuterStride<>>;

// Mean-pooled hidden states for every prompt at every layer (layer 0 is the
// embedding layer). Storage is row-major (prompt, layer, dim).
struct EmbeddingBundle {
  std::string model_id;
  std::vector<std::string> prompt_ids;
  std::size_t n_layers = 1;
  std::size_t dim = 1;
  std::vector<float> data;

  std::size_t n_prompts() const noexcept { return prompt_ids.size(); }

  // (n_prompts, dim) strided view of one layer.
  LayerView layer(std::size_t l) const;
  LayerView last_layer() const { return layer(n_layers - 1); }

  // Throws Shape / NonFinite / Validation errors when an invariant is broken.
  void check() const;
};

struct BundlePaths {
  std::filesystem::path manifest;
  std::filesystem::path payload;
};

// `runs/llama`, `runs/llama.manifest` and `runs/llama.bin` all name the pair
// {runs/llama.manifest, runs/llama.bin}.
BundlePaths bundle_paths(const std::filesystem::path& path);

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path);
EmbeddingBundle read_bundle(const std::filesystem::path& path);

std::string sha256_hex(const void* data, std::size_t size);

struct SynthBundle {
  EmbeddingBundle bundle;
  std::vector<Label> labels;
};

// Model-free test bundle with MATH-style prompt ids (m01a, m01u, ...).
// A rows are i.i.d. N(0, 1); each U row is its partner A row plus
// shift * u for a fixed unit direction u (the same at every layer).
SynthBundle synth_bundle(std::uint64_t seed, std::size_t n_pairs, std::size_t n_layers,
                         std::size_t dim, double shift, const std::string& model_id = "synth");

struct GenerationEntry {
  std::string greedy_output;
  std::vector<std::string> samples;
  double temperature = 0.0;
  std::size_t k = 0;
};

struct GenerationLog {
  std::string model_id;
  double temperature = 0.7;
  std::map<std::string, GenerationEntry> entries;

  // k = 5 samples at temperature 0.7 for every prompt.
  bool sc_eligible() const;
};

// One record per line, `prompt_id|kind|index|text`, kind in {greedy, sample};
// backslash, newline and carriage return in text are escaped. Header comments
// `# model_id=...` and `# temperature=...` carry log-level metadata.
GenerationLog parse_generation_log(std::istream& in, std::string_view source = "<stream>");
GenerationLog read_generation_log(const std::filesystem::path& path);
void write_generation_log(const GenerationLog& log, std::ostream& out);

std::string escape_text(std::string_view text);
std::string unescape_text(std::string_view text);

}  // namespace geomrel
