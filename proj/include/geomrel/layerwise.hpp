#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "geomrel/bundle.hpp"
#include "geomrel/corpus.hpp"
#include "geomrel/geometry.hpp"

namespace geomrel {

// Per-layer answerability gap. Index 0 is the embedding layer.
struct LayerProfile {
  std::string model_id;
  std::vector<double> delta_per_layer;
  std::vector<double> dist_a_per_layer;
  std::vector<double> dist_u_per_layer;
  std::size_t peak_layer = 0;  // argmax delta, earliest layer on ties
  double peak_delta = 0.0;
  double last_layer_delta = 0.0;
  // The gap at the last layer is smaller than at the peak mostly because the
  // A distance rose, not because the U distance fell.
  bool narrows_from_below = false;

  std::size_t n_layers() const noexcept { return delta_per_layer.size(); }

  // model,layer,delta,dist_A,dist_U
  void write_csv(std::ostream& out, bool header = true) const;
};

// For every layer: centre the context rows at that layer, score the prompts of
// `form` against the layer's A-only centroid and record mean U - mean A.
// `records[i]` describes bundle row i. `context_rows` selects the prompts that
// share one centring context (empty: all rows).
LayerProfile layer_profile(const EmbeddingBundle& bundle, std::span<const PromptRecord> records, Form form,
                           std::span<const std::size_t> context_rows = {},
                           const std::string& context = {}, unsigned threads = 0);

}  // namespace geomrel
