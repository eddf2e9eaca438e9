#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geomrel/baselines.hpp"
#include "geomrel/bundle.hpp"
#include "geomrel/corpus.hpp"
#include "geomrel/geometry.hpp"

namespace geomrel {

using ModelPath = std::pair<std::string, std::filesystem::path>;

// Parses `model=path`.
ModelPath parse_model_path(const std::string& arg);

struct RunConfig {
  std::vector<std::filesystem::path> corpus;
  std::vector<ModelPath> bundles;      // a model may appear more than once
  std::vector<ModelPath> generations;  // at most one log per model
  std::size_t n_perm = 5000;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  ContextPolicy context = ContextPolicy::Joint;
  std::optional<std::filesystem::path> lexicon;
  std::optional<ScVariant> sc_variant;  // empty: per-form default
  bool sc_f1 = false;
  unsigned threads = 0;

  std::vector<std::string> models() const;  // first-appearance order
};

// Last-layer representations of one model restricted to one centring context.
struct ContextSlice {
  std::string context_id;
  RowMatrix<double> vectors;
  std::vector<PromptRecord> records;
};

struct LoadedModel {
  std::string model_id;
  std::vector<EmbeddingBundle> bundles;
  std::vector<std::vector<PromptRecord>> records;  // aligned with each bundle's rows

  std::vector<ContextSlice> last_layer_contexts(ContextPolicy policy) const;
};

LoadedModel load_model(const RunConfig& config, const std::string& model_id, const Corpus& corpus);

// One (form, model) row of the geometry report.
struct AnalysisRow {
  Form form = Form::Math;
  std::string model;
  std::size_t n_pairs = 0;
  double dist_a = 0.0;
  double dist_u = 0.0;
  double delta = 0.0;
  double p_value = 1.0;
  double cohens_d = 0.0;
  double auc = 0.5;
  double f1 = 0.0;
  double threshold = 0.0;
};

struct BaselineRow {
  Form form = Form::Math;
  std::string model;
  ScVariant sc_variant = ScVariant::AnswerDisagree;
  double sc_auc = 0.5;
  std::optional<double> sc_f1;
  double refusal_auc = 0.5;
  double refusal_f1 = 0.0;
};

struct AnalysisReport {
  std::vector<AnalysisRow> rows;
  std::vector<BaselineRow> baselines;
  ScoreTable scores;
  std::vector<std::pair<std::string, SCScore>> sc_scores;  // (model, score)
};

AnalysisReport analyze(const RunConfig& config, const Corpus& corpus);

// Commands write into config.out and return a process exit status. Data
// errors propagate as geomrel::Error; run_cli maps them to exit codes.
int cmd_validate(const RunConfig& config, std::ostream& log);
int cmd_analyze(const RunConfig& config, std::ostream& log);

struct LayerwiseOptions {
  Form form = Form::Math;
  std::vector<std::string> prompt_ids;  // explicit subset
  std::size_t first_pairs = 0;          // or: first N pairs of `form` in corpus order
};
int cmd_layerwise(const RunConfig& config, const LayerwiseOptions& options, std::ostream& log);

int cmd_pca(const RunConfig& config, const std::vector<Form>& forms, std::ostream& log);

struct ConsensusOptions {
  std::optional<std::filesystem::path> annotations;
  std::optional<std::filesystem::path> categories;
  double threshold = 1.2;
};
int cmd_consensus(const RunConfig& config, const ConsensusOptions& options, std::ostream& log);

struct SynthOptions {
  std::uint64_t seed = 1;
  std::size_t n_pairs = 50;
  std::size_t n_layers = 1;
  std::size_t dim = 64;
  double shift = 3.0;
  std::string model_id = "synth";
  std::filesystem::path out = "synth";
};
int cmd_synth(const SynthOptions& options, std::ostream& log);

// Full command line (argv[0] is the program name). Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace geomrel
