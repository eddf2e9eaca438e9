#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "geomrel/report.hpp"

namespace geomrel {

namespace {

void add_inputs(CLI::App& sub, RunConfig& cfg, std::vector<std::string>& bundles) {
  sub.add_option("--corpus", cfg.corpus, "Corpus file or directory (repeatable)")->required();
  sub.add_option("--bundle", bundles, "Embedding bundle as model=path (repeatable)");
}

void add_run_options(CLI::App& sub, RunConfig& cfg, std::string& context) {
  sub.add_option("--out", cfg.out, "Output directory")->capture_default_str();
  sub.add_option("--context", context, "Centring context: joint or separate")
      ->check(CLI::IsMember({"joint", "separate"}, CLI::ignore_case))
      ->capture_default_str();
  sub.add_option("--threads", cfg.threads, "Worker threads (0: all cores)");
}

std::vector<std::string> read_id_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open {}", path));
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.push_back(line.substr(b, e - b + 1));
  }
  return ids;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Answerability geometry of transformer hidden states"};
  app.name("geomrel");
  app.require_subcommand(1);

  RunConfig cfg;
  std::vector<std::string> bundles, gens;
  std::string context = "joint";
  std::string sc_variant = "auto";
  std::string lexicon;

  auto* validate = app.add_subcommand("validate", "Check corpus pairing, bundle integrity and id coverage");
  add_inputs(*validate, cfg, bundles);
  validate->add_option("--generations", gens, "Generation log as model=path (repeatable)");

  auto* analyze = app.add_subcommand("analyze", "own_dist scores, permutation tests and baselines");
  add_inputs(*analyze, cfg, bundles);
  add_run_options(*analyze, cfg, context);
  analyze->add_option("--generations", gens, "Generation log as model=path (repeatable)");
  analyze->add_option("--nperm", cfg.n_perm, "Permutations per test")->capture_default_str();
  analyze->add_option("--seed", cfg.seed, "Permutation seed")->capture_default_str();
  analyze->add_option("--lexicon", lexicon, "Refusal lexicon file");
  analyze->add_option("--sc-variant", sc_variant, "Self-consistency score: auto, answer or rouge")
      ->check(CLI::IsMember({"auto", "answer", "rouge"}, CLI::ignore_case))
      ->capture_default_str();
  analyze->add_flag("--sc-f1", cfg.sc_f1, "Also report F1 for the self-consistency score");

  LayerwiseOptions lw;
  std::string lw_form = "math";
  std::string lw_prompts;
  auto* layerwise = app.add_subcommand("layerwise", "Gap between U and A distances at every layer");
  add_inputs(*layerwise, cfg, bundles);
  add_run_options(*layerwise, cfg, context);
  layerwise->add_option("--form", lw_form, "Prompt form")->capture_default_str();
  auto* prompts_opt = layerwise->add_option("--prompts", lw_prompts, "File of prompt ids to keep");
  layerwise->add_option("--pairs", lw.first_pairs, "Keep the first N pairs of the form")->excludes(prompts_opt);

  std::vector<std::string> pca_forms = {"math", "fact", "code"};
  auto* pca = app.add_subcommand("pca", "Two-component projection of last-layer states");
  add_inputs(*pca, cfg, bundles);
  add_run_options(*pca, cfg, context);
  pca->add_option("--forms", pca_forms, "Forms to project")->delimiter(',')->capture_default_str();

  ConsensusOptions co;
  std::string annotations, categories;
  auto* consensus = app.add_subcommand("consensus", "MATH-U prompts drifting to the FACT centroid in every model");
  add_inputs(*consensus, cfg, bundles);
  add_run_options(*consensus, cfg, context);
  consensus->add_option("--annotations", annotations, "Behaviour annotations (prompt_id|model|behavior)");
  consensus->add_option("--categories", categories, "Structural categories (prompt_id|category)");
  consensus->add_option("--threshold", co.threshold, "own_dist threshold for the behaviour join")
      ->capture_default_str();

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Write a synthetic bundle with a known U shift");
  synth->add_option("--seed", so.seed)->capture_default_str();
  synth->add_option("--pairs", so.n_pairs)->capture_default_str();
  synth->add_option("--layers", so.n_layers)->capture_default_str();
  synth->add_option("--dim", so.dim)->capture_default_str();
  synth->add_option("--shift", so.shift)->capture_default_str();
  synth->add_option("--model", so.model_id)->capture_default_str();
  synth->add_option("--out", so.out, "Bundle base path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const auto& b : bundles) cfg.bundles.push_back(parse_model_path(b));
    for (const auto& g : gens) cfg.generations.push_back(parse_model_path(g));
    cfg.context = context == "separate" || context == "SEPARATE" ? ContextPolicy::Separate : ContextPolicy::Joint;
    if (!lexicon.empty()) cfg.lexicon = lexicon;
    if (sc_variant == "answer") cfg.sc_variant = ScVariant::AnswerDisagree;
    if (sc_variant == "rouge") cfg.sc_variant = ScVariant::RougeDisagree;

    auto need_bundle = [&] {
      if (cfg.bundles.empty()) throw Error(ErrorKind::InvalidArgument, "at least one --bundle is required");
    };
    if (*validate) return cmd_validate(cfg, out);
    if (*analyze) {
      need_bundle();
      return cmd_analyze(cfg, out);
    }
    if (*layerwise) {
      need_bundle();
      lw.form = parse_form(lw_form);
      if (!lw_prompts.empty()) lw.prompt_ids = read_id_file(lw_prompts);
      return cmd_layerwise(cfg, lw, out);
    }
    if (*pca) {
      need_bundle();
      std::vector<Form> forms;
      for (const auto& f : pca_forms) forms.push_back(parse_form(f));
      return cmd_pca(cfg, forms, out);
    }
    if (*consensus) {
      need_bundle();
      if (!annotations.empty()) co.annotations = annotations;
      if (!categories.empty()) co.categories = categories;
      return cmd_consensus(cfg, co, out);
    }
    if (*synth) return cmd_synth(so, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace geomrel
