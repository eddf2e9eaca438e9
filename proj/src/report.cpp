#include "geomrel/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "geomrel/consensus.hpp"
#include "geomrel/layerwise.hpp"
#include "geomrel/stats.hpp"

namespace geomrel {

namespace fs = std::filesystem;

ModelPath parse_model_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size())
    throw Error(ErrorKind::InvalidArgument, fmt::format("expected model=path, got '{}'", arg));
  return {arg.substr(0, eq), fs::path(arg.substr(eq + 1))};
}

std::vector<std::string> RunConfig::models() const {
  std::vector<std::string> out;
  for (const auto& [model, path] : bundles)
    if (std::find(out.begin(), out.end(), model) == out.end()) out.push_back(model);
  return out;
}

LoadedModel load_model(const RunConfig& config, const std::string& model_id, const Corpus& corpus) {
  LoadedModel m;
  m.model_id = model_id;
  std::set<std::string> seen;
  for (const auto& [model, path] : config.bundles) {
    if (model != model_id) continue;
    auto bundle = read_bundle(path);
    if (!m.bundles.empty() && bundle.dim != m.bundles.front().dim)
      throw Error(ErrorKind::Shape, fmt::format("model '{}': bundles disagree on dim ({} vs {})", model_id,
                                                bundle.dim, m.bundles.front().dim));
    for (const auto& id : bundle.prompt_ids)
      if (!seen.insert(id).second)
        throw Error(ErrorKind::Validation, fmt::format("model '{}': prompt '{}' appears in two bundles", model_id, id));
    m.records.push_back(resolve_records(bundle.prompt_ids, corpus));
    m.bundles.push_back(std::move(bundle));
  }
  if (m.bundles.empty()) throw Error(ErrorKind::InvalidArgument, fmt::format("no bundle for model '{}'", model_id));
  return m;
}

std::vector<ContextSlice> LoadedModel::last_layer_contexts(ContextPolicy policy) const {
  std::vector<std::string> ids;
  for (const Form form : kAllForms) {
    const auto ctx = context_id(form, policy);
    const bool present = std::any_of(records.begin(), records.end(), [&](const auto& recs) {
      return std::any_of(recs.begin(), recs.end(), [&](const PromptRecord& r) { return r.form == form; });
    });
    if (present && std::find(ids.begin(), ids.end(), ctx) == ids.end()) ids.push_back(ctx);
  }
  std::vector<ContextSlice> out;
  for (const auto& ctx : ids) {
    ContextSlice slice;
    slice.context_id = ctx;
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    for (std::size_t b = 0; b < bundles.size(); ++b)
      for (std::size_t i = 0; i < records[b].size(); ++i)
        if (context_id(records[b][i].form, policy) == ctx) picks.emplace_back(b, i);
    slice.vectors.resize(static_cast<Eigen::Index>(picks.size()), static_cast<Eigen::Index>(bundles.front().dim));
    for (std::size_t k = 0; k < picks.size(); ++k) {
      const auto [b, i] = picks[k];
      slice.vectors.row(static_cast<Eigen::Index>(k)) =
          bundles[b].last_layer().row(static_cast<Eigen::Index>(i)).cast<double>();
      slice.records.push_back(records[b][i]);
    }
    out.push_back(std::move(slice));
  }
  return out;
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write {}", path.string()));
  out << content;
  if (!out) throw Error(ErrorKind::Io, fmt::format("short write to {}", path.string()));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

std::string file_safe(const std::string& name) {
  std::string out = name;
  for (auto& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::size_t complete_pairs(const std::vector<ScoreRow>& rows) {
  std::map<std::string, std::set<Label>> seen;
  for (const auto& r : rows) seen[r.prompt_id.substr(0, r.prompt_id.size() - 1)].insert(r.label);
  return static_cast<std::size_t>(std::count_if(seen.begin(), seen.end(), [](const auto& kv) { return kv.second.size() == 2; }));
}

Corpus load_config_corpus(const RunConfig& config) {
  if (config.corpus.empty()) throw Error(ErrorKind::InvalidArgument, "--corpus is required");
  return load_corpora(config.corpus);
}

std::map<std::string, GenerationLog> load_generation_logs(const RunConfig& config) {
  std::map<std::string, GenerationLog> logs;
  for (const auto& [model, path] : config.generations) {
    if (logs.contains(model))
      throw Error(ErrorKind::InvalidArgument, fmt::format("two generation logs for model '{}'", model));
    logs.emplace(model, read_generation_log(path));
  }
  return logs;
}

BaselineRow baseline_row(const RunConfig& config, const RefusalLexicon& lexicon, const GenerationLog& log,
                         const std::vector<ScoreRow>& rows, Form form, const std::string& model,
                         AnalysisReport& report) {
  BaselineRow b;
  b.form = form;
  b.model = model;
  b.sc_variant = config.sc_variant.value_or(default_sc_variant(form));
  if (b.sc_variant == ScVariant::AnswerDisagree && form == Form::Fact)
    throw Error(ErrorKind::InvalidArgument, "answer_disagree needs MATH or CODE prompts; use --sc-variant rouge for FACT");

  std::vector<double> refusal, sc;
  std::vector<Label> labels;
  for (const auto& r : rows) {
    const auto it = log.entries.find(r.prompt_id);
    if (it == log.entries.end())
      throw Error(ErrorKind::Validation,
                  fmt::format("generation log for '{}' lacks prompt '{}'", model, r.prompt_id));
    const auto& e = it->second;
    labels.push_back(r.label);
    refusal.push_back(refusal_classify(e.greedy_output, lexicon) ? 1.0 : 0.0);
    const auto score = b.sc_variant == ScVariant::AnswerDisagree ? answer_disagree(e.samples, form, r.prompt_id)
                                                                 : rouge_disagree(e.samples, r.prompt_id);
    sc.push_back(score.score);
    report.sc_scores.emplace_back(model, score);
  }
  b.refusal_auc = roc_auc(refusal, labels);
  b.refusal_f1 = f1_at_threshold(refusal, labels, 0.5).f1;
  b.sc_auc = roc_auc(sc, labels);
  if (config.sc_f1) b.sc_f1 = f1_at_midpoint(sc, labels).f1;
  return b;
}

std::size_t form_index(Form f) { return static_cast<std::size_t>(f); }

}  // namespace

AnalysisReport analyze(const RunConfig& config, const Corpus& corpus) {
  if (config.n_perm < 1) throw Error(ErrorKind::InvalidArgument, "--nperm must be >= 1");
  const auto lexicon = config.lexicon ? RefusalLexicon::load(*config.lexicon) : RefusalLexicon::defaults();
  const auto logs = load_generation_logs(config);

  AnalysisReport report;
  for (const auto& model : config.models()) {
    const auto lm = load_model(config, model, corpus);
    for (const auto& slice : lm.last_layer_contexts(config.context)) {
      const auto view = mean_center(slice.vectors, slice.context_id);

      std::optional<CentroidSet> drift_centroids;
      {
        std::set<Form> with_a;
        for (const auto& r : slice.records)
          if (is_answerable(r.label)) with_a.insert(r.form);
        if (with_a.contains(Form::Math) && with_a.contains(Form::Fact)) {
          constexpr std::array<Form, 2> pair = {Form::Math, Form::Fact};
          drift_centroids = answerable_centroids(view, slice.records, pair);
        }
      }

      for (const Form form : kAllForms) {
        const auto which = rows_of_form(view, slice.records, form);
        if (which.empty()) continue;
        auto table = own_dist_scores(view, slice.records, form, model);
        if (drift_centroids && form != Form::Code)
          for (std::size_t k = 0; k < which.size(); ++k)
            table.rows[k].drift_target = drift_assign(view, which[k], *drift_centroids);

        std::vector<double> dist;
        std::vector<Label> labels;
        for (const auto& r : table.rows) {
          dist.push_back(r.own_dist);
          labels.push_back(r.label);
        }
        const auto sub = gather_rows(view.vectors, which);
        const auto perm = permutation_test(sub, labels, config.n_perm, config.seed, config.threads);
        const auto a = table.scores(form, Label::Answerable);
        const auto u = table.scores(form, Label::Unanswerable);
        const auto eval = f1_at_midpoint(dist, labels);

        AnalysisRow row;
        row.form = form;
        row.model = model;
        row.n_pairs = complete_pairs(table.rows);
        row.dist_a = mean_of(a);
        row.dist_u = mean_of(u);
        row.delta = perm.observed_gap;
        row.p_value = perm.p_value;
        row.cohens_d = cohens_d(a, u);
        row.auc = eval.auc;
        row.f1 = eval.f1;
        row.threshold = eval.threshold;
        report.rows.push_back(row);

        if (const auto it = logs.find(model); it != logs.end())
          report.baselines.push_back(baseline_row(config, lexicon, it->second, table.rows, form, model, report));
        report.scores.rows.insert(report.scores.rows.end(), table.rows.begin(), table.rows.end());
      }
    }
  }
  for (const auto& [model, path] : config.generations)
    if (std::none_of(config.bundles.begin(), config.bundles.end(), [&](const ModelPath& b) { return b.first == model; }))
      throw Error(ErrorKind::InvalidArgument, fmt::format("generation log for '{}' has no bundle", model));

  auto by_form = [](const auto& x, const auto& y) { return form_index(x.form) < form_index(y.form); };
  std::stable_sort(report.rows.begin(), report.rows.end(), by_form);
  std::stable_sort(report.baselines.begin(), report.baselines.end(), by_form);
  return report;
}

int cmd_validate(const RunConfig& config, std::ostream& log) {
  const auto corpus = load_config_corpus(config);
  int status = 0;
  auto fail = [&](int code, const std::string& message) {
    log << "FAIL " << message << '\n';
    status = std::max(status, code);
  };

  log << fmt::format("corpus: {} records", corpus.size());
  for (const Form f : corpus.forms_present()) log << fmt::format(", {} {} pairs", corpus.pair_count(f), to_string(f));
  log << '\n';
  for (const auto& v : validate_pairs(corpus)) fail(1, "corpus " + v);

  for (const auto& [model, path] : config.bundles) {
    const auto label = fmt::format("bundle {}={}", model, path.string());
    EmbeddingBundle bundle;
    try {
      bundle = read_bundle(path);
    } catch (const Error& e) {
      fail(exit_code(e.kind()), fmt::format("{}: {}: {}", label, to_string(e.kind()), e.what()));
      continue;
    }
    std::set<Form> forms;
    std::set<std::string> ids(bundle.prompt_ids.begin(), bundle.prompt_ids.end());
    for (const auto& id : bundle.prompt_ids) {
      if (const auto* r = corpus.find(id))
        forms.insert(r->form);
      else
        fail(1, fmt::format("{}: unknown prompt id '{}'", label, id));
    }
    for (const Form f : forms)
      for (const auto* r : corpus.of_form(f))
        if (!ids.contains(r->id)) fail(1, fmt::format("{}: missing prompt id '{}'", label, r->id));
    log << fmt::format("{}: {} prompts, {} layers, dim {}\n", label, bundle.n_prompts(), bundle.n_layers, bundle.dim);
  }

  for (const auto& [model, path] : config.generations) {
    const auto label = fmt::format("generations {}={}", model, path.string());
    GenerationLog gl;
    try {
      gl = read_generation_log(path);
    } catch (const Error& e) {
      fail(exit_code(e.kind()), fmt::format("{}: {}: {}", label, to_string(e.kind()), e.what()));
      continue;
    }
    for (const auto& [id, entry] : gl.entries)
      if (!corpus.find(id)) fail(1, fmt::format("{}: unknown prompt id '{}'", label, id));
    if (!gl.sc_eligible()) log << fmt::format("note: {} is not k=5 / temperature 0.7; SC scores are not comparable\n", label);
  }

  log << (status == 0 ? "OK\n" : "validation failed\n");
  return status;
}

int cmd_analyze(const RunConfig& config, std::ostream& log) {
  const auto corpus = load_config_corpus(config);
  const auto report = analyze(config, corpus);
  ensure_dir(config.out);

  std::ostringstream csv;
  csv << fmt::format("# seed={} n_perm={}\n", config.seed, config.n_perm);
  csv << "form,model,n,dist_A,dist_U,delta,p,d,auc,f1,threshold\n";
  for (const auto& r : report.rows)
    csv << fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", to_string(r.form),
                       r.model, r.n_pairs, r.dist_a, r.dist_u, r.delta, r.p_value, r.cohens_d, r.auc, r.f1,
                       r.threshold);
  write_file(config.out / "report.csv", csv.str());

  std::ostringstream scores;
  report.scores.write_csv(scores);
  write_file(config.out / "scores.csv", scores.str());

  std::ostringstream text;
  text << fmt::format("Cosine distance to answerable centroid (one-sided permutation test, n_perm={}, seed={})\n",
                      config.n_perm, config.seed);
  text << fmt::format("{:<6} {:<16} {:>4} {:>8} {:>8} {:>8} {:>8} {:>7}   {:>6} {:>6}\n", "form", "model", "n",
                      "dist_A", "dist_U", "delta", "p", "d", "AUC", "F1");
  for (const auto& r : report.rows)
    text << fmt::format("{:<6} {:<16} {:>4} {:>8.3f} {:>8.3f} {:>+8.3f} {:>8.4f} {:>+7.2f}   {:>6.3f} {:>6.3f}\n",
                        to_string(r.form), r.model, r.n_pairs, r.dist_a, r.dist_u, r.delta, r.p_value, r.cohens_d,
                        r.auc, r.f1);

  if (!report.baselines.empty()) {
    std::ostringstream b;
    b << "form,model,sc_variant,sc_auc,sc_f1,refusal_auc,refusal_f1\n";
    for (const auto& r : report.baselines)
      b << fmt::format("{},{},{},{:.6f},{},{:.6f},{:.6f}\n", to_string(r.form), r.model, to_string(r.sc_variant),
                       r.sc_auc, r.sc_f1 ? fmt::format("{:.6f}", *r.sc_f1) : "", r.refusal_auc, r.refusal_f1);
    write_file(config.out / "baselines.csv", b.str());

    std::ostringstream sc;
    sc << "prompt_id,model,variant,score\n";
    for (const auto& [model, s] : report.sc_scores)
      sc << fmt::format("{},{},{},{:.6f}\n", s.prompt_id, model, to_string(s.variant), s.score);
    write_file(config.out / "sc_scores.csv", sc.str());

    text << "\nBaselines (post-generation)\n";
    text << fmt::format("{:<6} {:<16} {:>8} {:>8} {:>8}\n", "form", "model", "SC AUC", "Ref AUC", "Ref F1");
    for (const auto& r : report.baselines)
      text << fmt::format("{:<6} {:<16} {:>8.3f} {:>8.3f} {:>8.3f}\n", to_string(r.form), r.model, r.sc_auc,
                          r.refusal_auc, r.refusal_f1);
  }
  write_file(config.out / "report.txt", text.str());
  log << text.str();
  return 0;
}

int cmd_layerwise(const RunConfig& config, const LayerwiseOptions& options, std::ostream& log) {
  const auto corpus = load_config_corpus(config);
  std::set<std::string> subset(options.prompt_ids.begin(), options.prompt_ids.end());
  if (subset.empty() && options.first_pairs > 0) {
    std::vector<std::string> pairs;
    for (const auto* r : corpus.of_form(options.form))
      if (std::find(pairs.begin(), pairs.end(), r->pair_id) == pairs.end()) pairs.push_back(r->pair_id);
    if (pairs.size() < options.first_pairs)
      throw Error(ErrorKind::InvalidArgument, fmt::format("corpus has only {} {} pairs", pairs.size(), to_string(options.form)));
    pairs.resize(options.first_pairs);
    for (const auto* r : corpus.of_form(options.form))
      if (std::find(pairs.begin(), pairs.end(), r->pair_id) != pairs.end()) subset.insert(r->id);
  }
  for (const auto& id : subset) corpus.at(id);

  ensure_dir(config.out);
  const auto ctx = context_id(options.form, config.context);
  std::ostringstream summary;
  summary << "model,peak_layer,peak_delta,last_layer_delta,narrows_from_below\n";
  for (const auto& model : config.models()) {
    const auto lm = load_model(config, model, corpus);
    std::optional<LayerProfile> profile;
    for (std::size_t b = 0; b < lm.bundles.size(); ++b) {
      const auto& recs = lm.records[b];
      if (std::none_of(recs.begin(), recs.end(), [&](const PromptRecord& r) { return r.form == options.form; }))
        continue;
      if (profile)
        throw Error(ErrorKind::InvalidArgument,
                    fmt::format("model '{}': several bundles hold {} prompts", model, to_string(options.form)));
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < recs.size(); ++i)
        if (subset.empty() ? context_id(recs[i].form, config.context) == ctx : subset.contains(recs[i].id))
          rows.push_back(i);
      profile = layer_profile(lm.bundles[b], recs, options.form, rows, ctx, config.threads);
      profile->model_id = model;
    }
    if (!profile)
      throw Error(ErrorKind::InvalidArgument, fmt::format("model '{}': no {} prompts", model, to_string(options.form)));

    std::ostringstream csv;
    profile->write_csv(csv);
    write_file(config.out / fmt::format("layerwise_{}.csv", file_safe(model)), csv.str());
    summary << fmt::format("{},{},{:.6f},{:.6f},{}\n", model, profile->peak_layer, profile->peak_delta,
                           profile->last_layer_delta, profile->narrows_from_below ? "true" : "false");
    log << fmt::format("{}: {} layers, peak delta {:.3f} at layer {}, last-layer delta {:.3f}\n", model,
                       profile->n_layers(), profile->peak_delta, profile->peak_layer, profile->last_layer_delta);
  }
  write_file(config.out / "layerwise_summary.csv", summary.str());
  return 0;
}

int cmd_pca(const RunConfig& config, const std::vector<Form>& forms, std::ostream& log) {
  const auto corpus = load_config_corpus(config);
  if (forms.empty()) throw Error(ErrorKind::InvalidArgument, "pca: no forms selected");
  ensure_dir(config.out);
  std::ostringstream summary;
  summary << "model,n,sv1,sv2,silhouette\n";
  for (const auto& model : config.models()) {
    const auto lm = load_model(config, model, corpus);
    std::vector<PromptRecord> records;
    std::vector<RowVector<double>> rows;
    for (const Form form : forms)
      for (std::size_t b = 0; b < lm.bundles.size(); ++b)
        for (std::size_t i = 0; i < lm.records[b].size(); ++i)
          if (lm.records[b][i].form == form) {
            records.push_back(lm.records[b][i]);
            rows.push_back(lm.bundles[b].last_layer().row(static_cast<Eigen::Index>(i)).cast<double>());
          }
    RowMatrix<double> x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(lm.bundles.front().dim));
    for (std::size_t k = 0; k < rows.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = rows[k];
    const auto view = mean_center(x, "pca");
    const auto pca = pca2(view);

    std::ostringstream csv;
    csv << "prompt_id,form,label,x,y,is_centroid\n";
    std::vector<std::string> classes;
    for (std::size_t k = 0; k < records.size(); ++k) {
      const auto& r = records[k];
      classes.emplace_back(to_string(r.form));
      csv << fmt::format("{},{},{},{:.6f},{:.6f},false\n", r.id, to_string(r.form), to_string(r.label),
                         pca.coords(static_cast<Eigen::Index>(k), 0), pca.coords(static_cast<Eigen::Index>(k), 1));
    }
    for (const Form form : forms) {
      std::vector<Eigen::Index> a_rows;
      for (std::size_t k = 0; k < records.size(); ++k)
        if (records[k].form == form && is_answerable(records[k].label)) a_rows.push_back(static_cast<Eigen::Index>(k));
      if (a_rows.empty()) continue;
      const auto xy = pca.project(centroid(view.vectors, std::span<const Eigen::Index>(a_rows)));
      csv << fmt::format("centroid_{},{},A,{:.6f},{:.6f},true\n", to_string(form), to_string(form), xy(0), xy(1));
    }
    write_file(config.out / fmt::format("pca_{}.csv", file_safe(model)), csv.str());

    const std::set<std::string> distinct(classes.begin(), classes.end());
    const std::string sil = distinct.size() >= 2 ? fmt::format("{:.6f}", silhouette(pca.coords, classes)) : "";
    summary << fmt::format("{},{},{:.6f},{:.6f},{}\n", model, records.size(), pca.singular_values(0),
                           pca.singular_values(1), sil);
    log << fmt::format("{}: {} prompts projected{}\n", model, records.size(),
                       sil.empty() ? "" : ", form silhouette " + sil);
  }
  write_file(config.out / "pca_summary.csv", summary.str());
  return 0;
}

int cmd_consensus(const RunConfig& config, const ConsensusOptions& options, std::ostream& log) {
  const auto corpus = load_config_corpus(config);
  if (config.context != ContextPolicy::Joint)
    throw Error(ErrorKind::ContextMismatch, "consensus compares MATH and FACT centroids; use --context joint");
  const auto joint = context_id(Form::Math, ContextPolicy::Joint);

  std::vector<ModelDrift> drifts;
  for (const auto& model : config.models()) {
    const auto lm = load_model(config, model, corpus);
    bool found = false;
    for (const auto& slice : lm.last_layer_contexts(ContextPolicy::Joint)) {
      if (slice.context_id != joint) continue;
      drifts.push_back(math_u_drift(mean_center(slice.vectors, slice.context_id), slice.records, model));
      found = true;
    }
    if (!found) throw Error(ErrorKind::InvalidArgument, fmt::format("model '{}': no MATH/FACT prompts", model));
  }
  const auto categories = options.categories ? read_categories(*options.categories)
                                             : std::map<std::string, StructuralCategory>{};
  const auto annotations = options.annotations ? read_annotations(*options.annotations) : BehaviorAnnotations{};
  const auto report = consensus_set(drifts, categories);

  ensure_dir(config.out);
  std::ostringstream csv;
  report.write_csv(csv);
  write_file(config.out / "consensus.csv", csv.str());
  std::ostringstream join;
  write_behavior_join(join, drifts, annotations, options.threshold);
  write_file(config.out / "geometry_behavior.csv", join.str());

  for (const auto& d : drifts)
    log << fmt::format("{}: {} of {} MATH-U prompts closer to the FACT centroid\n", d.model_id, d.drifted.size(),
                       d.evaluated.size());
  log << fmt::format("consensus: {} of {} drifted in all {} models\n", report.consensus_set.size(),
                     report.entries.size(), report.models.size());
  return 0;
}

int cmd_synth(const SynthOptions& options, std::ostream& log) {
  const auto synth = synth_bundle(options.seed, options.n_pairs, options.n_layers, options.dim, options.shift,
                                  options.model_id);
  if (options.out.has_parent_path()) ensure_dir(options.out.parent_path());
  write_bundle(synth.bundle, options.out);
  const auto paths = bundle_paths(options.out);
  log << fmt::format("wrote {} and {} ({} prompts, {} layers, dim {})\n", paths.manifest.string(),
                     paths.payload.string(), synth.bundle.n_prompts(), options.n_layers, options.dim);
  return 0;
}

}  // namespace geomrel
