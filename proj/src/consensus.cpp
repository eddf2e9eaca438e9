#include "geomrel/consensus.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

namespace geomrel {

CentroidSet answerable_centroids(const CenteredView<double>& view, std::span<const PromptRecord> records,
                                 std::span<const Form> forms) {
  CentroidSet set;
  set.context_id = view.context_id;
  for (const Form form : forms) {
    std::vector<Eigen::Index> a_rows;
    for (const auto i : rows_of_form(view, records, form))
      if (is_answerable(records[static_cast<std::size_t>(i)].label)) a_rows.push_back(i);
    if (a_rows.empty())
      throw Error(ErrorKind::InvalidArgument, fmt::format("no answerable {} prompts for centroid", to_string(form)));
    set.centroids.push_back({form, centroid(view.vectors, std::span<const Eigen::Index>(a_rows))});
  }
  return set;
}

Form nearest_centroid(const RowVector<double>& v, const CentroidSet& centroids, Form home) {
  if (centroids.centroids.empty()) throw Error(ErrorKind::InvalidArgument, "nearest_centroid: no centroids");
  const NamedCentroid* best = nullptr;
  double best_d = 0.0;
  for (const auto& c : centroids.centroids) {
    const double d = cosine_distance(v, c.vector);
    if (!best || d < best_d || (d == best_d && c.form == home && best->form != home)) {
      best = &c;
      best_d = d;
    }
  }
  return best->form;
}

DriftTarget drift_assign(const CenteredView<double>& view, Eigen::Index row, const CentroidSet& centroids) {
  if (centroids.context_id != view.context_id)
    throw Error(ErrorKind::ContextMismatch, fmt::format("centroids from context '{}' used on view '{}'",
                                                        centroids.context_id, view.context_id));
  CentroidSet pair{centroids.context_id, {}};
  for (const Form f : {Form::Math, Form::Fact})
    for (const auto& c : centroids.centroids)
      if (c.form == f) pair.centroids.push_back(c);
  if (pair.centroids.size() != 2)
    throw Error(ErrorKind::InvalidArgument, "drift_assign: needs both MATH and FACT answerable centroids");
  return nearest_centroid(view.vectors.row(row), pair, Form::Math) == Form::Math ? DriftTarget::Math
                                                                                  : DriftTarget::Fact;
}

ModelDrift math_u_drift(const CenteredView<double>& view, std::span<const PromptRecord> records,
                        const std::string& model_id) {
  constexpr std::array<Form, 2> forms = {Form::Math, Form::Fact};
  const auto centroids = answerable_centroids(view, records, forms);
  const auto scores = own_dist_scores(view, records, Form::Math, model_id);

  ModelDrift out;
  out.model_id = model_id;
  for (const auto i : rows_of_form(view, records, Form::Math)) {
    const auto& r = records[static_cast<std::size_t>(i)];
    if (is_answerable(r.label)) continue;
    out.evaluated.push_back(r.id);
    if (drift_assign(view, i, centroids) == DriftTarget::Fact) out.drifted.insert(r.id);
  }
  for (const auto& row : scores.rows)
    if (!is_answerable(row.label)) out.own_dist[row.prompt_id] = row.own_dist;
  return out;
}

std::string_view to_string(StructuralCategory c) noexcept {
  switch (c) {
    case StructuralCategory::Extremal: return "EXTREMAL";
    case StructuralCategory::UnboundedAggregate: return "UNBOUNDED_AGGREGATE";
    case StructuralCategory::UnknownQuantity: return "UNKNOWN_QUANTITY";
  }
  return "";
}

std::string_view to_string(Behavior b) noexcept {
  switch (b) {
    case Behavior::Refuse: return "REFUSE";
    case Behavior::Partial: return "PARTIAL";
    case Behavior::Halluc: return "HALLUC";
  }
  return "";
}

namespace {

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

std::vector<std::string> split_bars(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto bar = line.find('|', start);
    out.push_back(line.substr(start, bar - start));
    if (bar == std::string::npos) return out;
    start = bar + 1;
  }
}

template <typename Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    fn(split_bars(line), line_no);
  }
}

}  // namespace

std::map<std::string, StructuralCategory> parse_categories(std::istream& in, std::string_view source) {
  std::map<std::string, StructuralCategory> out;
  for_each_record(in, [&](const std::vector<std::string>& f, std::size_t line_no) {
    if (f.size() != 2) throw Error(ErrorKind::Parse, fmt::format("{}:{}: expected prompt_id|category", source, line_no));
    const auto tag = upper(f[1]);
    StructuralCategory c;
    if (tag == "EXTREMAL") c = StructuralCategory::Extremal;
    else if (tag == "UNBOUNDED_AGGREGATE") c = StructuralCategory::UnboundedAggregate;
    else if (tag == "UNKNOWN_QUANTITY") c = StructuralCategory::UnknownQuantity;
    else throw Error(ErrorKind::Parse, fmt::format("{}:{}: unknown category '{}'", source, line_no, f[1]));
    out[f[0]] = c;
  });
  return out;
}

std::map<std::string, StructuralCategory> read_categories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open {}", path.string()));
  return parse_categories(in, path.string());
}

BehaviorAnnotations parse_annotations(std::istream& in, std::string_view source) {
  BehaviorAnnotations out;
  for_each_record(in, [&](const std::vector<std::string>& f, std::size_t line_no) {
    if (f.size() != 3)
      throw Error(ErrorKind::Parse, fmt::format("{}:{}: expected prompt_id|model|behavior", source, line_no));
    const auto tag = upper(f[2]);
    Behavior b;
    if (tag == "REFUSE") b = Behavior::Refuse;
    else if (tag == "PARTIAL") b = Behavior::Partial;
    else if (tag == "HALLUC") b = Behavior::Halluc;
    else throw Error(ErrorKind::Parse, fmt::format("{}:{}: unknown behavior '{}'", source, line_no, f[2]));
    out[{f[0], f[1]}] = b;
  });
  return out;
}

BehaviorAnnotations read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open {}", path.string()));
  return parse_annotations(in, path.string());
}

ConsensusReport consensus_set(std::span<const ModelDrift> models,
                              const std::map<std::string, StructuralCategory>& categories) {
  if (models.empty()) throw Error(ErrorKind::InvalidArgument, "consensus_set: no models");
  for (const auto& m : models.subspan(1)) {
    auto a = models.front().evaluated;
    auto b = m.evaluated;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b)
      throw Error(ErrorKind::Validation, fmt::format("consensus_set: prompt set of '{}' differs from '{}'",
                                                     m.model_id, models.front().model_id));
  }
  ConsensusReport report;
  for (const auto& m : models) report.models.push_back(m.model_id);
  for (const auto& id : models.front().evaluated) {
    ConsensusEntry e;
    e.prompt_id = id;
    for (const auto& m : models)
      if (m.drifted.contains(id)) e.drifted_in.push_back(m.model_id);
    e.in_consensus = e.drifted_in.size() == models.size();
    if (const auto it = categories.find(id); it != categories.end()) e.category = it->second;
    if (e.in_consensus) report.consensus_set.push_back(id);
    report.entries.push_back(std::move(e));
  }
  return report;
}

void ConsensusReport::write_csv(std::ostream& out) const {
  out << "prompt_id,drifted_in,consensus,category_tag\n";
  for (const auto& e : entries) {
    std::string joined;
    for (const auto& m : e.drifted_in) joined += (joined.empty() ? "" : ";") + m;
    out << e.prompt_id << ',' << joined << ',' << (e.in_consensus ? "true" : "false") << ','
        << (e.category ? to_string(*e.category) : "") << '\n';
  }
}

void write_behavior_join(std::ostream& out, std::span<const ModelDrift> models,
                         const BehaviorAnnotations& annotations, double threshold) {
  out << "prompt_id,model,own_dist,drifted,above_threshold,behavior\n";
  for (const auto& m : models)
    for (const auto& id : m.evaluated) {
      const auto it = annotations.find({id, m.model_id});
      const double d = m.own_dist.at(id);
      out << fmt::format("{},{},{:.6f},{},{},{}\n", id, m.model_id, d, m.drifted.contains(id) ? "true" : "false",
                         d > threshold ? "true" : "false", it == annotations.end() ? "" : to_string(it->second));
    }
}

}  // namespace geomrel
