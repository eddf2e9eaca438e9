#include <doctest.h>

#include <sstream>

#include "geomrel/consensus.hpp"

using namespace geomrel;
using RM = RowMatrix<double>;

namespace {

PromptRecord rec(const std::string& id, Form f) {
  return {id, f, id.back() == 'a' ? Label::Answerable : Label::Unanswerable, id.substr(0, id.size() - 1), "t"};
}

// MATH_A centroid along x, FACT_A centroid along y.
struct Toy {
  CenteredView<double> view;
  std::vector<PromptRecord> records;
};

Toy toy(double u1x, double u1y, double u2x, double u2y) {
  Toy t;
  t.view.vectors.resize(6, 2);
  t.view.vectors << 1, 0, u1x, u1y, 1, 0, u2x, u2y, 0, 1, 0, 2;
  t.view.global_mean = Eigen::RowVector2d::Zero();
  t.view.context_id = "MATH+FACT joint";
  t.records = {rec("m01a", Form::Math), rec("m01u", Form::Math), rec("m02a", Form::Math),
               rec("m02u", Form::Math), rec("f01a", Form::Fact), rec("f02a", Form::Fact)};
  return t;
}

ModelDrift drift(const std::string& model, std::vector<std::string> drifted,
                 std::vector<std::string> evaluated = {"m01u", "m02u", "m03u"}) {
  ModelDrift d;
  d.model_id = model;
  d.evaluated = std::move(evaluated);
  d.drifted.insert(drifted.begin(), drifted.end());
  for (const auto& id : d.evaluated) d.own_dist[id] = 1.0;
  return d;
}

}  // namespace

TEST_CASE("drift assignment and tie-break") {
  const auto t = toy(0.2, 1.0, 1.0, 1.0);
  constexpr std::array<Form, 2> forms = {Form::Math, Form::Fact};
  const auto c = answerable_centroids(t.view, t.records, forms);
  CHECK(drift_assign(t.view, 0, c) == DriftTarget::Math);  // MATH-A on its own centroid
  CHECK(drift_assign(t.view, 1, c) == DriftTarget::Fact);
  CHECK(drift_assign(t.view, 3, c) == DriftTarget::Math);  // equidistant
  CHECK(nearest_centroid(Eigen::RowVector2d(1, 1), c, Form::Fact) == Form::Fact);
}

TEST_CASE("drift is invariant to positive rescaling") {
  auto t = toy(0.3, 0.9, 0.8, 0.5);
  constexpr std::array<Form, 2> forms = {Form::Math, Form::Fact};
  const auto c = answerable_centroids(t.view, t.records, forms);
  const auto before = drift_assign(t.view, 1, c);
  t.view.vectors.row(1) *= 17.0;
  CHECK(drift_assign(t.view, 1, c) == before);
}

TEST_CASE("centroids from another context are refused") {
  const auto t = toy(0.2, 1.0, 1.0, 0.0);
  constexpr std::array<Form, 2> forms = {Form::Math, Form::Fact};
  auto c = answerable_centroids(t.view, t.records, forms);
  c.context_id = "MATH separate";
  try {
    drift_assign(t.view, 1, c);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ContextMismatch);
  }
}

TEST_CASE("math_u_drift evaluates MATH-U prompts only") {
  const auto t = toy(0.2, 1.0, 1.0, 0.1);
  const auto d = math_u_drift(t.view, t.records, "toy");
  CHECK(d.evaluated == std::vector<std::string>{"m01u", "m02u"});
  CHECK(d.drifted == std::set<std::string>{"m01u"});
  CHECK(d.own_dist.size() == 2);
}

TEST_CASE("consensus set is the intersection") {
  const std::vector<ModelDrift> one = {drift("a", {"m01u", "m03u"})};
  CHECK(consensus_set(one).consensus_set == std::vector<std::string>{"m01u", "m03u"});

  const std::vector<ModelDrift> disjoint = {drift("a", {"m01u"}), drift("b", {"m02u"})};
  CHECK(consensus_set(disjoint).consensus_set.empty());

  std::vector<ModelDrift> models = {drift("a", {"m01u", "m02u", "m03u"}), drift("b", {"m01u", "m03u"})};
  auto prev = consensus_set(models).consensus_set.size();
  models.push_back(drift("c", {"m03u"}));
  const auto r = consensus_set(models, {{"m03u", StructuralCategory::Extremal}});
  CHECK(r.consensus_set.size() <= prev);
  CHECK(r.consensus_set == std::vector<std::string>{"m03u"});

  std::ostringstream out;
  r.write_csv(out);
  CHECK(out.str() ==
        "prompt_id,drifted_in,consensus,category_tag\n"
        "m01u,a;b,false,\n"
        "m02u,a,false,\n"
        "m03u,a;b;c,true,EXTREMAL\n");
}

TEST_CASE("consensus rejects mismatched prompt sets and empty input") {
  const std::vector<ModelDrift> bad = {drift("a", {}), drift("b", {}, {"m01u"})};
  CHECK_THROWS_AS(consensus_set(bad), Error);
  CHECK_THROWS_AS(consensus_set(std::vector<ModelDrift>{}), Error);
}

TEST_CASE("annotation and category files") {
  std::istringstream cats("# tags\nm07u|EXTREMAL\nm05u|unbounded_aggregate\n");
  const auto c = parse_categories(cats);
  CHECK(c.at("m05u") == StructuralCategory::UnboundedAggregate);
  std::istringstream ann("m07u|llama|HALLUC\nm07u|qwen|refuse\n");
  const auto a = parse_annotations(ann);
  CHECK(a.at({"m07u", "qwen"}) == Behavior::Refuse);
  std::istringstream bad("m07u|llama|SHRUG\n");
  CHECK_THROWS_AS(parse_annotations(bad), Error);

  auto d = drift("llama", {"m07u"}, {"m07u"});
  d.own_dist["m07u"] = 1.3;
  const std::vector<ModelDrift> ms = {d};
  std::ostringstream out;
  write_behavior_join(out, ms, a, 1.2);
  CHECK(out.str() == "prompt_id,model,own_dist,drifted,above_threshold,behavior\nm07u,llama,1.300000,true,true,HALLUC\n");
}
