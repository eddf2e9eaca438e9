#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "geomrel/geometry.hpp"

namespace geomrel {

struct NamedCentroid {
  Form form = Form::Math;
  RowVector<double> vector;
};

// A-only centroids that live in one centring context.
struct CentroidSet {
  std::string context_id;
  std::vector<NamedCentroid> centroids;
};

CentroidSet answerable_centroids(const CenteredView<double>& view, std::span<const PromptRecord> records,
                                 std::span<const Form> forms);

// Centroid with the smallest cosine distance. Exact ties go to `home` when it
// is one of the candidates, otherwise to the earliest candidate.
Form nearest_centroid(const RowVector<double>& v, const CentroidSet& centroids, Form home);

// Drift target of view row `row` among {MATH_A, FACT_A}; ties go to MATH.
// The centroids must come from the view's own centring context.
DriftTarget drift_assign(const CenteredView<double>& view, Eigen::Index row, const CentroidSet& centroids);

// MATH-U drift for one model, plus own_dist for those prompts.
struct ModelDrift {
  std::string model_id;
  std::vector<std::string> evaluated;
  std::set<std::string> drifted;
  std::map<std::string, double> own_dist;
};

ModelDrift math_u_drift(const CenteredView<double>& view, std::span<const PromptRecord> records,
                        const std::string& model_id);

enum class StructuralCategory { Extremal, UnboundedAggregate, UnknownQuantity };
enum class Behavior { Refuse, Partial, Halluc };

std::string_view to_string(StructuralCategory c) noexcept;
std::string_view to_string(Behavior b) noexcept;

// `prompt_id|category` lines (EXTREMAL, UNBOUNDED_AGGREGATE, UNKNOWN_QUANTITY).
std::map<std::string, StructuralCategory> read_categories(const std::filesystem::path& path);
std::map<std::string, StructuralCategory> parse_categories(std::istream& in, std::string_view source = "<stream>");

// `prompt_id|model|behavior` lines (REFUSE, PARTIAL, HALLUC); key (prompt, model).
using BehaviorAnnotations = std::map<std::pair<std::string, std::string>, Behavior>;
BehaviorAnnotations read_annotations(const std::filesystem::path& path);
BehaviorAnnotations parse_annotations(std::istream& in, std::string_view source = "<stream>");

struct ConsensusEntry {
  std::string prompt_id;
  std::vector<std::string> drifted_in;
  bool in_consensus = false;
  std::optional<StructuralCategory> category;
};

struct ConsensusReport {
  std::vector<std::string> models;
  std::vector<ConsensusEntry> entries;
  std::vector<std::string> consensus_set;  // drifted in every model

  // prompt_id,drifted_in,consensus,category_tag
  void write_csv(std::ostream& out) const;
};

ConsensusReport consensus_set(std::span<const ModelDrift> models,
                              const std::map<std::string, StructuralCategory>& categories = {});

// Geometry-behaviour join: one row per (prompt, model) with own_dist, drift,
// whether own_dist exceeds `threshold`, and the annotated behaviour if any.
// prompt_id,model,own_dist,drifted,above_threshold,behavior
void write_behavior_join(std::ostream& out, std::span<const ModelDrift> models,
                         const BehaviorAnnotations& annotations, double threshold = 1.2);

}  // namespace geomrel
