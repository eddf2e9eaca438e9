#include "geomrel/geometry.hpp"

#include <ostream>

namespace geomrel {

std::string context_id(Form form, ContextPolicy policy) {
  if (policy == ContextPolicy::Joint && form != Form::Code) return "MATH+FACT joint";
  return std::string(to_string(form)) + " separate";
}

std::string_view to_string(DriftTarget target) noexcept {
  switch (target) {
    case DriftTarget::Math: return "MATH";
    case DriftTarget::Fact: return "FACT";
    case DriftTarget::None: return "NONE";
  }
  return "NONE";
}

std::vector<double> ScoreTable::scores(Form form, Label label) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.form == form && r.label == label) out.push_back(r.own_dist);
  return out;
}

void ScoreTable::write_csv(std::ostream& out, bool header) const {
  if (header) out << "prompt_id,model_id,form,label,own_dist,drift_target\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{:.6f},{}\n", r.prompt_id, r.model_id, to_string(r.form),
                       to_string(r.label), r.own_dist, to_string(r.drift_target));
}

}  // namespace geomrel
