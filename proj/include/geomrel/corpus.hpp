#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geomrel/types.hpp"

namespace geomrel {

// One prompt of a matched pair. The id is `<form letter><pair number><a|u>`,
// e.g. "m07u"; the trailing letter must agree with the label.
struct PromptRecord {
  std::string id;
  Form form = Form::Math;
  Label label = Label::Answerable;
  std::string pair_id;
  std::string text;

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

// Ordered, id-indexed set of prompt records. Immutable once built.
class Corpus {
 public:
  Corpus() = default;

  // Validates per-record invariants and id uniqueness.
  static Corpus from_records(std::vector<PromptRecord> records);

  const std::vector<PromptRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  const PromptRecord* find(std::string_view id) const;
  const PromptRecord& at(std::string_view id) const;  // Validation error if absent

  std::set<Form> forms_present() const;
  std::size_t pair_count(Form form) const;
  std::vector<const PromptRecord*> of_form(Form form) const;

 private:
  std::vector<PromptRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Reads `id|form|label|pair_id|text` lines; `#` lines and blank lines are skipped.
// A directory argument loads every `*.txt` file inside it in filename order.
Corpus load_corpus(const std::filesystem::path& path);
Corpus load_corpora(const std::vector<std::filesystem::path>& paths);
Corpus parse_corpus(std::istream& in, std::string_view source = "<stream>");
void write_corpus(const Corpus& corpus, std::ostream& out);

// "Approximate length" bound for a matched pair, measured in code points.
struct PairRules {
  double max_length_ratio = 2.5;
};

// One entry per broken rule; each names the pair id. Empty iff the corpus is
// a valid matched-pair corpus.
std::vector<std::string> validate_pairs(const Corpus& corpus, const PairRules& rules = {});

// Records for `ids`, in order. Unknown ids are a Validation error naming the id.
std::vector<PromptRecord> resolve_records(const std::vector<std::string>& ids, const Corpus& corpus);

// Number of Unicode code points in a UTF-8 string.
std::size_t utf8_length(std::string_view text) noexcept;

}  // namespace geomrel
