#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geomrel/types.hpp"

namespace geomrel {

// Lowercase refusal / exception markers matched as substrings.
struct RefusalLexicon {
  std::vector<std::string> keywords;

  // The nine core markers plus their common related forms.
  static RefusalLexicon defaults();
  static const std::vector<std::string>& core_keywords();

  // One keyword per line; `#` lines and blank lines ignored. The file must
  // contain every core keyword.
  static RefusalLexicon load(const std::filesystem::path& path);
  static RefusalLexicon parse(std::istream& in, std::string_view source = "<stream>");
};

// True iff any keyword occurs in the output, ignoring ASCII case. A typographic
// apostrophe (U+2019) matches a plain one.
bool refusal_classify(std::string_view output_text, const RefusalLexicon& lexicon);

std::string_view last_nonempty_line(std::string_view text) noexcept;

// MATH: last numeric literal of the last non-empty line, commas removed, a
// leading minus kept. CODE: last `backtick` span, else the last whitespace
// token of the last non-empty line without trailing .,;:!? characters.
// Empty when nothing matches.
std::string extract_final_answer(std::string_view output_text, Form form);

enum class ScVariant { AnswerDisagree, RougeDisagree };
std::string_view to_string(ScVariant variant) noexcept;
ScVariant default_sc_variant(Form form) noexcept;

struct SCScore {
  std::string prompt_id;
  ScVariant variant = ScVariant::AnswerDisagree;
  double score = 0.0;
};

// 1 - (modal answer count / k).
SCScore answer_disagree(std::span<const std::string> samples, Form form, std::string prompt_id = {});

// Lowercased, ASCII punctuation removed, split on whitespace.
std::vector<std::string> rouge_tokens(std::string_view text);

// Unigram F1 with clipped counts; 0 when either side has no tokens.
double rouge1_f1(std::string_view a, std::string_view b);

// 1 - mean ROUGE-1 F1 over all unordered pairs of last non-empty lines.
SCScore rouge_disagree(std::span<const std::string> samples, std::string prompt_id = {});

}  // namespace geomrel
