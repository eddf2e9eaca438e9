#include "geomrel/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <regex>

#include <fmt/format.h>

#include "geomrel/error.hpp"

namespace geomrel {

namespace {

std::string fold(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    // U+2019 RIGHT SINGLE QUOTATION MARK is E2 80 99 in UTF-8.
    if (text.compare(i, 3, "\xE2\x80\x99") == 0) {
      out += '\'';
      i += 2;
      continue;
    }
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
  }
  return out;
}

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string last_number(std::string_view line) {
  std::string last;
  for (std::size_t i = 0; i < line.size();) {
    if (!is_digit(line[i]) || (i > 0 && (is_digit(line[i - 1]) || line[i - 1] == '.'))) {
      ++i;
      continue;
    }
    std::string number;
    if (i > 0 && line[i - 1] == '-' && (i == 1 || !is_alnum(line[i - 2]))) number += '-';
    std::size_t j = i;
    while (j < line.size() && (is_digit(line[j]) || (line[j] == ',' && j + 1 < line.size() && is_digit(line[j + 1])))) {
      if (line[j] != ',') number += line[j];
      ++j;
    }
    if (j + 1 < line.size() && line[j] == '.' && is_digit(line[j + 1])) {
      number += '.';
      ++j;
      while (j < line.size() && is_digit(line[j])) number += line[j++];
    }
    last = std::move(number);
    i = j;
  }
  return last;
}

}  // namespace

const std::vector<std::string>& RefusalLexicon::core_keywords() {
  static const std::vector<std::string> core = {
      "undefined", "cannot", "doesn't exist", "no such", "not defined",
      "infinite", "valueerror", "typeerror", "zerodivisionerror"};
  return core;
}

RefusalLexicon RefusalLexicon::defaults() {
  RefusalLexicon lex{core_keywords()};
  for (const char* related : {"can't", "cannot be", "does not exist", "not possible", "no largest", "diverges"})
    lex.keywords.emplace_back(related);
  return lex;
}

RefusalLexicon RefusalLexicon::parse(std::istream& in, std::string_view source) {
  RefusalLexicon lex;
  std::string line;
  while (std::getline(in, line)) {
    const auto kw = trim(line);
    if (kw.empty() || kw.front() == '#') continue;
    lex.keywords.push_back(fold(kw));
  }
  for (const auto& core : core_keywords())
    if (std::find(lex.keywords.begin(), lex.keywords.end(), core) == lex.keywords.end())
      throw Error(ErrorKind::Validation, fmt::format("{}: lexicon lacks core keyword '{}'", source, core));
  return lex;
}

RefusalLexicon RefusalLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open lexicon {}", path.string()));
  return parse(in, path.string());
}

bool refusal_classify(std::string_view output_text, const RefusalLexicon& lexicon) {
  const auto folded = fold(output_text);
  return std::any_of(lexicon.keywords.begin(), lexicon.keywords.end(),
                     [&](const std::string& kw) { return !kw.empty() && folded.find(fold(kw)) != std::string::npos; });
}

std::string_view last_nonempty_line(std::string_view text) noexcept {
  while (!text.empty()) {
    const auto nl = text.find_last_of('\n');
    const auto line = nl == std::string_view::npos ? text : text.substr(nl + 1);
    if (!trim(line).empty()) return trim(line);
    if (nl == std::string_view::npos) break;
    text = text.substr(0, nl);
  }
  return {};
}

std::string extract_final_answer(std::string_view output_text, Form form) {
  if (form == Form::Math) return last_number(last_nonempty_line(output_text));
  if (form != Form::Code)
    throw Error(ErrorKind::InvalidArgument, "extract_final_answer: form must be MATH or CODE");

  static const std::regex span_re("`([^`\\n]+)`");
  const std::string text(output_text);
  std::string span;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), span_re); it != std::sregex_iterator(); ++it)
    span = (*it)[1].str();
  if (!trim(span).empty()) return std::string(trim(span));

  auto line = last_nonempty_line(output_text);
  const auto ws = line.find_last_of(" \t");
  auto token = ws == std::string_view::npos ? line : line.substr(ws + 1);
  while (!token.empty() && std::string_view(".,;:!?").find(token.back()) != std::string_view::npos)
    token.remove_suffix(1);
  return std::string(token);
}

std::string_view to_string(ScVariant variant) noexcept {
  return variant == ScVariant::AnswerDisagree ? "answer_disagree" : "rouge_disagree";
}

ScVariant default_sc_variant(Form form) noexcept {
  return form == Form::Fact ? ScVariant::RougeDisagree : ScVariant::AnswerDisagree;
}

SCScore answer_disagree(std::span<const std::string> samples, Form form, std::string prompt_id) {
  if (samples.size() < 2) throw Error(ErrorKind::InvalidArgument, "answer_disagree: need k >= 2 samples");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) ++counts[extract_final_answer(s, form)];
  std::size_t modal = 0;
  for (const auto& [answer, c] : counts) modal = std::max(modal, c);
  return {std::move(prompt_id), ScVariant::AnswerDisagree,
          1.0 - static_cast<double>(modal) / static_cast<double>(samples.size())};
}

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char c : fold(text)) {
    if (is_space(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (!std::ispunct(static_cast<unsigned char>(c))) {
      current += c;
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double rouge1_f1(std::string_view a, std::string_view b) {
  const auto ta = rouge_tokens(a);
  const auto tb = rouge_tokens(b);
  if (ta.empty() || tb.empty()) return 0.0;
  std::map<std::string, std::size_t> ca, cb;
  for (const auto& t : ta) ++ca[t];
  for (const auto& t : tb) ++cb[t];
  std::size_t overlap = 0;
  for (const auto& [tok, n] : ca)
    if (const auto it = cb.find(tok); it != cb.end()) overlap += std::min(n, it->second);
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(ta.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(tb.size());
  return 2.0 * precision * recall / (precision + recall);
}

SCScore rouge_disagree(std::span<const std::string> samples, std::string prompt_id) {
  if (samples.size() < 2) throw Error(ErrorKind::InvalidArgument, "rouge_disagree: need k >= 2 samples");
  std::vector<std::string_view> excerpts;
  for (const auto& s : samples) excerpts.push_back(last_nonempty_line(s));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < excerpts.size(); ++i)
    for (std::size_t j = i + 1; j < excerpts.size(); ++j) {
      sum += rouge1_f1(excerpts[i], excerpts[j]);
      ++pairs;
    }
  return {std::move(prompt_id), ScVariant::RougeDisagree, 1.0 - sum / static_cast<double>(pairs)};
}

}  // namespace geomrel
