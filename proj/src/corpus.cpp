#include "geomrel/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "geomrel/error.hpp"

namespace geomrel {

namespace {

void check_record(const PromptRecord& r) {
  const auto& id = r.id;
  bool ok = id.size() >= 3 && std::islower(static_cast<unsigned char>(id.front()));
  for (std::size_t i = 1; ok && i + 1 < id.size(); ++i)
    ok = std::isdigit(static_cast<unsigned char>(id[i])) != 0;
  if (!ok || (id.back() != 'a' && id.back() != 'u'))
    throw Error(ErrorKind::Validation,
                fmt::format("record id '{}' does not match <form letter><pair number><a|u>", id));
  if (id.front() != form_letter(r.form))
    throw Error(ErrorKind::Validation,
                fmt::format("record '{}': id letter disagrees with form {}", id, to_string(r.form)));
  if ((id.back() == 'a') != is_answerable(r.label))
    throw Error(ErrorKind::Validation,
                fmt::format("record '{}': id suffix disagrees with label {}", id, to_string(r.label)));
  if (r.pair_id.empty())
    throw Error(ErrorKind::Validation, fmt::format("record '{}': empty pair id", id));
  if (r.text.empty())
    throw Error(ErrorKind::Validation, fmt::format("record '{}': empty text", id));
}

PromptRecord parse_line(std::string_view line, std::string_view source, std::size_t line_no) {
  std::array<std::string_view, 4> head;
  std::size_t start = 0;
  for (auto& field : head) {
    const auto bar = line.find('|', start);
    if (bar == std::string_view::npos)
      throw Error(ErrorKind::Parse,
                  fmt::format("{}:{}: expected 5 '|'-separated fields", source, line_no));
    field = line.substr(start, bar - start);
    start = bar + 1;
  }
  PromptRecord r;
  try {
    r.id = std::string(head[0]);
    r.form = parse_form(head[1]);
    r.label = parse_label(head[2]);
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, fmt::format("{}:{}: {}", source, line_no, e.what()));
  }
  r.pair_id = std::string(head[3]);
  r.text = std::string(line.substr(start));
  if (r.text.empty())
    throw Error(ErrorKind::Parse, fmt::format("{}:{}: empty prompt text", source, line_no));
  return r;
}

}  // namespace

Corpus Corpus::from_records(std::vector<PromptRecord> records) {
  Corpus c;
  c.index_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    check_record(records[i]);
    if (!c.index_.emplace(records[i].id, i).second)
      throw Error(ErrorKind::Validation, fmt::format("duplicate record id '{}'", records[i].id));
  }
  c.records_ = std::move(records);
  return c;
}

const PromptRecord* Corpus::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

const PromptRecord& Corpus::at(std::string_view id) const {
  if (const auto* r = find(id)) return *r;
  throw Error(ErrorKind::Validation, fmt::format("prompt id '{}' not in corpus", id));
}

std::set<Form> Corpus::forms_present() const {
  std::set<Form> out;
  for (const auto& r : records_) out.insert(r.form);
  return out;
}

std::size_t Corpus::pair_count(Form form) const {
  std::set<std::string_view> pairs;
  for (const auto& r : records_)
    if (r.form == form) pairs.insert(r.pair_id);
  return pairs.size();
}

std::vector<const PromptRecord*> Corpus::of_form(Form form) const {
  std::vector<const PromptRecord*> out;
  for (const auto& r : records_)
    if (r.form == form) out.push_back(&r);
  return out;
}

Corpus parse_corpus(std::istream& in, std::string_view source) {
  std::vector<PromptRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    records.push_back(parse_line(line, source, line_no));
  }
  return Corpus::from_records(std::move(records));
}

Corpus load_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().extension() == ".txt")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return load_corpora(files);
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open corpus file {}", path.string()));
  return parse_corpus(in, path.string());
}

Corpus load_corpora(const std::vector<std::filesystem::path>& paths) {
  std::vector<PromptRecord> all;
  for (const auto& p : paths) {
    auto part = load_corpus(p);
    all.insert(all.end(), part.records().begin(), part.records().end());
  }
  return Corpus::from_records(std::move(all));
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& r : corpus.records())
    out << r.id << '|' << to_string(r.form) << '|' << to_string(r.label) << '|' << r.pair_id
        << '|' << r.text << '\n';
}

std::vector<PromptRecord> resolve_records(const std::vector<std::string>& ids, const Corpus& corpus) {
  std::vector<PromptRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(corpus.at(id));
  return out;
}

std::size_t utf8_length(std::string_view text) noexcept {
  return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

std::vector<std::string> validate_pairs(const Corpus& corpus, const PairRules& rules) {
  std::map<std::string, std::vector<const PromptRecord*>> pairs;
  for (const auto& r : corpus.records()) pairs[r.pair_id].push_back(&r);

  std::vector<std::string> violations;
  for (const auto& [pair_id, members] : pairs) {
    if (members.size() != 2) {
      violations.push_back(
          fmt::format("pair {}: expected 2 records, found {}", pair_id, members.size()));
      continue;
    }
    const auto& a = *members[0];
    const auto& b = *members[1];
    if (a.form != b.form)
      violations.push_back(fmt::format("pair {}: mixed forms {} and {}", pair_id,
                                       to_string(a.form), to_string(b.form)));
    if (a.label == b.label)
      violations.push_back(
          fmt::format("pair {}: both records labelled {}", pair_id, to_string(a.label)));
    const auto la = utf8_length(a.text);
    const auto lb = utf8_length(b.text);
    const double ratio = static_cast<double>(std::max(la, lb)) / static_cast<double>(std::min(la, lb));
    if (ratio > rules.max_length_ratio)
      violations.push_back(fmt::format("pair {}: length ratio {:.3f} exceeds {:.3f} ({} vs {} chars)",
                                       pair_id, ratio, rules.max_length_ratio, la, lb));
  }
  return violations;
}

}  // namespace geomrel
