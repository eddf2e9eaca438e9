#include "geomrel/types.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "geomrel/error.hpp"

namespace geomrel {

namespace {

std::string upper(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

}  // namespace

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Checksum: return "checksum error";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Degenerate: return "degenerate data";
    case ErrorKind::ContextMismatch: return "centering context mismatch";
    case ErrorKind::InvalidArgument: return "invalid argument";
  }
  return "error";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Io: return 2;
    case ErrorKind::Degenerate: return 3;
    default: return 1;
  }
}

std::string_view to_string(Form form) noexcept {
  switch (form) {
    case Form::Math: return "MATH";
    case Form::Fact: return "FACT";
    case Form::Code: return "CODE";
  }
  return "?";
}

std::string_view to_string(Label label) noexcept {
  return label == Label::Answerable ? "A" : "U";
}

Form parse_form(std::string_view text) {
  const auto u = upper(text);
  if (u == "MATH") return Form::Math;
  if (u == "FACT") return Form::Fact;
  if (u == "CODE") return Form::Code;
  throw Error(ErrorKind::Parse, "unknown form '" + std::string(text) + "'");
}

Label parse_label(std::string_view text) {
  const auto u = upper(text);
  if (u == "A" || u == "ANSWERABLE") return Label::Answerable;
  if (u == "U" || u == "UNANSWERABLE") return Label::Unanswerable;
  throw Error(ErrorKind::Parse, "unknown label '" + std::string(text) + "'");
}

char form_letter(Form form) noexcept {
  switch (form) {
    case Form::Math: return 'm';
    case Form::Fact: return 'f';
    case Form::Code: return 'c';
  }
  return '?';
}

}  // namespace geomrel
