#pragma once

#include <array>
#include <string_view>

namespace geomrel {

enum class Form { Math, Fact, Code };
enum class Label { Answerable, Unanswerable };

inline constexpr std::array<Form, 3> kAllForms = {Form::Math, Form::Fact, Form::Code};

std::string_view to_string(Form form) noexcept;
std::string_view to_string(Label label) noexcept;  // "A" / "U"

// Accepts upper or lower case ("MATH", "math").
Form parse_form(std::string_view text);
// Accepts "A"/"U" or "ANSWERABLE"/"UNANSWERABLE", any case.
Label parse_label(std::string_view text);

char form_letter(Form form) noexcept;  // 'm', 'f', 'c'

inline bool is_answerable(Label label) noexcept { return label == Label::Answerable; }

}  // namespace geomrel
