#pragma once

// Programmatic checkers for verifiable instructions.
//
// Tokenization rules are fixed so verdicts are bit-stable across platforms:
//   words       maximal runs of non-whitespace (ASCII whitespace only)
//   paragraphs  maximal runs of non-blank lines; a blank line is empty or all whitespace
//   bullets     lines beginning with "- " or "* " at column 0
//   case        Latin-1, Latin Extended-A, Greek and Cyrillic case pairs
//   keywords    case-folded, whole-word, non-overlapping; word characters are
//               ASCII alphanumerics, '_' and any non-ASCII code point

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spb/core.hpp"

namespace spb {

inline std::string_view to_string(VerifierKind k) {
  switch (k) {
    case VerifierKind::no_commas: return "no_commas";
    case VerifierKind::all_lowercase: return "all_lowercase";
    case VerifierKind::all_uppercase: return "all_uppercase";
    case VerifierKind::min_words: return "min_words";
    case VerifierKind::max_words: return "max_words";
    case VerifierKind::must_include_keyword: return "must_include_keyword";
    case VerifierKind::forbidden_word: return "forbidden_word";
    case VerifierKind::num_paragraphs: return "num_paragraphs";
    case VerifierKind::ends_with: return "ends_with";
    case VerifierKind::starts_with: return "starts_with";
    case VerifierKind::num_bullets: return "num_bullets";
  }
  return "?";
}

inline VerifierKind parse_verifier_kind(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(VerifierKind::num_bullets); ++i) {
    auto k = static_cast<VerifierKind>(i);
    if (to_string(k) == s) return k;
  }
  throw SchemaError("unknown verifier kind '" + std::string(s) + "'");
}

inline bool verifier_uses_count(VerifierKind k) {
  switch (k) {
    case VerifierKind::min_words:
    case VerifierKind::max_words:
    case VerifierKind::must_include_keyword:
    case VerifierKind::num_paragraphs:
    case VerifierKind::num_bullets: return true;
    default: return false;
  }
}

inline bool verifier_uses_text(VerifierKind k) {
  switch (k) {
    case VerifierKind::must_include_keyword:
    case VerifierKind::forbidden_word:
    case VerifierKind::ends_with:
    case VerifierKind::starts_with: return true;
    default: return false;
  }
}

inline void validate(const VerifierSpec& spec) {
  if (verifier_uses_count(spec.kind) && spec.n < 0)
    throw ValidationError(std::string(to_string(spec.kind)) + ": count must be >= 0");
  if (verifier_uses_text(spec.kind) && spec.text.empty())
    throw ValidationError(std::string(to_string(spec.kind)) + ": keyword/phrase must be non-empty");
}

namespace text {

// Decodes UTF-8; malformed bytes decode to U+FFFD one byte at a time.
inline std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline char32_t to_lower(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 0x20;
  if (c < 0x80) return c;
  if ((c >= 0xC0 && c <= 0xDE && c != 0xD7)) return c + 0x20;
  if (c == 0x178) return 0xFF;
  if (c == 0x130) return 'i';
  if ((c >= 0x100 && c <= 0x137) || (c >= 0x14A && c <= 0x177)) return (c % 2 == 0) ? c + 1 : c;
  if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) return (c % 2 == 1) ? c + 1 : c;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
  if (c == 0x386) return 0x3AC;
  if (c >= 0x388 && c <= 0x38A) return c + 0x25;
  if (c == 0x38C) return 0x3CC;
  if (c == 0x38E || c == 0x38F) return c + 0x3F;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  return c;
}

inline char32_t to_upper(char32_t c) {
  if (c >= 'a' && c <= 'z') return c - 0x20;
  if (c < 0x80) return c;
  if (c >= 0xE0 && c <= 0xFE && c != 0xF7) return c - 0x20;
  if (c == 0xFF) return 0x178;
  if (c == 0x131) return 'I';
  if (c == 0x17F) return 'S';
  if ((c >= 0x100 && c <= 0x137) || (c >= 0x14A && c <= 0x177)) return (c % 2 == 1) ? c - 1 : c;
  if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) return (c % 2 == 0) ? c - 1 : c;
  if (c >= 0x3B1 && c <= 0x3C9 && c != 0x3C2) return c - 0x20;
  if (c == 0x3C2) return 0x3A3;
  if (c == 0x3AC) return 0x386;
  if (c >= 0x3AD && c <= 0x3AF) return c - 0x25;
  if (c == 0x3CC) return 0x38C;
  if (c == 0x3CD || c == 0x3CE) return c - 0x3F;
  if (c >= 0x430 && c <= 0x44F) return c - 0x20;
  if (c >= 0x450 && c <= 0x45F) return c - 0x50;
  return c;
}

inline std::string fold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : decode_utf8(s)) append_utf8(out, to_lower(c));
  return out;
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) || c == '_';
}

inline std::string_view trim_left(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  return s;
}

inline std::string_view trim_right(std::string_view s) {
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::int64_t count_words(std::string_view s) {
  std::int64_t n = 0;
  bool in_word = false;
  for (char c : s) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

inline std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    auto line = s.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline std::int64_t count_paragraphs(std::string_view s) {
  std::int64_t n = 0;
  bool in_para = false;
  for (auto line : split_lines(s)) {
    const bool blank = trim_left(line).empty();
    if (blank) {
      in_para = false;
    } else if (!in_para) {
      in_para = true;
      ++n;
    }
  }
  return n;
}

inline std::int64_t count_bullets(std::string_view s) {
  std::int64_t n = 0;
  for (auto line : split_lines(s))
    if (line.starts_with("- ") || line.starts_with("* ")) ++n;
  return n;
}

inline std::int64_t count_keyword(std::string_view haystack, std::string_view keyword) {
  const std::string h = fold(haystack);
  const std::string k = fold(keyword);
  if (k.empty()) return 0;
  std::int64_t n = 0;
  std::size_t pos = 0;
  while ((pos = h.find(k, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !is_word_byte(h[pos - 1]);
    const std::size_t end = pos + k.size();
    const bool right_ok = end == h.size() || !is_word_byte(h[end]);
    if (left_ok && right_ok) {
      ++n;
      pos = end;
    } else {
      ++pos;
    }
  }
  return n;
}

inline bool has_upper(std::string_view s) {
  for (char32_t c : decode_utf8(s))
    if (to_lower(c) != c) return true;
  return false;
}

inline bool has_lower(std::string_view s) {
  for (char32_t c : decode_utf8(s))
    if (to_upper(c) != c) return true;
  return false;
}

}  // namespace text

// Total and pure: any text yields a verdict.
inline bool verify(const VerifierSpec& spec, std::string_view completion) {
  switch (spec.kind) {
    case VerifierKind::no_commas: return completion.find(',') == std::string_view::npos;
    case VerifierKind::all_lowercase: return !text::has_upper(completion);
    case VerifierKind::all_uppercase: return !text::has_lower(completion);
    case VerifierKind::min_words: return text::count_words(completion) >= spec.n;
    case VerifierKind::max_words: return text::count_words(completion) <= spec.n;
    case VerifierKind::must_include_keyword:
      return text::count_keyword(completion, spec.text) >= spec.n;
    case VerifierKind::forbidden_word: return text::count_keyword(completion, spec.text) == 0;
    case VerifierKind::num_paragraphs: return text::count_paragraphs(completion) == spec.n;
    case VerifierKind::ends_with: return text::trim_right(completion).ends_with(spec.text);
    case VerifierKind::starts_with: return text::trim_left(completion).starts_with(spec.text);
    case VerifierKind::num_bullets: return text::count_bullets(completion) == spec.n;
  }
  return false;
}

struct InstanceVerification {
  std::vector<bool> met;  // aligned with instance.rubrics
  Fraction score;
};

inline InstanceVerification verify_instance(const BenchmarkInstance& instance,
                                            std::string_view completion) {
  std::string missing;
  for (const auto& r : instance.rubrics)
    if (!r.verifier) missing += (missing.empty() ? "" : ", ") + instance.instance_id + "/" + r.rubric_id;
  if (!missing.empty()) throw CoverageError("rubrics without a verifier: " + missing);
  if (instance.rubrics.empty())
    throw CoverageError("instance " + instance.instance_id + " has no rubrics");

  InstanceVerification out;
  std::int64_t count = 0;
  for (const auto& r : instance.rubrics) {
    const bool ok = verify(*r.verifier, completion);
    out.met.push_back(ok);
    count += ok;
  }
  out.score = Fraction(count, static_cast<std::int64_t>(instance.rubrics.size()));
  return out;
}

}  // namespace spb
