#include "xsent/normalize.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>

namespace xsent {
namespace {

struct CodePoint {
  char32_t value = 0;
  std::size_t length = 1;
  bool valid = false;
};

// Decodes the UTF-8 sequence starting at `i`. Malformed bytes are reported
// as single invalid units so callers can copy them through unchanged.
CodePoint decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1, true};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFD, 1, false};
  }
  if (i + len > s.size()) return {0xFFFD, 1, false};
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return {0xFFFD, 1, false};
    cp = (cp << 6) | (b & 0x3F);
  }
  static constexpr std::array<char32_t, 5> kMin{0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return {0xFFFD, 1, false};
  return {cp, len, true};
}

void append_utf8(std::string& out, char32_t cp) {
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

// Control and zero-width characters that carry no visible content.
bool is_hidden(char32_t cp) {
  if (cp < 0x20) return !(cp == '\t' || cp == '\n' || cp == '\v' || cp == '\f' || cp == '\r');
  if (cp == 0x7F) return true;
  if (cp >= 0x80 && cp <= 0x9F) return cp != 0x85;
  switch (cp) {
    case 0x00AD:  // soft hyphen
    case 0x200B:
    case 0x200C:
    case 0x200D:
    case 0x2060:
    case 0xFEFF:
      return true;
    default:
      return false;
  }
}

bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ascii_alnum(char c) { return is_ascii_alpha(c) || is_ascii_digit(c); }

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 0x21 && u <= 0x2F) || (u >= 0x3A && u <= 0x40) || (u >= 0x5B && u <= 0x60) ||
         (u >= 0x7B && u <= 0x7E);
}

bool is_terminal_punct(char c) { return c == '.' || c == '!' || c == '?'; }

bool space_at(std::string_view s, std::size_t i, std::size_t* len) {
  const CodePoint cp = decode_utf8(s, i);
  *len = cp.length;
  return cp.valid && is_unicode_space(cp.value);
}

std::string remove_hidden(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    const CodePoint cp = decode_utf8(text, i);
    if (!(cp.valid && is_hidden(cp.value))) out.append(text.substr(i, cp.length));
    i += cp.length;
  }
  return out;
}

std::string strip_tags(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '<' && i + 1 < text.size()) {
      const char next = text[i + 1];
      if (is_ascii_alpha(next) || next == '/' || next == '!' || next == '?') {
        const std::size_t close = text.find('>', i + 1);
        if (close != std::string_view::npos) {
          out.push_back(' ');
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(c);
    ++i;
  }
  return out;
}

const std::unordered_map<std::string_view, char32_t>& named_entities() {
  static const std::unordered_map<std::string_view, char32_t> table{
      {"amp", U'&'},      {"lt", U'<'},       {"gt", U'>'},       {"quot", U'"'},
      {"apos", U'\''},    {"nbsp", 0x00A0},   {"shy", 0x00AD},    {"copy", 0x00A9},
      {"reg", 0x00AE},    {"trade", 0x2122},  {"hellip", 0x2026}, {"ndash", 0x2013},
      {"mdash", 0x2014},  {"lsquo", 0x2018},  {"rsquo", 0x2019},  {"sbquo", 0x201A},
      {"ldquo", 0x201C},  {"rdquo", 0x201D},  {"bdquo", 0x201E},  {"laquo", 0x00AB},
      {"raquo", 0x00BB},  {"euro", 0x20AC},   {"deg", 0x00B0},    {"middot", 0x00B7},
      {"bull", 0x2022},   {"times", 0x00D7},  {"divide", 0x00F7}, {"iexcl", 0x00A1},
      {"iquest", 0x00BF}, {"Agrave", 0x00C0}, {"Aacute", 0x00C1}, {"Acirc", 0x00C2},
      {"Atilde", 0x00C3}, {"Auml", 0x00C4},   {"Aring", 0x00C5},  {"Ccedil", 0x00C7},
      {"Egrave", 0x00C8}, {"Eacute", 0x00C9}, {"Ecirc", 0x00CA},  {"Euml", 0x00CB},
      {"Igrave", 0x00CC}, {"Iacute", 0x00CD}, {"Icirc", 0x00CE},  {"Iuml", 0x00CF},
      {"Ntilde", 0x00D1}, {"Ograve", 0x00D2}, {"Oacute", 0x00D3}, {"Ocirc", 0x00D4},
      {"Otilde", 0x00D5}, {"Ouml", 0x00D6},   {"Ugrave", 0x00D9}, {"Uacute", 0x00DA},
      {"Ucirc", 0x00DB},  {"Uuml", 0x00DC},   {"szlig", 0x00DF},  {"agrave", 0x00E0},
      {"aacute", 0x00E1}, {"acirc", 0x00E2},  {"atilde", 0x00E3}, {"auml", 0x00E4},
      {"aring", 0x00E5},  {"ccedil", 0x00E7}, {"egrave", 0x00E8}, {"eacute", 0x00E9},
      {"ecirc", 0x00EA},  {"euml", 0x00EB},   {"igrave", 0x00EC}, {"iacute", 0x00ED},
      {"icirc", 0x00EE},  {"iuml", 0x00EF},   {"ntilde", 0x00F1}, {"ograve", 0x00F2},
      {"oacute", 0x00F3}, {"ocirc", 0x00F4},  {"otilde", 0x00F5}, {"ouml", 0x00F6},
      {"ugrave", 0x00F9}, {"uacute", 0x00FA}, {"ucirc", 0x00FB},  {"uuml", 0x00FC},
      {"Abreve", 0x0102}, {"abreve", 0x0103}, {"Scedil", 0x015E}, {"scedil", 0x015F},
      {"Tcedil", 0x0162}, {"tcedil", 0x0163},
  };
  return table;
}

// Decoded text for one code point. Hidden characters decode to nothing so
// that decoding can never reintroduce what the hidden-character filter
// removes.
void append_decoded(std::string& out, char32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (is_hidden(cp)) return;
  append_utf8(out, cp);
}

// Tries to decode an entity starting at text[i] == '&'. Returns the number
// of bytes consumed, or 0 when the text is not a well-formed known entity.
std::size_t try_entity(std::string_view text, std::size_t i, std::string& out) {
  std::size_t j = i + 1;
  if (j < text.size() && text[j] == '#') {
    ++j;
    bool hex = false;
    if (j < text.size() && (text[j] == 'x' || text[j] == 'X')) {
      hex = true;
      ++j;
    }
    const std::size_t digits_begin = j;
    const std::size_t max_digits = hex ? 6 : 7;
    std::uint32_t value = 0;
    while (j < text.size() && j - digits_begin < max_digits) {
      const char c = text[j];
      int d = -1;
      if (is_ascii_digit(c)) {
        d = c - '0';
      } else if (hex && c >= 'a' && c <= 'f') {
        d = c - 'a' + 10;
      } else if (hex && c >= 'A' && c <= 'F') {
        d = c - 'A' + 10;
      }
      if (d < 0) break;
      value = value * (hex ? 16 : 10) + static_cast<std::uint32_t>(d);
      ++j;
    }
    if (j == digits_begin || j >= text.size() || text[j] != ';') return 0;
    append_decoded(out, static_cast<char32_t>(value));
    return j + 1 - i;
  }
  const std::size_t name_begin = j;
  while (j < text.size() && is_ascii_alnum(text[j]) && j - name_begin < 32) ++j;
  if (j == name_begin || j >= text.size() || text[j] != ';') return 0;
  const auto& table = named_entities();
  const auto it = table.find(text.substr(name_begin, j - name_begin));
  if (it == table.end()) return 0;
  append_decoded(out, it->second);
  return j + 1 - i;
}

// First position at or after `from` where a URL begins, or npos.
std::size_t find_url_start(std::string_view s, std::size_t from) {
  static constexpr std::array<std::string_view, 3> kPrefixes{"http://", "https://", "www."};
  for (std::size_t i = from; i < s.size(); ++i) {
    if (i > 0 && is_ascii_alnum(s[i - 1])) continue;
    for (const auto prefix : kPrefixes) {
      if (s.size() - i < prefix.size()) continue;
      bool match = true;
      for (std::size_t k = 0; k < prefix.size(); ++k) {
        const char c = s[i + k];
        const char lower = (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
        if (lower != prefix[k]) {
          match = false;
          break;
        }
      }
      if (match) return i;
    }
  }
  return std::string_view::npos;
}

std::string replace_urls(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t cursor = 0;
  while (true) {
    const std::size_t start = find_url_start(s, cursor);
    if (start == std::string_view::npos) break;
    out.append(s.substr(cursor, start - cursor));
    std::size_t end = start;
    while (end < s.size()) {
      std::size_t len = 1;
      if (space_at(s, end, &len)) break;
      end += len;
    }
    out.append(kUrlToken);
    cursor = end;
  }
  out.append(s.substr(cursor));
  return out;
}

bool is_email_local_char(char c) {
  return is_ascii_alnum(c) || c == '.' || c == '_' || c == '%' || c == '+' || c == '-';
}

bool is_email_domain_char(char c) { return is_ascii_alnum(c) || c == '.' || c == '-'; }

// Longest prefix of the domain run matching [A-Za-z0-9.-]+\.[A-Za-z]{2,}.
std::size_t email_domain_length(std::string_view run) {
  for (std::size_t end = run.size(); end >= 4; --end) {
    const std::size_t dot = run.substr(0, end).rfind('.');
    if (dot == std::string_view::npos || dot == 0) continue;
    const std::size_t tld = end - dot - 1;
    if (tld < 2) continue;
    bool alpha = true;
    for (std::size_t k = dot + 1; k < end; ++k) alpha = alpha && is_ascii_alpha(run[k]);
    if (alpha) return end;
  }
  return 0;
}

std::string replace_emails(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t cursor = 0;
  std::size_t at = s.find('@');
  while (at != std::string_view::npos) {
    std::size_t local = at;
    while (local > cursor && is_email_local_char(s[local - 1])) --local;
    std::size_t run_end = at + 1;
    while (run_end < s.size() && is_email_domain_char(s[run_end])) ++run_end;
    const std::size_t domain = email_domain_length(s.substr(at + 1, run_end - at - 1));
    if (local < at && domain > 0) {
      out.append(s.substr(cursor, local - cursor));
      out.append(kEmailToken);
      cursor = at + 1 + domain;
      at = s.find('@', cursor);
    } else {
      at = s.find('@', at + 1);
    }
  }
  out.append(s.substr(cursor));
  return out;
}

std::string trim_spaces(std::string_view s) {
  const std::size_t b = s.find_first_not_of(' ');
  if (b == std::string_view::npos) return {};
  const std::size_t e = s.find_last_not_of(' ');
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case U' ':
    case U'\t':
    case U'\n':
    case U'\v':
    case U'\f':
    case U'\r':
    case 0x0085:
    case 0x00A0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '&') {
      const std::size_t used = try_entity(text, i, out);
      if (used > 0) {
        i += used;
        continue;
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

std::string strip_markup(std::string_view text) {
  std::string current(text);
  for (int pass = 0; pass < kMaxDecodePasses; ++pass) {
    std::string next = decode_entities(strip_tags(remove_hidden(current)));
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

std::string replace_urls_and_emails(std::string_view text) { return replace_emails(replace_urls(text)); }

std::string collapse_punctuation(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    std::size_t j = i + 1;
    if (is_terminal_punct(c)) {
      while (j < text.size() && is_terminal_punct(text[j])) ++j;
    } else if (is_ascii_punct(c)) {
      while (j < text.size() && text[j] == c) ++j;
    } else {
      out.push_back(c);
      ++i;
      continue;
    }
    out.append(text.substr(i, std::min<std::size_t>(j - i, 3)));
    i = j;
  }
  return out;
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = false;
  for (std::size_t i = 0; i < text.size();) {
    std::size_t len = 1;
    if (space_at(text, i, &len)) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.append(text.substr(i, len));
      in_space = false;
    }
    i += len;
  }
  return out;
}

std::string normalize_text(std::string_view raw) {
  std::string text = strip_markup(raw);
  // Punctuation collapse can join fragments into a new email address
  // ("a@b....!com" -> "a@b...com"), so the later stages run to a fixed point.
  for (int round = 0; round < 8; ++round) {
    std::string next =
        trim_spaces(collapse_whitespace(collapse_punctuation(replace_urls_and_emails(text))));
    if (next == text) break;
    text = std::move(next);
  }
  return text;
}

}  // namespace xsent
