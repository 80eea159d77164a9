#pragma once

#include <filesystem>
#include <string>

#include "xsent/corpus.hpp"

namespace test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(XSENT_FIXTURE_DIR) / name;
}

inline xsent::Review review(std::string title, std::string text, int rating,
                            xsent::Language lang = xsent::Language::IT,
                            xsent::Domain domain = xsent::Domain::Books,
                            xsent::Split split = xsent::Split::Train) {
  return {std::move(title), std::move(text), rating, lang, domain, split};
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::path(XSENT_SCRATCH_DIR) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test

#include <array>
#include <string_view>

#include "xsent/rng.hpp"

namespace test {

// Random review-like text built from fragments that exercise every stage
// of the normalizer: markup, entities (nested up to three levels), URLs,
// emails, punctuation runs and assorted whitespace.
inline std::string fuzz_text(xsent::Rng& rng) {
  static constexpr std::array<std::string_view, 44> kFragments{
      "a", "Bun", "film", "libro", "x", "3", " ", "  ", "\t", "\n", "\r\n", "\xC2\xA0", "\xE2\x80\x83",
      "!", "?", ".", "...", "!!!!!", "?!?!", ",", "--", "**", "@", "<b>", "</p>", "<br/>", "<", ">",
      "&amp;", "&amp;amp;", "&amp;lt;b&amp;gt;", "&lt;", "&gt;", "&nbsp;", "&#39;", "&#x219;", "&",
      "http://x.ro/a?b=1", "https://Y.it", "www.z.com", "ana@mail.ro", "a.b@c.it", "\xC8\x99", "\xE2\x80\x8B"};
  std::string out;
  const auto n = 1 + xsent::uniform_index(rng, 24);
  for (std::uint64_t i = 0; i < n; ++i) out += kFragments[xsent::uniform_index(rng, kFragments.size())];
  return out;
}

}  // namespace test
