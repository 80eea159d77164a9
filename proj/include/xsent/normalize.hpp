#pragma once

#include <string>
#include <string_view>

namespace xsent {

/// Placeholders substituted for external references.
inline constexpr std::string_view kUrlToken = "[URL]";
inline constexpr std::string_view kEmailToken = "[EMAIL]";

/// Maximum number of tag-strip / entity-decode passes.
inline constexpr int kMaxDecodePasses = 3;

/**
 * Cleans one review field. Stages run in a fixed order:
 *
 *   1. markup: drop hidden control characters, replace HTML tags with a
 *      space, decode entities; repeated until nothing changes or
 *      kMaxDecodePasses passes have run
 *   2. URLs become [URL], email addresses become [EMAIL]
 *   3. runs of 4+ identical ASCII punctuation marks and runs of 4+ mixed
 *      terminal marks (. ! ?) keep their first three characters
 *   4. whitespace runs (including NBSP and the other Unicode spaces)
 *      become a single ASCII space
 *   5. trim
 *
 * The result is a fixed point of the function for any input whose entity
 * encoding is nested at most kMaxDecodePasses levels deep.
 */
std::string normalize_text(std::string_view raw);

// Individual stages, exposed for testing.
std::string strip_markup(std::string_view text);
std::string decode_entities(std::string_view text);
std::string replace_urls_and_emails(std::string_view text);
std::string collapse_punctuation(std::string_view text);
std::string collapse_whitespace(std::string_view text);

/// True for the code points treated as whitespace by the pipeline.
bool is_unicode_space(char32_t cp);

}  // namespace xsent
