#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace xsent {

// Error hierarchy. The CLI maps each family onto its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid settings or command-line values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or schema-violating input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Failure while computing (shape mismatch, non-finite values, transport).
class RuntimeError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

enum class Language { IT, RO };
enum class Domain { Books, Movies, Music };
enum class Split { Train, Valid, Test };

inline constexpr std::array<Language, 2> kLanguages{Language::IT, Language::RO};
inline constexpr std::array<Domain, 3> kDomains{Domain::Books, Domain::Movies, Domain::Music};
inline constexpr std::array<Split, 3> kSplits{Split::Train, Split::Valid, Split::Test};

/// Rating classes in head order. Rating 3 is not part of the label space.
inline constexpr std::array<int, 4> kRatings{1, 2, 4, 5};

inline constexpr std::size_t kNumRatingClasses = kRatings.size();
inline constexpr std::size_t kNumDomains = kDomains.size();
inline constexpr std::size_t kNumLanguages = kLanguages.size();

inline bool is_valid_rating(int rating) {
  return rating == 1 || rating == 2 || rating == 4 || rating == 5;
}

/// Maps a rating onto its class index (1->0, 2->1, 4->2, 5->3).
inline std::size_t rating_to_class(int rating) {
  switch (rating) {
    case 1: return 0;
    case 2: return 1;
    case 4: return 2;
    case 5: return 3;
    default: throw DataError("rating " + std::to_string(rating) + " is outside {1,2,4,5}");
  }
}

inline int class_to_rating(std::size_t index) { return kRatings.at(index); }

inline std::size_t index_of(Language l) { return static_cast<std::size_t>(l); }
inline std::size_t index_of(Domain d) { return static_cast<std::size_t>(d); }
inline std::size_t index_of(Split s) { return static_cast<std::size_t>(s); }

std::string_view to_string(Language l);
std::string_view to_string(Domain d);
std::string_view to_string(Split s);

std::optional<Language> parse_language(std::string_view s);
std::optional<Domain> parse_domain(std::string_view s);
std::optional<Split> parse_split(std::string_view s);

/// Display labels used in report tables ("IT", "Books", ...).
std::string_view display_name(Language l);
std::string_view display_name(Domain d);

}  // namespace xsent
