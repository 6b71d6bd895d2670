#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rac {

// All failures surface as one of these types so callers can match on the
// failure class rather than parsing messages.

struct InvalidInputError : std::runtime_error {
  explicit InvalidInputError(const std::string& what) : std::runtime_error(what) {}
};

// Encoded catalog does not match the parameters passed alongside it.
struct StaleEncodingError : std::runtime_error {
  explicit StaleEncodingError(const std::string& what) : std::runtime_error(what) {}
};

// Index was built against a different encoded catalog.
struct StaleIndexError : std::runtime_error {
  explicit StaleIndexError(const std::string& what) : std::runtime_error(what) {}
};

struct CorruptIndexError : std::runtime_error {
  CorruptIndexError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset(offset) {}
  std::uint64_t offset;
};

struct UnsupportedVersionError : std::runtime_error {
  explicit UnsupportedVersionError(const std::string& what) : std::runtime_error(what) {}
};

struct DivergedTrainingError : std::runtime_error {
  DivergedTrainingError(const std::string& what, std::size_t epoch, std::size_t step)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + ")"),
        epoch(epoch),
        step(step) {}
  std::size_t epoch;
  std::size_t step;
};

struct GenerationFailureError : std::runtime_error {
  explicit GenerationFailureError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rac
