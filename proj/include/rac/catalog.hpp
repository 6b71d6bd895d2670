#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "rac/binio.hpp"
#include "rac/error.hpp"

namespace rac {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

/// Ordered list of entity strings. Ids are dense 0..N-1 in insertion order;
/// texts are canonicalized (lowercased, trimmed) and must be unique.
class Catalog {
 public:
  static Catalog from_texts(const std::vector<std::string>& texts) {
    Catalog cat;
    std::unordered_set<std::string> seen;
    for (const std::string& raw : texts) {
      const std::string text = lowercase(trim(raw));
      if (text.empty()) {
        throw InvalidInputError("catalog entity is empty after trimming");
      }
      if (!seen.insert(text).second) {
        throw InvalidInputError("duplicate catalog entity: " + text);
      }
      cat.entities_.push_back(text);
    }
    if (cat.entities_.empty()) {
      throw InvalidInputError("catalog must contain at least one entity");
    }
    return cat;
  }

  std::size_t size() const { return entities_.size(); }
  const std::string& text(std::size_t id) const { return entities_[id]; }
  const std::vector<std::string>& texts() const { return entities_; }

  /// Checksum over canonical texts in id order.
  std::uint64_t content_hash() const {
    std::uint64_t h = kFnvOffset;
    const char sep = '\n';
    for (const std::string& t : entities_) {
      h = fnv1a64(t.data(), t.size(), h);
      h = fnv1a64(&sep, 1, h);
    }
    return h;
  }

 private:
  std::vector<std::string> entities_;
};

// Line format: one entity per line, '#' comment lines and blank lines
// ignored, line order defines ids.

inline Catalog parse_catalog(std::istream& in) {
  std::vector<std::string> texts;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    texts.push_back(t);
  }
  return Catalog::from_texts(texts);
}

inline Catalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidInputError("cannot open catalog file: " + path);
  }
  return parse_catalog(in);
}

inline void save_catalog(const Catalog& cat, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw InvalidInputError("cannot write catalog file: " + path);
  }
  for (std::size_t i = 0; i < cat.size(); ++i) {
    out << cat.text(i) << '\n';
  }
}

}  // namespace rac
