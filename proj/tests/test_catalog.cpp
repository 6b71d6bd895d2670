#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "rac/catalog.hpp"
#include "rac/error.hpp"

using namespace rac;

TEST_CASE("line order defines ids; comments and blanks are skipped") {
  std::istringstream in(
      "# names\n"
      "bolt\n"
      "\n"
      "  Nut  \n"
      "# trailing comment\n"
      "washer\n");
  const Catalog cat = parse_catalog(in);
  REQUIRE(cat.size() == 3);
  REQUIRE(cat.text(0) == "bolt");
  REQUIRE(cat.text(1) == "nut");  // lowercased and trimmed
  REQUIRE(cat.text(2) == "washer");
}

TEST_CASE("duplicates after canonicalization are rejected") {
  REQUIRE_THROWS_AS(Catalog::from_texts({"Bolt", "bolt"}), InvalidInputError);
  REQUIRE_THROWS_AS(Catalog::from_texts({"a", "  A "}), InvalidInputError);
}

TEST_CASE("empty catalogs and empty entities are rejected") {
  REQUIRE_THROWS_AS(Catalog::from_texts({}), InvalidInputError);
  REQUIRE_THROWS_AS(Catalog::from_texts({"ok", "   "}), InvalidInputError);
  std::istringstream only_comments("# nothing here\n\n");
  REQUIRE_THROWS_AS(parse_catalog(only_comments), InvalidInputError);
}

TEST_CASE("content hash tracks text and order") {
  const Catalog a = Catalog::from_texts({"one", "two"});
  const Catalog b = Catalog::from_texts({"one", "two"});
  const Catalog c = Catalog::from_texts({"two", "one"});
  REQUIRE(a.content_hash() == b.content_hash());
  REQUIRE(a.content_hash() != c.content_hash());
}

TEST_CASE("save and reload preserves ids") {
  const Catalog a = Catalog::from_texts({"alpha", "beta", "gamma"});
  const std::string path = "catalog_roundtrip_test.txt";
  save_catalog(a, path);
  const Catalog b = load_catalog(path);
  REQUIRE(b.size() == 3);
  REQUIRE(b.texts() == a.texts());
  std::remove(path.c_str());
}
