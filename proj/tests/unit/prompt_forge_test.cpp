#include <doctest.h>

#include "nerh/errors.hpp"
#include "nerh/prompt_forge.hpp"
#include "test_support.hpp"

using namespace nerh;
using nerh::testing::contains;

namespace {

const PromptLibrary& library() {
  static const PromptLibrary lib = PromptLibrary::load(NERH_PROMPT_DIR);
  return lib;
}

Article sample_article() {
  Article a;
  a.id = "a1";
  a.body = "Prosecutors say {braces} and \"quotes\" appear here. John Smith paid ABC Ltd.";
  return a;
}

std::vector<std::vector<int>> all_subsets(int max_id) {
  std::vector<std::vector<int>> out;
  for (unsigned mask = 0; mask < (1u << max_id); ++mask) {
    std::vector<int> ids;
    for (int i = 0; i < max_id; ++i)
      if (mask & (1u << i)) ids.push_back(i + 1);
    out.push_back(ids);
  }
  return out;
}

int role_count(const std::vector<int>& ids) {
  int n = 0;
  for (int id : ids) n += id <= 3;
  return n;
}

}  // namespace

TEST_CASE("variant labels") {
  CHECK(PromptVariant::make(EntityClass::Individual, {}).label() == "-");
  CHECK(PromptVariant::make(EntityClass::Individual, {4}).label() == "4)");
  CHECK(PromptVariant::make(EntityClass::Organization, {5, 1, 4}).label() == "1),4),5)");
  CHECK(PromptVariant::make(EntityClass::Organization, {4, 4}).additions == std::vector<int>{4});
}

TEST_CASE("variant preconditions") {
  CHECK_THROWS_AS(PromptVariant::make(EntityClass::Individual, {1, 2}), PreconditionError);
  CHECK_THROWS_AS(PromptVariant::make(EntityClass::Individual, {5}), PreconditionError);
  CHECK_THROWS_AS(PromptVariant::make(EntityClass::Organization, {0}), PreconditionError);
  CHECK_THROWS_AS(PromptVariant::make(EntityClass::Organization, {6}), PreconditionError);
  CHECK_NOTHROW(PromptVariant::make(EntityClass::Organization, {3, 4, 5}));
}

TEST_CASE("label round trip over every admissible variant") {
  for (EntityClass cls : kAllClasses) {
    for (const auto& ids : all_subsets(max_addition_id(cls))) {
      if (role_count(ids) > 1) {
        CHECK_THROWS_AS(PromptVariant::make(cls, ids), PreconditionError);
        continue;
      }
      const auto v = PromptVariant::make(cls, ids);
      CHECK(PromptVariant::parse(cls, v.label()) == v);
    }
  }
  CHECK_THROWS_AS(PromptVariant::parse(EntityClass::Individual, "4),1)"), ParseError);
  CHECK_THROWS_AS(PromptVariant::parse(EntityClass::Individual, "x"), ParseError);
  CHECK_THROWS_AS(PromptVariant::parse(EntityClass::Individual, ""), ParseError);
}

TEST_CASE("the rendered base prompt is a contiguous part of every variant") {
  const Article art = sample_article();
  for (EntityClass cls : kAllClasses) {
    const std::string base = render_extraction_prompt(library(), art, PromptVariant::make(cls, {}));
    CHECK(contains(base, art.body));
    CHECK(placeholders(base).empty() == false);  // the article's own "{braces}" survive
    for (const auto& ids : all_subsets(max_addition_id(cls))) {
      if (role_count(ids) > 1) continue;
      const auto v = PromptVariant::make(cls, ids);
      const std::string p = render_extraction_prompt(library(), art, v);
      INFO(v.label());
      CHECK(contains(p, base));
      for (int id : ids) {
        if (id <= 3) CHECK(p.rfind(library().text("role_" + std::string(to_string(cls)) + "_" + std::to_string(id)), 0) == 0);
        if (id == kCotAddition) {
          const std::string& cot = library().text("chain_of_thought");
          CHECK(p.size() >= cot.size());
          CHECK(p.compare(p.size() - cot.size(), cot.size(), cot) == 0);
        }
        if (id == kContextAddition) CHECK(p.find(library().text("context_organization")) < p.find(base));
      }
      if (ids.empty()) CHECK(p == base);
    }
  }
}

TEST_CASE("single-pass substitution") {
  CHECK(render_template("a {x} b", {{"x", "{y}"}, {"y", "no"}}) == "a {y} b");
  CHECK(render_template("{x}{x}", {{"x", "1"}}) == "11");
  CHECK(render_template("{\"k\": [1]} {X} {}", {}) == "{\"k\": [1]} {X} {}");
  CHECK_THROWS_AS(render_template("{missing}", {}), PreconditionError);
  CHECK(placeholders("{a} {b} {a} {C}") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("structuring and matching prompts") {
  const std::string s = render_structuring_prompt(library(), "Names: A, B", EntityClass::Organization);
  CHECK(contains(s, "Names: A, B"));
  CHECK(contains(s, "organizations"));
  CHECK_THROWS_AS(render_structuring_prompt(library(), "", EntityClass::Individual), PreconditionError);

  const std::vector<std::string> gold{"Federal Bureau of Investigations", "Interpol"};
  const std::vector<std::string> pred{"FBI"};
  const std::string m = render_matching_prompt(library(), gold, pred);
  CHECK(contains(m, "1. Federal Bureau of Investigations\n2. Interpol"));
  CHECK(contains(m, "1. FBI"));
  CHECK_THROWS_AS(render_matching_prompt(library(), gold, std::vector<std::string>{}), PreconditionError);
  CHECK_THROWS_AS(render_matching_prompt(library(), std::vector<std::string>{}, pred), PreconditionError);
}

TEST_CASE("every template in the shipped library renders") {
  for (const auto& id : PromptLibrary::required_ids()) {
    std::map<std::string, std::string> b;
    for (const auto& name : placeholders(library().text(id))) b[name] = "v";
    CHECK_NOTHROW(library().render(id, b));
  }
}

TEST_CASE("enumerate_variants deduplicates in first-seen order") {
  const auto v = enumerate_variants(EntityClass::Organization, {{4}, {}, {4, 4}, {5, 1}, {1, 5}});
  REQUIRE(v.size() == 3);
  CHECK(v[0].label() == "4)");
  CHECK(v[1].label() == "-");
  CHECK(v[2].label() == "1),5)");
  CHECK(enumerate_variants(EntityClass::Individual, {}).empty());
}

TEST_CASE("missing template directory or file") {
  nerh::testing::TempDir dir;
  CHECK_THROWS_AS(PromptLibrary::load(dir / "nope"), ParseError);
  CHECK_THROWS_AS(PromptLibrary::load(dir.path()), ParseError);
}
