#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "nerh/errors.hpp"
#include "nerh/scoring.hpp"

using namespace nerh;

namespace {

using Strings = std::vector<std::string>;

// Counts through explicit set algebra rather than the library's loop.
struct Counts {
  std::size_t tp, fp, fn;
};
Counts oracle_counts(const Strings& gold, const Strings& pred) {
  const std::set<std::string> g(gold.begin(), gold.end()), p(pred.begin(), pred.end());
  Strings inter, only_p, only_g;
  std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(inter));
  std::set_difference(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(only_p));
  std::set_difference(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(only_g));
  return {inter.size(), only_p.size(), only_g.size()};
}

}  // namespace

TEST_CASE("score on the small worked examples") {
  SUBCASE("one miss, one spurious") {
    const auto s = score(Strings{"A", "B", "C"}, Strings{"A", "B", "D"});
    CHECK(s.tp == 2);
    CHECK(s.fp == 1);
    CHECK(s.fn == 1);
    CHECK(s.precision == doctest::Approx(2.0 / 3));
    CHECK(s.recall == doctest::Approx(2.0 / 3));
    CHECK(s.f1 == doctest::Approx(2.0 / 3));
    CHECK(s.accuracy == doctest::Approx(0.5));
  }
  SUBCASE("both empty") {
    const auto s = score(Strings{}, Strings{});
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(s.accuracy == 1.0);
    CHECK(s.f1 == 1.0);
  }
  SUBCASE("nothing predicted") {
    const auto s = score(Strings{"A"}, Strings{});
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 0.0);
    CHECK(s.accuracy == 0.0);
    CHECK(s.f1 == doctest::Approx(0.0));
  }
  SUBCASE("nothing to find") {
    const auto s = score(Strings{}, Strings{"X"});
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 1.0);
    CHECK(s.accuracy == 0.0);
  }
  SUBCASE("disjoint") {
    const auto s = score(Strings{"A"}, Strings{"B"});
    CHECK(s.f1 == 0.0);
    CHECK(s.accuracy == 0.0);
  }
  SUBCASE("comparison is exact") {
    CHECK(score(Strings{"FBI"}, Strings{"fbi"}).tp == 0);
    CHECK(score(Strings{"FBI"}, Strings{"FBI "}).tp == 0);
  }
}

TEST_CASE("rates recomputed from published precision/recall pairs") {
  // F1 and Jaccard accuracy implied by two reported P/R pairs; expected
  // values come from the closed forms 2PR/(P+R) and PR/(P+R-PR).
  const auto oracle = [](double p, double r) {
    return std::pair{2 * p * r / (p + r), p * r / (p + r - p * r)};
  };
  for (auto [p, r] : {std::pair{0.486, 0.845}, std::pair{0.982, 0.951}}) {
    const auto d = derive_from_rates(p, r);
    const auto [f1, acc] = oracle(p, r);
    CHECK(d.f1 == doctest::Approx(f1).epsilon(1e-12));
    CHECK(d.accuracy == doctest::Approx(acc).epsilon(1e-12));
  }
  const auto low = derive_from_rates(0.486, 0.845);
  CHECK(round_to(low.f1, 3) == doctest::Approx(0.617));
  CHECK(std::abs(low.accuracy - 0.447) <= 0.001);
  const auto high = derive_from_rates(0.982, 0.951);
  CHECK(round_to(high.f1, 3) == doctest::Approx(0.966));
  CHECK(round_to(high.accuracy, 3) == doctest::Approx(0.935));
}

TEST_CASE("score matches a set-algebra oracle on every small pair of sets") {
  const Strings alphabet{"a", "b", "c", "d", "e"};
  std::vector<Strings> subsets;
  for (unsigned mask = 0; mask < 32; ++mask) {
    if (__builtin_popcount(mask) > 4) continue;
    Strings s;
    for (int i = 0; i < 5; ++i)
      if (mask & (1u << i)) s.push_back(alphabet[i]);
    subsets.push_back(s);
  }
  for (const auto& g : subsets)
    for (const auto& p : subsets) {
      const auto s = score(g, p);
      const auto o = oracle_counts(g, p);
      CHECK(s.tp == o.tp);
      CHECK(s.fp == o.fp);
      CHECK(s.fn == o.fn);
      if (s.precision + s.recall > 0 && !(g.empty() && p.empty())) {
        // F1 = 2J / (1 + J) holds whenever something is in play.
        CHECK(s.f1 == doctest::Approx(2 * s.accuracy / (1 + s.accuracy)));
      }
      CHECK(s.accuracy <= std::min(s.precision, s.recall) + 1e-12);
      CHECK(s.f1 >= s.accuracy - 1e-12);
    }
}

TEST_CASE("score ignores order and duplicates") {
  std::mt19937 rng(5);
  const Strings pool{"Ann", "Bob", "Cy", "Dee", "Eve", "Fay"};
  for (int trial = 0; trial < 300; ++trial) {
    Strings g, p;
    for (int i = 0; i < static_cast<int>(rng() % 6); ++i) g.push_back(pool[rng() % pool.size()]);
    for (int i = 0; i < static_cast<int>(rng() % 6); ++i) p.push_back(pool[rng() % pool.size()]);
    const auto base = score(g, p);
    Strings g2 = g, p2 = p;
    std::shuffle(g2.begin(), g2.end(), rng);
    std::shuffle(p2.begin(), p2.end(), rng);
    if (!p2.empty()) p2.push_back(p2.front());
    const auto other = score(g2, p2);
    CHECK(other.tp == base.tp);
    CHECK(other.fp == base.fp);
    CHECK(other.fn == base.fn);
    CHECK(other.accuracy == base.accuracy);
  }
}

TEST_CASE("pool sums counts") {
  const std::vector<ScoreCard> cards{ScoreCard::from_counts(2, 1, 0), ScoreCard::from_counts(0, 0, 3),
                                     ScoreCard::from_counts(1, 1, 1)};
  const auto p = pool(cards);
  CHECK(p.tp == 3);
  CHECK(p.fp == 2);
  CHECK(p.fn == 4);
  CHECK(p.accuracy == doctest::Approx(3.0 / 9));
  CHECK(p.precision == doctest::Approx(3.0 / 5));
  CHECK(p.recall == doctest::Approx(3.0 / 7));
  CHECK(pool(std::vector<ScoreCard>{}).accuracy == 1.0);
}

TEST_CASE("aggregate averages repetitions and rounds") {
  const std::vector<ScoreCard> cards{ScoreCard::from_counts(1, 0, 0), ScoreCard::from_counts(1, 1, 1)};
  const std::vector<double> times{10.04, 10.12};
  const auto a = aggregate(cards, times);
  CHECK(a.accuracy == doctest::Approx(round_to((1.0 + 1.0 / 3) / 2, 3)));
  CHECK(a.accuracy == doctest::Approx(0.667));
  CHECK(a.precision == doctest::Approx(0.75));
  CHECK(a.recall == doctest::Approx(0.75));
  CHECK(a.f1 == doctest::Approx(0.75));
  CHECK(a.iteration_time_s == doctest::Approx(10.1));
  CHECK(a.repetitions.size() == 2);
  CHECK_THROWS_AS(aggregate(std::vector<ScoreCard>{}, std::vector<double>{}), PreconditionError);
  CHECK_THROWS_AS(aggregate(cards, std::vector<double>{1.0}), PreconditionError);
}

TEST_CASE("percent_change") {
  CHECK(percent_change(0.362, 0.488) == doctest::Approx((0.488 - 0.362) / 0.362 * 100));
  CHECK(round_to(percent_change(0.362, 0.488), 2) == doctest::Approx(34.81));
  CHECK(round_to(percent_change(0.889, 0.938), 2) == doctest::Approx(5.51));
  CHECK(percent_change(2.0, 1.0) == doctest::Approx(-50.0));
  CHECK_THROWS_AS(percent_change(0.0, 1.0), PreconditionError);
}

TEST_CASE("failure_percent") {
  CHECK(failure_percent(4, 525) == doctest::Approx(0.76));
  CHECK(failure_percent(0, 525) == 0.0);
  CHECK(failure_percent(525, 525) == 100.0);
  CHECK(failure_percent(1, 3) == doctest::Approx(33.33));
  CHECK_THROWS_AS(failure_percent(0, 0), PreconditionError);
  CHECK_THROWS_AS(failure_percent(6, 5), PreconditionError);
}

TEST_CASE("round_to is half away from zero") {
  CHECK(round_to(0.0005, 3) == doctest::Approx(0.001));
  CHECK(round_to(0.1235, 3) == doctest::Approx(0.124));
  CHECK(round_to(-0.1235, 3) == doctest::Approx(-0.124));
  CHECK(round_to(2.45, 1) == doctest::Approx(2.5));
  CHECK(round_to(1.0, 2) == 1.0);
}
