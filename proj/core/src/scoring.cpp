#include "nerh/scoring.hpp"

#include <cmath>
#include <set>

#include "nerh/errors.hpp"

namespace nerh {

ScoreCard ScoreCard::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  ScoreCard c;
  c.tp = tp;
  c.fp = fp;
  c.fn = fn;
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  c.precision = ratio(tp, tp + fp);
  c.recall = ratio(tp, tp + fn);
  c.accuracy = ratio(tp, tp + fp + fn);
  const double sum = c.precision + c.recall;
  c.f1 = sum == 0.0 ? 0.0 : 2.0 * c.precision * c.recall / sum;
  return c;
}

ScoreCard score(std::span<const std::string> gold, std::span<const std::string> predicted) {
  const std::set<std::string> g(gold.begin(), gold.end());
  const std::set<std::string> p(predicted.begin(), predicted.end());
  std::size_t tp = 0;
  for (const auto& e : p) tp += g.count(e);
  return ScoreCard::from_counts(tp, p.size() - tp, g.size() - tp);
}

ScoreCard pool(std::span<const ScoreCard> cards) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& c : cards) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  return ScoreCard::from_counts(tp, fp, fn);
}

DerivedRates derive_from_rates(double precision, double recall) {
  if (precision <= 0.0 || recall <= 0.0) return {0.0, 0.0};
  // With tp normalized to 1: fp = 1/P - 1, fn = 1/R - 1.
  return {2.0 * precision * recall / (precision + recall),
          1.0 / (1.0 / precision + 1.0 / recall - 1.0)};
}

double round_to(double value, int places) {
  const double scale = std::pow(10.0, places);
  // Nudge by a few ulps so values like 0.7619... or 36.25 printed from
  // binary fractions round the way the decimal reading suggests.
  const double scaled = value * scale;
  return std::round(scaled + std::copysign(1e-9, scaled)) / scale;
}

AggregateScore aggregate(std::span<const ScoreCard> cards, std::span<const double> times_s) {
  if (cards.empty()) throw PreconditionError("aggregate needs at least one repetition");
  if (cards.size() != times_s.size()) throw PreconditionError("aggregate: cards and times differ in length");
  AggregateScore out;
  out.repetitions.assign(cards.begin(), cards.end());
  double a = 0, p = 0, r = 0, f = 0, t = 0;
  for (std::size_t i = 0; i < cards.size(); ++i) {
    a += cards[i].accuracy;
    p += cards[i].precision;
    r += cards[i].recall;
    f += cards[i].f1;
    t += times_s[i];
  }
  const double n = static_cast<double>(cards.size());
  out.accuracy = round_to(a / n, 3);
  out.precision = round_to(p / n, 3);
  out.recall = round_to(r / n, 3);
  out.f1 = round_to(f / n, 3);
  out.iteration_time_s = round_to(t / n, 1);
  return out;
}

double percent_change(double initial, double final_value) {
  if (initial == 0.0) throw PreconditionError("percent_change: initial value is zero");
  return (final_value - initial) / initial * 100.0;
}

double failure_percent(std::size_t errors, std::size_t iterations) {
  if (iterations == 0) throw PreconditionError("failure_percent: zero iterations");
  if (errors > iterations) throw PreconditionError("failure_percent: more errors than iterations");
  return round_to(100.0 * static_cast<double>(errors) / static_cast<double>(iterations), 2);
}

}  // namespace nerh
