#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nerh {

/// Set-based extraction metrics. There are no true negatives in set
/// extraction, so accuracy is the Jaccard overlap tp / (tp + fp + fn).
/// Empty denominators give 1.0 for accuracy/precision/recall; f1 is 0.0 when
/// precision and recall are both 0.
struct ScoreCard {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double accuracy = 1.0;
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;

  static ScoreCard from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
};

/// Exact string equality, set semantics (duplicates and order ignored).
ScoreCard score(std::span<const std::string> gold, std::span<const std::string> predicted);

/// Micro pooling: sums tp/fp/fn and recomputes the metrics.
ScoreCard pool(std::span<const ScoreCard> cards);

/// F1 and Jaccard accuracy implied by a precision/recall pair.
struct DerivedRates {
  double f1;
  double accuracy;
};
DerivedRates derive_from_rates(double precision, double recall);

struct AggregateScore {
  std::vector<ScoreCard> repetitions;
  double accuracy = 0.0;   // 3 dp
  double precision = 0.0;  // 3 dp
  double recall = 0.0;     // 3 dp
  double f1 = 0.0;         // 3 dp
  double iteration_time_s = 0.0;  // 1 dp
};

/// Means over repetitions (one micro-pooled card per repetition). Throws
/// PreconditionError on empty or mismatched inputs.
AggregateScore aggregate(std::span<const ScoreCard> cards, std::span<const double> times_s);

/// ((final - initial) / initial) * 100. Throws PreconditionError if initial == 0.
double percent_change(double initial, double final_value);

/// 100 * errors / iterations rounded to 2 dp.
double failure_percent(std::size_t errors, std::size_t iterations);

/// Half-away-from-zero rounding to `places` decimals.
double round_to(double value, int places);

}  // namespace nerh
