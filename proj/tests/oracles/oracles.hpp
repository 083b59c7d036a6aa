#pragma once

// Brute-force reference implementations for the test suite. They reuse the
// project's plain data types but none of its algorithms.

#include <cstdint>
#include <string>
#include <vector>

#include "tram/featurize.hpp"

namespace tram::oracle {

struct OracleReport {
  std::string case_id;
  double max_abs_deviation = 0.0;
  double max_rel_deviation = 0.0;
  [[nodiscard]] bool within(double abs_tol) const { return max_abs_deviation <= abs_tol; }
};

/// Materialises every second of the day and aggregates ten-minute windows
/// directly. Throws std::invalid_argument on a day without samples.
[[nodiscard]] DaySequence featurize(const DayStreams& day);

/// Exhaustive scan: sort every (distance, index) pair, take the first k and
/// return the fraction of class-1 labels.
[[nodiscard]] double knn_p1(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                            const std::vector<double>& query, std::size_t k);

/// Macro F1 from per-class precision and recall in exact rational arithmetic.
[[nodiscard]] double f1_macro(const std::vector<int>& truth, const std::vector<int>& pred);

struct MaskStats {
  double masked_fraction = 0.0;
  double mean_masked_run = 0.0;
  std::size_t runs = 0;
};

/// Fraction of true entries and mean length of maximal true runs.
[[nodiscard]] MaskStats mask_stats(const std::vector<std::uint8_t>& column);

[[nodiscard]] OracleReport compare(const std::string& case_id, const std::vector<double>& main_path,
                                   const std::vector<double>& oracle);

}  // namespace tram::oracle
