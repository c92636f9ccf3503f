#pragma once

// Brute-force reference implementations for tests. They enumerate the
// assignment space on their own and apply the p-value definitions literally;
// the only production code they call is statistic evaluation (and, in the
// validity audit, the procedure being audited).

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "randinf/assignment.hpp"
#include "randinf/inference.hpp"
#include "randinf/statistics.hpp"

namespace randinf::oracle {

inline constexpr std::uint64_t kOracleCap = 100'000;

struct Support {
  std::vector<std::pair<Assignment, double>> rows;
  bool uniform = true;
};

/// One production-versus-oracle comparison. Matches are exact (no tolerance).
struct OracleReport {
  std::string instance;
  double production = 0.0;
  double oracle = 0.0;
  bool match = false;
  std::string counterexample;  // filled when the values differ
};

OracleReport compare(std::string instance, double production, double oracle, std::string payload = {});

/// Support of a design by filtering all 2^n bit patterns (CRE, BRE) or by
/// copying the explicit table.
Support support(const Mechanism& mech, std::uint64_t cap = kOracleCap);

/// sum_a P(a) 1{t(a, y - z*delta) >= t(z, y - z*delta)}.
double brute_pvalue_sharp(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                          std::span<const double> y, std::span<const double> delta);

/// sum_a P(a) 1{t(a, Y_delta(a)) >= t(z, y)}, both arms imputed.
double brute_pvalue_alt(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                        std::span<const double> y, std::span<const double> delta);

struct SubsetMinimum {
  double minimum = 0.0;
  std::vector<std::size_t> argmin;  // first minimizing subset in enumeration order
  std::vector<std::vector<std::size_t>> minimizers;  // every minimizing subset
  double shift = 0.0;  // the large constant used on the subset
};

/// Minimum of t(z, y - z*xi_J) over treated subsets J of size min(n-k, m),
/// with xi_J = shift on J and c elsewhere. The shift is ten times the
/// production constant.
SubsetMinimum brute_min_over_Hkc(const Statistic& stat, std::span<const std::uint8_t> z,
                                 std::span<const double> y, std::size_t k, double c);

/// Lowest statistic value seen over `probes` random effect vectors with at
/// least k coordinates <= c.
double probe_min_over_Hkc(const Statistic& stat, std::span<const std::uint8_t> z, std::span<const double> y,
                          std::size_t k, double c, std::size_t probes, std::uint64_t seed);

/// Sharp p-value at the minimizing xi_J: the supremum over the quantile null.
double brute_pvalue_quantile(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                             std::span<const double> y, std::size_t k, double c);

/// Smallest grid point c in [lo, hi] (step `step`) with p(c) > alpha, or -inf
/// if p(lo) > alpha already, +inf if none.
double grid_lower_limit(const std::function<double(double)>& p, double lo, double hi, double step, double alpha);

struct AuditReport {
  std::uint64_t assignments = 0;
  std::vector<double> alphas;
  std::vector<double> rejection_rate;  // P(p <= alpha) for each alpha
  double band_alpha = 0.0;
  double band_coverage = 1.0;          // P(every tau_(k) inside its band limit)
};

/// Exact audit over every assignment of a fixed potential-outcome table. The
/// p-value tested is the production bounded-null p-value at `bound`; the band
/// is the production greater-side band at `band_alpha` (skipped when 0).
AuditReport validity_audit(const Mechanism& mech, const Statistic& stat, std::span<const double> y0,
                           std::span<const double> y1, std::span<const double> bound,
                           const std::vector<double>& alphas, double band_alpha);

}  // namespace randinf::oracle
