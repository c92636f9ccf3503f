#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace randinf {

/// Treatment indicators for n units, 1 = treated.
using Assignment = std::vector<std::uint8_t>;

std::size_t treated_count(std::span<const std::uint8_t> z);

struct CompleteRandomization {
  std::size_t units = 0;
  std::size_t treated = 0;
};

struct BernoulliRandomization {
  std::size_t units = 0;
  double probability = 0.5;
};

struct ExplicitDesign {
  std::vector<std::pair<Assignment, double>> rows;
};

/// Largest assignment space that may be enumerated unless the caller says otherwise.
inline constexpr std::uint64_t kDefaultEnumerationCap = 2'000'000;

/// An immutable treatment-assignment mechanism: CRE, BRE or an explicit
/// probability table. Validation happens in the factories.
class Mechanism {
 public:
  using Variant = std::variant<CompleteRandomization, BernoulliRandomization, ExplicitDesign>;

  static Mechanism complete(std::size_t units, std::size_t treated);
  static Mechanism bernoulli(std::size_t units, double probability);
  /// Rows are sorted into enumeration order. `declare_exchangeable` is
  /// verified: the probability of a row may only depend on its treated count
  /// and every permutation of a supported row must be present.
  static Mechanism explicit_table(std::vector<std::pair<Assignment, double>> rows,
                                  bool declare_exchangeable = false);

  std::size_t units() const noexcept { return units_; }
  bool exchangeable() const noexcept { return exchangeable_; }
  /// True when every assignment in the support has the same probability.
  bool uniform() const noexcept;
  const Variant& variant() const noexcept { return variant_; }

  /// Stable text form, e.g. "cre(n=6,m=3)"; used as a cache key and in output metadata.
  std::string describe() const;

  /// P(Z_i = 1) for every unit.
  std::vector<double> treatment_marginals() const;

 private:
  Mechanism(Variant v, std::size_t units, bool exchangeable)
      : variant_(std::move(v)), units_(units), exchangeable_(exchangeable) {}

  Variant variant_;
  std::size_t units_ = 0;
  bool exchangeable_ = false;
};

/// Number of assignments in the support; nullopt when the count does not fit
/// in 64 bits (reported as "exceeds-enumeration-capacity" by enumerate).
std::optional<std::uint64_t> space_size(const Mechanism& mech);

using AssignmentVisitor = std::function<void(const Assignment&, double probability)>;

/// Visits every assignment once with its exact probability. Order is
/// lexicographic on the bit vector with 1 sorting before 0, so CRE(2,1)
/// yields [1,0] then [0,1]. Throws Error(kCapacity) when the space exceeds cap.
void enumerate(const Mechanism& mech, std::uint64_t cap, const AssignmentVisitor& visit);

std::vector<std::pair<Assignment, double>> enumerate_all(const Mechanism& mech,
                                                         std::uint64_t cap = kDefaultEnumerationCap);

/// Draw number `index` of the stream identified by `seed`. Fully determined by
/// (seed, index), so parallel callers reproduce serial results exactly.
Assignment sample(const Mechanism& mech, std::uint64_t seed, std::uint64_t index);

/// SplitMix64 counter stream. Satisfies UniformRandomBitGenerator so it can feed
/// <random> distributions; `below` and `uniform01` are portable across standard
/// libraries.
class CounterStream {
 public:
  using result_type = std::uint64_t;

  CounterStream(std::uint64_t seed, std::uint64_t index);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

 private:
  std::uint64_t state_;
};

/// Derives an independent seed for a sub-stream (replication, trial, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace randinf
