#include "randinf/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

#include "randinf/error.hpp"

namespace randinf {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// C(n, k) or nullopt on 64-bit overflow.
std::optional<std::uint64_t> binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::uint64_t j = 1; j <= k; ++j) {
    acc = acc * (n - k + j) / j;
    if (acc > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  }
  return static_cast<std::uint64_t>(acc);
}

// Rows sorted so that 1 precedes 0 at the first differing position.
bool bits_before(const Assignment& a, const Assignment& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                      [](std::uint8_t x, std::uint8_t y) { return x > y; });
}

void validate_bits(const Assignment& a, std::size_t n) {
  if (a.size() != n) {
    throw Error(errc::kInvalidArgument, "assignment length does not match unit count");
  }
  for (auto b : a) {
    if (b > 1) throw Error(errc::kInvalidArgument, "assignment entries must be 0 or 1");
  }
}

bool verify_exchangeable(const std::vector<std::pair<Assignment, double>>& rows, std::size_t n) {
  // probability per treated count, and number of supported rows per count
  std::map<std::size_t, std::pair<double, std::uint64_t>> by_count;
  for (const auto& [a, p] : rows) {
    if (p <= 0.0) continue;
    auto m = treated_count(a);
    auto [it, inserted] = by_count.try_emplace(m, p, 0);
    if (!inserted && std::abs(it->second.first - p) > 1e-12) return false;
    ++it->second.second;
  }
  for (const auto& [m, entry] : by_count) {
    auto full = binomial(n, m);
    if (!full || *full != entry.second) return false;
  }
  return true;
}

}  // namespace

std::size_t treated_count(std::span<const std::uint8_t> z) {
  return static_cast<std::size_t>(std::count(z.begin(), z.end(), std::uint8_t{1}));
}

Mechanism Mechanism::complete(std::size_t units, std::size_t treated) {
  if (units < 2 || treated < 1 || treated > units - 1) {
    throw Error(errc::kInvalidArgument, "CRE requires 1 <= m <= n-1");
  }
  return Mechanism(CompleteRandomization{units, treated}, units, true);
}

Mechanism Mechanism::bernoulli(std::size_t units, double probability) {
  if (units < 1 || !(probability > 0.0 && probability < 1.0)) {
    throw Error(errc::kInvalidArgument, "BRE requires 0 < p < 1 and n >= 1");
  }
  return Mechanism(BernoulliRandomization{units, probability}, units, true);
}

Mechanism Mechanism::explicit_table(std::vector<std::pair<Assignment, double>> rows,
                                    bool declare_exchangeable) {
  if (rows.empty()) throw Error(errc::kInvalidArgument, "explicit design needs at least one row");
  const std::size_t n = rows.front().first.size();
  if (n == 0) throw Error(errc::kInvalidArgument, "explicit design rows are empty");
  long double total = 0.0L;
  for (const auto& [a, p] : rows) {
    validate_bits(a, n);
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(errc::kInvalidArgument, "explicit design probabilities must be nonnegative");
    }
    total += p;
  }
  if (std::abs(static_cast<double>(total) - 1.0) > 1e-12) {
    throw Error(errc::kInvalidArgument, "explicit design probabilities must sum to 1");
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& x, const auto& y) { return bits_before(x.first, y.first); });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].first == rows[i - 1].first) {
      throw Error(errc::kInvalidArgument, "explicit design lists an assignment twice");
    }
  }
  if (declare_exchangeable && !verify_exchangeable(rows, n)) {
    throw Error(errc::kInvalidArgument,
                "explicit design declared exchangeable but its probabilities are not permutation invariant");
  }
  return Mechanism(ExplicitDesign{std::move(rows)}, n, declare_exchangeable);
}

bool Mechanism::uniform() const noexcept {
  if (std::holds_alternative<CompleteRandomization>(variant_)) return true;
  if (const auto* b = std::get_if<BernoulliRandomization>(&variant_)) return b->probability == 0.5;
  const auto& rows = std::get<ExplicitDesign>(variant_).rows;
  return std::all_of(rows.begin(), rows.end(),
                     [&](const auto& r) { return r.second == rows.front().second; });
}

std::string Mechanism::describe() const {
  std::ostringstream os;
  os.precision(17);
  if (const auto* c = std::get_if<CompleteRandomization>(&variant_)) {
    os << "cre(n=" << c->units << ",m=" << c->treated << ")";
  } else if (const auto* b = std::get_if<BernoulliRandomization>(&variant_)) {
    os << "bre(n=" << b->units << ",p=" << b->probability << ")";
  } else {
    const auto& rows = std::get<ExplicitDesign>(variant_).rows;
    // FNV-1a over bits and probabilities keeps the key short.
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xFF;
        h *= 1099511628211ULL;
      }
    };
    for (const auto& [a, p] : rows) {
      for (auto bit : a) feed(bit);
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(p));
      std::memcpy(&bits, &p, sizeof(bits));
      feed(bits);
    }
    os << "explicit(n=" << units_ << ",rows=" << rows.size() << ",hash=" << std::hex << h << ")";
  }
  return os.str();
}

std::vector<double> Mechanism::treatment_marginals() const {
  if (const auto* c = std::get_if<CompleteRandomization>(&variant_)) {
    return std::vector<double>(c->units, static_cast<double>(c->treated) / static_cast<double>(c->units));
  }
  if (const auto* b = std::get_if<BernoulliRandomization>(&variant_)) {
    return std::vector<double>(b->units, b->probability);
  }
  std::vector<long double> acc(units_, 0.0L);
  for (const auto& [a, p] : std::get<ExplicitDesign>(variant_).rows) {
    for (std::size_t i = 0; i < units_; ++i) {
      if (a[i]) acc[i] += p;
    }
  }
  return {acc.begin(), acc.end()};
}

std::optional<std::uint64_t> space_size(const Mechanism& mech) {
  const auto& v = mech.variant();
  if (const auto* c = std::get_if<CompleteRandomization>(&v)) return binomial(c->units, c->treated);
  if (const auto* b = std::get_if<BernoulliRandomization>(&v)) {
    if (b->units >= 64) return std::nullopt;
    return std::uint64_t{1} << b->units;
  }
  return std::get<ExplicitDesign>(v).rows.size();
}

void enumerate(const Mechanism& mech, std::uint64_t cap, const AssignmentVisitor& visit) {
  auto size = space_size(mech);
  if (!size || *size > cap) {
    throw Error(errc::kCapacity,
                "exceeds-enumeration-capacity: assignment space of " + mech.describe() +
                    " is larger than the enumeration cap; use a Monte Carlo plan");
  }
  const std::size_t n = mech.units();
  const auto& v = mech.variant();
  if (const auto* c = std::get_if<CompleteRandomization>(&v)) {
    const double prob = 1.0 / static_cast<double>(*size);
    std::vector<std::size_t> idx(c->treated);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Assignment a(n, 0);
    const std::size_t m = c->treated;
    while (true) {
      std::fill(a.begin(), a.end(), std::uint8_t{0});
      for (auto i : idx) a[i] = 1;
      visit(a, prob);
      // next combination in lexicographic order of index sets
      std::size_t pos = m;
      while (pos > 0 && idx[pos - 1] == n - m + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t j = pos; j < m; ++j) idx[j] = idx[j - 1] + 1;
    }
    return;
  }
  if (const auto* b = std::get_if<BernoulliRandomization>(&v)) {
    Assignment a(n, 0);
    for (std::uint64_t code = *size; code-- > 0;) {
      std::size_t ones = 0;
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = static_cast<std::uint8_t>((code >> (n - 1 - i)) & 1U);
        ones += a[i];
      }
      double prob = std::pow(b->probability, static_cast<double>(ones)) *
                    std::pow(1.0 - b->probability, static_cast<double>(n - ones));
      visit(a, prob);
    }
    return;
  }
  for (const auto& [a, p] : std::get<ExplicitDesign>(v).rows) visit(a, p);
}

std::vector<std::pair<Assignment, double>> enumerate_all(const Mechanism& mech, std::uint64_t cap) {
  std::vector<std::pair<Assignment, double>> out;
  enumerate(mech, cap, [&out](const Assignment& a, double p) { out.emplace_back(a, p); });
  return out;
}

CounterStream::CounterStream(std::uint64_t seed, std::uint64_t index)
    : state_(mix64(seed + kGolden) ^ mix64(index * kGolden + 0x632BE59BD9B4E019ULL)) {}

CounterStream::result_type CounterStream::operator()() {
  state_ += kGolden;
  return mix64(state_);
}

std::uint64_t CounterStream::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // rejection sampling on the largest multiple of bound
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t x;
  do {
    x = (*this)();
  } while (x >= limit);
  return x % bound;
}

double CounterStream::uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed ^ 0xA0761D6478BD642FULL) + stream * kGolden);
}

Assignment sample(const Mechanism& mech, std::uint64_t seed, std::uint64_t index) {
  CounterStream rng(seed, index);
  const std::size_t n = mech.units();
  Assignment a(n, 0);
  const auto& v = mech.variant();
  if (const auto* c = std::get_if<CompleteRandomization>(&v)) {
    // partial Fisher-Yates: the first m slots of a shuffled index array
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < c->treated; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(idx[i], idx[j]);
      a[idx[i]] = 1;
    }
    return a;
  }
  if (const auto* b = std::get_if<BernoulliRandomization>(&v)) {
    for (auto& bit : a) bit = rng.uniform01() < b->probability ? 1 : 0;
    return a;
  }
  const auto& rows = std::get<ExplicitDesign>(v).rows;
  double u = rng.uniform01();
  double cumulative = 0.0;
  for (const auto& [row, p] : rows) {
    cumulative += p;
    if (u < cumulative) return row;
  }
  // u fell into the rounding slack at the top of the CDF
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->second > 0.0) return it->first;
  }
  return rows.back().first;
}

}  // namespace randinf
