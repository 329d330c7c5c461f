#include "gslab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gslab {

namespace {

// Continued fraction for the incomplete beta, evaluated with the modified
// Lentz scheme.
Scalar beta_continued_fraction(Scalar a, Scalar b, Scalar x) {
  constexpr Scalar kTiny = 1e-300;
  constexpr Scalar kEps = 1e-15;
  constexpr int kMaxIter = 300;

  const Scalar qab = a + b;
  const Scalar qap = a + 1.0;
  const Scalar qam = a - 1.0;

  Scalar c = 1.0;
  Scalar d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  Scalar h = d;

  for (int m = 1; m <= kMaxIter; ++m) {
    const Scalar m2 = 2.0 * m;
    Scalar aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;

    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const Scalar del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace

Scalar reg_incomplete_beta(Scalar a, Scalar b, Scalar x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("reg_incomplete_beta: a and b must be positive");
  }
  if (x < 0.0 || x > 1.0) {
    throw std::invalid_argument("reg_incomplete_beta: x must lie in [0, 1]");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  const Scalar front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                a * std::log(x) + b * std::log1p(-x));
  // Use the fraction on the side where it converges fast, mirror otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

Scalar student_t_two_sided_p(Scalar t, Scalar df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_two_sided_p: df must be positive");
  if (std::isinf(t)) return 0.0;
  return reg_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

TTestResult paired_t_test(const std::vector<Scalar>& xs, const std::vector<Scalar>& ys) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("paired_t_test: samples must have equal length");
  }
  const Index n = static_cast<Index>(xs.size());
  if (n < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");

  Scalar mean = 0.0;
  for (Index i = 0; i < n; ++i) mean += xs[i] - ys[i];
  mean /= static_cast<Scalar>(n);

  Scalar ss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Scalar d = (xs[i] - ys[i]) - mean;
    ss += d * d;
  }
  const Scalar sd = std::sqrt(ss / static_cast<Scalar>(n - 1));

  if (sd == 0.0) {
    if (mean == 0.0) return {0.0, 1.0};
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    return {mean > 0.0 ? inf : -inf, 0.0};
  }

  const Scalar t = mean / (sd / std::sqrt(static_cast<Scalar>(n)));
  return {t, student_t_two_sided_p(t, static_cast<Scalar>(n - 1))};
}

AugRunTable table_from_ledger(const std::vector<LedgerRow>& ledger) {
  AugRunTable table;
  for (const auto& row : ledger) table.add(row.aug_spec, row.seed, row.valid_acc, row.test_acc);
  return table;
}

std::vector<std::string> select_top_k(const AugRunTable& table, SelectStrategy strategy,
                                      int k, const std::string& baseline_spec) {
  if (table.rows.empty()) throw std::invalid_argument("select_top_k: empty table");
  if (k < 1) throw std::invalid_argument("select_top_k: k must be positive");
  if (k > static_cast<int>(table.rows.size())) {
    throw std::invalid_argument("select_top_k: k exceeds the number of specs");
  }

  // Every spec must cover the same seeds so comparisons pair up.
  const auto& reference = table.rows.begin()->second;
  for (const auto& [spec, runs] : table.rows) {
    if (runs.size() != reference.size() ||
        !std::equal(runs.begin(), runs.end(), reference.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
      throw std::invalid_argument("select_top_k: spec '" + spec +
                                  "' does not cover the same seeds as the others");
    }
  }

  std::vector<std::pair<Scalar, std::string>> ranked;  // (sort key, spec)
  if (strategy == SelectStrategy::ttest) {
    const auto base_it = table.rows.find(baseline_spec);
    if (base_it == table.rows.end()) {
      throw std::invalid_argument("select_top_k: baseline spec '" + baseline_spec +
                                  "' is not in the table");
    }
    if (reference.size() < 2) {
      throw std::invalid_argument("select_top_k: the ttest strategy needs at least two seeds");
    }
    std::vector<Scalar> base_accs;
    for (const auto& [seed, accs] : base_it->second) base_accs.push_back(accs.first);

    for (const auto& [spec, runs] : table.rows) {
      std::vector<Scalar> accs;
      Scalar mean_diff = 0.0;
      for (const auto& [seed, pair] : runs) accs.push_back(pair.first);
      for (std::size_t i = 0; i < accs.size(); ++i) mean_diff += accs[i] - base_accs[i];
      mean_diff /= static_cast<Scalar>(accs.size());
      if (mean_diff <= 0.0) continue;
      ranked.emplace_back(paired_t_test(accs, base_accs).p, spec);
    }
  } else {
    for (const auto& [spec, runs] : table.rows) {
      Scalar mean = 0.0;
      for (const auto& [seed, pair] : runs) mean += pair.first;
      mean /= static_cast<Scalar>(runs.size());
      ranked.emplace_back(-mean, spec);  // negate so ascending sort puts best first
    }
  }

  std::sort(ranked.begin(), ranked.end());
  if (static_cast<int>(ranked.size()) > k) ranked.resize(static_cast<std::size_t>(k));

  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (auto& [key, spec] : ranked) out.push_back(std::move(spec));
  return out;
}

}  // namespace gslab
