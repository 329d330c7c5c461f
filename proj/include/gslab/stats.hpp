#pragma once

#include "gslab/core.hpp"
#include "gslab/trainer.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace gslab {

struct TTestResult {
  Scalar t = 0.0;
  Scalar p = 1.0;
};

// Paired two-sided Student t-test on matched samples. t = mean(d) over
// (sd(d)/sqrt(n)) with the n-1 sample deviation; p comes from the regularized
// incomplete beta. Degenerate spreads: all-zero differences give (0, 1),
// constant non-zero differences give (+-infinity, 0).
TTestResult paired_t_test(const std::vector<Scalar>& xs, const std::vector<Scalar>& ys);

// Regularized incomplete beta I_x(a, b) via the standard continued fraction,
// accurate to well under 1e-9 for test-sized arguments.
Scalar reg_incomplete_beta(Scalar a, Scalar b, Scalar x);

// Two-sided tail probability of Student's t with df degrees of freedom.
Scalar student_t_two_sided_p(Scalar t, Scalar df);

// Per-seed run accuracies keyed by spec then seed: (valid_acc, test_acc).
// std::map keys make every consumer independent of insertion order.
struct AugRunTable {
  std::map<std::string, std::map<std::uint64_t, std::pair<Scalar, Scalar>>> rows;

  void add(const std::string& spec, std::uint64_t seed, Scalar valid_acc, Scalar test_acc) {
    rows[spec][seed] = {valid_acc, test_acc};
  }
};

// Collapses ledger rows into a table, keeping the last row per (spec, seed).
AugRunTable table_from_ledger(const std::vector<LedgerRow>& ledger);

enum class SelectStrategy { ttest, mean };

// ttest: each spec's per-seed validation accuracies are paired against the
// baseline spec's over the shared seeds; specs with positive mean improvement
// rank by ascending p. mean: rank by mean validation accuracy descending.
// Ties break on the spec string. Returns the first k (the ttest filter may
// leave fewer).
std::vector<std::string> select_top_k(const AugRunTable& table, SelectStrategy strategy,
                                      int k, const std::string& baseline_spec);

}  // namespace gslab
