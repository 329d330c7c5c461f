#include <doctest.h>

#include "gslab/rng.hpp"
#include "gslab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

using namespace gslab;

TEST_CASE("regularized incomplete beta matches closed forms") {
  // I_x(1,1) = x, I_x(2,1) = x^2, I_x(1,2) = 2x - x^2,
  // I_x(1/2,1/2) = (2/pi) asin(sqrt(x)).
  for (Scalar x : {0.05, 0.2, 0.5, 0.77, 0.99}) {
    CHECK(reg_incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
    CHECK(reg_incomplete_beta(2.0, 1.0, x) == doctest::Approx(x * x).epsilon(1e-12));
    CHECK(reg_incomplete_beta(1.0, 2.0, x) == doctest::Approx(2.0 * x - x * x).epsilon(1e-12));
    const Scalar arcsine = 2.0 / std::numbers::pi_v<Scalar> * std::asin(std::sqrt(x));
    CHECK(reg_incomplete_beta(0.5, 0.5, x) == doctest::Approx(arcsine).epsilon(1e-12));
  }
  CHECK(reg_incomplete_beta(3.0, 4.0, 0.0) == 0.0);
  CHECK(reg_incomplete_beta(3.0, 4.0, 1.0) == 1.0);
}

TEST_CASE("regularized incomplete beta reflection identity") {
  Rng rng(41);
  for (int i = 0; i < 50; ++i) {
    const Scalar a = 0.5 + 6.0 * rng.uniform();
    const Scalar b = 0.5 + 6.0 * rng.uniform();
    const Scalar x = rng.uniform();
    const Scalar sum = reg_incomplete_beta(a, b, x) + reg_incomplete_beta(b, a, 1.0 - x);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-11));
  }
  CHECK_THROWS_AS(reg_incomplete_beta(0.0, 1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(reg_incomplete_beta(1.0, 1.0, 1.5), std::invalid_argument);
}

TEST_CASE("student t tail probability matches closed forms") {
  // df = 1 is Cauchy: p = 1 - (2/pi) atan(|t|).
  for (Scalar t : {0.0, 0.3, 1.0, 2.5, 10.0}) {
    const Scalar cauchy = 1.0 - 2.0 / std::numbers::pi_v<Scalar> * std::atan(t);
    CHECK(student_t_two_sided_p(t, 1.0) == doctest::Approx(cauchy).epsilon(1e-10));
    CHECK(student_t_two_sided_p(-t, 1.0) == doctest::Approx(cauchy).epsilon(1e-10));
  }
  // df = 2 has cdf F(t) = 1/2 + t / (2 sqrt(t^2 + 2)), so p = 1 - t/sqrt(t^2+2).
  for (Scalar t : {0.1, 0.9, 3.4641016151377544, 7.0}) {
    const Scalar closed = 1.0 - t / std::sqrt(t * t + 2.0);
    CHECK(student_t_two_sided_p(t, 2.0) == doctest::Approx(closed).epsilon(1e-10));
  }
  // The df = 4 quantile for a 5% two-sided tail.
  CHECK(student_t_two_sided_p(2.7764451051977987, 4.0) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(student_t_two_sided_p(std::numeric_limits<Scalar>::infinity(), 3.0) == 0.0);
}

TEST_CASE("student t tail probability decreases in |t|") {
  for (Scalar df : {1.0, 2.0, 5.0, 30.0}) {
    Scalar prev = 1.0 + 1e-12;
    for (Scalar t = 0.0; t <= 6.0; t += 0.25) {
      const Scalar p = student_t_two_sided_p(t, df);
      CHECK(p < prev);
      CHECK(p > 0.0);
      prev = p;
    }
  }
}

TEST_CASE("paired t test on a known sample") {
  const std::vector<Scalar> xs = {1.0, 2.0, 3.0};
  const std::vector<Scalar> ys = {0.0, 0.0, 0.0};
  const TTestResult r = paired_t_test(xs, ys);
  // Differences (1, 2, 3): mean 2, sample sd 1, t = 2 sqrt(3).
  CHECK(r.t == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-12));
  CHECK(r.t == doctest::Approx(3.4641).epsilon(1e-4));
  CHECK(r.p == doctest::Approx(0.0742).epsilon(1e-2));
  const Scalar closed = 1.0 - r.t / std::sqrt(r.t * r.t + 2.0);
  CHECK(r.p == doctest::Approx(closed).epsilon(1e-10));

  const TTestResult swapped = paired_t_test(ys, xs);
  CHECK(swapped.t == doctest::Approx(-r.t).epsilon(1e-12));
  CHECK(swapped.p == doctest::Approx(r.p).epsilon(1e-12));
}

TEST_CASE("paired t test degenerate and error cases") {
  const std::vector<Scalar> a = {0.5, 0.6, 0.7};

  const TTestResult same = paired_t_test(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);

  std::vector<Scalar> shifted = a;
  for (Scalar& v : shifted) v += 0.25;
  const TTestResult up = paired_t_test(shifted, a);
  CHECK(std::isinf(up.t));
  CHECK(up.t > 0.0);
  CHECK(up.p == 0.0);
  const TTestResult down = paired_t_test(a, shifted);
  CHECK(std::isinf(down.t));
  CHECK(down.t < 0.0);
  CHECK(down.p == 0.0);

  CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), std::invalid_argument);
  CHECK_THROWS_AS(paired_t_test({1.0, 2.0}, {2.0}), std::invalid_argument);
  CHECK_THROWS_AS(paired_t_test({}, {}), std::invalid_argument);
}

namespace {

AugRunTable three_spec_table() {
  AugRunTable t;
  // Baseline, a consistent winner, a noisy winner, and a loser.
  t.add("base", 1, 0.70, 0.69);
  t.add("base", 2, 0.71, 0.70);
  t.add("base", 3, 0.72, 0.71);
  t.add("base,steady", 1, 0.75, 0.74);
  t.add("base,steady", 2, 0.765, 0.75);
  t.add("base,steady", 3, 0.77, 0.76);
  t.add("base,noisy", 1, 0.80, 0.79);
  t.add("base,noisy", 2, 0.65, 0.64);
  t.add("base,noisy", 3, 0.78, 0.77);
  t.add("base,worse", 1, 0.60, 0.59);
  t.add("base,worse", 2, 0.61, 0.60);
  t.add("base,worse", 3, 0.62, 0.61);
  return t;
}

}  // namespace

TEST_CASE("select_top_k ttest strategy ranks by significance of the gain") {
  const AugRunTable table = three_spec_table();

  const auto top = select_top_k(table, SelectStrategy::ttest, 2, "base");
  REQUIRE(top.size() == 2);
  CHECK(top[0] == "base,steady");
  CHECK(top[1] == "base,noisy");

  // The losing spec and the baseline itself fail the positive-gain filter,
  // so asking for more than the two winners returns just the two.
  const auto all = select_top_k(table, SelectStrategy::ttest, 4, "base");
  CHECK(all == std::vector<std::string>{"base,steady", "base,noisy"});

  // The ranking keys are reproducible through paired_t_test directly.
  const TTestResult steady =
      paired_t_test({0.75, 0.765, 0.77}, {0.70, 0.71, 0.72});
  const TTestResult noisy = paired_t_test({0.80, 0.65, 0.78}, {0.70, 0.71, 0.72});
  CHECK(steady.p < noisy.p);
}

TEST_CASE("select_top_k mean strategy ranks by mean validation accuracy") {
  const AugRunTable table = three_spec_table();
  const auto top = select_top_k(table, SelectStrategy::mean, 4, "base");
  REQUIRE(top.size() == 4);
  CHECK(top[0] == "base,steady");  // mean 0.761666...
  CHECK(top[1] == "base,noisy");   // mean 0.743333...
  CHECK(top[2] == "base");         // mean 0.71
  CHECK(top[3] == "base,worse");   // mean 0.61

  const auto two = select_top_k(table, SelectStrategy::mean, 2, "base");
  CHECK(two == std::vector<std::string>{"base,steady", "base,noisy"});
}

TEST_CASE("select_top_k breaks ties on the spec string") {
  AugRunTable table;
  for (std::uint64_t seed : {1ull, 2ull}) {
    table.add("zeta", seed, 0.8, 0.8);
    table.add("alpha", seed, 0.8, 0.8);
    table.add("mid", seed, 0.7, 0.7);
  }
  const auto top = select_top_k(table, SelectStrategy::mean, 3, "mid");
  CHECK(top == std::vector<std::string>{"alpha", "zeta", "mid"});
}

TEST_CASE("select_top_k is invariant to insertion order") {
  AugRunTable forward;
  AugRunTable backward;
  std::vector<std::tuple<std::string, std::uint64_t, Scalar>> entries;
  Rng rng(99);
  for (int s = 0; s < 6; ++s) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      entries.emplace_back("spec" + std::to_string(s), seed, 0.5 + 0.4 * rng.uniform());
    }
  }
  for (const auto& [spec, seed, acc] : entries) forward.add(spec, seed, acc, acc);
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    backward.add(std::get<0>(*it), std::get<1>(*it), std::get<2>(*it), std::get<2>(*it));
  }
  for (auto strategy : {SelectStrategy::ttest, SelectStrategy::mean}) {
    CHECK(select_top_k(forward, strategy, 3, "spec0") ==
          select_top_k(backward, strategy, 3, "spec0"));
  }
}

TEST_CASE("select_top_k agrees with a brute-force reranking") {
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    AugRunTable table;
    const int spec_count = 5 + static_cast<int>(rng.uniform_int(6));
    std::vector<std::string> specs;
    for (int s = 0; s < spec_count; ++s) specs.push_back("s" + std::to_string(s));
    for (const auto& spec : specs) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Scalar acc = 0.4 + 0.5 * rng.uniform();
        table.add(spec, seed, acc, acc);
      }
    }
    const std::string baseline =
        specs[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(specs.size())))];
    const int k = 1 + static_cast<int>(rng.uniform_int(4));

    // Brute force: score every spec explicitly, sort with an explicit
    // comparator, truncate.
    std::vector<Scalar> base_accs;
    for (const auto& [seed, accs] : table.rows.at(baseline)) base_accs.push_back(accs.first);
    std::vector<std::pair<Scalar, std::string>> scored;
    for (const auto& [spec, runs] : table.rows) {
      std::vector<Scalar> accs;
      for (const auto& [seed, pair] : runs) accs.push_back(pair.first);
      Scalar diff = 0.0;
      for (std::size_t i = 0; i < accs.size(); ++i) diff += accs[i] - base_accs[i];
      if (diff / static_cast<Scalar>(accs.size()) > 0.0) {
        scored.emplace_back(paired_t_test(accs, base_accs).p, spec);
      }
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second < b.second;
    });
    std::vector<std::string> expected;
    for (std::size_t i = 0; i < scored.size() && i < static_cast<std::size_t>(k); ++i) {
      expected.push_back(scored[i].second);
    }

    CHECK(select_top_k(table, SelectStrategy::ttest, k, baseline) == expected);
  }
}

TEST_CASE("select_top_k validates its inputs") {
  const AugRunTable table = three_spec_table();
  CHECK_THROWS_AS(select_top_k(table, SelectStrategy::mean, 5, "base"), std::invalid_argument);
  CHECK_THROWS_AS(select_top_k(table, SelectStrategy::mean, 0, "base"), std::invalid_argument);
  CHECK_THROWS_AS(select_top_k(table, SelectStrategy::ttest, 2, "missing"), std::invalid_argument);
  CHECK_THROWS_AS(select_top_k(AugRunTable{}, SelectStrategy::mean, 1, "base"),
                  std::invalid_argument);

  AugRunTable ragged = three_spec_table();
  ragged.add("base,extra", 7, 0.9, 0.9);
  CHECK_THROWS_AS(select_top_k(ragged, SelectStrategy::mean, 1, "base"), std::invalid_argument);

  AugRunTable single_seed;
  single_seed.add("base", 1, 0.7, 0.7);
  single_seed.add("base,x", 1, 0.8, 0.8);
  CHECK_THROWS_AS(select_top_k(single_seed, SelectStrategy::ttest, 1, "base"),
                  std::invalid_argument);
  CHECK(select_top_k(single_seed, SelectStrategy::mean, 1, "base") ==
        std::vector<std::string>{"base,x"});
}

TEST_CASE("table_from_ledger keeps the last row per spec and seed") {
  std::vector<LedgerRow> ledger;
  LedgerRow r;
  r.aug_spec = "base";
  r.seed = 1;
  r.method = "baseline";
  r.stage = "train";
  r.valid_acc = 0.5;
  r.test_acc = 0.5;
  ledger.push_back(r);
  r.valid_acc = 0.9;
  r.test_acc = 0.88;
  ledger.push_back(r);
  r.aug_spec = "base,crop";
  r.seed = 2;
  r.valid_acc = 0.7;
  ledger.push_back(r);

  const AugRunTable table = table_from_ledger(ledger);
  CHECK(table.rows.size() == 2);
  CHECK(table.rows.at("base").at(1).first == 0.9);
  CHECK(table.rows.at("base").at(1).second == 0.88);
  CHECK(table.rows.at("base,crop").at(2).first == 0.7);
}
