#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "support/test_util.hpp"
#include "ztok/core/gradcheck.hpp"
#include "ztok/core/ops.hpp"
#include "ztok/core/primitives.hpp"

using namespace ztok;
using testutil::op_fd_check;
using testutil::probe_scalar;
using testutil::random_array;

TEST_CASE("rng determinism and range") {
  RngState a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    double ua = a.next_uniform();
    CHECK(ua == b.next_uniform());
    CHECK(ua > 0.0);
    CHECK(ua < 1.0);
  }
  RngState c(123);
  RngState f1 = c.fork(7, 9), f2 = c.fork(7, 9), f3 = c.fork(7, 10);
  CHECK(f1.next_u64() == f2.next_u64());
  CHECK(f1.next_u64() != f3.next_u64());
}

TEST_CASE("array invariants") {
  Array<float> a({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 3);
  CHECK(a.at(1, 2) == 6.0f);
  CHECK(a.all_finite());
  a.at(0, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK(!a.all_finite());
  CHECK_THROWS_AS(Array<float>({2, 2}, {1, 2, 3}), Error);
}

TEST_CASE("gumbel softmax: symmetry of uniform logits") {
  std::vector<double> logits{0.0, 0.0, 0.0};
  RngState rng(7);
  std::vector<double> mean(3, 0.0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto s = gumbel_softmax<double>(logits, 1.0, rng);
    for (int j = 0; j < 3; ++j) mean[j] += s.soft[j];
  }
  for (int j = 0; j < 3; ++j) CHECK(std::abs(mean[j] / n - 1.0 / 3.0) < 0.01);
}

TEST_CASE("gumbel softmax: zero-temperature limit is argmax") {
  std::vector<double> logits{2.0, 1.0, 0.0};
  // Noiseless variant: soft collapses exactly onto the argmax.
  RngState rng(1);
  auto s0 = gumbel_softmax<double>(logits, 1e-6, rng, /*with_noise=*/false);
  CHECK(s0.hard_index == 0);
  CHECK(s0.soft[0] == doctest::Approx(1.0).epsilon(1e-9));
  // Noisy variant: soft collapses onto hard_index for every draw.
  for (uint64_t seed = 0; seed < 20; ++seed) {
    RngState r(seed);
    auto s = gumbel_softmax<double>(logits, 1e-6, r);
    CHECK(s.soft[static_cast<size_t>(s.hard_index)] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("gumbel softmax: hard index frequency matches softmax") {
  // Two-class oracle: p(hard = 0) must equal softmax(logits)[0] = e/(1+e).
  std::vector<double> logits{1.0, 0.0};
  double expect = std::exp(1.0) / (1.0 + std::exp(1.0));
  RngState rng(2024);
  int hits = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto s = gumbel_softmax<double>(logits, 1.0, rng);
    hits += s.hard_index == 0 ? 1 : 0;
  }
  CHECK(std::abs(static_cast<double>(hits) / n - expect) < 0.005);
}

TEST_CASE("gumbel softmax: chi-square against softmax on 8 classes") {
  std::vector<double> logits{0.5, -0.3, 1.2, 0.0, -1.0, 0.7, 0.2, -0.5};
  std::vector<double> p = softmax<double>(logits);
  RngState rng(99);
  const int n = 100000;
  std::vector<long> counts(8, 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(gumbel_softmax<double>(logits, 1.0, rng).hard_index)];
  double chi2 = 0.0;
  for (int j = 0; j < 8; ++j) {
    double expect = p[static_cast<size_t>(j)] * n;
    chi2 += (counts[static_cast<size_t>(j)] - expect) * (counts[static_cast<size_t>(j)] - expect) / expect;
  }
  CHECK(chi2 < 18.4753);  // df = 7 at 99% confidence
}

TEST_CASE("gumbel softmax: outputs are a distribution; determinism; errors") {
  std::vector<float> logits{0.3f, -1.0f, 2.0f, 0.0f};
  RngState a(5), b(5);
  auto sa = gumbel_softmax<float>(logits, 0.7f, a);
  auto sb = gumbel_softmax<float>(logits, 0.7f, b);
  CHECK(sa.hard_index == sb.hard_index);
  float sum = 0.0f;
  for (size_t j = 0; j < sa.soft.size(); ++j) {
    CHECK(sa.soft[j] == sb.soft[j]);
    CHECK(sa.soft[j] >= 0.0f);
    sum += sa.soft[j];
  }
  CHECK(std::abs(sum - 1.0f) < 1e-6f);
  CHECK_THROWS_AS(gumbel_softmax<float>(logits, 0.0f, a), Error);
  CHECK_THROWS_AS(gumbel_softmax<float>(std::vector<float>{}, 1.0f, a), Error);
}

TEST_CASE("straight-through embed: forward is the hard row, bitwise") {
  RngState rng(3);
  Array<float> table = random_array<float>(5, 4, rng);
  std::vector<float> soft{0.1f, 0.2f, 0.3f, 0.25f, 0.15f};
  for (int hard = 0; hard < 5; ++hard) {
    Array<float> e = straight_through_embed<float>(soft, hard, table);
    for (int c = 0; c < 4; ++c) {
      // bit-level equality, not approximate
      CHECK(std::memcmp(&e.at(0, c), &table.at(hard, c), sizeof(float)) == 0);
    }
  }
  // one-hot soft at j with hard j: both paths coincide
  std::vector<float> onehot{0, 0, 1, 0, 0};
  Array<float> e = straight_through_embed<float>(onehot, 2, table);
  for (int c = 0; c < 4; ++c) CHECK(e.at(0, c) == table.at(2, c));
  CHECK_THROWS_AS(straight_through_embed<float>(soft, 9, table), Error);
  CHECK_THROWS_AS(straight_through_embed<float>(std::vector<float>{0.5f, 0.5f}, 0, table), Error);
}

TEST_CASE("straight-through embed: backward equals the soft-path gradient") {
  // Analytic gradient of the straight-through node w.r.t. logits vs central
  // finite differences of the pure soft mixture (the relaxed forward).
  RngState rng(11);
  const int V = 6, D = 5;
  Array<double> table = random_array<double>(V, D, rng);
  Array<double> logits = random_array<double>(1, V, rng);
  Array<double> noise = random_array<double>(1, V, rng, 0.5);
  const double tau = 0.8;

  auto build = [&](Graph<double>& g, Var x, bool relaxed) {
    Var t = g.constant(table);
    Var pert = add(g, x, g.constant(noise));
    Var soft = segment_softmax_rows(g, scale(g, pert, 1.0 / tau), 0, V);
    Var st = st_embed(g, t, soft, /*hard_local=*/2, 0, V, relaxed);
    return probe_scalar(g, st);
  };
  Graph<double> g;
  Var x = g.leaf(logits, true);
  Var y = build(g, x, false);
  g.backward(y);
  Array<double> analytic = g.grad(x);
  auto f_soft = [&](const Array<double>& p) {
    Graph<double> g2;
    Var vx = g2.leaf(p, true);
    return g2.val(build(g2, vx, true)).values()[0];
  };
  double err = gradient_check<double>(f_soft, logits, analytic, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("cosine similarity") {
  std::vector<double> v{0.3, -1.2, 0.7};
  CHECK(cosine_similarity<double>(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity<double>(std::vector<double>{1, 0}, std::vector<double>{0, 1}) ==
        doctest::Approx(0.0));
  double c = cosine_similarity<double>(std::vector<double>{1, 2}, std::vector<double>{3, 4});
  CHECK(c == doctest::Approx(0.98387).epsilon(1e-5));
  double c2 = cosine_similarity<double>(std::vector<double>{3, 4}, std::vector<double>{1, 2});
  CHECK(c == doctest::Approx(c2).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_similarity<double>(std::vector<double>{0, 0}, v), Error);
  CHECK_THROWS_AS(cosine_similarity<double>(std::vector<double>{1}, v), Error);
}

TEST_CASE("cross entropy") {
  std::vector<double> onehot{0, 1, 0};
  CHECK(cross_entropy<double>(onehot, 1) == doctest::Approx(0.0));
  std::vector<double> uniform(7, 1.0 / 7);
  CHECK(cross_entropy<double>(uniform, 3) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  std::vector<double> p{0.7, 0.3};
  CHECK(cross_entropy<double>(p, 1) == doctest::Approx(1.20397).epsilon(1e-5));
  // floor keeps the loss bounded
  CHECK(cross_entropy<double>(std::vector<double>{1.0, 0.0}, 1) ==
        doctest::Approx(-std::log(1e-9)));
  CHECK_THROWS_AS(cross_entropy<double>(p, 5), Error);
}

TEST_CASE("gradient_check: linear map is exact to machine precision") {
  RngState rng(21);
  Array<double> w = random_array<double>(1, 8, rng);
  Array<double> x = random_array<double>(1, 8, rng);
  auto f = [&](const Array<double>& p) {
    double s = 0.0;
    for (int i = 0; i < 8; ++i) s += w.at(0, i) * p.at(0, i);
    return s;
  };
  double err = gradient_check<double>(f, x, w, 1e-6);
  CHECK(err < 1e-7);
}

TEST_CASE("gradient_check: softmax + cross-entropy composite") {
  RngState rng(22);
  Array<double> logits = random_array<double>(3, 7, rng);
  std::vector<int> targets{2, 5, 0};
  auto build = [&](Graph<double>& g, Var x) {
    return ce_rows_mean(g, x, targets, 0, 7, 1e-9);
  };
  CHECK(op_fd_check<double>(logits, build, 1e-6) < 1e-6);
}

TEST_CASE("tape ops pass finite-difference checks in high precision") {
  RngState rng(31);
  const double h = 1e-5;

  SUBCASE("add/sub/hadamard/scale/add_rowvec") {
    Array<double> a = random_array<double>(3, 4, rng);
    Array<double> b = random_array<double>(3, 4, rng);
    Array<double> bias = random_array<double>(1, 4, rng);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return probe_scalar(g, add(g, x, g.constant(b)));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return probe_scalar(g, sub(g, g.constant(b), x));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return probe_scalar(g, hadamard(g, x, g.constant(b)));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return probe_scalar(g, scale(g, x, 3.7));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(bias, [&](auto& g, Var x) {
      return probe_scalar(g, add_rowvec(g, g.constant(a), x));
    }, h) < 1e-4);
  }

  SUBCASE("matmul, all transpose combinations") {
    Array<double> a = random_array<double>(3, 4, rng);
    Array<double> b = random_array<double>(4, 5, rng);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return probe_scalar(g, matmul(g, x, g.constant(b)));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(b, [&](auto& g, Var x) {
      return probe_scalar(g, matmul(g, g.constant(a), x));
    }, h) < 1e-4);
    Array<double> at = random_array<double>(4, 3, rng);
    CHECK(op_fd_check<double>(at, [&](auto& g, Var x) {
      return probe_scalar(g, matmul(g, x, g.constant(b), true, false));
    }, h) < 1e-4);
    Array<double> bt = random_array<double>(5, 4, rng);
    CHECK(op_fd_check<double>(bt, [&](auto& g, Var x) {
      return probe_scalar(g, matmul(g, g.constant(a), x, false, true));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(at, [&](auto& g, Var x) {
      return probe_scalar(g, matmul(g, x, g.constant(bt), true, true));
    }, h) < 1e-4);
  }

  SUBCASE("gather/concat/slice") {
    Array<double> table = random_array<double>(6, 3, rng);
    std::vector<int> ids{4, 1, 1, 5};
    CHECK(op_fd_check<double>(table, [&](auto& g, Var x) {
      return probe_scalar(g, gather_rows(g, x, ids));
    }, h) < 1e-4);
    Array<double> a = random_array<double>(2, 3, rng);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      Var c = concat_rows(g, {x, g.constant(table), x});
      return probe_scalar(g, slice_rows(g, c, 1, 6));
    }, h) < 1e-4);
  }

  SUBCASE("softmax variants") {
    Array<double> a = random_array<double>(3, 6, rng);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return probe_scalar(g, softmax_rows(g, x));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return probe_scalar(g, segment_softmax_rows(g, x, 2, 6));
    }, h) < 1e-4);
  }

  SUBCASE("log/gelu/layer_norm") {
    Array<double> pos = random_array<double>(2, 5, rng);
    for (long i = 0; i < pos.count(); ++i) pos[i] = std::abs(pos[i]) + 0.5;
    CHECK(op_fd_check<double>(pos, [&](auto& g, Var x) {
      return probe_scalar(g, log_op(g, x));
    }, h) < 1e-4);
    Array<double> a = random_array<double>(3, 5, rng);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return probe_scalar(g, gelu(g, x));
    }, h) < 1e-4);
    Array<double> gain = random_array<double>(1, 5, rng);
    Array<double> bias = random_array<double>(1, 5, rng);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return probe_scalar(g, layer_norm_rows(g, x, g.constant(gain), g.constant(bias)));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(gain, [&](auto& g, Var x) {
      return probe_scalar(g, layer_norm_rows(g, g.constant(a), x, g.constant(bias)));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(bias, [&](auto& g, Var x) {
      return probe_scalar(g, layer_norm_rows(g, g.constant(a), g.constant(gain), x));
    }, h) < 1e-4);
  }

  SUBCASE("reductions and distances") {
    Array<double> a = random_array<double>(3, 4, rng);
    Array<double> b = random_array<double>(3, 4, rng);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) { return mean_all(g, x); }, h) < 1e-4);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) { return sum_all(g, x); }, h) < 1e-4);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      return mean_row_sqdist(g, x, g.constant(b));
    }, h) < 1e-4);
    Array<double> u = random_array<double>(1, 6, rng);
    Array<double> v = random_array<double>(1, 6, rng);
    CHECK(op_fd_check<double>(u, [&](auto& g, Var x) {
      return cosine(g, x, g.constant(v));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(v, [&](auto& g, Var x) {
      return cosine(g, g.constant(u), x);
    }, h) < 1e-4);
  }

  SUBCASE("kl to uniform") {
    Array<double> logits = random_array<double>(4, 5, rng);
    CHECK(op_fd_check<double>(logits, [&](auto& g, Var x) {
      return kl_mean_to_uniform(g, softmax_rows(g, x));
    }, h) < 1e-4);
  }

  SUBCASE("attention, all inputs") {
    const int L = 5, D = 8, H = 2;
    Array<double> q = random_array<double>(L, D, rng);
    Array<double> k = random_array<double>(L, D, rng);
    Array<double> v = random_array<double>(L, D, rng);
    CHECK(op_fd_check<double>(q, [&](auto& g, Var x) {
      return probe_scalar(g, attend_causal(g, x, g.constant(k), g.constant(v), H));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(k, [&](auto& g, Var x) {
      return probe_scalar(g, attend_causal(g, g.constant(q), x, g.constant(v), H));
    }, h) < 1e-4);
    CHECK(op_fd_check<double>(v, [&](auto& g, Var x) {
      return probe_scalar(g, attend_causal(g, g.constant(q), g.constant(k), x, H));
    }, h) < 1e-4);
    // incremental shape: single query over a longer key timeline
    Array<double> q1 = random_array<double>(1, D, rng);
    CHECK(op_fd_check<double>(q1, [&](auto& g, Var x) {
      return probe_scalar(g, attend_causal(g, x, g.constant(k), g.constant(v), H));
    }, h) < 1e-4);
  }

  SUBCASE("soft mixture and straight-through table gradient") {
    const int V = 5, D = 4;
    Array<double> table = random_array<double>(V, D, rng);
    Array<double> logits = random_array<double>(1, V, rng);
    CHECK(op_fd_check<double>(table, [&](auto& g, Var x) {
      Var soft = segment_softmax_rows(g, g.constant(logits), 0, V);
      return probe_scalar(g, soft_mix(g, x, soft, 0, V));
    }, h) < 1e-4);
    // Relaxed straight-through is the same smooth function of the table.
    CHECK(op_fd_check<double>(table, [&](auto& g, Var x) {
      Var soft = segment_softmax_rows(g, g.constant(logits), 0, V);
      return probe_scalar(g, st_embed(g, x, soft, 1, 0, V, true));
    }, h) < 1e-4);
  }

  SUBCASE("dropout with a pinned mask") {
    Array<double> a = random_array<double>(3, 4, rng);
    CHECK(op_fd_check<double>(a, [&](auto& g, Var x) {
      RngState mask_rng(77);
      return probe_scalar(g, dropout(g, x, 0.3, mask_rng));
    }, h) < 1e-4);
  }
}

TEST_CASE("segment softmax carries exactly zero out-of-segment mass") {
  RngState rng(41);
  Array<float> logits = random_array<float>(4, 10, rng, 3.0);
  Graph<float> g;
  Var y = segment_softmax_rows(g, g.leaf(logits, false), 3, 8);
  const auto& Y = g.val(y);
  for (int r = 0; r < 4; ++r) {
    float sum = 0.0f;
    for (int c = 0; c < 10; ++c) {
      if (c < 3 || c >= 8) CHECK(Y.at(r, c) == 0.0f);  // exact zero, not small
      sum += Y.at(r, c);
    }
    CHECK(sum == doctest::Approx(1.0f).epsilon(1e-6));
  }
}

TEST_CASE("kl of a uniform mean distribution is zero; one-hot gives ln V") {
  Graph<double> g;
  // Batch whose mean distribution is uniform: two mirrored rows.
  Array<double> rows({2, 4}, {0.7, 0.1, 0.1, 0.1, 0.1, 0.7, 0.1, 0.1});
  rows.at(0, 2) = 0.1;
  rows.at(0, 3) = 0.1;
  // construct rows that average to uniform: [0.4,0.1,0.25,0.25] and [0.1,0.4,0.25,0.25]
  Array<double> balanced({2, 4}, {0.4, 0.1, 0.25, 0.25, 0.1, 0.4, 0.25, 0.25});
  Var kl0 = kl_mean_to_uniform(g, g.constant(balanced));
  CHECK(g.val(kl0).values()[0] == doctest::Approx(0.0).epsilon(1e-12));

  const int V = 8192;
  Array<double> onehot = Array<double>::zeros(1, V);
  onehot.at(0, 17) = 1.0;
  Var kl1 = kl_mean_to_uniform(g, g.constant(onehot));
  CHECK(g.val(kl1).values()[0] == doctest::Approx(std::log(8192.0)).epsilon(1e-9));
  CHECK(g.val(kl1).values()[0] == doctest::Approx(9.0109).epsilon(1e-4));
}
