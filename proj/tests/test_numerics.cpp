#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ragar/numerics.hpp"
#include "test_util.hpp"

using namespace ragar;
using ragar::testing::random_mat;
using ragar::testing::random_vec;

namespace {

// Independent attention oracle: plain loops, own softmax. Never calls the
// library routines it is checking.
Mat attention_oracle(const Mat& q, const Mat& k, const Mat& v) {
  Mat out(q.rows, v.cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols));
  for (int i = 0; i < q.rows; ++i) {
    std::vector<double> logits(k.rows, 0.0);
    double max_logit = -1e300;
    for (int j = 0; j < k.rows; ++j) {
      for (int c = 0; c < q.cols; ++c) logits[j] += q(i, c) * k(j, c);
      logits[j] *= scale;
      max_logit = std::max(max_logit, logits[j]);
    }
    double z = 0.0;
    for (int j = 0; j < k.rows; ++j) z += std::exp(logits[j] - max_logit);
    for (int j = 0; j < k.rows; ++j) {
      const double w = std::exp(logits[j] - max_logit) / z;
      for (int c = 0; c < v.cols; ++c) out(i, c) += w * v(j, c);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("cosine_similarity closed forms") {
  CHECK(cosine_similarity({1, 0}, {1, 0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity({1, 0}, {0, 1}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_similarity({1, 2}, {2, 1}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), std::domain_error);
  CHECK_THROWS_AS(cosine_similarity({1, 0}, {1, 0, 0}), std::invalid_argument);
}

TEST_CASE("cosine_similarity scaling property") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec a = random_vec(rng, 1 + rng.uniform_int(16));
    if (norm(a) == 0.0) continue;
    const double lambda = 0.1 + rng.uniform() * 5.0;
    CHECK(cosine_similarity(a, scaled(a, lambda)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(a, scaled(a, -lambda)) == doctest::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax_weights closed forms") {
  const Vec even = softmax_weights({0.0, 0.0});
  CHECK(even[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(even[1] == doctest::Approx(0.5).epsilon(1e-12));

  const Vec two_thirds = softmax_weights({std::log(2.0), 0.0});
  CHECK(two_thirds[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(two_thirds[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const Vec single = softmax_weights({5.0});
  CHECK(single[0] == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(softmax_weights({}), std::domain_error);
}

TEST_CASE("softmax_weights normalization and shift invariance over 1e4 cases") {
  Rng rng(7);
  for (int trial = 0; trial < 10000; ++trial) {
    const int dim = 1 + rng.uniform_int(64);
    Vec scores = random_vec(rng, dim, 3.0);
    const Vec w = softmax_weights(scores);
    double sum = 0.0;
    for (double x : w) {
      CHECK(x > 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    const double c = rng.normal() * 50.0;
    Vec shifted = scores;
    for (auto& s : shifted) s += c;
    const Vec w2 = softmax_weights(shifted);
    CHECK(ragar::testing::max_abs_diff(w, w2) <= 1e-12);
  }
}

TEST_CASE("gaussian_log_density closed forms") {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  CHECK(gaussian_log_density({0.0}, {0.0}, 1.0) == doctest::Approx(-0.5 * log2pi).epsilon(1e-12));
  CHECK(gaussian_log_density({1.0}, {0.0}, 1.0) ==
        doctest::Approx(-0.5 * log2pi - 0.5).epsilon(1e-12));
  const Vec x4(4, 0.3);
  CHECK(gaussian_log_density(x4, x4, 0.1) ==
        doctest::Approx(-2.0 * std::log(2.0 * std::numbers::pi * 0.01)).epsilon(1e-9));
  CHECK_THROWS_AS(gaussian_log_density({0.0}, {0.0}, 0.0), std::domain_error);
  CHECK_THROWS_AS(gaussian_log_density({0.0}, {0.0}, -1.0), std::domain_error);
}

TEST_CASE("gaussian density integrates to 1 by trapezoid quadrature in 1d") {
  for (const auto& [mu, sigma] : std::vector<std::pair<double, double>>{
           {0.0, 1.0}, {2.5, 0.3}, {-1.0, 4.0}}) {
    const int n = 4000;
    const double lo = mu - 8.0 * sigma;
    const double hi = mu + 8.0 * sigma;
    const double h = (hi - lo) / n;
    double integral = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double x = lo + i * h;
      const double f = std::exp(gaussian_log_density({x}, {mu}, sigma));
      integral += (i == 0 || i == n) ? 0.5 * f : f;
    }
    integral *= h;
    CHECK(integral == doctest::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("scaled_dot_attention degenerate cases") {
  // Single key/value: softmax over one logit is 1, output equals the value row.
  Mat q(1, 3), k(1, 3), v(1, 2);
  q.set_row(0, {0.3, -1.0, 2.0});
  k.set_row(0, {1.0, 1.0, 1.0});
  v.set_row(0, {4.0, -7.0});
  const Mat out = scaled_dot_attention(q, k, v);
  CHECK(out(0, 0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(out(0, 1) == doctest::Approx(-7.0).epsilon(1e-15));

  // Query equidistant to two orthogonal keys: output is the value mean.
  Mat k2(2, 2), v2(2, 2), q2(1, 2);
  k2.set_row(0, {1.0, 0.0});
  k2.set_row(1, {0.0, 1.0});
  v2.set_row(0, {2.0, 0.0});
  v2.set_row(1, {0.0, 4.0});
  q2.set_row(0, {0.5, 0.5});
  const Mat out2 = scaled_dot_attention(q2, k2, v2);
  CHECK(out2(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out2(0, 1) == doctest::Approx(2.0).epsilon(1e-12));

  Mat bad_k(2, 4);
  CHECK_THROWS_AS(scaled_dot_attention(q2, bad_k, v2), std::invalid_argument);
}

TEST_CASE("scaled_dot_attention matches the independent matrix oracle") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat q = random_mat(rng, 2, 3);
    const Mat k = random_mat(rng, 4, 3);
    const Mat v = random_mat(rng, 4, 2);
    const Mat got = scaled_dot_attention(q, k, v);
    const Mat want = attention_oracle(q, k, v);
    CHECK(ragar::testing::max_abs_diff(got, want) <= 1e-12);
  }
}

TEST_CASE("attention weights rows sum to 1 and outputs stay in the value hull") {
  Rng rng(99);
  for (int trial = 0; trial < 10000; ++trial) {
    const int nq = 1 + rng.uniform_int(3);
    const int nk = 1 + rng.uniform_int(5);
    const int d = 1 + rng.uniform_int(6);
    const Mat q = random_mat(rng, nq, d, 2.0);
    const Mat k = random_mat(rng, nk, d, 2.0);
    const Mat v = random_mat(rng, nk, 2);
    const Mat w = scaled_dot_attention_weights(q, k);
    for (int i = 0; i < nq; ++i) {
      double sum = 0.0;
      for (int j = 0; j < nk; ++j) sum += w(i, j);
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
    const Mat out = attention_apply(w, v);
    for (int c = 0; c < v.cols; ++c) {
      double lo = 1e300, hi = -1e300;
      for (int j = 0; j < nk; ++j) {
        lo = std::min(lo, v(j, c));
        hi = std::max(hi, v(j, c));
      }
      for (int i = 0; i < nq; ++i) {
        CHECK(out(i, c) >= lo - 1e-9);
        CHECK(out(i, c) <= hi + 1e-9);
      }
    }
  }
}

TEST_CASE("finite_difference_gradient on known functions") {
  const auto sq_norm = [](const Vec& p) { return dot(p, p); };
  const Vec g1 = finite_difference_gradient(sq_norm, {1.0, 2.0}, 1e-5);
  CHECK(g1[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(g1[1] == doctest::Approx(4.0).epsilon(1e-6));

  const auto constant = [](const Vec&) { return 3.25; };
  const Vec g2 = finite_difference_gradient(constant, {0.4, -2.0, 7.0}, 1e-5);
  for (double x : g2) CHECK(x == doctest::Approx(0.0).epsilon(1e-9));

  const auto prod = [](const Vec& p) { return p[0] * p[1]; };
  const Vec g3 = finite_difference_gradient(prod, {3.0, 5.0}, 1e-5);
  CHECK(g3[0] == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(g3[1] == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("sgd_step") {
  const Vec out = sgd_step(Vec{1.0, 1.0}, Vec{1.0, 0.0}, 0.5);
  CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-15));

  const Vec same = sgd_step(Vec{2.0, -3.0}, Vec{0.0, 0.0}, 0.1);
  CHECK(same[0] == 2.0);
  CHECK(same[1] == -3.0);

  const Vec tiny = sgd_step(Vec{0.0}, Vec{2.0}, 1e-5);
  CHECK(tiny[0] == doctest::Approx(-2e-5).epsilon(1e-12));

  CHECK_THROWS_AS(sgd_step(Vec{1.0}, Vec{1.0, 2.0}, 0.1), std::invalid_argument);
}

TEST_CASE("check_gradient flags correct and broken gradients") {
  const auto f = [](const Vec& p) { return p[0] * p[0] + 3.0 * p[1]; };
  const Vec p = {0.7, -1.2};
  const auto good = check_gradient(f, p, {2.0 * p[0], 3.0});
  CHECK(good.passes(1e-6));
  CHECK(good.parameter_count == 2);
  CHECK(good.max_relative_error ==
        doctest::Approx(*std::max_element(good.per_parameter_errors.begin(),
                                          good.per_parameter_errors.end())));

  const auto bad = check_gradient(f, p, {2.0 * p[0] + 0.5, 3.0});
  CHECK(!bad.passes(1e-4));
}

TEST_CASE("normalized rejects the zero vector") {
  CHECK_THROWS_AS(normalized(Vec{0.0, 0.0, 0.0}), std::domain_error);
  const Vec u = normalized(Vec{3.0, 4.0});
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("rng substreams are decorrelated and deterministic") {
  Rng a(5);
  Rng b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng root(5);
  Rng s1 = root.split("alpha");
  Rng s2 = root.split("beta");
  CHECK(s1.next_u64() != s2.next_u64());

  // Splitting never advances the parent stream.
  Rng r1(9), r2(9);
  (void)r1.split(3);
  CHECK(r1.next_u64() == r2.next_u64());
}
