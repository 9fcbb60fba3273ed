#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ragar/pipeline.hpp"
#include "ragar/preference.hpp"
#include "ragar/reflection.hpp"
#include "test_util.hpp"

using namespace ragar;
using ragar::testing::random_vec;

namespace {

PreferenceDims small_dims() {
  PreferenceDims dims;
  dims.d_text = 6;
  dims.d_mapper = 5;
  dims.img_tokens = 2;
  dims.queries = 3;
  dims.mapper_depth = 2;
  dims.d_attn = 4;
  dims.kv_rows = 2;
  dims.d_pref = 5;
  return dims;
}

// Loss used by the gradient checks: beta * ||p_gen - p_ret||^2 +
// gamma * ||P e_d - e_sem||^2, the analytic part of the reflection objective.
struct LossSetup {
  PreferenceDims dims;
  Vec e_txt, e_g, p_ret, e_sem;
  Mat proj;
  double beta = 0.5;
  double gamma = 0.3;

  explicit LossSetup(const PreferenceDims& d, Rng rng) : dims(d) {
    e_txt = random_vec(rng, dims.d_text);
    e_g = random_vec(rng, dims.d_text);
    p_ret = random_vec(rng, dims.d_pref);
    e_sem = random_vec(rng, dims.d_text);
    proj = seeded_projection(dims.d_detailed(), dims.d_text, 0xFEED, "sem");
  }

  double loss(const CalibratorParams& params) const {
    const DetailedTrace dt = build_detailed(e_txt, params, dims);
    const CalibrateTrace ct = calibrate(dt.e_d, e_g, params, dims);
    return beta * calibrator_loss(ct.p_gen, p_ret) +
           gamma * semantic_loss(dt.e_d, e_sem, proj, nullptr);
  }

  CalibratorGradients gradients(const CalibratorParams& params) const {
    const DetailedTrace dt = build_detailed(e_txt, params, dims);
    const CalibrateTrace ct = calibrate(dt.e_d, e_g, params, dims);
    const Vec d_p_gen = scaled(sub(ct.p_gen, p_ret), 2.0 * beta);
    Vec d_e_d;
    semantic_loss(dt.e_d, e_sem, proj, &d_e_d);
    for (auto& v : d_e_d) v *= gamma;
    return calibrator_backward(dt, ct, params, dims, d_p_gen, d_e_d);
  }
};

double worst_gradient_error(const LossSetup& setup, const CalibratorParams& params) {
  const CalibratorGradients grads = setup.gradients(params);
  std::vector<std::pair<std::string, const Mat*>> grad_list;
  visit_params(grads, [&](const std::string& name, const Mat& m) {
    grad_list.emplace_back(name, &m);
  });
  double worst = 0.0;
  size_t gi = 0;
  visit_params(params, [&](const std::string& name, const Mat& m) {
    REQUIRE(grad_list[gi].first == name);
    const Mat* gm = grad_list[gi].second;
    ++gi;
    auto f = [&](const Vec& flat) {
      CalibratorParams probe = params;
      size_t pi = 0;
      visit_params(probe, [&](const std::string& pname, Mat& pm) {
        if (pname == name) pm.data = flat;
        ++pi;
      });
      return setup.loss(probe);
    };
    const auto report = check_gradient(f, m.data, gm->data, 1e-5);
    worst = std::max(worst, report.max_relative_error);
  });
  return worst;
}

}  // namespace

TEST_CASE("shape closure across widths and depths") {
  Rng rng(1);
  for (int depth = 1; depth <= 4; ++depth) {
    PreferenceDims dims;
    dims.d_text = 8;
    dims.d_mapper = 4 + depth;
    dims.img_tokens = depth;
    dims.queries = 5 - depth;
    dims.mapper_depth = depth;
    dims.d_attn = 6;
    dims.kv_rows = depth;
    dims.d_pref = 7;
    const CalibratorParams params = init_calibrator_params(dims, rng.split(depth));
    const Vec e_txt = random_vec(rng, dims.d_text);
    const Vec e_g = random_vec(rng, dims.d_text);
    const DetailedTrace dt = build_detailed(e_txt, params, dims);
    CHECK(static_cast<int>(dt.e_d.size()) == dims.d_detailed());
    const CalibrateTrace ct = calibrate(dt.e_d, e_g, params, dims);
    CHECK(static_cast<int>(ct.p_gen.size()) == dims.d_pref);
    check_finite(ct.p_gen, "p_gen");
  }
}

TEST_CASE("single-layer identity mapper reproduces the hand-computed attention step") {
  // One query, one image token, identity projections: the mapper output can
  // be followed through by hand.
  PreferenceDims dims;
  dims.d_text = 2;
  dims.d_mapper = 2;
  dims.img_tokens = 1;
  dims.queries = 1;
  dims.mapper_depth = 1;
  dims.d_attn = 2;
  dims.kv_rows = 1;
  dims.d_pref = 2;
  CalibratorParams params = init_calibrator_params(dims, Rng(2));
  auto identity = [](int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  };
  params.mapper.queries = Mat(1, 2);
  params.mapper.queries.set_row(0, {0.3, -0.2});
  auto& layer = params.mapper.layers[0];
  layer.w_query = identity(2);
  layer.w_key = identity(2);
  layer.w_value = identity(2);
  layer.w_ff = Mat(2, 2);  // zero FF: tanh(0) = 0, pure residual
  params.mapper.out1 = identity(2);
  params.mapper.out2 = identity(2);
  params.img_tokens = Mat(1, 2);
  params.img_tokens.set_row(0, {0.5, 0.1});

  const Vec e_txt = {0.2, -0.4};
  const DetailedTrace dt = build_detailed(e_txt, params, dims);
  // e_img = img_tokens + e_txt = (0.7, -0.3); one key/value row means the
  // attention output equals it; residual adds the query; pooled = x_final.
  const Vec expect_x = {0.3 + 0.7, -0.2 + -0.3};
  // out1 tanh then out2 identity
  const Vec expect_mapper = {std::tanh(expect_x[0]), std::tanh(expect_x[1])};
  CHECK(dt.mapper_out[0] == doctest::Approx(expect_mapper[0]).epsilon(1e-12));
  CHECK(dt.mapper_out[1] == doctest::Approx(expect_mapper[1]).epsilon(1e-12));
  CHECK(dt.e_d == concat(e_txt, dt.mapper_out));
}

TEST_CASE("zeroed image tokens and zero output maps give e_d = [e_txt; 0]") {
  PreferenceDims dims = small_dims();
  CalibratorParams params = init_calibrator_params(dims, Rng(3));
  params.mapper.out2 = Mat(dims.d_mapper, dims.d_mapper);  // zero
  Rng rng(4);
  const Vec e_txt = random_vec(rng, dims.d_text);
  const DetailedTrace dt = build_detailed(e_txt, params, dims);
  for (int i = 0; i < dims.d_text; ++i) CHECK(dt.e_d[i] == e_txt[i]);
  for (int i = dims.d_text; i < dims.d_detailed(); ++i) CHECK(dt.e_d[i] == 0.0);
}

TEST_CASE("calibrate: singleton attention and zero output projection") {
  PreferenceDims dims = small_dims();
  dims.kv_rows = 1;
  CalibratorParams params = init_calibrator_params(dims, Rng(5));
  Rng rng(6);
  const Vec e_d = random_vec(rng, dims.d_detailed());
  const Vec e_g = random_vec(rng, dims.d_text);

  const CalibrateTrace ct = calibrate(e_d, e_g, params, dims);
  // One key/value row: the attention output is exactly that value row.
  const Vec v_row = vec_mat(e_g, params.attn_v[0]);
  CHECK(ragar::testing::max_abs_diff(ct.attn_out, v_row) <= 1e-12);
  CHECK(ct.p_gen == vec_mat(concat(v_row, e_g), params.out_proj));

  params.out_proj = Mat(dims.d_attn + dims.d_text, dims.d_pref);  // zero
  const CalibrateTrace zero = calibrate(e_d, e_g, params, dims);
  for (double x : zero.p_gen) CHECK(x == 0.0);
}

TEST_CASE("calibrate matches a step-by-step matrix oracle") {
  PreferenceDims dims = small_dims();
  const CalibratorParams params = init_calibrator_params(dims, Rng(7));
  Rng rng(8);
  const Vec e_d = random_vec(rng, dims.d_detailed());
  const Vec e_g = random_vec(rng, dims.d_text);
  const CalibrateTrace ct = calibrate(e_d, e_g, params, dims);

  // Oracle: independent arithmetic over the same parameters.
  const Vec q = vec_mat(e_d, params.attn_q);
  Vec logits(dims.kv_rows);
  std::vector<Vec> values;
  for (int j = 0; j < dims.kv_rows; ++j) {
    const Vec k = vec_mat(e_g, params.attn_k[j]);
    values.push_back(vec_mat(e_g, params.attn_v[j]));
    logits[j] = dot(q, k) / std::sqrt(static_cast<double>(dims.d_attn));
  }
  const Vec w = softmax_weights(logits);
  Vec attn(dims.d_attn, 0.0);
  for (int j = 0; j < dims.kv_rows; ++j) axpy(attn, w[j], values[j]);
  const Vec p_gen = vec_mat(concat(attn, e_g), params.out_proj);
  CHECK(ragar::testing::max_abs_diff(ct.p_gen, p_gen) <= 1e-12);
}

TEST_CASE("determinism: fixed params and inputs give bitwise-identical p_gen") {
  PreferenceDims dims = small_dims();
  const CalibratorParams params = init_calibrator_params(dims, Rng(9));
  Rng rng(10);
  const Vec e_txt = random_vec(rng, dims.d_text);
  const Vec e_g = random_vec(rng, dims.d_text);
  const DetailedTrace d1 = build_detailed(e_txt, params, dims);
  const DetailedTrace d2 = build_detailed(e_txt, params, dims);
  CHECK(d1.e_d == d2.e_d);
  const CalibrateTrace c1 = calibrate(d1.e_d, e_g, params, dims);
  const CalibrateTrace c2 = calibrate(d2.e_d, e_g, params, dims);
  CHECK(c1.p_gen == c2.p_gen);
}

TEST_CASE("attention rows inside the stack stay convex combinations") {
  PreferenceDims dims = small_dims();
  const CalibratorParams params = init_calibrator_params(dims, Rng(11));
  Rng rng(12);
  const Vec e_txt = random_vec(rng, dims.d_text);
  const DetailedTrace dt = build_detailed(e_txt, params, dims);
  for (const auto& layer : dt.layers) {
    for (int i = 0; i < layer.attn_weights.rows; ++i) {
      double sum = 0.0;
      for (int j = 0; j < layer.attn_weights.cols; ++j) {
        CHECK(layer.attn_weights(i, j) >= 0.0);
        sum += layer.attn_weights(i, j);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("all calibrator gradients pass finite differences at 20 random configs") {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(1000 + trial);
    PreferenceDims dims;
    dims.d_text = 4 + rng.uniform_int(4);
    dims.d_mapper = 3 + rng.uniform_int(4);
    dims.img_tokens = 1 + rng.uniform_int(3);
    dims.queries = 1 + rng.uniform_int(3);
    dims.mapper_depth = 1 + rng.uniform_int(4);
    dims.d_attn = 3 + rng.uniform_int(4);
    dims.kv_rows = 1 + rng.uniform_int(3);
    dims.d_pref = 3 + rng.uniform_int(4);
    const CalibratorParams params = init_calibrator_params(dims, rng.split("params"));
    const LossSetup setup(dims, rng.split("inputs"));
    const double worst = worst_gradient_error(setup, params);
    CAPTURE(trial);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("gradients vanish at the calibrator-loss minimum") {
  // With gamma = 0 and p_ret pinned to the model's own output, the quadratic
  // sits at its minimum and every gradient is exactly zero.
  PreferenceDims dims = small_dims();
  const CalibratorParams params = init_calibrator_params(dims, Rng(31));
  Rng rng(32);
  LossSetup setup(dims, rng);
  setup.gamma = 0.0;
  const DetailedTrace dt = build_detailed(setup.e_txt, params, dims);
  const CalibrateTrace ct = calibrate(dt.e_d, setup.e_g, params, dims);
  setup.p_ret = ct.p_gen;
  const CalibratorGradients grads = setup.gradients(params);
  visit_params(grads, [](const std::string&, const Mat& m) {
    for (double v : m.data) CHECK(v == 0.0);
  });
}

TEST_CASE("apply_sgd with zero gradients leaves parameters unchanged") {
  PreferenceDims dims = small_dims();
  CalibratorParams params = init_calibrator_params(dims, Rng(41));
  const CalibratorParams before = params;
  apply_sgd(params, zeros_like(params), 0.5);
  visit_params(before, [&](const std::string& name, const Mat& m) {
    visit_params(params, [&](const std::string& name2, const Mat& m2) {
      if (name == name2) CHECK(m.data == m2.data);
    });
  });
}

TEST_CASE("parameter validation rejects inconsistent shapes") {
  PreferenceDims dims = small_dims();
  CalibratorParams params = init_calibrator_params(dims, Rng(51));
  params.attn_q = Mat(2, 2);
  CHECK_THROWS_AS(validate_params(params, dims), std::invalid_argument);

  params = init_calibrator_params(dims, Rng(51));
  params.mapper.layers.pop_back();
  CHECK_THROWS_AS(validate_params(params, dims), std::invalid_argument);
}
