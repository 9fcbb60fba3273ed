#include "ragar/preference.hpp"

#include <cmath>
#include <stdexcept>

namespace ragar {

namespace {

void require_shape(const Mat& m, int rows, int cols, const std::string& name) {
  if (m.rows != rows || m.cols != cols) {
    throw std::invalid_argument("calibrator params: " + name + " expected " +
                                std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                                std::to_string(m.rows) + "x" + std::to_string(m.cols));
  }
  check_finite(m, name);
}

// Backward through out = softmax(Q K^T / sqrt(d)) V for cached weights W.
// Accumulates into dq/dk/dv, which must be pre-sized and zeroed.
void attention_backward(const Mat& q, const Mat& k, const Mat& v, const Mat& weights,
                        const Mat& d_out, Mat& dq, Mat& dk, Mat& dv) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols));
  // dV = W^T dOut
  for (int j = 0; j < k.rows; ++j) {
    for (int c = 0; c < v.cols; ++c) {
      double s = 0.0;
      for (int i = 0; i < q.rows; ++i) s += weights(i, j) * d_out(i, c);
      dv(j, c) += s;
    }
  }
  for (int i = 0; i < q.rows; ++i) {
    // dW_i = dOut_i . V_j, then softmax backward to the logits.
    Vec dw(k.rows, 0.0);
    for (int j = 0; j < k.rows; ++j) {
      double s = 0.0;
      for (int c = 0; c < v.cols; ++c) s += d_out(i, c) * v(j, c);
      dw[j] = s;
    }
    double inner = 0.0;
    for (int j = 0; j < k.rows; ++j) inner += dw[j] * weights(i, j);
    for (int j = 0; j < k.rows; ++j) {
      const double dz = weights(i, j) * (dw[j] - inner) * scale;
      for (int c = 0; c < k.cols; ++c) {
        dq(i, c) += dz * k(j, c);
        dk(j, c) += dz * q(i, c);
      }
    }
  }
}

}  // namespace

CalibratorParams init_calibrator_params(const PreferenceDims& dims, Rng rng) {
  if (dims.d_text < 1 || dims.d_mapper < 1 || dims.img_tokens < 1 || dims.queries < 1 ||
      dims.mapper_depth < 1 || dims.d_attn < 1 || dims.kv_rows < 1 || dims.d_pref < 1) {
    throw std::invalid_argument("init_calibrator_params: all dims must be positive");
  }
  auto glorot = [&rng](int r, int c, const char* tag) {
    const double scale = std::sqrt(2.0 / static_cast<double>(r + c));
    return Mat::random_gaussian(r, c, scale, rng.split(tag));
  };
  CalibratorParams p;
  p.mapper.queries = Mat::random_gaussian(dims.queries, dims.d_text, 0.5, rng.split("queries"));
  for (int l = 0; l < dims.mapper_depth; ++l) {
    MapperLayerParams layer;
    Rng lrng = rng.split(static_cast<uint64_t>(l) + 1000);
    const double scale = std::sqrt(2.0 / static_cast<double>(2 * dims.d_text));
    layer.w_query = Mat::random_gaussian(dims.d_text, dims.d_text, scale, lrng.split("wq"));
    layer.w_key = Mat::random_gaussian(dims.d_text, dims.d_text, scale, lrng.split("wk"));
    layer.w_value = Mat::random_gaussian(dims.d_text, dims.d_text, scale, lrng.split("wv"));
    layer.w_ff = Mat::random_gaussian(dims.d_text, dims.d_text, scale, lrng.split("wf"));
    p.mapper.layers.push_back(std::move(layer));
  }
  p.mapper.out1 = glorot(dims.d_text, dims.d_mapper, "out1");
  p.mapper.out2 = glorot(dims.d_mapper, dims.d_mapper, "out2");
  p.img_tokens = Mat::random_gaussian(dims.img_tokens, dims.d_text, 0.5, rng.split("img_tokens"));
  p.attn_q = glorot(dims.d_detailed(), dims.d_attn, "attn_q");
  const double kv_scale = std::sqrt(2.0 / static_cast<double>(dims.d_text + dims.d_attn));
  for (int j = 0; j < dims.kv_rows; ++j) {
    Rng jrng = rng.split(static_cast<uint64_t>(j) + 2000);
    p.attn_k.push_back(Mat::random_gaussian(dims.d_text, dims.d_attn, kv_scale, jrng.split("k")));
    p.attn_v.push_back(Mat::random_gaussian(dims.d_text, dims.d_attn, kv_scale, jrng.split("v")));
  }
  p.out_proj = glorot(dims.d_attn + dims.d_text, dims.d_pref, "out_proj");
  return p;
}

void validate_params(const CalibratorParams& p, const PreferenceDims& dims) {
  require_shape(p.mapper.queries, dims.queries, dims.d_text, "mapper.queries");
  if (static_cast<int>(p.mapper.layers.size()) != dims.mapper_depth) {
    throw std::invalid_argument("calibrator params: mapper depth mismatch");
  }
  for (size_t l = 0; l < p.mapper.layers.size(); ++l) {
    const auto& layer = p.mapper.layers[l];
    const std::string tag = "mapper.layer" + std::to_string(l);
    require_shape(layer.w_query, dims.d_text, dims.d_text, tag + ".w_query");
    require_shape(layer.w_key, dims.d_text, dims.d_text, tag + ".w_key");
    require_shape(layer.w_value, dims.d_text, dims.d_text, tag + ".w_value");
    require_shape(layer.w_ff, dims.d_text, dims.d_text, tag + ".w_ff");
  }
  require_shape(p.mapper.out1, dims.d_text, dims.d_mapper, "mapper.out1");
  require_shape(p.mapper.out2, dims.d_mapper, dims.d_mapper, "mapper.out2");
  require_shape(p.img_tokens, dims.img_tokens, dims.d_text, "img_tokens");
  require_shape(p.attn_q, dims.d_detailed(), dims.d_attn, "attn_q");
  if (static_cast<int>(p.attn_k.size()) != dims.kv_rows ||
      static_cast<int>(p.attn_v.size()) != dims.kv_rows) {
    throw std::invalid_argument("calibrator params: kv_rows mismatch");
  }
  for (int j = 0; j < dims.kv_rows; ++j) {
    require_shape(p.attn_k[j], dims.d_text, dims.d_attn, "attn_k[" + std::to_string(j) + "]");
    require_shape(p.attn_v[j], dims.d_text, dims.d_attn, "attn_v[" + std::to_string(j) + "]");
  }
  require_shape(p.out_proj, dims.d_attn + dims.d_text, dims.d_pref, "out_proj");
}

void visit_params(CalibratorParams& params,
                  const std::function<void(const std::string&, Mat&)>& fn) {
  fn("mapper.queries", params.mapper.queries);
  for (size_t l = 0; l < params.mapper.layers.size(); ++l) {
    const std::string tag = "mapper.layer" + std::to_string(l);
    fn(tag + ".w_query", params.mapper.layers[l].w_query);
    fn(tag + ".w_key", params.mapper.layers[l].w_key);
    fn(tag + ".w_value", params.mapper.layers[l].w_value);
    fn(tag + ".w_ff", params.mapper.layers[l].w_ff);
  }
  fn("mapper.out1", params.mapper.out1);
  fn("mapper.out2", params.mapper.out2);
  fn("img_tokens", params.img_tokens);
  fn("attn_q", params.attn_q);
  for (size_t j = 0; j < params.attn_k.size(); ++j) {
    fn("attn_k[" + std::to_string(j) + "]", params.attn_k[j]);
  }
  for (size_t j = 0; j < params.attn_v.size(); ++j) {
    fn("attn_v[" + std::to_string(j) + "]", params.attn_v[j]);
  }
  fn("out_proj", params.out_proj);
}

void visit_params(const CalibratorParams& params,
                  const std::function<void(const std::string&, const Mat&)>& fn) {
  visit_params(const_cast<CalibratorParams&>(params),
               [&fn](const std::string& name, Mat& m) { fn(name, m); });
}

CalibratorGradients zeros_like(const CalibratorParams& params) {
  CalibratorGradients g = params;
  visit_params(g, [](const std::string&, Mat& m) { std::fill(m.data.begin(), m.data.end(), 0.0); });
  return g;
}

void apply_sgd(CalibratorParams& params, const CalibratorGradients& grads, double lr) {
  CalibratorParams* pp = &params;
  const CalibratorGradients* gg = &grads;
  std::vector<Mat*> pmats;
  std::vector<const Mat*> gmats;
  visit_params(*pp, [&](const std::string&, Mat& m) { pmats.push_back(&m); });
  visit_params(*gg, [&](const std::string&, const Mat& m) { gmats.push_back(&m); });
  for (size_t i = 0; i < pmats.size(); ++i) {
    *pmats[i] = sgd_step(*pmats[i], *gmats[i], lr);
  }
}

DetailedTrace build_detailed(const Vec& e_txt, const CalibratorParams& params,
                             const PreferenceDims& dims) {
  validate_params(params, dims);
  if (static_cast<int>(e_txt.size()) != dims.d_text) {
    throw std::invalid_argument("build_detailed: e_txt dim mismatch");
  }
  DetailedTrace t;
  t.e_txt = e_txt;

  // Image-slot tokens conditioned on the keyword embedding.
  t.e_img = params.img_tokens;
  for (int r = 0; r < t.e_img.rows; ++r) {
    for (int c = 0; c < t.e_img.cols; ++c) t.e_img(r, c) += e_txt[c];
  }

  Mat x = params.mapper.queries;
  for (const auto& layer : params.mapper.layers) {
    MapperLayerTrace lt;
    lt.x_in = x;
    lt.q_proj = matmul(x, layer.w_query);
    lt.k_proj = matmul(t.e_img, layer.w_key);
    lt.v_proj = matmul(t.e_img, layer.w_value);
    lt.attn_weights = scaled_dot_attention_weights(lt.q_proj, lt.k_proj);
    lt.attn_out = attention_apply(lt.attn_weights, lt.v_proj);
    lt.h = lt.x_in;
    mat_add_inplace(lt.h, lt.attn_out);
    lt.ff_tanh = matmul(lt.h, layer.w_ff);
    for (auto& v : lt.ff_tanh.data) v = std::tanh(v);
    x = lt.h;
    mat_add_inplace(x, lt.ff_tanh);
    t.layers.push_back(std::move(lt));
  }
  t.x_final = x;

  t.pooled.assign(dims.d_text, 0.0);
  for (int r = 0; r < x.rows; ++r) {
    for (int c = 0; c < x.cols; ++c) t.pooled[c] += x(r, c);
  }
  for (auto& v : t.pooled) v /= static_cast<double>(x.rows);

  t.out1_tanh = vec_mat(t.pooled, params.mapper.out1);
  for (auto& v : t.out1_tanh) v = std::tanh(v);
  t.mapper_out = vec_mat(t.out1_tanh, params.mapper.out2);
  t.e_d = concat(e_txt, t.mapper_out);
  return t;
}

CalibrateTrace calibrate(const Vec& e_d, const Vec& e_g, const CalibratorParams& params,
                         const PreferenceDims& dims) {
  if (static_cast<int>(e_d.size()) != dims.d_detailed()) {
    throw std::invalid_argument("calibrate: e_d dim mismatch");
  }
  if (static_cast<int>(e_g.size()) != dims.d_text) {
    throw std::invalid_argument("calibrate: e_g dim mismatch");
  }
  CalibrateTrace t;
  t.e_d = e_d;
  t.e_g = e_g;
  t.q = vec_mat(e_d, params.attn_q);

  t.keys = Mat(dims.kv_rows, dims.d_attn);
  t.values = Mat(dims.kv_rows, dims.d_attn);
  for (int j = 0; j < dims.kv_rows; ++j) {
    t.keys.set_row(j, vec_mat(e_g, params.attn_k[j]));
    t.values.set_row(j, vec_mat(e_g, params.attn_v[j]));
  }

  Mat q_mat(1, dims.d_attn);
  q_mat.set_row(0, t.q);
  const Mat w = scaled_dot_attention_weights(q_mat, t.keys);
  t.attn_weights = w.row(0);
  t.attn_out = attention_apply(w, t.values).row(0);

  t.concat_out = concat(t.attn_out, e_g);
  t.p_gen = vec_mat(t.concat_out, params.out_proj);
  return t;
}

CalibratorGradients calibrator_backward(const DetailedTrace& dt, const CalibrateTrace& ct,
                                        const CalibratorParams& params,
                                        const PreferenceDims& dims, const Vec& d_p_gen,
                                        const Vec& d_e_d) {
  if (static_cast<int>(d_p_gen.size()) != dims.d_pref) {
    throw std::invalid_argument("calibrator_backward: d_p_gen dim mismatch");
  }
  if (static_cast<int>(d_e_d.size()) != dims.d_detailed()) {
    throw std::invalid_argument("calibrator_backward: d_e_d dim mismatch");
  }
  CalibratorGradients g = zeros_like(params);

  // --- calibrate backward ---------------------------------------------------
  g.out_proj = outer(ct.concat_out, d_p_gen);
  const Vec d_concat = vec_mat(d_p_gen, transposed(params.out_proj));
  Vec d_attn_out(d_concat.begin(), d_concat.begin() + dims.d_attn);
  // The e_g share of the residual is an encoder constant: no trainable path.

  Mat q_mat(1, dims.d_attn);
  q_mat.set_row(0, ct.q);
  Mat w_mat(1, dims.kv_rows);
  w_mat.set_row(0, ct.attn_weights);
  Mat d_out(1, dims.d_attn);
  d_out.set_row(0, d_attn_out);
  Mat dq(1, dims.d_attn), dk(dims.kv_rows, dims.d_attn), dv(dims.kv_rows, dims.d_attn);
  attention_backward(q_mat, ct.keys, ct.values, w_mat, d_out, dq, dk, dv);

  for (int j = 0; j < dims.kv_rows; ++j) {
    g.attn_k[j] = outer(ct.e_g, dk.row(j));
    g.attn_v[j] = outer(ct.e_g, dv.row(j));
  }
  g.attn_q = outer(ct.e_d, dq.row(0));

  Vec d_ed_total = vec_mat(dq.row(0), transposed(params.attn_q));
  for (size_t i = 0; i < d_ed_total.size(); ++i) d_ed_total[i] += d_e_d[i];

  // --- build_detailed backward ------------------------------------------------
  // e_d = concat(e_txt, mapper_out); the e_txt half is an encoder constant.
  const Vec d_mapper_out(d_ed_total.begin() + dims.d_text, d_ed_total.end());

  g.mapper.out2 = outer(dt.out1_tanh, d_mapper_out);
  Vec d_out1_tanh = vec_mat(d_mapper_out, transposed(params.mapper.out2));
  Vec d_pre1(dims.d_mapper);
  for (int i = 0; i < dims.d_mapper; ++i) {
    d_pre1[i] = d_out1_tanh[i] * (1.0 - dt.out1_tanh[i] * dt.out1_tanh[i]);
  }
  g.mapper.out1 = outer(dt.pooled, d_pre1);
  const Vec d_pooled = vec_mat(d_pre1, transposed(params.mapper.out1));

  Mat d_x(dims.queries, dims.d_text);
  for (int r = 0; r < dims.queries; ++r) {
    for (int c = 0; c < dims.d_text; ++c) {
      d_x(r, c) = d_pooled[c] / static_cast<double>(dims.queries);
    }
  }

  Mat d_e_img(dims.img_tokens, dims.d_text);
  for (int l = dims.mapper_depth - 1; l >= 0; --l) {
    const auto& lt = dt.layers[l];
    const auto& lp = params.mapper.layers[l];
    auto& lg = g.mapper.layers[l];

    // x_out = h + tanh(h w_ff)
    Mat d_pre = d_x;
    for (size_t i = 0; i < d_pre.data.size(); ++i) {
      const double th = lt.ff_tanh.data[i];
      d_pre.data[i] *= (1.0 - th * th);
    }
    lg.w_ff = matmul(transposed(lt.h), d_pre);
    Mat d_h = d_x;
    mat_add_inplace(d_h, matmul(d_pre, transposed(lp.w_ff)));

    // h = x_in + attention(x_in w_q, e_img w_k, e_img w_v)
    Mat dq_proj(dims.queries, dims.d_text);
    Mat dk_proj(dims.img_tokens, dims.d_text);
    Mat dv_proj(dims.img_tokens, dims.d_text);
    attention_backward(lt.q_proj, lt.k_proj, lt.v_proj, lt.attn_weights, d_h,
                       dq_proj, dk_proj, dv_proj);

    lg.w_query = matmul(transposed(lt.x_in), dq_proj);
    lg.w_key = matmul(transposed(dt.e_img), dk_proj);
    lg.w_value = matmul(transposed(dt.e_img), dv_proj);

    mat_add_inplace(d_e_img, matmul(dk_proj, transposed(lp.w_key)));
    mat_add_inplace(d_e_img, matmul(dv_proj, transposed(lp.w_value)));

    Mat d_x_in = d_h;  // residual path
    mat_add_inplace(d_x_in, matmul(dq_proj, transposed(lp.w_query)));
    d_x = std::move(d_x_in);
  }
  g.mapper.queries = d_x;
  g.img_tokens = d_e_img;  // e_img = img_tokens + broadcast constant
  return g;
}

}  // namespace ragar
