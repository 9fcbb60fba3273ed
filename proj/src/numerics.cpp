#include "ragar/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ragar {

Mat::Mat(int r, int c, double fill) : rows(r), cols(c) {
  if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative shape");
  data.assign(static_cast<size_t>(r) * static_cast<size_t>(c), fill);
}

Vec Mat::row(int r) const {
  return Vec(data.begin() + static_cast<size_t>(r) * cols,
             data.begin() + static_cast<size_t>(r + 1) * cols);
}

void Mat::set_row(int r, const Vec& v) {
  if (static_cast<int>(v.size()) != cols) throw std::invalid_argument("set_row: size mismatch");
  std::copy(v.begin(), v.end(), data.begin() + static_cast<size_t>(r) * cols);
}

Mat Mat::random_gaussian(int r, int c, double stddev, Rng rng) {
  Mat m(r, c);
  for (auto& x : m.data) x = stddev * rng.normal();
  return m;
}

void check_finite(const Vec& xs, const std::string& what) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw std::domain_error("non-finite value in " + what);
  }
}

void check_finite(const Mat& m, const std::string& what) {
  for (double x : m.data) {
    if (!std::isfinite(x)) throw std::domain_error("non-finite value in " + what);
  }
}

static void require_same_dim(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

double dot(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

double squared_distance(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "squared_distance");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

Vec normalized(const Vec& a) {
  const double n = norm(a);
  if (n == 0.0) throw std::domain_error("normalized: zero-norm vector");
  return scaled(a, 1.0 / n);
}

Vec add(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "add");
  Vec out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vec sub(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "sub");
  Vec out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vec scaled(const Vec& a, double s) {
  Vec out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

void axpy(Vec& y, double alpha, const Vec& x) {
  require_same_dim(y, x, "axpy");
  for (size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

Vec concat(const Vec& a, const Vec& b) {
  Vec out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Vec vec_mat(const Vec& v, const Mat& m) {
  if (static_cast<int>(v.size()) != m.rows) {
    throw std::invalid_argument("vec_mat: dimension mismatch");
  }
  Vec out(m.cols, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double vr = v[r];
    if (vr == 0.0) continue;
    const double* row = m.data.data() + static_cast<size_t>(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) out[c] += vr * row[c];
  }
  return out;
}

Vec mat_vec(const Mat& m, const Vec& v) {
  if (static_cast<int>(v.size()) != m.cols) {
    throw std::invalid_argument("mat_vec: dimension mismatch");
  }
  Vec out(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + static_cast<size_t>(r) * m.cols;
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) s += row[c] * v[c];
    out[r] = s;
  }
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: dimension mismatch");
  Mat out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Mat transposed(const Mat& m) {
  Mat out(m.cols, m.rows);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) out(c, r) = m(r, c);
  return out;
}

Mat outer(const Vec& a, const Vec& b) {
  Mat out(static_cast<int>(a.size()), static_cast<int>(b.size()));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out(static_cast<int>(i), static_cast<int>(j)) = a[i] * b[j];
  return out;
}

void mat_add_inplace(Mat& a, const Mat& b, double scale) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw std::invalid_argument("mat_add_inplace: shape mismatch");
  }
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += scale * b.data[i];
}

double cosine_similarity(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "cosine_similarity");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw std::domain_error("cosine_similarity: zero-norm input");
  }
  return dot(a, b) / (na * nb);
}

Vec softmax_weights(const Vec& scores) {
  if (scores.empty()) throw std::domain_error("softmax_weights: empty input");
  check_finite(scores, "softmax_weights input");
  const double m = *std::max_element(scores.begin(), scores.end());
  Vec out(scores.size());
  double z = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    z += out[i];
  }
  for (auto& w : out) w /= z;
  return out;
}

double gaussian_log_density(const Vec& x, const Vec& mean, double sigma) {
  require_same_dim(x, mean, "gaussian_log_density");
  if (sigma <= 0.0) throw std::domain_error("gaussian_log_density: sigma must be positive");
  const double d = static_cast<double>(x.size());
  const double quad = squared_distance(x, mean) / (2.0 * sigma * sigma);
  return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) - quad;
}

Mat scaled_dot_attention_weights(const Mat& queries, const Mat& keys) {
  if (queries.cols != keys.cols) {
    throw std::invalid_argument("scaled_dot_attention: query/key dim mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(keys.cols));
  Mat weights(queries.rows, keys.rows);
  for (int i = 0; i < queries.rows; ++i) {
    Vec z(keys.rows);
    for (int j = 0; j < keys.rows; ++j) {
      double s = 0.0;
      for (int c = 0; c < queries.cols; ++c) s += queries(i, c) * keys(j, c);
      z[j] = s * scale;
    }
    weights.set_row(i, softmax_weights(z));
  }
  return weights;
}

Mat attention_apply(const Mat& weights, const Mat& values) {
  if (weights.cols != values.rows) {
    throw std::invalid_argument("attention_apply: weight/value mismatch");
  }
  return matmul(weights, values);
}

Mat scaled_dot_attention(const Mat& queries, const Mat& keys, const Mat& values) {
  if (keys.rows != values.rows) {
    throw std::invalid_argument("scaled_dot_attention: key/value row mismatch");
  }
  return attention_apply(scaled_dot_attention_weights(queries, keys), values);
}

Vec finite_difference_gradient(const std::function<double(const Vec&)>& f,
                               const Vec& p, double h) {
  if (h <= 0.0) throw std::domain_error("finite_difference_gradient: h must be positive");
  Vec grad(p.size());
  Vec probe = p;
  for (size_t i = 0; i < p.size(); ++i) {
    probe[i] = p[i] + h;
    const double up = f(probe);
    probe[i] = p[i] - h;
    const double down = f(probe);
    probe[i] = p[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("finite_difference_gradient: non-finite evaluation");
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Vec sgd_step(const Vec& params, const Vec& grad, double lr) {
  require_same_dim(params, grad, "sgd_step");
  if (lr <= 0.0) throw std::domain_error("sgd_step: lr must be positive");
  Vec out(params.size());
  for (size_t i = 0; i < params.size(); ++i) out[i] = params[i] - lr * grad[i];
  return out;
}

Mat sgd_step(const Mat& params, const Mat& grad, double lr) {
  if (params.rows != grad.rows || params.cols != grad.cols) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  if (lr <= 0.0) throw std::domain_error("sgd_step: lr must be positive");
  Mat out = params;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= lr * grad.data[i];
  return out;
}

GradientCheckReport check_gradient(const std::function<double(const Vec&)>& f,
                                   const Vec& p, const Vec& analytic,
                                   double h, double floor) {
  const Vec fd = finite_difference_gradient(f, p, h);
  require_same_dim(fd, analytic, "check_gradient");
  GradientCheckReport report;
  report.parameter_count = static_cast<int>(p.size());
  report.per_parameter_errors.resize(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    const double denom = std::max(std::abs(analytic[i]) + std::abs(fd[i]), floor);
    const double err = std::abs(analytic[i] - fd[i]) / denom;
    report.per_parameter_errors[i] = err;
    report.max_relative_error = std::max(report.max_relative_error, err);
  }
  return report;
}

}  // namespace ragar
