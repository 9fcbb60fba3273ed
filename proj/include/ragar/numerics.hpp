#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ragar/rng.hpp"

namespace ragar {

using Vec = std::vector<double>;

/// Dense row-major matrix. Small and value-semantic; every model parameter
/// and projection in the pipeline is one of these.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0);

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  Vec row(int r) const;
  void set_row(int r, const Vec& v);

  static Mat zeros_like(const Mat& m) { return Mat(m.rows, m.cols); }
  static Mat random_gaussian(int r, int c, double stddev, Rng rng);
};

/// Throws std::domain_error naming `what` if any entry is NaN/Inf.
void check_finite(const Vec& xs, const std::string& what);
void check_finite(const Mat& m, const std::string& what);

// ---- elementwise / BLAS-1 style helpers -----------------------------------

double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);
double squared_distance(const Vec& a, const Vec& b);
Vec normalized(const Vec& a);  // throws std::domain_error on zero norm
Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
Vec scaled(const Vec& a, double s);
void axpy(Vec& y, double alpha, const Vec& x);  // y += alpha * x
Vec concat(const Vec& a, const Vec& b);

// ---- matrix products (row-vector convention: v' = v * M) ------------------

Vec vec_mat(const Vec& v, const Mat& m);   // (1 x r) * (r x c) -> (1 x c)
Vec mat_vec(const Mat& m, const Vec& v);   // (r x c) * (c x 1) -> (r x 1)
Mat matmul(const Mat& a, const Mat& b);
Mat transposed(const Mat& m);
Mat outer(const Vec& a, const Vec& b);     // (len a x len b)
void mat_add_inplace(Mat& a, const Mat& b, double scale = 1.0);

// ---- the core operations ---------------------------------------------------

/// Cosine of the angle between a and b. Throws std::domain_error if either
/// vector has zero norm (a silent 0 would poison downstream rankings).
double cosine_similarity(const Vec& a, const Vec& b);

/// Numerically stable softmax: positive entries summing to 1, invariant
/// under adding a constant to all scores.
Vec softmax_weights(const Vec& scores);

/// Log density of x under an isotropic Gaussian N(mean, sigma^2 I).
double gaussian_log_density(const Vec& x, const Vec& mean, double sigma);

/// softmax(Q K^T / sqrt(d_k)) V, softmax per query row. Each output row is a
/// convex combination of value rows.
Mat scaled_dot_attention(const Mat& queries, const Mat& keys, const Mat& values);

/// Same as scaled_dot_attention but also exposes the attention weights
/// (n_q x n_k); the preference stack needs them for backprop.
Mat scaled_dot_attention_weights(const Mat& queries, const Mat& keys);
Mat attention_apply(const Mat& weights, const Mat& values);

/// Central finite differences (f(p+h e_i) - f(p-h e_i)) / 2h per coordinate.
/// The test oracle for every hand-derived gradient in the repo.
Vec finite_difference_gradient(const std::function<double(const Vec&)>& f,
                               const Vec& p, double h);

/// One plain gradient-descent update: params - lr * grad.
Vec sgd_step(const Vec& params, const Vec& grad, double lr);
Mat sgd_step(const Mat& params, const Mat& grad, double lr);

/// Comparison of an analytic gradient against finite differences.
struct GradientCheckReport {
  double max_relative_error = 0.0;
  int parameter_count = 0;
  std::vector<double> per_parameter_errors;

  bool passes(double tol) const { return max_relative_error <= tol; }
};

/// Symmetric relative error per coordinate: |a - f| / max(|a| + |f|, floor).
GradientCheckReport check_gradient(const std::function<double(const Vec&)>& f,
                                   const Vec& p, const Vec& analytic,
                                   double h = 1e-5, double floor = 1e-6);

}  // namespace ragar
