#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ragar/numerics.hpp"

namespace ragar {

/// Width/depth knobs for the preference stack. d_pref must equal the visual
/// feature dim: the calibrator loss subtracts the two.
struct PreferenceDims {
  int d_text = 32;      // semantic embedding dim (input of everything textual)
  int d_mapper = 32;    // modal mapper output dim
  int img_tokens = 4;   // number of trainable image-slot token rows
  int queries = 4;      // trainable query rows in the mapper
  int mapper_depth = 4;
  int d_attn = 32;      // calibrator attention dim
  int kv_rows = 4;      // learned key/value row projections of e_g (1 = plain form)
  int d_pref = 32;

  int d_detailed() const { return d_text + d_mapper; }
};

struct MapperLayerParams {
  Mat w_query, w_key, w_value, w_ff;  // each d_text x d_text
};

struct MapperParams {
  Mat queries;  // queries x d_text, trainable
  std::vector<MapperLayerParams> layers;
  Mat out1;  // d_text x d_mapper
  Mat out2;  // d_mapper x d_mapper
};

/// Every trainable matrix of the generation-side preference model: the modal
/// mapper, the image-slot tokens, and the balance calibrator's attention and
/// output projections. This is the only state reflection updates.
struct CalibratorParams {
  MapperParams mapper;
  Mat img_tokens;           // img_tokens x d_text
  Mat attn_q;               // d_detailed x d_attn
  std::vector<Mat> attn_k;  // kv_rows matrices, each d_text x d_attn
  std::vector<Mat> attn_v;  // kv_rows matrices, each d_text x d_attn
  Mat out_proj;             // (d_attn + d_text) x d_pref
};

CalibratorParams init_calibrator_params(const PreferenceDims& dims, Rng rng);
void validate_params(const CalibratorParams& params, const PreferenceDims& dims);

/// Visits every trainable matrix with a stable name. Shared by the SGD
/// update, the finite-difference harness, checkpointing and checksums.
void visit_params(CalibratorParams& params,
                  const std::function<void(const std::string&, Mat&)>& fn);
void visit_params(const CalibratorParams& params,
                  const std::function<void(const std::string&, const Mat&)>& fn);

/// Gradients share the parameter layout.
using CalibratorGradients = CalibratorParams;
CalibratorGradients zeros_like(const CalibratorParams& params);
void apply_sgd(CalibratorParams& params, const CalibratorGradients& grads, double lr);

// ---- forward traces (cached intermediates for the hand-written backward) ---

struct MapperLayerTrace {
  Mat x_in;
  Mat q_proj, k_proj, v_proj;
  Mat attn_weights;
  Mat attn_out;
  Mat h;        // x_in + attn_out
  Mat ff_tanh;  // tanh(h * w_ff); layer output is h + ff_tanh
};

struct DetailedTrace {
  Vec e_txt;
  Mat e_img;  // img_tokens + e_txt broadcast to every row
  std::vector<MapperLayerTrace> layers;
  Mat x_final;
  Vec pooled;
  Vec out1_tanh;
  Vec mapper_out;
  Vec e_d;  // concat(e_txt, mapper_out)
};

struct CalibrateTrace {
  Vec e_d, e_g;
  Vec q;
  Mat keys, values;  // kv_rows x d_attn
  Vec attn_weights;  // kv_rows
  Vec attn_out;      // d_attn
  Vec concat_out;    // attn_out ++ e_g
  Vec p_gen;
};

/// Surrogate detailed-preference construction: image-slot tokens conditioned
/// on the keyword embedding, run through the mapper with trainable queries,
/// mean-pooled and concatenated behind e_txt.
DetailedTrace build_detailed(const Vec& e_txt, const CalibratorParams& params,
                             const PreferenceDims& dims);

/// Cross-attention of the detailed feature over learned liftings of the
/// global feature, then an output projection over [attention result; e_g]
/// (the residual half of the fusion).
CalibrateTrace calibrate(const Vec& e_d, const Vec& e_g, const CalibratorParams& params,
                         const PreferenceDims& dims);

/// Backward pass through calibrate and build_detailed. d_p_gen is the loss
/// gradient at p_gen, d_e_d the direct loss gradient at e_d (the semantic
/// loss enters there); encoder outputs are constants.
CalibratorGradients calibrator_backward(const DetailedTrace& dt, const CalibrateTrace& ct,
                                        const CalibratorParams& params,
                                        const PreferenceDims& dims, const Vec& d_p_gen,
                                        const Vec& d_e_d);

}  // namespace ragar
