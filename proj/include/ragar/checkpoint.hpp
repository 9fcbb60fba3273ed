#pragma once

#include <map>
#include <string>

#include "ragar/numerics.hpp"
#include "ragar/preference.hpp"
#include "ragar/ranker.hpp"

namespace ragar {

/// Versioned text container for named tensors and scalars. Doubles are
/// serialized shortest-round-trip, so load(save(x)) == x exactly.
struct Checkpoint {
  std::string kind;
  int version = 1;
  std::map<std::string, Mat> tensors;
  std::map<std::string, double> scalars;

  std::string to_text() const;
  static Checkpoint from_text(const std::string& text);
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint calibrator_checkpoint(const CalibratorParams& params, const PreferenceDims& dims);
CalibratorParams calibrator_from_checkpoint(const Checkpoint& ckpt, PreferenceDims* dims_out);

/// A set of per-user calibrators sharing one PreferenceDims.
Checkpoint calibrator_set_checkpoint(const std::map<std::string, CalibratorParams>& per_user,
                                     const PreferenceDims& dims);
std::map<std::string, CalibratorParams> calibrator_set_from_checkpoint(const Checkpoint& ckpt,
                                                                       PreferenceDims* dims_out);

Checkpoint rank_model_checkpoint(const RankModelParams& params);
RankModelParams rank_model_from_checkpoint(const Checkpoint& ckpt);

/// FNV-1a over a file's bytes; the manifest fingerprint.
uint64_t file_checksum(const std::string& path);

}  // namespace ragar
