#include "ragar/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ragar {

using nlohmann::json;

std::string Checkpoint::to_text() const {
  json j;
  j["format"] = "ragar-ckpt";
  j["version"] = version;
  j["kind"] = kind;
  json tens = json::object();
  for (const auto& [name, m] : tensors) {
    tens[name] = {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
  }
  j["tensors"] = tens;
  j["scalars"] = scalars;
  return j.dump();
}

Checkpoint Checkpoint::from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: invalid JSON (") + e.what() + ")");
  }
  if (j.value("format", "") != "ragar-ckpt") {
    throw std::runtime_error("checkpoint: unrecognized format marker");
  }
  Checkpoint ckpt;
  ckpt.version = j.at("version").get<int>();
  if (ckpt.version != 1) throw std::runtime_error("checkpoint: unsupported version");
  ckpt.kind = j.at("kind").get<std::string>();
  for (const auto& [name, t] : j.at("tensors").items()) {
    Mat m(t.at("rows").get<int>(), t.at("cols").get<int>());
    const auto& data = t.at("data");
    if (data.size() != m.data.size()) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' size mismatch");
    }
    m.data = data.get<std::vector<double>>();
    check_finite(m, "checkpoint tensor " + name);
    ckpt.tensors.emplace(name, std::move(m));
  }
  if (j.contains("scalars")) {
    for (const auto& [name, v] : j.at("scalars").items()) {
      ckpt.scalars[name] = v.get<double>();
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << ckpt.to_text();
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return Checkpoint::from_text(buf.str());
}

namespace {

void dims_to_scalars(const PreferenceDims& dims, std::map<std::string, double>& scalars) {
  scalars["dims.d_text"] = dims.d_text;
  scalars["dims.d_mapper"] = dims.d_mapper;
  scalars["dims.img_tokens"] = dims.img_tokens;
  scalars["dims.queries"] = dims.queries;
  scalars["dims.mapper_depth"] = dims.mapper_depth;
  scalars["dims.d_attn"] = dims.d_attn;
  scalars["dims.kv_rows"] = dims.kv_rows;
  scalars["dims.d_pref"] = dims.d_pref;
}

PreferenceDims dims_from_scalars(const std::map<std::string, double>& scalars) {
  auto get = [&scalars](const char* key) {
    auto it = scalars.find(key);
    if (it == scalars.end()) throw std::runtime_error(std::string("checkpoint: missing ") + key);
    return static_cast<int>(it->second);
  };
  PreferenceDims dims;
  dims.d_text = get("dims.d_text");
  dims.d_mapper = get("dims.d_mapper");
  dims.img_tokens = get("dims.img_tokens");
  dims.queries = get("dims.queries");
  dims.mapper_depth = get("dims.mapper_depth");
  dims.d_attn = get("dims.d_attn");
  dims.kv_rows = get("dims.kv_rows");
  dims.d_pref = get("dims.d_pref");
  return dims;
}

CalibratorParams params_from_tensors(const Checkpoint& ckpt, const PreferenceDims& dims,
                                     const std::string& prefix) {
  CalibratorParams params = init_calibrator_params(dims, Rng(0));
  visit_params(params, [&](const std::string& name, Mat& m) {
    auto it = ckpt.tensors.find(prefix + name);
    if (it == ckpt.tensors.end()) {
      throw std::runtime_error("checkpoint: missing tensor " + prefix + name);
    }
    if (it->second.rows != m.rows || it->second.cols != m.cols) {
      throw std::runtime_error("checkpoint: tensor shape mismatch for " + prefix + name);
    }
    m = it->second;
  });
  return params;
}

}  // namespace

Checkpoint calibrator_checkpoint(const CalibratorParams& params, const PreferenceDims& dims) {
  Checkpoint ckpt;
  ckpt.kind = "calibrator";
  dims_to_scalars(dims, ckpt.scalars);
  visit_params(params, [&](const std::string& name, const Mat& m) { ckpt.tensors[name] = m; });
  return ckpt;
}

CalibratorParams calibrator_from_checkpoint(const Checkpoint& ckpt, PreferenceDims* dims_out) {
  if (ckpt.kind != "calibrator") throw std::runtime_error("checkpoint: kind mismatch");
  const PreferenceDims dims = dims_from_scalars(ckpt.scalars);
  if (dims_out) *dims_out = dims;
  return params_from_tensors(ckpt, dims, "");
}

Checkpoint calibrator_set_checkpoint(const std::map<std::string, CalibratorParams>& per_user,
                                     const PreferenceDims& dims) {
  Checkpoint ckpt;
  ckpt.kind = "calibrator_set";
  dims_to_scalars(dims, ckpt.scalars);
  ckpt.scalars["users"] = static_cast<double>(per_user.size());
  for (const auto& [user_id, params] : per_user) {
    visit_params(params, [&](const std::string& name, const Mat& m) {
      ckpt.tensors[user_id + "/" + name] = m;
    });
  }
  return ckpt;
}

std::map<std::string, CalibratorParams> calibrator_set_from_checkpoint(const Checkpoint& ckpt,
                                                                       PreferenceDims* dims_out) {
  if (ckpt.kind != "calibrator_set") throw std::runtime_error("checkpoint: kind mismatch");
  const PreferenceDims dims = dims_from_scalars(ckpt.scalars);
  if (dims_out) *dims_out = dims;
  std::map<std::string, CalibratorParams> per_user;
  std::set<std::string> user_ids;
  for (const auto& [name, m] : ckpt.tensors) {
    const auto slash = name.find('/');
    if (slash != std::string::npos) user_ids.insert(name.substr(0, slash));
  }
  for (const auto& id : user_ids) {
    per_user.emplace(id, params_from_tensors(ckpt, dims, id + "/"));
  }
  return per_user;
}

Checkpoint rank_model_checkpoint(const RankModelParams& params) {
  Checkpoint ckpt;
  ckpt.kind = "rank_model";
  ckpt.tensors["user_proj"] = params.user_proj;
  ckpt.tensors["item_proj_visual"] = params.item_proj_visual;
  ckpt.tensors["item_proj_text"] = params.item_proj_text;
  ckpt.scalars["fusion_weight"] = params.fusion_weight;
  ckpt.scalars["reference_weight"] = params.reference_weight;
  return ckpt;
}

RankModelParams rank_model_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "rank_model") throw std::runtime_error("checkpoint: kind mismatch");
  RankModelParams params;
  params.user_proj = ckpt.tensors.at("user_proj");
  params.item_proj_visual = ckpt.tensors.at("item_proj_visual");
  params.item_proj_text = ckpt.tensors.at("item_proj_text");
  params.fusion_weight = ckpt.scalars.at("fusion_weight");
  if (ckpt.scalars.count("reference_weight")) {
    params.reference_weight = ckpt.scalars.at("reference_weight");
  }
  if (params.fusion_weight < 0.0 || params.fusion_weight > 1.0) {
    throw std::runtime_error("checkpoint: fusion_weight outside [0,1]");
  }
  return params;
}

uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for checksum: " + path);
  uint64_t h = 0xCBF29CE484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  return h;
}

}  // namespace ragar
