#pragma once

#include <cstring>

#include "mape/model.hpp"

namespace mape {

// Self-describing model container: a fixed magic, a JSON header carrying the
// format version, model configuration, vocabulary, pipeline stage/mode
// labels and free-form metadata, followed by raw float32 parameter blobs in
// header order. Round-trips are bit-exact.

constexpr char kCheckpointMagic[8] = {'M', 'A', 'P', 'E', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::string stage;  // e.g. "stage1", "stage2-phase1", "final"
  std::string mode;   // e.g. "single", "ls-mtl", "nash-mtl", "domain-adapt"
  std::map<std::string, std::string> metadata;
};

inline void save_checkpoint(const ApeModel<float>& model, const Vocab& vocab,
                            const CheckpointInfo& info,
                            const std::string& path) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["model_config"] = model.config().to_json();
  header["vocab"] = vocab.to_json();
  header["stage"] = info.stage;
  header["mode"] = info.mode;
  header["metadata"] = info.metadata;
  header["params"] = nlohmann::json::array();
  for (const auto* p : model.params())
    header["params"].push_back({{"name", p->name},
                                {"rows", p->value.rows()},
                                {"cols", p->value.cols()},
                                {"trainable", p->trainable}});
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const auto len = static_cast<std::uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto* p : model.params())
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(float) *
                                           static_cast<std::size_t>(
                                               p->value.size())));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

struct LoadedCheckpoint {
  ModelConfig config;
  Vocab vocab;
  CheckpointInfo info;
  ApeModel<float> model;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string hs(len, '\0');
  in.read(hs.data(), len);
  if (!in) throw DataError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint header in " + path + ": " + e.what());
  }
  if (header.at("format_version").get<std::uint32_t>() != kCheckpointVersion)
    throw DataError("unsupported checkpoint version in " + path);

  const ModelConfig cfg = ModelConfig::from_json(header.at("model_config"));
  Vocab vocab = Vocab::from_json(header.at("vocab"));
  CheckpointInfo info;
  info.stage = header.at("stage");
  info.mode = header.at("mode");
  info.metadata =
      header.at("metadata").get<std::map<std::string, std::string>>();

  ApeModel<float> model(cfg, 0);
  auto params = model.params();
  const auto& decl = header.at("params");
  if (decl.size() != params.size())
    throw DataError("checkpoint parameter list does not match layout: " + path);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& d = decl[i];
    if (d.at("name").get<std::string>() != params[i]->name ||
        d.at("rows").get<Eigen::Index>() != params[i]->value.rows() ||
        d.at("cols").get<Eigen::Index>() != params[i]->value.cols())
      throw DataError("checkpoint parameter mismatch at " + params[i]->name);
    in.read(reinterpret_cast<char*>(params[i]->value.data()),
            static_cast<std::streamsize>(sizeof(float) *
                                         static_cast<std::size_t>(
                                             params[i]->value.size())));
    params[i]->trainable = d.at("trainable").get<bool>();
    if (!in) throw DataError("truncated checkpoint blobs: " + path);
  }
  return {cfg, std::move(vocab), std::move(info), std::move(model)};
}

struct TransferReport {
  std::vector<std::string> loaded;
  std::vector<std::string> missing;        // in model, absent from checkpoint
  std::vector<std::string> shape_mismatch;
};

// Copies parameters by name from a checkpoint into an existing model.
// strict mode requires every model parameter to be matched.
inline TransferReport init_from_checkpoint(ApeModel<float>& model,
                                           const LoadedCheckpoint& ckpt,
                                           bool strict) {
  TransferReport report;
  for (auto* p : model.params()) {
    const Param<float>* donor = nullptr;
    for (const auto* q : ckpt.model.params())
      if (q->name == p->name) {
        donor = q;
        break;
      }
    if (!donor) {
      report.missing.push_back(p->name);
      continue;
    }
    if (donor->value.rows() != p->value.rows() ||
        donor->value.cols() != p->value.cols()) {
      report.shape_mismatch.push_back(p->name);
      continue;
    }
    p->value = donor->value;
    report.loaded.push_back(p->name);
  }
  if (strict && (!report.missing.empty() || !report.shape_mismatch.empty())) {
    std::string msg = "strict checkpoint transfer failed;";
    for (const auto& n : report.missing) msg += " missing:" + n;
    for (const auto& n : report.shape_mismatch) msg += " shape:" + n;
    throw DataError(msg);
  }
  return report;
}

}  // namespace mape
