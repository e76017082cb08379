#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mape/checkpoint.hpp"
#include "mape/decode.hpp"
#include "mape/losses.hpp"
#include "mape/nash.hpp"

namespace mape {

enum class TrainMode { Single, LsMtl, NashMtl, DomainAdapt };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Single: return "single";
    case TrainMode::LsMtl: return "ls-mtl";
    case TrainMode::NashMtl: return "nash-mtl";
    case TrainMode::DomainAdapt: return "domain-adapt";
  }
  throw ArgumentError("unknown train mode");
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "single") return TrainMode::Single;
  if (s == "ls-mtl") return TrainMode::LsMtl;
  if (s == "nash-mtl") return TrainMode::NashMtl;
  if (s == "domain-adapt") return TrainMode::DomainAdapt;
  throw ArgumentError("unknown train mode: " + s);
}

struct TrainConfig {
  ModelConfig model;
  int batch_size = 32;
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.997;
  int warmup_steps = 15000;
  int patience = 5;
  int max_epochs = 10000;
  std::uint64_t seed = 1;
  ApeReduction ape_reduction = ApeReduction::Sum;
  double nash_tol = 1e-8;
  int nash_max_iters = 200;
  int dev_beam = 1;  // decode width for the per-epoch dev criterion

  void validate() const {
    // vocab_size 0 means "derive from the corpus"; pipelines fill it before
    // any model is constructed, and the model ctor rejects it otherwise.
    ModelConfig m = model;
    if (m.vocab_size == 0) m.vocab_size = 1;
    m.validate();
    if (batch_size <= 0) throw ConfigError("train: batch_size must be positive");
    if (learning_rate <= 0) throw ConfigError("train: learning_rate must be positive");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
      throw ConfigError("train: adam betas must lie in (0, 1)");
    if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be >= 0");
    if (patience <= 0) throw ConfigError("train: patience must be positive");
    if (max_epochs <= 0) throw ConfigError("train: max_epochs must be positive");
    if (nash_tol <= 0) throw ConfigError("train: nash_tol must be positive");
    if (nash_max_iters <= 0) throw ConfigError("train: nash_max_iters must be positive");
    if (dev_beam < 1) throw ConfigError("train: dev_beam must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"model", model.to_json()},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"beta1", beta1},
            {"beta2", beta2},
            {"warmup_steps", warmup_steps},
            {"patience", patience},
            {"max_epochs", max_epochs},
            {"seed", seed},
            {"ape_reduction", to_string(ape_reduction)},
            {"nash_tol", nash_tol},
            {"nash_max_iters", nash_max_iters},
            {"dev_beam", dev_beam}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.model = ModelConfig::from_json(j.at("model"));
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.patience = j.value("patience", c.patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("ape_reduction"))
      c.ape_reduction = ape_reduction_from_string(j.at("ape_reduction"));
    c.nash_tol = j.value("nash_tol", c.nash_tol);
    c.nash_max_iters = j.value("nash_max_iters", c.nash_max_iters);
    c.dev_beam = j.value("dev_beam", c.dev_beam);
    c.validate();
    return c;
  }
};

// Flat key-value text document mirroring TrainConfig; model dimensions live
// at top level alongside the optimizer settings. Structural model flags
// (mode, heads on/off) are owned by the pipeline, not the config file.
inline TrainConfig train_config_from_kv(const std::string& text) {
  TrainConfig c;
  auto kv = parse_kv(text);
  auto take = [&](const char* key, auto& field) {
    const auto it = kv.find(key);
    if (it == kv.end()) return;
    using F = std::decay_t<decltype(field)>;
    try {
      if constexpr (std::is_same_v<F, int>)
        field = std::stoi(it->second);
      else if constexpr (std::is_same_v<F, double>)
        field = std::stod(it->second);
      else if constexpr (std::is_same_v<F, std::uint64_t>)
        field = std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config key " + it->first + ": bad value \"" +
                        it->second + "\"");
    }
    kv.erase(it);
  };
  take("vocab_size", c.model.vocab_size);
  take("embed_dim", c.model.embed_dim);
  take("ff_dim", c.model.ff_dim);
  take("heads", c.model.heads);
  take("encoder_layers", c.model.encoder_layers);
  take("decoder_layers", c.model.decoder_layers);
  take("max_len", c.model.max_len);
  take("adapter_dim", c.model.adapter_dim);
  take("batch_size", c.batch_size);
  take("learning_rate", c.learning_rate);
  take("beta1", c.beta1);
  take("beta2", c.beta2);
  take("warmup_steps", c.warmup_steps);
  take("patience", c.patience);
  take("max_epochs", c.max_epochs);
  take("seed", c.seed);
  take("nash_tol", c.nash_tol);
  take("nash_max_iters", c.nash_max_iters);
  take("dev_beam", c.dev_beam);
  if (const auto it = kv.find("ape_reduction"); it != kv.end()) {
    c.ape_reduction = ape_reduction_from_string(it->second);
    kv.erase(it);
  }
  if (!kv.empty())
    throw ConfigError("unknown config key: " + kv.begin()->first);
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  const std::string text = read_file(path);
  // JSON documents are accepted too (they are what training logs embed).
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{')
    return TrainConfig::from_json(nlohmann::json::parse(text));
  TrainConfig c = train_config_from_kv(text);
  c.validate();
  return c;
}

// ---- optimizer -----------------------------------------------------------------

// Adam with bias correction and linear learning-rate warmup. State is kept
// per parameter index; a fresh instance is created at every stage boundary.
template <typename S>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, int warmup_steps)
      : lr_(lr), b1_(beta1), b2_(beta2), warmup_(warmup_steps) {}

  void step(const std::vector<Param<S>*>& params) {
    if (m_.empty()) {
      m_.reserve(params.size());
      v_.reserve(params.size());
      for (const auto* p : params) {
        m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    if (m_.size() != params.size())
      throw ArgumentError("adam: parameter count changed mid-stage");
    ++t_;
    const double sched =
        warmup_ > 0 ? std::min(1.0, static_cast<double>(t_) / warmup_) : 1.0;
    const S lr = static_cast<S>(lr_ * sched);
    const S bc1 = static_cast<S>(1.0 - std::pow(b1_, t_));
    const S bc2 = static_cast<S>(1.0 - std::pow(b2_, t_));
    const S b1 = static_cast<S>(b1_), b2 = static_cast<S>(b2_);
    const S eps = static_cast<S>(1e-8);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<S>& p = *params[i];
      if (!p.trainable) continue;
      m_[i] = b1 * m_[i] + (1 - b1) * p.grad;
      v_[i] = b2 * v_[i] + (1 - b2) * p.grad.cwiseProduct(p.grad);
      p.value.noalias() -=
          lr * (m_[i] / bc1)
                   .cwiseQuotient(((v_[i] / bc2).cwiseSqrt().array() + eps)
                                      .matrix());
    }
  }

  double current_lr() const {
    const double sched =
        warmup_ > 0 ? std::min(1.0, static_cast<double>(t_) / warmup_) : 1.0;
    return lr_ * sched;
  }
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_;
  int warmup_;
  long t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

// ---- training log ----------------------------------------------------------------

// Line-delimited JSON records; kept in memory as well so callers can assert
// on the sequence.
class TrainLogWriter {
 public:
  TrainLogWriter() = default;  // in-memory only
  explicit TrainLogWriter(const std::string& path, bool append = false) {
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot open training log " + path);
  }

  void write(const nlohmann::json& record) {
    records_.push_back(record);
    if (out_.is_open()) {
      out_ << record.dump() << '\n';
      out_.flush();
    }
  }

  const std::vector<nlohmann::json>& records() const { return records_; }

 private:
  std::ofstream out_;
  std::vector<nlohmann::json> records_;
};

// ---- single-stage training -------------------------------------------------------

struct DevSet {
  std::vector<Example> examples;
  // When refs are present the dev criterion is corpus TER over decoded
  // hypotheses; otherwise it is mean per-token dev loss.
  std::vector<Tokens> refs;
};

struct StageResult {
  double best_dev = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs_run = 0;
  bool diverged = false;
};

namespace detail {

// Scatters a flattened shared-parameter vector back into per-parameter
// gradient slots; the ordering must mirror flatten_shared exactly.
template <typename S>
void scatter_shared(ApeModel<S>& model, const Eigen::VectorXd& flat) {
  Eigen::Index at = 0;
  for (auto* p : model.params()) {
    if (!p->trainable || is_task_head_param(p->name)) continue;
    const Eigen::Index n = p->value.size();
    for (Eigen::Index k = 0; k < n; ++k)
      p->grad.data()[k] = static_cast<S>(flat(at + k));
    at += n;
  }
  if (at != flat.size())
    throw ArgumentError("scatter_shared: dimension mismatch");
}

// Turns per-task gradient stores into a single p->grad per parameter
// according to the combination mode. Returns solver diagnostics for the
// nash mode, a default-constructed object otherwise.
template <typename S>
NashDiagnostics apply_gradients(ApeModel<S>& model,
                                const BatchTaskGrads<S>& grads, TrainMode mode,
                                const TrainConfig& cfg) {
  auto params = model.params();
  NashDiagnostics diag;
  switch (mode) {
    case TrainMode::Single:
    case TrainMode::DomainAdapt:
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i]->grad = grads.ape[i];
      break;
    case TrainMode::LsMtl:
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i]->grad = grads.ape[i] + grads.sent[i] + grads.word[i];
      break;
    case TrainMode::NashMtl: {
      // Tasks with no signal this batch (e.g. every DA score masked) are
      // left out of the bargain rather than handed to the solver as zero
      // vectors.
      std::vector<Eigen::VectorXd> task_grads;
      std::vector<int> task_ids;  // 0 ape, 1 sent, 2 word
      const std::array<const std::vector<Mat<S>>*, 3> stores = {
          &grads.ape, &grads.sent, &grads.word};
      for (int t = 0; t < 3; ++t) {
        Eigen::VectorXd g = flatten_shared(model, *stores[t]);
        if (g.size() > 0 && g.norm() > 0) {
          task_grads.push_back(std::move(g));
          task_ids.push_back(t);
        }
      }
      if (task_grads.empty()) {
        for (auto* p : params) p->grad.setZero();
        break;
      }
      const NashResult nash =
          nash_combine(task_grads, cfg.nash_tol, cfg.nash_max_iters);
      diag = nash.diag;
      scatter_shared(model, nash.update);
      // Task heads receive their own task's gradient scaled by that task's
      // bargaining weight, i.e. the head coordinates of sum_i alpha_i g_i.
      // diag.kept maps solver columns back to indices into task_grads.
      std::array<double, 3> alpha = {0.0, 0.0, 0.0};
      for (std::size_t k = 0; k < diag.kept.size(); ++k) {
        const int input = diag.kept[k];
        alpha[static_cast<std::size_t>(task_ids[static_cast<std::size_t>(
            input)])] = diag.weights(static_cast<Eigen::Index>(k));
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!is_task_head_param(params[i]->name)) continue;
        const bool sent = params[i]->name.rfind("sent_head.", 0) == 0;
        const double a = sent ? alpha[1] : alpha[2];
        const auto& store = sent ? grads.sent : grads.word;
        params[i]->grad = static_cast<S>(a) * store[i];
      }
      break;
    }
  }
  return diag;
}

template <typename S>
double dev_loss(const ApeModel<S>& model, const DevSet& dev) {
  double total = 0.0;
  long tokens = 0;
  for (const auto& ex : dev.examples) {
    const Mat<S> logits = model.logits_for(ex);
    const std::vector<bool> mask(ex.tgt_out.size(), true);
    total += ape_loss(logits, ex.tgt_out, mask, ApeReduction::Sum);
    tokens += static_cast<long>(ex.tgt_out.size());
  }
  return tokens > 0 ? total / static_cast<double>(tokens) : 0.0;
}

template <typename S>
double dev_ter(const ApeModel<S>& model, const Vocab& vocab,
               const DevSet& dev, int beam) {
  std::vector<SentenceStats> stats;
  stats.reserve(dev.examples.size());
  for (std::size_t i = 0; i < dev.examples.size(); ++i) {
    const auto hyp =
        vocab.decode(beam_search(model, vocab, dev.examples[i], beam));
    const auto r = ter(hyp, dev.refs[i]);
    stats.push_back({static_cast<double>(r.trace.total_edits()),
                     static_cast<double>(dev.refs[i].size())});
  }
  return 100.0 * corpus_ter_from_stats(stats);
}

}  // namespace detail

// Runs one training stage to early stopping and leaves the best-dev weights
// in the model. Purely a function of (model weights, data, config, stage
// name), which is what makes stage-boundary resume exact.
template <typename S>
StageResult train_stage(ApeModel<S>& model, const std::string& stage_name,
                        TrainMode mode, const std::vector<Example>& train,
                        const DevSet& dev, const Vocab& vocab,
                        const TrainConfig& cfg, TrainLogWriter& log) {
  if (train.empty()) {
    log_warn("stage " + stage_name + ": no training data, skipping");
    return {};
  }
  if (dev.examples.empty())
    throw ArgumentError("train_stage: dev set is empty");
  if (!dev.refs.empty() && dev.refs.size() != dev.examples.size())
    throw ArgumentError("train_stage: dev refs misaligned");

  const std::uint64_t stage_seed = derive_seed(cfg.seed, stage_name);
  Adam<S> opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.warmup_steps);
  auto params = model.params();

  ApeModel<S> best(model);
  StageResult result;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(stage_seed, "epoch-" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    TaskLosses epoch_losses{};
    NashDiagnostics last_diag;
    int nash_fallbacks = 0;
    int steps = 0;
    bool finite = true;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(cfg.batch_size)) {
      Batch batch;
      const std::size_t end = std::min(
          order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t k = at; k < end; ++k)
        batch.examples.push_back(train[order[k]]);
      const auto grads = collect_task_gradients(model, batch, cfg.ape_reduction);
      const double combined =
          grads.losses.ape + grads.losses.sent + grads.losses.word;
      if (!std::isfinite(combined)) {
        finite = false;
        break;
      }
      epoch_losses.ape += grads.losses.ape;
      epoch_losses.sent += grads.losses.sent;
      epoch_losses.word += grads.losses.word;
      const auto diag = detail::apply_gradients(model, grads, mode, cfg);
      if (mode == TrainMode::NashMtl) {
        last_diag = diag;
        if (diag.fallback_uniform) ++nash_fallbacks;
      }
      opt.step(params);
      ++steps;
    }
    if (!finite) {
      log_warn("stage " + stage_name + ": non-finite loss at epoch " +
               std::to_string(epoch) + ", aborting with best weights so far");
      result.diverged = true;
      break;
    }
    result.epochs_run = epoch + 1;

    const bool use_ter = !dev.refs.empty();
    const double dev_value =
        use_ter ? detail::dev_ter(model, vocab, dev, cfg.dev_beam)
                : detail::dev_loss(model, dev);

    nlohmann::json rec{{"event", "epoch"},
                       {"stage", stage_name},
                       {"mode", to_string(mode)},
                       {"epoch", epoch},
                       {"steps", steps},
                       {"lr", opt.current_lr()},
                       {"train_ape", epoch_losses.ape / std::max(steps, 1)},
                       {"train_sent", epoch_losses.sent / std::max(steps, 1)},
                       {"train_word", epoch_losses.word / std::max(steps, 1)},
                       {use_ter ? "dev_ter" : "dev_loss", dev_value}};
    if (mode == TrainMode::NashMtl && last_diag.weights.size() > 0) {
      std::vector<double> alphas(last_diag.weights.data(),
                                 last_diag.weights.data() +
                                     last_diag.weights.size());
      rec["nash"] = {{"alpha", alphas},
                     {"residual", last_diag.residual},
                     {"fixed_point_iterations", last_diag.fixed_point_iterations},
                     {"newton_iterations", last_diag.newton_iterations},
                     {"fallbacks_this_epoch", nash_fallbacks}};
    }
    log.write(rec);

    if (dev_value < result.best_dev) {
      result.best_dev = dev_value;
      result.best_epoch = epoch;
      best = model;
    } else if (epoch - result.best_epoch >= cfg.patience) {
      break;
    }
  }

  model = best;
  return result;
}

// ---- curriculum orchestration ------------------------------------------------

struct CtsInputs {
  Vocab vocab;  // the one joint subword vocabulary shared by every stage
  ParallelCorpus nmt_train;
  ParallelCorpus nmt_dev;
  Corpus synth_train;  // augmentation already merged in by the caller
  Corpus synth_dev;
  Corpus auth_train;
  Corpus auth_dev;
};

struct CtsResult {
  std::string final_checkpoint;
  // domain-adapt: one entry per domain group, ordered by name
  std::map<std::string, std::string> domain_checkpoints;
  double synth_phase_threshold = 0.0;
  std::vector<std::string> stages_run;     // freshly trained this invocation
  std::vector<std::string> stages_reused;  // satisfied by existing checkpoints
};

namespace detail {

inline std::vector<Tokens> post_edit_refs(const Corpus& c) {
  std::vector<Tokens> refs;
  refs.reserve(c.size());
  for (const auto& t : c.triplets) refs.push_back(t.post_edit);
  return refs;
}

inline void require_annotations(const Corpus& c, const char* what) {
  if (!c.has_annotations())
    throw DataError(std::string(what) +
                    " requires QE annotations on the authentic corpus");
}

}  // namespace detail

// Executes the staged curriculum: multilingual translation pretraining, the
// two-phase synthetic split, then authentic fine-tuning in the requested
// mode. Stage boundaries are checkpointed; with resume=true a stage whose
// checkpoint already exists is loaded instead of retrained, so interrupting
// between stages and rerunning reproduces the uninterrupted result exactly.
// stop_after ("nmt", "synthetic-phase1", "synthetic-phase2") halts the run at
// that boundary, simulating an interruption.
inline CtsResult run_cts(const CtsInputs& data, const TrainConfig& cfg,
                         TrainMode mode, const std::string& out_dir,
                         bool resume, TrainLogWriter& log,
                         const std::string& stop_after = "") {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string stage1_path = out_dir + "/stage1.ckpt";
  const std::string stage2a_path = out_dir + "/stage2a.ckpt";
  const std::string stage2b_path = out_dir + "/stage2b.ckpt";
  const std::string final_path = out_dir + "/final.ckpt";

  CtsResult result;
  const Vocab* vocab = &data.vocab;
  if (data.vocab.size() == 0)
    throw ConfigError("run_cts: inputs carry no vocabulary");

  auto stage_done = [&](const std::string& path) {
    return resume && fs::exists(path);
  };
  auto mark = [&](const std::string& stage, bool reused) {
    (reused ? result.stages_reused : result.stages_run).push_back(stage);
  };

  // ---- stage 1: multilingual translation model --------------------------------
  ModelConfig nmt_cfg = cfg.model;
  nmt_cfg.mode = ModelMode::Translation;
  nmt_cfg.qe_heads = false;
  nmt_cfg.adapters = false;
  ApeModel<float> nmt(nmt_cfg, derive_seed(cfg.seed, "stage1-init"));
  if (stage_done(stage1_path)) {
    auto ckpt = load_checkpoint(stage1_path);
    init_from_checkpoint(nmt, ckpt, true);
    mark("nmt", true);
  } else {
    const auto train_ex = make_examples(*vocab, data.nmt_train, cfg.model.max_len);
    DevSet dev;
    dev.examples = make_examples(*vocab, data.nmt_dev, cfg.model.max_len);
    const auto r = train_stage(nmt, "nmt", TrainMode::Single, train_ex, dev,
                               *vocab, cfg, log);
    save_checkpoint(nmt, *vocab, {"nmt", "single", {}}, stage1_path);
    log.write({{"event", "stage-complete"},
               {"stage", "nmt"},
               {"checkpoint", stage1_path},
               {"best_dev", r.best_dev},
               {"best_epoch", r.best_epoch},
               {"epochs_run", r.epochs_run},
               {"diverged", r.diverged}});
    mark("nmt", false);
  }
  if (stop_after == "nmt") return result;

  // ---- stage 2: synthetic two-phase training -----------------------------------
  const double threshold = corpus_do_nothing_ter(data.synth_train);
  result.synth_phase_threshold = threshold;
  const auto [phase1, phase2] = partition_cts_phases(data.synth_train, threshold);

  DevSet synth_dev;
  synth_dev.examples = make_examples(*vocab, data.synth_dev, false, cfg.model.max_len);
  synth_dev.refs = detail::post_edit_refs(data.synth_dev);

  ApeModel<float> ape = ApeModel<float>::add_translation_encoder(
      nmt, derive_seed(cfg.seed, "stage2-init"));

  auto run_phase = [&](const Corpus& phase, const std::string& name,
                       const std::string& path) {
    if (stage_done(path)) {
      auto ckpt = load_checkpoint(path);
      init_from_checkpoint(ape, ckpt, true);
      mark(name, true);
      return;
    }
    if (phase.size() == 0) {
      log_warn("stage " + name + ": empty phase, skipping");
      save_checkpoint(ape, *vocab, {name, "single", {{"skipped", "empty"}}},
                      path);
      log.write({{"event", "stage-complete"},
                 {"stage", name},
                 {"checkpoint", path},
                 {"skipped", true}});
      mark(name, false);
      return;
    }
    const auto train_ex = make_examples(*vocab, phase, false, cfg.model.max_len);
    const auto r = train_stage(ape, name, TrainMode::Single, train_ex,
                               synth_dev, *vocab, cfg, log);
    save_checkpoint(ape, *vocab, {name, "single", {}}, path);
    log.write({{"event", "stage-complete"},
               {"stage", name},
               {"checkpoint", path},
               {"best_dev", r.best_dev},
               {"best_epoch", r.best_epoch},
               {"epochs_run", r.epochs_run},
               {"diverged", r.diverged}});
    mark(name, false);
  };
  run_phase(phase1, "synthetic-phase1", stage2a_path);
  if (stop_after == "synthetic-phase1") return result;
  run_phase(phase2, "synthetic-phase2", stage2b_path);
  if (stop_after == "synthetic-phase2") return result;

  // ---- stage 3: authentic fine-tuning -------------------------------------------
  DevSet auth_dev;
  auth_dev.examples = make_examples(*vocab, data.auth_dev, false, cfg.model.max_len);
  auth_dev.refs = detail::post_edit_refs(data.auth_dev);

  if (mode == TrainMode::DomainAdapt) {
    ape.insert_adapters(cfg.model.adapter_dim,
                        derive_seed(cfg.seed, "adapters-init"));
    ape.freeze_except_adapters();
    const auto train_groups = split_by_domain(data.auth_train);
    const auto dev_groups = split_by_domain(data.auth_dev);
    bool any_trained = false;
    std::vector<std::string> group_names;
    for (const auto& [domain, group] : train_groups) group_names.push_back(domain);
    for (const auto& domain : group_names) {
      const std::string path = out_dir + "/final." + domain + ".ckpt";
      if (stage_done(path)) {
        result.domain_checkpoints[domain] = path;
        mark("finetune." + domain, true);
        continue;
      }
      ApeModel<float> adapted(ape);  // common frozen trunk, fresh adapters each
      DevSet group_dev;
      const auto dit = dev_groups.find(domain);
      const Corpus& dev_corpus =
          dit != dev_groups.end() ? dit->second : data.auth_dev;
      if (dit == dev_groups.end())
        log_warn("domain " + domain + ": no matching dev split, using full dev");
      group_dev.examples =
          make_examples(*vocab, dev_corpus, false, cfg.model.max_len);
      group_dev.refs = detail::post_edit_refs(dev_corpus);
      const auto train_ex = make_examples(*vocab, train_groups.at(domain),
                                          false, cfg.model.max_len);
      const auto r =
          train_stage(adapted, "finetune." + domain, TrainMode::DomainAdapt,
                      train_ex, group_dev, *vocab, cfg, log);
      save_checkpoint(adapted, *vocab,
                      {"finetune", "domain-adapt", {{"domain", domain}}}, path);
      result.domain_checkpoints[domain] = path;
      log.write({{"event", "domain-complete"},
                 {"domain", domain},
                 {"checkpoint", path},
                 {"best_dev", r.best_dev},
                 {"epochs_run", r.epochs_run}});
      mark("finetune." + domain, false);
      any_trained = true;
    }
    log.write({{"event", "stage-complete"},
               {"stage", "finetune"},
               {"mode", "domain-adapt"},
               {"domains", group_names},
               {"reused", !any_trained}});
    return result;
  }

  if (stage_done(final_path)) {
    mark("finetune", true);
    result.final_checkpoint = final_path;
    return result;
  }

  const bool qe = mode == TrainMode::LsMtl || mode == TrainMode::NashMtl;
  if (qe) {
    detail::require_annotations(data.auth_train, to_string(mode).c_str());
    ape.add_qe_heads(derive_seed(cfg.seed, "qe-heads-init"));
  }
  const auto train_ex = make_examples(*vocab, data.auth_train, qe, cfg.model.max_len);
  const auto r = train_stage(ape, "finetune", mode, train_ex, auth_dev, *vocab,
                             cfg, log);
  save_checkpoint(ape, *vocab, {"finetune", to_string(mode), {}}, final_path);
  log.write({{"event", "stage-complete"},
             {"stage", "finetune"},
             {"checkpoint", final_path},
             {"mode", to_string(mode)},
             {"best_dev", r.best_dev},
             {"best_epoch", r.best_epoch},
             {"epochs_run", r.epochs_run},
             {"diverged", r.diverged}});
  mark("finetune", false);
  result.final_checkpoint = final_path;
  return result;
}

// Fine-tunes a donor checkpoint (typically the other language pair's
// synthetic-stage model) on this pair's authentic data.
inline CtsResult transfer_finetune(const std::string& donor_ckpt,
                                   const Corpus& auth_train,
                                   const Corpus& auth_dev,
                                   const TrainConfig& cfg, TrainMode mode,
                                   const std::string& out_dir,
                                   TrainLogWriter& log) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  auto ckpt = load_checkpoint(donor_ckpt);
  ApeModel<float> model(ckpt.model);

  DevSet dev;
  dev.examples = make_examples(ckpt.vocab, auth_dev, false, ckpt.config.max_len);
  dev.refs = detail::post_edit_refs(auth_dev);

  const bool qe = mode == TrainMode::LsMtl || mode == TrainMode::NashMtl;
  if (qe) {
    detail::require_annotations(auth_train, to_string(mode).c_str());
    model.add_qe_heads(derive_seed(cfg.seed, "qe-heads-init"));
  }
  const auto train_ex =
      make_examples(ckpt.vocab, auth_train, qe, ckpt.config.max_len);
  const auto r = train_stage(model, "finetune", mode, train_ex, dev,
                             ckpt.vocab, cfg, log);
  const std::string final_path = out_dir + "/final.ckpt";
  save_checkpoint(model, ckpt.vocab,
                  {"finetune", to_string(mode), {{"donor", donor_ckpt}}},
                  final_path);
  log.write({{"event", "stage-complete"},
             {"stage", "finetune"},
             {"checkpoint", final_path},
             {"donor", donor_ckpt},
             {"best_dev", r.best_dev},
             {"epochs_run", r.epochs_run}});
  CtsResult result;
  result.final_checkpoint = final_path;
  result.stages_run.push_back("finetune");
  return result;
}

}  // namespace mape
