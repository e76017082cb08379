#pragma once

#include "mape/model.hpp"

namespace mape {

struct TaskLosses {
  double ape = 0.0;
  double sent = 0.0;
  double word = 0.0;
};

// Linear-scalarization baseline: plain unweighted sum.
inline double ls_combine(const TaskLosses& losses) {
  return losses.ape + losses.sent + losses.word;
}

enum class ApeReduction : std::uint8_t { Sum, MeanPerToken };

inline std::string to_string(ApeReduction r) {
  return r == ApeReduction::Sum ? "sum" : "mean-per-token";
}
inline ApeReduction ape_reduction_from_string(const std::string& s) {
  if (s == "sum") return ApeReduction::Sum;
  if (s == "mean-per-token") return ApeReduction::MeanPerToken;
  throw ConfigError("unknown reduction: " + s);
}

// ---------------------------------------------------------------------------
// Value-level losses over plain matrices. These are the reference semantics;
// the training path builds the same quantities on the tape.

// Cross-entropy of target tokens under the logits (classes in rows, one
// position per column). Masked positions contribute nothing. Sum convention
// by default; the per-token mean is an opt-in recorded by the caller.
template <typename S>
double ape_loss(const Mat<S>& logits, const std::vector<int>& targets,
                const std::vector<bool>& mask,
                ApeReduction reduction = ApeReduction::Sum) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.cols() ||
      mask.size() != targets.size())
    throw ArgumentError("ape_loss: column/target/mask size mismatch");
  double total = 0.0;
  long long count = 0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    if (!mask[static_cast<std::size_t>(c)]) continue;
    const int tgt = targets[static_cast<std::size_t>(c)];
    if (tgt < 0 || tgt >= logits.rows())
      throw ArgumentError("ape_loss: target id out of range");
    const double mx = static_cast<double>(logits.col(c).maxCoeff());
    double lse = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r)
      lse += std::exp(static_cast<double>(logits(r, c)) - mx);
    total += std::log(lse) + mx - static_cast<double>(logits(tgt, c));
    ++count;
  }
  if (reduction == ApeReduction::MeanPerToken && count > 0)
    total /= static_cast<double>(count);
  return total;
}

// Mean squared error over the instances whose score is available. With no
// available instance the loss is exactly zero, and because unavailable
// instances are skipped outright they can contribute no gradient either.
inline double sent_qe_loss(const std::vector<double>& predictions,
                           const std::vector<std::optional<double>>& targets) {
  if (predictions.size() != targets.size())
    throw ArgumentError("sent_qe_loss: size mismatch");
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!targets[i].has_value()) continue;
    const double d = predictions[i] - *targets[i];
    total += d * d;
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

// Token-level binary cross-entropy (OK/BAD in rows), averaged over the
// unmasked tokens.
template <typename S>
double word_qe_loss(const Mat<S>& logits, const std::vector<int>& labels,
                    const std::vector<bool>& mask) {
  if (logits.rows() != 2)
    throw ArgumentError("word_qe_loss: expected two classes");
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols() ||
      mask.size() != labels.size())
    throw ArgumentError("word_qe_loss: size mismatch");
  double total = 0.0;
  long long count = 0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    if (!mask[static_cast<std::size_t>(c)]) continue;
    const int tgt = labels[static_cast<std::size_t>(c)];
    if (tgt != 0 && tgt != 1)
      throw ArgumentError("word_qe_loss: labels must be 0 or 1");
    const double mx = static_cast<double>(logits.col(c).maxCoeff());
    const double lse =
        std::exp(static_cast<double>(logits(0, c)) - mx) +
        std::exp(static_cast<double>(logits(1, c)) - mx);
    total += std::log(lse) + mx - static_cast<double>(logits(tgt, c));
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Batch gradients, one backward pass per task over shared forward graphs.

inline bool is_task_head_param(const std::string& name) {
  return name.rfind("sent_head.", 0) == 0 || name.rfind("word_head.", 0) == 0;
}

template <typename S>
struct BatchTaskGrads {
  TaskLosses losses;
  // Per-task gradient matrices aligned with model.params() order.
  std::vector<Mat<S>> ape, sent, word;
  long long ape_tokens = 0;
  int sent_instances = 0;
  long long word_tokens = 0;
};

// Runs per-sentence forwards, then one backward per task, accumulating into
// separate per-task stores. Instances lacking a score or tags are skipped
// entirely in the corresponding task, so the corresponding head parameters
// receive bitwise-zero gradient when a whole batch lacks annotations.
template <typename S>
BatchTaskGrads<S> collect_task_gradients(ApeModel<S>& model, const Batch& batch,
                                         ApeReduction eq1) {
  auto params = model.params();
  std::map<const Param<S>*, std::size_t> index;
  for (std::size_t i = 0; i < params.size(); ++i) index.emplace(params[i], i);

  BatchTaskGrads<S> out;
  auto zeros_like = [&] {
    std::vector<Mat<S>> v;
    v.reserve(params.size());
    for (const auto* p : params)
      v.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    return v;
  };
  out.ape = zeros_like();
  out.sent = zeros_like();
  out.word = zeros_like();

  for (const auto& ex : batch.examples) {
    out.ape_tokens += static_cast<long long>(ex.tgt_out.size());
    if (ex.da.has_value()) ++out.sent_instances;
    out.word_tokens += static_cast<long long>(ex.word_labels.size());
  }
  const S ape_seed =
      eq1 == ApeReduction::Sum || out.ape_tokens == 0
          ? S(1)
          : S(1) / static_cast<S>(out.ape_tokens);
  const S sent_seed =
      out.sent_instances == 0 ? S(1) : S(1) / static_cast<S>(out.sent_instances);
  const S word_seed =
      out.word_tokens == 0 ? S(1) : S(1) / static_cast<S>(out.word_tokens);

  Tape<S> tape;
  for (const auto& ex : batch.examples) {
    tape.reset();
    const auto fwd = model.forward(tape, ex);

    struct TaskRoot {
      int node;
      S seed;
      std::vector<Mat<S>>* store;
      double* loss;
    };
    std::vector<TaskRoot> roots;

    if (fwd.logits >= 0 && !ex.tgt_out.empty()) {
      const std::vector<bool> active(ex.tgt_out.size(), true);
      const int node = tape.cross_entropy_cols(fwd.logits, ex.tgt_out, active);
      roots.push_back({node, ape_seed, &out.ape, &out.losses.ape});
    }
    if (fwd.sent_pred >= 0 && ex.da.has_value()) {
      const int node =
          tape.squared_error(fwd.sent_pred, static_cast<S>(*ex.da));
      roots.push_back({node, sent_seed, &out.sent, &out.losses.sent});
    }
    if (fwd.word_logits >= 0 && !ex.word_labels.empty()) {
      const std::vector<bool> active(ex.word_labels.size(), true);
      const int node =
          tape.cross_entropy_cols(fwd.word_logits, ex.word_labels, active);
      roots.push_back({node, word_seed, &out.word, &out.losses.word});
    }

    for (const auto& root : roots) {
      *root.loss +=
          static_cast<double>(tape.value(root.node)(0, 0) * root.seed);
      tape.zero_node_grads();
      tape.backward(root.node, root.seed);
      tape.visit_param_grads([&](Param<S>& p, const Mat<S>& g) {
        (*root.store)[index.at(&p)] += g;
      });
    }
  }
  return out;
}

// Flattens one task's gradient over the shared trainable parameter set
// (task-specific heads excluded) in canonical parameter order.
template <typename S>
Eigen::VectorXd flatten_shared(ApeModel<S>& model,
                               const std::vector<Mat<S>>& store) {
  auto params = model.params();
  if (params.size() != store.size())
    throw ArgumentError("flatten_shared: store does not match model layout");
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->trainable && !is_task_head_param(params[i]->name))
      total += params[i]->value.size();
  Eigen::VectorXd out(total);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable || is_task_head_param(params[i]->name)) continue;
    const auto& g = store[i];
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        out(at++) = static_cast<double>(g(r, c));
  }
  return out;
}

}  // namespace mape
