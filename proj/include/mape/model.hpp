#pragma once

#include <memory>

#include "mape/autograd.hpp"
#include "mape/vocab.hpp"

namespace mape {

enum class ModelMode : std::uint8_t { Translation, PostEditing };

inline std::string to_string(ModelMode m) {
  return m == ModelMode::Translation ? "translation" : "post-editing";
}
inline ModelMode model_mode_from_string(const std::string& s) {
  if (s == "translation") return ModelMode::Translation;
  if (s == "post-editing") return ModelMode::PostEditing;
  throw ConfigError("unknown model mode: " + s);
}

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 32;
  int ff_dim = 64;
  int heads = 2;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int max_len = 96;
  int adapter_dim = 16;
  ModelMode mode = ModelMode::Translation;
  bool qe_heads = false;
  bool adapters = false;

  void validate() const {
    if (vocab_size <= 0) throw ConfigError("model: vocab_size must be positive");
    if (embed_dim <= 0 || ff_dim <= 0 || max_len <= 0)
      throw ConfigError("model: dimensions must be positive");
    if (heads <= 0 || embed_dim % heads != 0)
      throw ConfigError("model: embed_dim must divide evenly into heads");
    if (encoder_layers <= 0 || decoder_layers <= 0)
      throw ConfigError("model: need at least one layer per stack");
    if (adapters && adapter_dim <= 0)
      throw ConfigError("model: adapter_dim must be positive");
  }

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size},   {"embed_dim", embed_dim},
            {"ff_dim", ff_dim},           {"heads", heads},
            {"encoder_layers", encoder_layers},
            {"decoder_layers", decoder_layers},
            {"max_len", max_len},         {"adapter_dim", adapter_dim},
            {"mode", to_string(mode)},    {"qe_heads", qe_heads},
            {"adapters", adapters}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size");
    c.embed_dim = j.at("embed_dim");
    c.ff_dim = j.at("ff_dim");
    c.heads = j.at("heads");
    c.encoder_layers = j.at("encoder_layers");
    c.decoder_layers = j.at("decoder_layers");
    c.max_len = j.at("max_len");
    c.adapter_dim = j.at("adapter_dim");
    c.mode = model_mode_from_string(j.at("mode"));
    c.qe_heads = j.at("qe_heads");
    c.adapters = j.at("adapters");
    // vocab_size 0 defers to the corpus; construction still rejects it.
    ModelConfig checked = c;
    if (checked.vocab_size == 0) checked.vocab_size = 1;
    checked.validate();
    return c;
  }
};

// One training instance, already subword-encoded. Language-id tokens are
// part of src_ids; tgt_in/tgt_out are the shifted decoder streams.
struct Example {
  std::vector<int> src_ids;
  std::vector<int> trans_ids;
  std::vector<int> trans_word_starts;  // first-piece index per source word
  std::vector<int> tgt_in;
  std::vector<int> tgt_out;
  std::optional<double> da;
  std::vector<int> word_labels;  // 0 = OK, 1 = BAD; one per translation word
};

struct Batch {
  std::vector<Example> examples;
  std::size_t size() const { return examples.size(); }
};

template <typename S>
class ApeModel {
 public:
  using P = Param<S>;

  struct Attn {
    P *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
  };
  struct Ln {
    P *gain, *bias;
  };
  struct Ffn {
    P *w1, *b1, *w2, *b2;
  };
  struct Adapter {
    P *down_w, *down_b, *up_w, *up_b;
  };
  struct EncLayer {
    Attn attn;
    Ln ln1;
    Ffn ffn;
    Ln ln2;
  };
  struct DecLayer {
    Attn self_attn;
    Ln ln1;
    Attn cross_attn;
    Ln ln2;
    Ffn ffn;
    Ln ln3;
    std::optional<Adapter> adapter;
  };

  ApeModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "model-init"));
    build(rng);
  }

  ApeModel(const ApeModel& o) : cfg_(o.cfg_) { copy_from(o); }
  ApeModel& operator=(const ApeModel& o) {
    if (this != &o) {
      cfg_ = o.cfg_;
      copy_from(o);
    }
    return *this;
  }
  ApeModel(ApeModel&&) = default;
  ApeModel& operator=(ApeModel&&) = default;

  const ModelConfig& config() const { return cfg_; }

  std::vector<P*> params() {
    std::vector<P*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(p.get());
    return out;
  }
  std::vector<const P*> params() const {
    std::vector<const P*> out;
    out.reserve(store_.size());
    for (const auto& p : store_) out.push_back(p.get());
    return out;
  }

  P* find(const std::string& name) {
    for (auto& p : store_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const P* find(const std::string& name) const {
    for (const auto& p : store_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  void zero_grads() {
    for (auto& p : store_) p->zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : store_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  // ---- structure edits ------------------------------------------------------

  // Grows a translation model into a dual-encoder post-editing model: the
  // trained source encoder, decoder, embeddings and output layer carry over;
  // the new translation encoder starts as a copy of the source encoder; the
  // fusion layer over the concatenated encoder states is fresh.
  static ApeModel add_translation_encoder(const ApeModel& nmt,
                                          std::uint64_t seed) {
    if (nmt.cfg_.mode != ModelMode::Translation)
      throw ArgumentError(
          "add_translation_encoder: input is already a post-editing model");
    ModelConfig cfg = nmt.cfg_;
    cfg.mode = ModelMode::PostEditing;
    ApeModel out(cfg, seed);
    for (auto& p : out.store_) {
      std::string src_name = p->name;
      if (src_name.rfind("fusion.", 0) == 0) continue;  // stays fresh
      const bool from_src_enc = src_name.rfind("trans_enc.", 0) == 0;
      if (from_src_enc) src_name = "src_enc." + src_name.substr(10);
      const P* donor = nullptr;
      for (const auto& q : nmt.store_)
        if (q->name == src_name) {
          donor = q.get();
          break;
        }
      if (donor) p->value = donor->value;
    }
    return out;
  }

  // Adds the two quality-estimation heads over the fused representation.
  void add_qe_heads(std::uint64_t seed) {
    if (cfg_.mode != ModelMode::PostEditing)
      throw ArgumentError("add_qe_heads: requires a post-editing model");
    if (cfg_.qe_heads) throw ArgumentError("add_qe_heads: heads already present");
    Rng rng(derive_seed(seed, "qe-heads"));
    const int d = cfg_.embed_dim;
    sent_head_w_ = linear(rng, "sent_head.w", 1, d);
    sent_head_b_ = zeros("sent_head.b", 1, 1);
    word_head_w_ = linear(rng, "word_head.w", 2, d);
    word_head_b_ = zeros("word_head.b", 2, 1);
    cfg_.qe_heads = true;
  }

  // Inserts a bottleneck adapter after each decoder block. The up-projection
  // and its bias start at zero, so freshly inserted adapters change no
  // logits.
  void insert_adapters(int adapter_dim, std::uint64_t seed) {
    if (cfg_.adapters) throw ArgumentError("insert_adapters: already present");
    if (adapter_dim <= 0) throw ArgumentError("insert_adapters: bad width");
    Rng rng(derive_seed(seed, "adapters"));
    cfg_.adapter_dim = adapter_dim;
    const int d = cfg_.embed_dim;
    for (std::size_t l = 0; l < dec_.size(); ++l) {
      const std::string base = "dec." + std::to_string(l) + ".adapter.";
      Adapter a;
      a.down_w = linear(rng, base + "down.w", adapter_dim, d);
      a.down_b = zeros(base + "down.b", adapter_dim, 1);
      a.up_w = zeros(base + "up.w", d, adapter_dim);
      a.up_b = zeros(base + "up.b", d, 1);
      dec_[l].adapter = a;
    }
    cfg_.adapters = true;
  }

  bool is_adapter_param(const P& p) const {
    return p.name.find(".adapter.") != std::string::npos;
  }

  void freeze_except_adapters() {
    if (!cfg_.adapters)
      throw ArgumentError("freeze_except_adapters: no adapters present");
    for (auto& p : store_) p->trainable = is_adapter_param(*p);
  }

  void unfreeze_all() {
    for (auto& p : store_) p->trainable = true;
  }

  // ---- forward ----------------------------------------------------------------

  struct Forward {
    int logits = -1;       // vocab x target-length
    int memory = -1;       // encoder output the decoder attends to
    int fused = -1;        // shared representation (post-editing mode)
    int sent_pred = -1;    // 1x1 regression output, -1 if absent
    int word_logits = -1;  // 2 x word-count, -1 if absent
  };

  // Builds the full training graph for one instance on the given tape.
  Forward forward(Tape<S>& tape, const Example& ex) const {
    Forward out;
    int memory;
    int src_len = static_cast<int>(ex.src_ids.size());
    if (cfg_.mode == ModelMode::Translation) {
      memory = encode(tape, ex.src_ids, src_enc_);
    } else {
      if (ex.trans_ids.empty())
        throw ArgumentError("forward: post-editing input lacks a translation");
      const int s = encode(tape, ex.src_ids, src_enc_);
      const int t = encode(tape, ex.trans_ids, trans_enc_);
      const int cat = tape.concat_cols({s, t});
      memory = encoder_layer(tape, cat, fusion_);
      out.fused = memory;
      if (cfg_.qe_heads) {
        const int pool = tape.mean_cols(memory);
        const int sw = tape.leaf(*sent_head_w_);
        out.sent_pred =
            tape.add(tape.matmul(sw, pool), tape.leaf(*sent_head_b_));
        if (!ex.trans_word_starts.empty()) {
          std::vector<int> cols;
          cols.reserve(ex.trans_word_starts.size());
          for (const int w : ex.trans_word_starts) cols.push_back(src_len + w);
          const int picked = tape.gather_cols(memory, cols);
          out.word_logits = tape.add_colvec(
              tape.matmul(tape.leaf(*word_head_w_), picked),
              tape.leaf(*word_head_b_));
        }
      }
    }
    out.memory = memory;
    if (ex.tgt_in.empty()) return out;
    out.logits = run_decoder(tape, memory, ex.tgt_in);
    return out;
  }

  // Value-only logits for one instance (no gradients kept).
  Mat<S> logits_for(const Example& ex) const {
    Tape<S> tape;
    const auto f = forward(tape, ex);
    if (f.logits < 0) throw ArgumentError("logits_for: no target stream");
    return tape.value(f.logits);
  }

  // Value-only encoder pass, for incremental decoding: the memory is fixed
  // per sentence while the target prefix grows.
  Mat<S> encode_memory(const Example& ex) const {
    Tape<S> tape;
    Example stripped = ex;
    stripped.tgt_in.clear();
    stripped.tgt_out.clear();
    const auto f = forward(tape, stripped);
    return tape.value(f.memory);
  }

  // Value-only decoder logits for a target prefix against a precomputed
  // memory. Returns vocab x |prefix|; callers typically read the last column.
  Mat<S> prefix_logits(const Mat<S>& memory,
                       const std::vector<int>& tgt_in) const {
    Tape<S> tape;
    const int logits = run_decoder(tape, tape.constant(memory), tgt_in);
    return tape.value(logits);
  }

  // ---- internals --------------------------------------------------------------

  const std::vector<std::unique_ptr<P>>& store() const { return store_; }

 private:
  void build(Rng& rng) {
    store_.clear();
    const int d = cfg_.embed_dim;
    embed_tokens_ = normal(rng, "embed.tokens", d, cfg_.vocab_size);
    embed_pos_ = normal(rng, "embed.positions", d, cfg_.max_len);
    src_enc_.clear();
    for (int l = 0; l < cfg_.encoder_layers; ++l)
      src_enc_.push_back(make_enc_layer(rng, "src_enc." + std::to_string(l)));
    if (cfg_.mode == ModelMode::PostEditing) {
      trans_enc_.clear();
      for (int l = 0; l < cfg_.encoder_layers; ++l)
        trans_enc_.push_back(
            make_enc_layer(rng, "trans_enc." + std::to_string(l)));
      fusion_ = make_enc_layer(rng, "fusion");
    }
    dec_.clear();
    for (int l = 0; l < cfg_.decoder_layers; ++l)
      dec_.push_back(make_dec_layer(rng, "dec." + std::to_string(l)));
    out_w_ = linear(rng, "out.w", cfg_.vocab_size, d);
    out_b_ = zeros("out.b", cfg_.vocab_size, 1);
    if (cfg_.qe_heads) {
      cfg_.qe_heads = false;  // re-set by add_qe_heads
      add_qe_heads(rng.next_u64());
    }
    if (cfg_.adapters) {
      cfg_.adapters = false;
      insert_adapters(cfg_.adapter_dim, rng.next_u64());
    }
  }

  void copy_from(const ApeModel& o) {
    Rng dummy(0);
    build(dummy);
    if (store_.size() != o.store_.size())
      throw ArgumentError("model copy: layout mismatch");
    for (std::size_t i = 0; i < store_.size(); ++i) {
      store_[i]->value = o.store_[i]->value;
      store_[i]->grad = o.store_[i]->grad;
      store_[i]->trainable = o.store_[i]->trainable;
    }
  }

  P* add_param(std::string name, Mat<S> value) {
    store_.push_back(std::make_unique<P>(std::move(name), std::move(value)));
    return store_.back().get();
  }

  P* linear(Rng& rng, std::string name, int rows, int cols) {
    const double bound = std::sqrt(6.0 / (rows + cols));
    Mat<S> m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r)
        m(r, c) = static_cast<S>(rng.uniform(-bound, bound));
    return add_param(std::move(name), std::move(m));
  }

  P* normal(Rng& rng, std::string name, int rows, int cols) {
    Mat<S> m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r)
        m(r, c) = static_cast<S>(0.05 * rng.normal());
    return add_param(std::move(name), std::move(m));
  }

  P* zeros(std::string name, int rows, int cols) {
    return add_param(std::move(name), Mat<S>::Zero(rows, cols));
  }

  P* ones(std::string name, int rows, int cols) {
    return add_param(std::move(name), Mat<S>::Ones(rows, cols));
  }

  Attn make_attn(Rng& rng, const std::string& base) {
    const int d = cfg_.embed_dim;
    Attn a;
    a.wq = linear(rng, base + ".wq", d, d);
    a.bq = zeros(base + ".bq", d, 1);
    a.wk = linear(rng, base + ".wk", d, d);
    a.bk = zeros(base + ".bk", d, 1);
    a.wv = linear(rng, base + ".wv", d, d);
    a.bv = zeros(base + ".bv", d, 1);
    a.wo = linear(rng, base + ".wo", d, d);
    a.bo = zeros(base + ".bo", d, 1);
    return a;
  }

  Ln make_ln(Rng&, const std::string& base) {
    Ln ln;
    ln.gain = ones(base + ".gain", cfg_.embed_dim, 1);
    ln.bias = zeros(base + ".bias", cfg_.embed_dim, 1);
    return ln;
  }

  Ffn make_ffn(Rng& rng, const std::string& base) {
    Ffn f;
    f.w1 = linear(rng, base + ".w1", cfg_.ff_dim, cfg_.embed_dim);
    f.b1 = zeros(base + ".b1", cfg_.ff_dim, 1);
    f.w2 = linear(rng, base + ".w2", cfg_.embed_dim, cfg_.ff_dim);
    f.b2 = zeros(base + ".b2", cfg_.embed_dim, 1);
    return f;
  }

  EncLayer make_enc_layer(Rng& rng, const std::string& base) {
    EncLayer e;
    e.attn = make_attn(rng, base + ".attn");
    e.ln1 = make_ln(rng, base + ".ln1");
    e.ffn = make_ffn(rng, base + ".ffn");
    e.ln2 = make_ln(rng, base + ".ln2");
    return e;
  }

  DecLayer make_dec_layer(Rng& rng, const std::string& base) {
    DecLayer d;
    d.self_attn = make_attn(rng, base + ".self");
    d.ln1 = make_ln(rng, base + ".ln1");
    d.cross_attn = make_attn(rng, base + ".cross");
    d.ln2 = make_ln(rng, base + ".ln2");
    d.ffn = make_ffn(rng, base + ".ffn");
    d.ln3 = make_ln(rng, base + ".ln3");
    return d;
  }

  int embed(Tape<S>& tape, const std::vector<int>& ids) const {
    if (ids.empty()) throw ArgumentError("embed: empty sequence");
    if (static_cast<int>(ids.size()) > cfg_.max_len)
      throw ArgumentError("embed: sequence longer than max_len");
    const int tok = tape.embedding(tape.leaf(*embed_tokens_), ids);
    const int pos = tape.slice_cols(tape.leaf(*embed_pos_), 0,
                                    static_cast<Eigen::Index>(ids.size()));
    return tape.add(tok, pos);
  }

  int attention(Tape<S>& tape, int x_q, int x_kv, const Attn& p,
                bool causal) const {
    const int d = cfg_.embed_dim;
    const int dh = d / cfg_.heads;
    const int q = tape.add_colvec(tape.matmul(tape.leaf(*p.wq), x_q),
                                  tape.leaf(*p.bq));
    const int k = tape.add_colvec(tape.matmul(tape.leaf(*p.wk), x_kv),
                                  tape.leaf(*p.bk));
    const int v = tape.add_colvec(tape.matmul(tape.leaf(*p.wv), x_kv),
                                  tape.leaf(*p.bv));
    const auto lq = tape.value(q).cols();
    const auto lk = tape.value(k).cols();

    int mask = -1;
    if (causal) {
      // scores matrix is keys x queries; forbid keys later than the query.
      Mat<S> m = Mat<S>::Zero(lk, lq);
      for (Eigen::Index kk = 0; kk < lk; ++kk)
        for (Eigen::Index qq = 0; qq < lq; ++qq)
          if (kk > qq) m(kk, qq) = static_cast<S>(-1e9);
      mask = tape.constant(std::move(m));
    }

    std::vector<int> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
      const int qh = tape.slice_rows(q, h * dh, dh);
      const int kh = tape.slice_rows(k, h * dh, dh);
      const int vh = tape.slice_rows(v, h * dh, dh);
      int scores = tape.scale(tape.matmul(tape.transpose(kh), qh),
                              static_cast<S>(1.0 / std::sqrt(double(dh))));
      if (mask >= 0) scores = tape.add(scores, mask);
      const int weights = tape.softmax_cols(scores);
      heads.push_back(tape.matmul(vh, weights));
    }
    const int ctx = cfg_.heads == 1 ? heads[0] : tape.concat_rows(heads);
    return tape.add_colvec(tape.matmul(tape.leaf(*p.wo), ctx),
                           tape.leaf(*p.bo));
  }

  int ffn(Tape<S>& tape, int x, const Ffn& f) const {
    const int h = tape.relu(tape.add_colvec(
        tape.matmul(tape.leaf(*f.w1), x), tape.leaf(*f.b1)));
    return tape.add_colvec(tape.matmul(tape.leaf(*f.w2), h),
                           tape.leaf(*f.b2));
  }

  int encoder_layer(Tape<S>& tape, int x, const EncLayer& layer) const {
    const int a = attention(tape, x, x, layer.attn, false);
    x = tape.layer_norm(tape.add(x, a), tape.leaf(*layer.ln1.gain),
                        tape.leaf(*layer.ln1.bias));
    const int f = ffn(tape, x, layer.ffn);
    return tape.layer_norm(tape.add(x, f), tape.leaf(*layer.ln2.gain),
                           tape.leaf(*layer.ln2.bias));
  }

  int encode(Tape<S>& tape, const std::vector<int>& ids,
             const std::vector<EncLayer>& stack) const {
    int x = embed(tape, ids);
    for (const auto& layer : stack) x = encoder_layer(tape, x, layer);
    return x;
  }

  int run_decoder(Tape<S>& tape, int memory,
                  const std::vector<int>& tgt_in) const {
    int y = embed(tape, tgt_in);
    for (const auto& layer : dec_) {
      const int sa = attention(tape, y, y, layer.self_attn, true);
      y = tape.layer_norm(tape.add(y, sa), tape.leaf(*layer.ln1.gain),
                          tape.leaf(*layer.ln1.bias));
      const int ca = attention(tape, y, memory, layer.cross_attn, false);
      y = tape.layer_norm(tape.add(y, ca), tape.leaf(*layer.ln2.gain),
                          tape.leaf(*layer.ln2.bias));
      const int ff = ffn(tape, y, layer.ffn);
      y = tape.layer_norm(tape.add(y, ff), tape.leaf(*layer.ln3.gain),
                          tape.leaf(*layer.ln3.bias));
      if (layer.adapter) {
        const auto& a = *layer.adapter;
        const int hidden = tape.relu(tape.add_colvec(
            tape.matmul(tape.leaf(*a.down_w), y), tape.leaf(*a.down_b)));
        const int up = tape.add_colvec(
            tape.matmul(tape.leaf(*a.up_w), hidden), tape.leaf(*a.up_b));
        y = tape.add(y, up);
      }
    }
    return tape.add_colvec(tape.matmul(tape.leaf(*out_w_), y),
                           tape.leaf(*out_b_));
  }

  ModelConfig cfg_;
  std::vector<std::unique_ptr<P>> store_;

  P* embed_tokens_ = nullptr;
  P* embed_pos_ = nullptr;
  std::vector<EncLayer> src_enc_;
  std::vector<EncLayer> trans_enc_;
  EncLayer fusion_{};
  std::vector<DecLayer> dec_;
  P* out_w_ = nullptr;
  P* out_b_ = nullptr;
  P* sent_head_w_ = nullptr;
  P* sent_head_b_ = nullptr;
  P* word_head_w_ = nullptr;
  P* word_head_b_ = nullptr;
};

// Per-sentence value-only logits for a batch (translation mode).
template <typename S>
std::vector<Mat<S>> forward_nmt(const ApeModel<S>& model, const Batch& batch) {
  if (model.config().mode != ModelMode::Translation)
    throw ArgumentError("forward_nmt: model is not in translation mode");
  std::vector<Mat<S>> out;
  out.reserve(batch.size());
  for (const auto& ex : batch.examples) out.push_back(model.logits_for(ex));
  return out;
}

template <typename S>
std::vector<Mat<S>> forward_ape(const ApeModel<S>& model, const Batch& batch) {
  if (model.config().mode != ModelMode::PostEditing)
    throw ArgumentError("forward_ape: model is not in post-editing mode");
  std::vector<Mat<S>> out;
  out.reserve(batch.size());
  for (const auto& ex : batch.examples) out.push_back(model.logits_for(ex));
  return out;
}

}  // namespace mape
