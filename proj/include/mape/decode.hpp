#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mape/corpus.hpp"
#include "mape/metrics.hpp"
#include "mape/model.hpp"
#include "mape/vocab.hpp"

namespace mape {

// ---- example construction ------------------------------------------------------

// Encodes one triplet into model inputs. The target stream is included only
// for training/scoring; decoding starts from scratch.
inline Example make_example(const Vocab& vocab, const ApeTriplet& t,
                            const QeAnnotation* ann, bool include_target,
                            int max_len) {
  Example ex;
  ex.src_ids = vocab.encode(t.source);
  const auto enc = vocab.encode_with_word_starts(t.translation);
  ex.trans_ids = enc.ids;
  ex.trans_word_starts = enc.word_starts;
  if (include_target) {
    const auto pe = vocab.encode(t.post_edit);
    ex.tgt_in.reserve(pe.size() + 1);
    ex.tgt_in.push_back(vocab.bos_id());
    ex.tgt_in.insert(ex.tgt_in.end(), pe.begin(), pe.end());
    ex.tgt_out = pe;
    ex.tgt_out.push_back(vocab.eos_id());
  }
  if (ann) {
    ex.da = ann->da_score;
    if (!ann->word_tags.empty()) {
      if (ann->word_tags.size() != t.translation.size())
        throw DataError("make_example: word tag count mismatch");
      ex.word_labels.reserve(ann->word_tags.size());
      for (const WordTag tag : ann->word_tags)
        ex.word_labels.push_back(tag == WordTag::Bad ? 1 : 0);
    }
  }
  const auto longest = std::max({ex.src_ids.size(), ex.trans_ids.size(),
                                 ex.tgt_in.size()});
  if (longest > static_cast<std::size_t>(max_len))
    throw DataError("make_example: sequence of " + std::to_string(longest) +
                    " pieces exceeds max_len " + std::to_string(max_len));
  return ex;
}

inline std::vector<Example> make_examples(const Vocab& vocab, const Corpus& c,
                                          bool include_qe, int max_len) {
  std::vector<Example> out;
  out.reserve(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const QeAnnotation* ann =
        (include_qe && c.has_annotations()) ? &c.annotations[i] : nullptr;
    out.push_back(make_example(vocab, c.triplets[i], ann, true, max_len));
  }
  return out;
}

inline std::vector<Example> make_examples(const Vocab& vocab,
                                          const ParallelCorpus& c,
                                          int max_len) {
  std::vector<Example> out;
  out.reserve(c.size());
  for (const auto& item : c.items) {
    Example ex;
    ex.src_ids = vocab.encode(item.source);
    const auto tgt = vocab.encode(item.target);
    ex.tgt_in.reserve(tgt.size() + 1);
    ex.tgt_in.push_back(vocab.bos_id());
    ex.tgt_in.insert(ex.tgt_in.end(), tgt.begin(), tgt.end());
    ex.tgt_out = tgt;
    ex.tgt_out.push_back(vocab.eos_id());
    const auto longest = std::max(ex.src_ids.size(), ex.tgt_in.size());
    if (longest > static_cast<std::size_t>(max_len))
      throw DataError("make_examples: sequence exceeds max_len");
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- beam search ---------------------------------------------------------------

// Length-normalized beam search. Candidates are ranked by cumulative
// log-probability divided by emitted-token count raised to length_exponent;
// with beam 1 this reduces to greedy argmax because the normalizer is shared
// by all continuations of the single live prefix. Ties break toward the
// smaller token id, then the earlier parent, making results deterministic.
template <typename S>
std::vector<int> beam_search(const ApeModel<S>& model, const Vocab& vocab,
                             const Example& ex, int beam = 5, int max_len = 0,
                             double length_exponent = 1.0) {
  if (beam < 1) throw ArgumentError("beam_search: beam must be >= 1");
  const int cap = max_len > 0 ? std::min(max_len, model.config().max_len)
                              : model.config().max_len;
  const Mat<S> memory = model.encode_memory(ex);

  struct Hyp {
    std::vector<int> ids;  // starts with bos; eos never appended
    double logprob = 0.0;
  };
  auto norm_score = [&](double lp, std::size_t emitted) {
    return lp / std::pow(static_cast<double>(std::max<std::size_t>(emitted, 1)),
                         length_exponent);
  };

  std::vector<Hyp> live{{{vocab.bos_id()}, 0.0}};
  std::vector<std::pair<double, Hyp>> finished;  // normalized score, hypothesis

  // ids holds bos plus emitted tokens; a prefix may grow to cap positions,
  // bounding the output at cap - 1 tokens.
  while (!live.empty() && static_cast<int>(live.front().ids.size()) < cap) {
    struct Cand {
      double score;
      double logprob;
      int tok;
      std::size_t parent;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(vocab.size()));
    for (std::size_t pi = 0; pi < live.size(); ++pi) {
      const Hyp& h = live[pi];
      const Mat<S> logits = model.prefix_logits(memory, h.ids);
      const auto col = logits.col(logits.cols() - 1);
      // log-softmax in double for stable accumulation
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index r = 0; r < col.size(); ++r)
        mx = std::max(mx, static_cast<double>(col(r)));
      double z = 0.0;
      for (Eigen::Index r = 0; r < col.size(); ++r)
        z += std::exp(static_cast<double>(col(r)) - mx);
      const double lse = mx + std::log(z);
      const std::size_t emitted = h.ids.size();  // count after this step
      for (Eigen::Index r = 0; r < col.size(); ++r) {
        const int tok = static_cast<int>(r);
        if (tok == vocab.pad_id() || tok == vocab.bos_id()) continue;
        const double lp = h.logprob + static_cast<double>(col(r)) - lse;
        // A diverged model can emit non-finite logits; dropping those
        // candidates keeps the ranking a strict weak order.
        if (!std::isfinite(lp)) continue;
        cands.push_back({norm_score(lp, emitted), lp, tok, pi});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.tok != b.tok) return a.tok < b.tok;
      return a.parent < b.parent;
    });
    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size() + finished.size()) >= beam) break;
      Hyp h = live[c.parent];
      h.logprob = c.logprob;
      if (c.tok == vocab.eos_id()) {
        finished.emplace_back(c.score, std::move(h));
      } else {
        h.ids.push_back(c.tok);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  const Hyp* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  if (!finished.empty()) {
    for (const auto& [score, h] : finished)
      if (score > best_score) {
        best_score = score;
        best = &h;
      }
  } else {
    for (const Hyp& h : live) {
      const double score = norm_score(h.logprob, h.ids.size() - 1);
      if (score > best_score) {
        best_score = score;
        best = &h;
      }
    }
  }
  if (!best) return {};  // cap so tight nothing was emitted
  return {best->ids.begin() + 1, best->ids.end()};
}

// Decodes a whole corpus back to token sequences.
template <typename S>
std::vector<Tokens> decode_corpus(const ApeModel<S>& model, const Vocab& vocab,
                                  const Corpus& corpus, int beam = 5,
                                  int max_len = 0) {
  std::vector<Tokens> out;
  out.reserve(corpus.size());
  for (const auto& t : corpus.triplets) {
    const Example ex =
        make_example(vocab, t, nullptr, false, model.config().max_len);
    out.push_back(vocab.decode(beam_search(model, vocab, ex, beam, max_len)));
  }
  return out;
}

// The Do-Nothing baseline: emit the translations untouched.
inline std::vector<Tokens> do_nothing(const Corpus& corpus) {
  std::vector<Tokens> out;
  out.reserve(corpus.size());
  for (const auto& t : corpus.triplets) out.push_back(t.translation);
  return out;
}

// ---- system-level evaluation ---------------------------------------------------

struct MetricReport {
  double ter = 0.0;   // corpus TER x100
  double bleu = 0.0;  // corpus BLEU, 0..100
  std::vector<SentenceStats> stats;  // per-sentence edits and lengths
  std::vector<double> sentence_ters;
};

inline MetricReport evaluate_system(const std::vector<Tokens>& hyps,
                                    const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size())
    throw ArgumentError("evaluate_system: hypothesis/reference count mismatch");
  if (hyps.empty()) throw ArgumentError("evaluate_system: empty input");
  MetricReport report;
  report.stats.reserve(hyps.size());
  report.sentence_ters.reserve(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto r = ter(hyps[i], refs[i]);
    report.stats.push_back({static_cast<double>(r.trace.total_edits()),
                            static_cast<double>(refs[i].size())});
    report.sentence_ters.push_back(100.0 * r.score);
  }
  report.ter = 100.0 * corpus_ter_from_stats(report.stats);
  report.bleu = bleu(hyps, refs);
  return report;
}

}  // namespace mape
