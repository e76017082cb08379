#pragma once

#include "mape/corpus.hpp"

namespace mape {

// Derives word-level quality tags for a translation against its post-edit:
// a token kept by the edit alignment is OK, a substituted or spurious one is
// BAD. Block shifts do not change a token's tag because tags follow the
// original token positions through any movement.
inline std::vector<WordTag> word_tags(const Tokens& translation,
                                      const Tokens& post_edit) {
  std::vector<WordTag> tags(translation.size(), WordTag::Bad);
  if (translation.empty()) return tags;
  const auto result = ter(translation, post_edit);
  for (const auto& link : result.trace.links) {
    if (link.hyp_index < 0) continue;  // deletion: no translation token
    tags[static_cast<std::size_t>(link.hyp_index)] =
        link.kind == EditKind::Match ? WordTag::Ok : WordTag::Bad;
  }
  return tags;
}

// Fills word tags for every triplet, preserving any sentence scores already
// attached.
inline Corpus annotate_word_tags(Corpus corpus) {
  if (!corpus.has_annotations())
    corpus.annotations.assign(corpus.triplets.size(), {});
  for (std::size_t i = 0; i < corpus.triplets.size(); ++i)
    corpus.annotations[i].word_tags =
        word_tags(corpus.triplets[i].translation, corpus.triplets[i].post_edit);
  validate(corpus);
  return corpus;
}

struct DaRange {
  double lo = 0.0;
  double hi = 100.0;
};

// Attaches sentence-level assessment scores by record index. Instances
// without an entry stay unannotated; downstream losses must skip them.
inline Corpus attach_da(Corpus corpus,
                        const std::map<std::size_t, double>& scores,
                        DaRange range = {}) {
  if (!corpus.has_annotations())
    corpus.annotations.assign(corpus.triplets.size(), {});
  for (const auto& [idx, score] : scores) {
    if (idx >= corpus.triplets.size())
      throw DataError("assessment score for record " + std::to_string(idx) +
                      " beyond corpus of size " +
                      std::to_string(corpus.triplets.size()));
    if (!(score >= range.lo && score <= range.hi))
      throw DataError("assessment score " + std::to_string(score) +
                      " outside declared range at record " +
                      std::to_string(idx));
    corpus.annotations[idx].da_score = score;
  }
  return corpus;
}

enum class DaNorm : std::uint8_t { Identity, ZScore, MinMax };

inline DaNorm da_norm_from_string(const std::string& s) {
  if (s == "identity") return DaNorm::Identity;
  if (s == "zscore") return DaNorm::ZScore;
  if (s == "minmax") return DaNorm::MinMax;
  throw ConfigError("unknown score normalization scheme: " + s);
}

// Rescales the available sentence scores in place; unavailable entries are
// untouched. Degenerate inputs (no scores, or zero spread) fall back to the
// identity with a warning instead of emitting NaNs.
inline std::vector<std::optional<double>> normalize_da(
    std::vector<std::optional<double>> scores, DaNorm scheme) {
  if (scheme == DaNorm::Identity) return scores;
  std::vector<double> vals;
  for (const auto& s : scores)
    if (s.has_value()) vals.push_back(*s);
  if (vals.empty()) {
    log_warn("normalize_da: no available scores; keeping values as-is");
    return scores;
  }
  if (scheme == DaNorm::ZScore) {
    double mean = 0.0;
    for (const double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (const double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    const double sd = std::sqrt(var);
    if (sd == 0.0) {
      log_warn("normalize_da: zero variance; keeping values as-is");
      return scores;
    }
    for (auto& s : scores)
      if (s.has_value()) s = (*s - mean) / sd;
  } else {  // MinMax
    const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) {
      log_warn("normalize_da: constant scores; keeping values as-is");
      return scores;
    }
    for (auto& s : scores)
      if (s.has_value()) s = (*s - lo) / (hi - lo);
  }
  return scores;
}

inline Corpus normalize_da(Corpus corpus, DaNorm scheme) {
  if (!corpus.has_annotations()) return corpus;
  std::vector<std::optional<double>> scores;
  scores.reserve(corpus.annotations.size());
  for (const auto& a : corpus.annotations) scores.push_back(a.da_score);
  scores = normalize_da(std::move(scores), scheme);
  for (std::size_t i = 0; i < scores.size(); ++i)
    corpus.annotations[i].da_score = scores[i];
  return corpus;
}

}  // namespace mape
