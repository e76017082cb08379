#pragma once

#include "mape/corpus.hpp"

namespace mape {

// A post-editing triplet extended with a translation of its source into a
// second target language, the raw material for both augmentation schemes.
struct ApeQuadruple {
  ApeTriplet base;
  Tokens external;
  LangId external_lang;
};

// Samples n triplets without replacement and attaches an external
// translation of each source into other_lang. Sentences the translator
// fails on are skipped and replaced by further draws while any remain.
inline std::vector<ApeQuadruple> make_quadruples(
    const Corpus& corpus, const ExternalTranslator& translator,
    const LangId& other_lang, std::size_t n, std::uint64_t seed) {
  if (n > corpus.size())
    throw ArgumentError("make_quadruples: requested " + std::to_string(n) +
                        " of " + std::to_string(corpus.size()) + " triplets");
  std::vector<ApeQuadruple> out;
  if (n == 0) return out;

  Rng rng(derive_seed(seed, "quadruples"));
  // Draw a full permutation up front so backfilling failed sentences keeps
  // the selection deterministic.
  const auto order =
      rng.sample_without_replacement(corpus.size(), corpus.size());
  for (const std::size_t idx : order) {
    if (out.size() == n) break;
    const ApeTriplet& t = corpus.triplets[idx];
    if (!translator.supports(t.source_lang, other_lang))
      throw ConfigError("translator does not support " + t.source_lang.code +
                        " -> " + other_lang.code);
    Tokens ext = translator.translate(t.source, t.source_lang, other_lang);
    if (ext.empty()) continue;
    out.push_back({t, std::move(ext), other_lang});
  }
  if (out.size() < n)
    log_warn("make_quadruples: only " + std::to_string(out.size()) + " of " +
             std::to_string(n) + " requested quadruples could be built");
  return out;
}

// Additional-pairs augmentation: the external translation becomes a new
// source sentence for the existing translation/post-edit pair, creating a
// cross-lingual triplet in the post-edit's language.
inline Corpus additional_pair_triplets(const std::vector<ApeQuadruple>& quads) {
  Corpus out;
  for (const auto& q : quads) {
    ApeTriplet t;
    t.source = q.external;
    t.translation = q.base.translation;
    t.post_edit = q.base.post_edit;
    t.source_lang = q.external_lang;
    t.target_lang = q.base.target_lang;
    t.domain = q.base.domain;
    t.origin = Origin::AugmentedPair;
    out.triplets.push_back(std::move(t));
  }
  validate(out);
  return out;
}

// External-candidates augmentation: the external translation is appended to
// the original machine translation behind a separator token, handing the
// translation encoder a second candidate rendering of the same content.
inline Corpus external_candidate_triplets(const std::vector<ApeQuadruple>& quads,
                                          const std::string& sep = "<sep>") {
  Corpus out;
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const auto& q = quads[i];
    for (const Tokens* side : {&q.base.translation, &q.external})
      for (const auto& tok : *side)
        if (tok == sep)
          throw DataError("separator token '" + sep +
                          "' occurs in the data at quadruple " +
                          std::to_string(i));
    ApeTriplet t;
    t.source = q.base.source;
    t.translation = q.base.translation;
    t.translation.push_back(sep);
    t.translation.insert(t.translation.end(), q.external.begin(),
                         q.external.end());
    t.post_edit = q.base.post_edit;
    t.source_lang = q.base.source_lang;
    t.target_lang = q.base.target_lang;
    t.domain = q.base.domain;
    t.origin = Origin::AugmentedCandidate;
    out.triplets.push_back(std::move(t));
  }
  validate(out);
  return out;
}

}  // namespace mape
