#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "mape/corpus.hpp"
#include "mape/metrics.hpp"
#include "mape/qe_annotate.hpp"
#include "mape/translator.hpp"

// A self-contained bilingual toy world, small enough that the full pipeline
// trains in minutes yet structured enough that every mechanism matters:
// the two target languages share part of their vocabulary (so multilingual
// transfer can help), use different word orders (so language conditioning is
// required), and the toy MT system injects seeded noise (so post-editing has
// something to fix and Do-Nothing has a sizable TER).
namespace mape::toy {

inline LangId eng() { return {"eng"}; }
inline LangId hin() { return {"hin"}; }
inline LangId mar() { return {"mar"}; }

inline LangRegistry registry() {
  return LangRegistry({"eng", "hin", "mar"});
}

struct ToySpec {
  int source_vocab = 40;     // source word types s0..s{n-1}
  int shared_per_ten = 3;    // of every 10 word types, this many map to a
                             // target word both languages share
  int min_len = 3;
  int max_len = 9;
  double p_drop = 0.05;      // toy-MT noise rates
  double p_sub = 0.16;
  double p_ins = 0.05;
  double p_swap = 0.12;      // chance of one adjacent transposition
  double da_coverage = 0.7;  // fraction of authentic triplets with a DA score
  double da_jitter = 3.0;
  std::uint64_t seed = 17;

  int nmt_train = 500, nmt_dev = 60;
  int synth_train = 500, synth_dev = 60;
  int auth_train = 200, auth_dev = 60;
  int test = 80;
};

// ---- the ground-truth translation rules ----------------------------------------

inline bool is_shared_type(int word_index, const ToySpec& spec) {
  return word_index % 10 < spec.shared_per_ten;
}

inline std::string source_word(int i) { return "s" + std::to_string(i); }

inline std::string target_word(int i, const LangId& lang, const ToySpec& spec) {
  if (is_shared_type(i, spec)) return "c" + std::to_string(i);
  return (lang == hin() ? "h" : "m") + std::to_string(i);
}

inline int source_index(const std::string& word) {
  return std::stoi(word.substr(1));
}

// hin rotates the sentence right by one (last word first); mar rotates left
// (first word last). Distinct orders force the model to read the LangId.
inline Tokens reference_translation(const Tokens& source, const LangId& lang,
                                    const ToySpec& spec) {
  Tokens mapped;
  mapped.reserve(source.size());
  for (const auto& w : source)
    mapped.push_back(target_word(source_index(w), lang, spec));
  if (mapped.size() > 1) {
    if (lang == hin())
      std::rotate(mapped.rbegin(), mapped.rbegin() + 1, mapped.rend());
    else
      std::rotate(mapped.begin(), mapped.begin() + 1, mapped.end());
  }
  return mapped;
}

// Word types a toy language may emit; shared types count for both languages.
inline std::set<std::string> language_vocabulary(const LangId& lang,
                                                 const ToySpec& spec) {
  std::set<std::string> vocab;
  for (int i = 0; i < spec.source_vocab; ++i)
    vocab.insert(target_word(i, lang, spec));
  return vocab;
}

// Exact rule-based translator (the "good" external system used to build
// augmentation quadruples).
class ExactToyTranslator final : public ExternalTranslator {
 public:
  explicit ExactToyTranslator(ToySpec spec) : spec_(spec) {}

  bool supports(const LangId& from, const LangId& to) const override {
    return from == eng() && (to == hin() || to == mar());
  }

  Tokens translate(const Tokens& sentence, const LangId& from,
                   const LangId& to) const override {
    if (!supports(from, to)) return {};
    return reference_translation(sentence, to, spec_);
  }

 private:
  ToySpec spec_;
};

// The flawed toy MT system whose output the post-editor must fix. Noise is
// keyed to (seed, sentence, language), so the same input always yields the
// same translation and corpora regenerate bit-identically.
class NoisyToyTranslator final : public ExternalTranslator {
 public:
  NoisyToyTranslator(ToySpec spec, std::uint64_t seed)
      : spec_(spec), seed_(seed) {}

  bool supports(const LangId& from, const LangId& to) const override {
    return from == eng() && (to == hin() || to == mar());
  }

  Tokens translate(const Tokens& sentence, const LangId& from,
                   const LangId& to) const override {
    if (!supports(from, to)) return {};
    const Tokens clean = reference_translation(sentence, to, spec_);
    Rng rng(derive_seed(seed_, to.code + "\x1f" + join(sentence, " ")));
    std::vector<std::string> alphabet;
    for (int i = 0; i < spec_.source_vocab; ++i)
      alphabet.push_back(target_word(i, to, spec_));

    Tokens noisy;
    for (const auto& w : clean) {
      const double r = rng.uniform01();
      if (r < spec_.p_drop && clean.size() > 1) {
        continue;
      } else if (r < spec_.p_drop + spec_.p_sub) {
        noisy.push_back(alphabet[rng.below(alphabet.size())]);
      } else {
        noisy.push_back(w);
      }
      if (rng.uniform01() < spec_.p_ins)
        noisy.push_back(alphabet[rng.below(alphabet.size())]);
    }
    if (noisy.empty()) noisy.push_back(alphabet[rng.below(alphabet.size())]);
    if (noisy.size() > 1 && rng.uniform01() < spec_.p_swap) {
      const auto at = rng.below(noisy.size() - 1);
      std::swap(noisy[at], noisy[at + 1]);
    }
    return noisy;
  }

 private:
  ToySpec spec_;
  std::uint64_t seed_;
};

// ---- corpus generation ----------------------------------------------------------

namespace detail {

// Domain-conditioned source sentences: "news" draws from the lower half of
// the type inventory, "chat" from the upper half, with a little bleed-over
// so vocabularies are not fully disjoint.
inline Tokens draw_sentence(Rng& rng, const ToySpec& spec,
                            const std::string& domain) {
  const int len =
      spec.min_len + static_cast<int>(rng.below(
                         static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1)));
  const int half = spec.source_vocab / 2;
  Tokens out;
  out.reserve(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) {
    int idx;
    if (domain == "general" || rng.uniform01() < 0.15) {
      idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.source_vocab)));
    } else if (domain == "news") {
      idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(half)));
    } else {
      idx = half + static_cast<int>(rng.below(
                       static_cast<std::uint64_t>(spec.source_vocab - half)));
    }
    out.push_back(source_word(idx));
  }
  return out;
}

// Draws sentences nobody else has claimed yet; the shared `used` set keeps
// every split disjoint from every other.
inline std::vector<Tokens> draw_unique(Rng& rng, const ToySpec& spec,
                                       const std::string& domain, int count,
                                       std::set<std::string>& used) {
  std::vector<Tokens> out;
  int stale = 0;
  while (static_cast<int>(out.size()) < count) {
    Tokens s = draw_sentence(rng, spec, domain);
    const std::string key = join(s, " ");
    if (used.insert(key).second) {
      out.push_back(std::move(s));
      stale = 0;
    } else if (++stale > 10000) {
      throw DataError("toy generator: sentence space exhausted; "
                      "increase source_vocab or max_len");
    }
  }
  return out;
}

}  // namespace detail

struct ToyPair {
  LangId target;
  ParallelCorpus nmt_train, nmt_dev;
  Corpus synth_train, synth_dev;
  Corpus auth_train, auth_dev;  // DA + word tags attached
  Corpus test;
};

struct ToyData {
  ToySpec spec;
  ToyPair eng_hin;
  ToyPair eng_mar;
};

namespace detail {

inline ParallelCorpus make_parallel(const std::vector<Tokens>& sources,
                                    const LangId& target, const ToySpec& spec) {
  ParallelCorpus out;
  for (const auto& s : sources)
    out.items.push_back(
        {s, reference_translation(s, target, spec), eng(), target});
  return out;
}

inline Corpus make_triplets(const std::vector<Tokens>& sources,
                            const std::vector<std::string>& domains,
                            const LangId& target, const ToySpec& spec,
                            const NoisyToyTranslator& mt, Origin origin) {
  Corpus out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    ApeTriplet t;
    t.source = sources[i];
    t.translation = mt.translate(sources[i], eng(), target);
    t.post_edit = reference_translation(sources[i], target, spec);
    t.source_lang = eng();
    t.target_lang = target;
    t.domain = domains[i];
    t.origin = origin;
    out.triplets.push_back(std::move(t));
  }
  return out;
}

// DA score: the toy "human assessment" is just inverted TER on a 0..100
// scale plus seeded jitter, withheld for a fraction of instances.
inline void attach_toy_annotations(Corpus& corpus, const ToySpec& spec,
                                   Rng& rng) {
  corpus = annotate_word_tags(std::move(corpus));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (rng.uniform01() >= spec.da_coverage) continue;
    const auto& t = corpus.triplets[i];
    const double score = ter(t.translation, t.post_edit).score;
    const double da = std::clamp(
        100.0 * (1.0 - score) + spec.da_jitter * rng.normal(), 0.0, 100.0);
    corpus.annotations[i].da_score = da;
  }
}

inline ToyPair make_pair(const LangId& target, const ToySpec& spec,
                         std::set<std::string>& used) {
  const std::uint64_t pair_seed = derive_seed(spec.seed, "pair-" + target.code);
  const NoisyToyTranslator mt(spec, derive_seed(pair_seed, "mt"));
  ToyPair pair;
  pair.target = target;

  Rng rng(derive_seed(pair_seed, "sentences"));
  auto domain_stream = [&](int count) {
    std::vector<std::string> domains;
    domains.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
      domains.push_back(rng.uniform01() < 0.5 ? "news" : "chat");
    return domains;
  };

  pair.nmt_train = make_parallel(
      draw_unique(rng, spec, "general", spec.nmt_train, used), target, spec);
  pair.nmt_dev = make_parallel(
      draw_unique(rng, spec, "general", spec.nmt_dev, used), target, spec);

  const auto synth_src = draw_unique(rng, spec, "general", spec.synth_train, used);
  pair.synth_train =
      make_triplets(synth_src, std::vector<std::string>(synth_src.size(), "general"),
                    target, spec, mt, Origin::Synthetic);
  const auto synth_dev_src = draw_unique(rng, spec, "general", spec.synth_dev, used);
  pair.synth_dev = make_triplets(
      synth_dev_src, std::vector<std::string>(synth_dev_src.size(), "general"),
      target, spec, mt, Origin::Synthetic);

  Rng da_rng(derive_seed(pair_seed, "annotations"));
  auto authentic = [&](int count) {
    const auto domains = domain_stream(count);
    std::vector<Tokens> srcs;
    srcs.reserve(domains.size());
    for (const auto& d : domains) {
      auto s = draw_unique(rng, spec, d, 1, used);
      srcs.push_back(std::move(s.front()));
    }
    Corpus c = make_triplets(srcs, domains, target, spec, mt, Origin::Authentic);
    attach_toy_annotations(c, spec, da_rng);
    return c;
  };
  pair.auth_train = authentic(spec.auth_train);
  pair.auth_dev = authentic(spec.auth_dev);
  pair.test = authentic(spec.test);
  return pair;
}

}  // namespace detail

inline ToyData generate(const ToySpec& spec = {}) {
  ToyData data;
  data.spec = spec;
  std::set<std::string> used;  // shared across pairs: all splits stay disjoint
  data.eng_hin = detail::make_pair(hin(), spec, used);
  data.eng_mar = detail::make_pair(mar(), spec, used);
  return data;
}

// ---- persistence ----------------------------------------------------------------

inline void write_pair(const ToyPair& pair, const std::string& dir) {
  const std::string tag = "eng-" + pair.target.code;
  save_parallel(pair.nmt_train, dir + "/nmt." + tag + ".train");
  save_parallel(pair.nmt_dev, dir + "/nmt." + tag + ".dev");
  save_corpus(pair.synth_train, dir + "/synth." + tag + ".train");
  save_corpus(pair.synth_dev, dir + "/synth." + tag + ".dev");
  save_corpus(pair.auth_train, dir + "/auth." + tag + ".train");
  save_corpus(pair.auth_dev, dir + "/auth." + tag + ".dev");
  save_corpus(pair.test, dir + "/test." + tag);
}

inline void write(const ToyData& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_pair(data.eng_hin, dir);
  write_pair(data.eng_mar, dir);
}

inline ToyPair load_pair(const std::string& dir, const LangId& target) {
  const std::string tag = "eng-" + target.code;
  ToyPair pair;
  pair.target = target;
  pair.nmt_train = load_parallel_dir(dir + "/nmt." + tag + ".train");
  pair.nmt_dev = load_parallel_dir(dir + "/nmt." + tag + ".dev");
  pair.synth_train = load_corpus_dir(dir + "/synth." + tag + ".train");
  pair.synth_dev = load_corpus_dir(dir + "/synth." + tag + ".dev");
  pair.auth_train = load_corpus_dir(dir + "/auth." + tag + ".train");
  pair.auth_dev = load_corpus_dir(dir + "/auth." + tag + ".dev");
  pair.test = load_corpus_dir(dir + "/test." + tag);
  return pair;
}

inline ToyData load(const std::string& dir) {
  ToyData data;
  data.eng_hin = load_pair(dir, hin());
  data.eng_mar = load_pair(dir, mar());
  return data;
}

}  // namespace mape::toy
