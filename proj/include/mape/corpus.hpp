#pragma once

#include <json.hpp>
#include <map>

#include "mape/metrics.hpp"
#include "mape/translator.hpp"

namespace mape {

enum class Origin : std::uint8_t {
  Synthetic,
  Authentic,
  AugmentedPair,
  AugmentedCandidate,
};

inline std::string to_string(Origin o) {
  switch (o) {
    case Origin::Synthetic: return "synthetic";
    case Origin::Authentic: return "authentic";
    case Origin::AugmentedPair: return "augmented-pair";
    case Origin::AugmentedCandidate: return "augmented-candidate";
  }
  throw ArgumentError("bad origin value");
}

inline Origin origin_from_string(const std::string& s) {
  if (s == "synthetic") return Origin::Synthetic;
  if (s == "authentic") return Origin::Authentic;
  if (s == "augmented-pair") return Origin::AugmentedPair;
  if (s == "augmented-candidate") return Origin::AugmentedCandidate;
  throw DataError("unknown origin: " + s);
}

enum class WordTag : std::uint8_t { Ok, Bad };

// Per-triplet quality annotations. The sentence-level score is absent when
// no assessment exists for the instance; word tags, when present, carry one
// entry per translation token.
struct QeAnnotation {
  std::optional<double> da_score;
  std::vector<WordTag> word_tags;

  bool da_available() const { return da_score.has_value(); }
};

struct ApeTriplet {
  Tokens source;
  Tokens translation;
  Tokens post_edit;
  LangId source_lang;
  LangId target_lang;
  std::string domain = "general";
  Origin origin = Origin::Authentic;
};

struct ManifestGroup {
  std::string source_lang, target_lang, domain, origin;
  std::size_t count = 0;
};

struct Manifest {
  std::size_t total = 0;
  std::vector<ManifestGroup> groups;
};

struct Corpus {
  std::vector<ApeTriplet> triplets;
  // Either empty or exactly one entry per triplet.
  std::vector<QeAnnotation> annotations;

  bool has_annotations() const { return !annotations.empty(); }
  std::size_t size() const { return triplets.size(); }

  Manifest manifest() const {
    Manifest m;
    m.total = triplets.size();
    std::map<std::array<std::string, 4>, std::size_t> counts;
    for (const auto& t : triplets)
      ++counts[{t.source_lang.code, t.target_lang.code, t.domain,
                to_string(t.origin)}];
    for (const auto& [k, v] : counts)
      m.groups.push_back({k[0], k[1], k[2], k[3], v});
    return m;
  }
};

// Parallel bitext used by the first training stage.
struct ParallelItem {
  Tokens source;
  Tokens target;
  LangId source_lang;
  LangId target_lang;
};

struct ParallelCorpus {
  std::vector<ParallelItem> items;
  std::size_t size() const { return items.size(); }
};

namespace detail {

inline void check_tokens(const Tokens& toks, const char* field,
                         std::size_t line) {
  if (toks.empty())
    throw DataError(std::string(field) + " empty at record " +
                    std::to_string(line));
  for (const auto& t : toks)
    for (const char c : t)
      if (std::isspace(static_cast<unsigned char>(c)))
        throw DataError(std::string(field) + " token contains whitespace at record " +
                        std::to_string(line));
}

}  // namespace detail

inline void validate(const Corpus& corpus) {
  if (corpus.has_annotations() &&
      corpus.annotations.size() != corpus.triplets.size())
    throw DataError("annotation count differs from triplet count");
  for (std::size_t i = 0; i < corpus.triplets.size(); ++i) {
    const auto& t = corpus.triplets[i];
    detail::check_tokens(t.source, "source", i);
    detail::check_tokens(t.translation, "translation", i);
    detail::check_tokens(t.post_edit, "post_edit", i);
    if (!t.source_lang.valid() || !t.target_lang.valid())
      throw DataError("missing language id at record " + std::to_string(i));
    if (corpus.has_annotations()) {
      const auto& a = corpus.annotations[i];
      if (!a.word_tags.empty() && a.word_tags.size() != t.translation.size())
        throw DataError("word tag count differs from translation length at record " +
                        std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------------
// Directory format: <dir>/corpus.{src,mt,pe} hold one space-joined token
// sequence per line; corpus.meta carries per-line provenance (source lang,
// target lang, domain, origin; tab-separated); corpus.da and corpus.tags are
// written only when annotations exist; manifest.json summarizes counts.

inline void save_corpus(const Corpus& corpus, const std::string& dir) {
  validate(corpus);
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> src, mt, pe, meta, da, tags;
  for (std::size_t i = 0; i < corpus.triplets.size(); ++i) {
    const auto& t = corpus.triplets[i];
    src.push_back(join(t.source));
    mt.push_back(join(t.translation));
    pe.push_back(join(t.post_edit));
    meta.push_back(t.source_lang.code + "\t" + t.target_lang.code + "\t" +
                   t.domain + "\t" + to_string(t.origin));
    if (corpus.has_annotations()) {
      const auto& a = corpus.annotations[i];
      if (a.da_available()) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.17g", *a.da_score);
        da.emplace_back(buf);
      } else {
        da.emplace_back("NA");
      }
      Tokens tag_tokens;
      for (const auto tg : a.word_tags)
        tag_tokens.emplace_back(tg == WordTag::Ok ? "OK" : "BAD");
      tags.push_back(join(tag_tokens));
    }
  }
  const std::string stem = (fs::path(dir) / "corpus").string();
  write_lines(stem + ".src", src);
  write_lines(stem + ".mt", mt);
  write_lines(stem + ".pe", pe);
  write_lines(stem + ".meta", meta);
  if (corpus.has_annotations()) {
    write_lines(stem + ".da", da);
    write_lines(stem + ".tags", tags);
  }

  nlohmann::json j;
  const auto m = corpus.manifest();
  j["total"] = m.total;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : m.groups)
    j["groups"].push_back({{"source_lang", g.source_lang},
                           {"target_lang", g.target_lang},
                           {"domain", g.domain},
                           {"origin", g.origin},
                           {"count", g.count}});
  j["has_annotations"] = corpus.has_annotations();
  write_file((fs::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
}

struct TripletMeta {
  LangId source_lang;
  LangId target_lang;
  std::string domain = "general";
  Origin origin = Origin::Authentic;
};

// Loads aligned token files plus uniform provenance supplied by the caller.
inline Corpus load_corpus(const std::string& src_path,
                          const std::string& mt_path,
                          const std::string& pe_path, const TripletMeta& meta) {
  const auto src = read_lines(src_path);
  const auto mt = read_lines(mt_path);
  const auto pe = read_lines(pe_path);
  if (src.size() != mt.size() || src.size() != pe.size())
    throw DataError("corpus files are not line-aligned: " + src_path);
  Corpus corpus;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ApeTriplet t;
    t.source = tokenize(src[i]);
    t.translation = tokenize(mt[i]);
    t.post_edit = tokenize(pe[i]);
    t.source_lang = meta.source_lang;
    t.target_lang = meta.target_lang;
    t.domain = meta.domain;
    t.origin = meta.origin;
    corpus.triplets.push_back(std::move(t));
  }
  validate(corpus);
  return corpus;
}

inline Corpus load_corpus_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string stem = (fs::path(dir) / "corpus").string();
  const auto src = read_lines(stem + ".src");
  const auto mt = read_lines(stem + ".mt");
  const auto pe = read_lines(stem + ".pe");
  const auto meta = read_lines(stem + ".meta");
  if (src.size() != mt.size() || src.size() != pe.size() ||
      src.size() != meta.size())
    throw DataError("corpus files are not line-aligned in " + dir);

  Corpus corpus;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ApeTriplet t;
    t.source = tokenize(src[i]);
    t.translation = tokenize(mt[i]);
    t.post_edit = tokenize(pe[i]);
    std::vector<std::string> cols;
    std::stringstream ss(meta[i]);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4)
      throw DataError("bad meta line " + std::to_string(i) + " in " + dir);
    t.source_lang = {cols[0]};
    t.target_lang = {cols[1]};
    t.domain = cols[2];
    t.origin = origin_from_string(cols[3]);
    corpus.triplets.push_back(std::move(t));
  }

  if (fs::exists(stem + ".da")) {
    const auto da = read_lines(stem + ".da");
    const auto tags = fs::exists(stem + ".tags")
                          ? read_lines(stem + ".tags")
                          : std::vector<std::string>(da.size());
    if (da.size() != src.size() || tags.size() != src.size())
      throw DataError("annotation files are not line-aligned in " + dir);
    for (std::size_t i = 0; i < da.size(); ++i) {
      QeAnnotation a;
      if (da[i] != "NA") {
        try {
          a.da_score = std::stod(da[i]);
        } catch (const std::exception&) {
          throw DataError("bad numeric score at record " + std::to_string(i) +
                          " in " + dir);
        }
      }
      for (const auto& tg : split_whitespace(tags[i])) {
        if (tg == "OK")
          a.word_tags.push_back(WordTag::Ok);
        else if (tg == "BAD")
          a.word_tags.push_back(WordTag::Bad);
        else
          throw DataError("bad word tag '" + tg + "' at record " +
                          std::to_string(i) + " in " + dir);
      }
      corpus.annotations.push_back(std::move(a));
    }
  }
  validate(corpus);
  return corpus;
}

inline void save_parallel(const ParallelCorpus& corpus,
                          const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> src, tgt, meta;
  for (const auto& it : corpus.items) {
    src.push_back(join(it.source));
    tgt.push_back(join(it.target));
    meta.push_back(it.source_lang.code + "\t" + it.target_lang.code);
  }
  const std::string stem = (fs::path(dir) / "parallel").string();
  write_lines(stem + ".src", src);
  write_lines(stem + ".tgt", tgt);
  write_lines(stem + ".meta", meta);
}

inline ParallelCorpus load_parallel_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string stem = (fs::path(dir) / "parallel").string();
  const auto src = read_lines(stem + ".src");
  const auto tgt = read_lines(stem + ".tgt");
  const auto meta = read_lines(stem + ".meta");
  if (src.size() != tgt.size() || src.size() != meta.size())
    throw DataError("parallel files are not line-aligned in " + dir);
  ParallelCorpus corpus;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ParallelItem it;
    it.source = tokenize(src[i]);
    it.target = tokenize(tgt[i]);
    const auto tab = meta[i].find('\t');
    if (tab == std::string::npos)
      throw DataError("bad parallel meta line " + std::to_string(i));
    it.source_lang = {meta[i].substr(0, tab)};
    it.target_lang = {meta[i].substr(tab + 1)};
    corpus.items.push_back(std::move(it));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Pipeline operations

// Concatenates the inputs and deterministically shuffles the result. Either
// every input carries annotations or none may (mixing would silently
// misalign downstream masks).
inline Corpus merge_multilingual(const std::vector<Corpus>& corpora,
                                 std::uint64_t seed) {
  if (corpora.empty()) throw ArgumentError("merge_multilingual: no corpora");
  const bool annotated = corpora.front().has_annotations();
  for (const auto& c : corpora)
    if (c.has_annotations() != annotated)
      throw DataError("cannot merge annotated with unannotated corpora");

  Corpus merged;
  for (const auto& c : corpora) {
    merged.triplets.insert(merged.triplets.end(), c.triplets.begin(),
                           c.triplets.end());
    merged.annotations.insert(merged.annotations.end(), c.annotations.begin(),
                              c.annotations.end());
  }
  std::vector<std::size_t> order(merged.triplets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "merge"));
  rng.shuffle(order);
  Corpus out;
  out.triplets.reserve(merged.triplets.size());
  for (const std::size_t i : order) {
    out.triplets.push_back(std::move(merged.triplets[i]));
    if (annotated) out.annotations.push_back(std::move(merged.annotations[i]));
  }
  return out;
}

inline ParallelCorpus merge_multilingual(
    const std::vector<ParallelCorpus>& corpora, std::uint64_t seed) {
  if (corpora.empty()) throw ArgumentError("merge_multilingual: no corpora");
  ParallelCorpus merged;
  for (const auto& c : corpora)
    merged.items.insert(merged.items.end(), c.items.begin(), c.items.end());
  std::vector<std::size_t> order(merged.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "merge"));
  rng.shuffle(order);
  ParallelCorpus out;
  out.items.reserve(merged.items.size());
  for (const std::size_t i : order) out.items.push_back(std::move(merged.items[i]));
  return out;
}

enum class LangIdMode : std::uint8_t { None, OnlyAuthentic, All };

inline LangIdMode langid_mode_from_string(const std::string& s) {
  if (s == "none") return LangIdMode::None;
  if (s == "only-authentic") return LangIdMode::OnlyAuthentic;
  if (s == "all") return LangIdMode::All;
  throw ConfigError("unknown langid mode: " + s);
}

// Prepends the target-language token to each selected source sentence.
// Idempotent: a source already starting with its language token is left
// alone, so re-running a pipeline step cannot double-prefix.
inline Corpus prefix_langid(Corpus corpus, LangIdMode mode,
                            const LangRegistry& registry) {
  for (auto& t : corpus.triplets) {
    registry.require(t.target_lang);
    const bool selected =
        mode == LangIdMode::All ||
        (mode == LangIdMode::OnlyAuthentic && t.origin == Origin::Authentic);
    if (!selected) continue;
    const std::string tok = t.target_lang.token();
    if (!t.source.empty() && t.source.front() == tok) continue;
    t.source.insert(t.source.begin(), tok);
  }
  return corpus;
}

inline ParallelCorpus prefix_langid(ParallelCorpus corpus,
                                    const LangRegistry& registry) {
  for (auto& it : corpus.items) {
    registry.require(it.target_lang);
    const std::string tok = it.target_lang.token();
    if (!it.source.empty() && it.source.front() == tok) continue;
    it.source.insert(it.source.begin(), tok);
  }
  return corpus;
}

// Corpus-level TER of leaving every translation untouched.
inline double corpus_do_nothing_ter(const Corpus& corpus) {
  std::vector<Tokens> hyps, refs;
  hyps.reserve(corpus.size());
  for (const auto& t : corpus.triplets) {
    hyps.push_back(t.translation);
    refs.push_back(t.post_edit);
  }
  return ter_corpus(hyps, refs);
}

// Splits synthetic training data into the two curriculum phases: phase one
// holds the triplets whose translation scores worse than the supplied
// do-nothing threshold, phase two the rest (equal or better). Every input
// triplet lands in exactly one phase.
inline std::pair<Corpus, Corpus> partition_cts_phases(const Corpus& synthetic,
                                                      double threshold) {
  if (threshold < 0.0)
    throw ArgumentError("partition_cts_phases: negative threshold");
  Corpus phase1, phase2;
  for (std::size_t i = 0; i < synthetic.triplets.size(); ++i) {
    const auto& t = synthetic.triplets[i];
    const double score = ter(t.translation, t.post_edit).score;
    Corpus& dst = score > threshold ? phase1 : phase2;
    dst.triplets.push_back(t);
    if (synthetic.has_annotations())
      dst.annotations.push_back(synthetic.annotations[i]);
  }
  return {std::move(phase1), std::move(phase2)};
}

// Groups triplets for domain-specific fine-tuning. Domains missing from the
// grouping map become singleton groups named after themselves.
inline std::map<std::string, Corpus> split_by_domain(
    const Corpus& corpus,
    const std::map<std::string, std::string>& grouping = {}) {
  std::map<std::string, Corpus> out;
  for (std::size_t i = 0; i < corpus.triplets.size(); ++i) {
    const auto& t = corpus.triplets[i];
    const auto it = grouping.find(t.domain);
    const std::string group = it == grouping.end() ? t.domain : it->second;
    Corpus& dst = out[group];
    dst.triplets.push_back(t);
    if (corpus.has_annotations())
      dst.annotations.push_back(corpus.annotations[i]);
  }
  return out;
}

// Builds post-editing triplets out of parallel bitext by treating the
// reference as the post-edit and a machine translation of the source as the
// translation side. Sentences the translator fails on are dropped with a
// warning rather than aborting the whole build.
inline Corpus build_synthetic_triplets(const ParallelCorpus& parallel,
                                       const ExternalTranslator& translator,
                                       const std::string& domain = "general") {
  Corpus out;
  std::size_t dropped = 0;
  for (const auto& it : parallel.items) {
    if (!translator.supports(it.source_lang, it.target_lang))
      throw ConfigError("translator does not support " + it.source_lang.code +
                        " -> " + it.target_lang.code);
    Tokens mt = translator.translate(it.source, it.source_lang, it.target_lang);
    if (mt.empty()) {
      ++dropped;
      continue;
    }
    ApeTriplet t;
    t.source = it.source;
    t.translation = std::move(mt);
    t.post_edit = it.target;
    t.source_lang = it.source_lang;
    t.target_lang = it.target_lang;
    t.domain = domain;
    t.origin = Origin::Synthetic;
    out.triplets.push_back(std::move(t));
  }
  if (dropped > 0)
    log_warn("build_synthetic_triplets: dropped " + std::to_string(dropped) +
             " sentences the translator failed on");
  return out;
}

}  // namespace mape
