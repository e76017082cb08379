#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mape/augment.hpp"
#include "mape/decode.hpp"
#include "mape/qe_annotate.hpp"
#include "mape/toy.hpp"
#include "mape/trainer.hpp"

namespace mape {

// The experiment rows, one id per reported system variant.
inline const std::vector<std::string>& experiment_systems() {
  static const std::vector<std::string> ids = {
      "do-nothing",       "baseline-ape",   "transfer",
      "wo-langid",        "only-auth-langid", "w-langid",
      "w-langid+pairs",   "w-langid+candidates", "mtl-ls",
      "mtl-nash",         "mtl-nash+dataaug", "domain-adapt"};
  return ids;
}

struct ExperimentSpec {
  std::string system;
  std::string pair;      // "eng-hin" or "eng-mar"
  std::string baseline;  // significance reference row; empty = none
  int augment_n = -1;    // override for ablations; -1 = grid default
};

// Single-pair baselines are measured against Do-Nothing; refinements of the
// multilingual model against w-langid; the stacked Nash system against the
// plain Nash system.
inline std::string default_baseline(const std::string& system) {
  if (system == "do-nothing") return "";
  if (system == "baseline-ape" || system == "transfer" ||
      system == "wo-langid" || system == "only-auth-langid" ||
      system == "w-langid")
    return "do-nothing";
  if (system == "mtl-nash+dataaug") return "mtl-nash";
  return "w-langid";
}

inline std::vector<ExperimentSpec> default_grid() {
  std::vector<ExperimentSpec> out;
  for (const auto& sys : experiment_systems())
    for (const std::string& pair : {std::string("eng-hin"), std::string("eng-mar")})
      out.push_back({sys, pair, default_baseline(sys), -1});
  return out;
}

struct GridConfig {
  std::string data_dir;  // toy corpus tree (toy::write layout)
  std::string out_dir;
  TrainConfig train;
  int beam = 5;
  int significance_trials = 2000;
  std::uint64_t significance_seed = 17;
  int augment_n = 200;  // quadruples per direction
  int bpe_merges = 400;
  bool resume = true;  // reuse finished stage checkpoints under out_dir
};

// Grid description as flat key-value text; `train_config` names the training
// configuration file, resolved relative to the grid file.
inline GridConfig load_grid_config(const std::string& path) {
  auto kv = parse_kv(read_file(path));
  GridConfig g;
  auto take_str = [&](const char* key, std::string& field, bool required) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
      if (required) throw ConfigError(std::string("grid config: missing ") + key);
      return;
    }
    field = it->second;
    kv.erase(it);
  };
  auto take_int = [&](const char* key, auto& field) {
    const auto it = kv.find(key);
    if (it == kv.end()) return;
    field = static_cast<std::decay_t<decltype(field)>>(std::stoll(it->second));
    kv.erase(it);
  };
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    return std::filesystem::path(p).is_absolute() ? p : (base / p).string();
  };
  std::string data_dir, out_dir, train_path, resume;
  take_str("data_dir", data_dir, true);
  take_str("out_dir", out_dir, true);
  take_str("train_config", train_path, false);
  take_str("resume", resume, false);
  g.data_dir = resolve(data_dir);
  g.out_dir = resolve(out_dir);
  if (!train_path.empty()) g.train = load_train_config(resolve(train_path));
  if (!resume.empty()) {
    if (resume != "true" && resume != "false")
      throw ConfigError("grid config: resume must be true or false");
    g.resume = resume == "true";
  }
  take_int("beam", g.beam);
  take_int("significance_trials", g.significance_trials);
  take_int("significance_seed", g.significance_seed);
  take_int("augment_n", g.augment_n);
  take_int("bpe_merges", g.bpe_merges);
  if (!kv.empty())
    throw ConfigError("grid config: unknown key " + kv.begin()->first);
  return g;
}

struct ReportRow {
  std::string system, pair;
  bool failed = false;
  std::string error;
  double ter = 0.0;
  double bleu = 0.0;
  std::optional<double> p;
  std::map<std::string, double> domain_ter;  // domain-adapt detail
};

struct ReportTable {
  std::vector<ReportRow> rows;

  bool any_failed() const {
    for (const auto& r : rows)
      if (r.failed) return true;
    return false;
  }

  std::string tsv() const {
    std::string out = "system\tpair\tTER\tBLEU\tp\tmarker\n";
    char buf[128];
    for (const auto& r : rows) {
      if (r.failed) {
        out += r.system + "\t" + r.pair + "\tNA\tNA\tNA\tFAILED\n";
        continue;
      }
      std::string p = "NA", marker;
      if (r.p) {
        std::snprintf(buf, sizeof buf, "%.4f", *r.p);
        p = buf;
        if (*r.p >= 0.05) marker = "*";
      }
      std::snprintf(buf, sizeof buf, "%s\t%s\t%.2f\t%.2f\t%s\t%s\n",
                    r.system.c_str(), r.pair.c_str(), r.ter, r.bleu, p.c_str(),
                    marker.c_str());
      out += buf;
    }
    return out;
  }

  std::string human() const {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %-9s %8s %8s %8s  %s\n", "system",
                  "pair", "TER", "BLEU", "p", "");
    out += buf;
    out += std::string(64, '-') + "\n";
    for (const auto& r : rows) {
      if (r.failed) {
        std::snprintf(buf, sizeof buf, "%-24s %-9s   FAILED: %s\n",
                      r.system.c_str(), r.pair.c_str(), r.error.c_str());
        out += buf;
        continue;
      }
      std::string p = r.p ? "" : "      NA";
      if (r.p) {
        std::snprintf(buf, sizeof buf, "%8.4f", *r.p);
        p = buf;
      }
      std::snprintf(buf, sizeof buf, "%-24s %-9s %8.2f %8.2f %s  %s\n",
                    r.system.c_str(), r.pair.c_str(), r.ter, r.bleu, p.c_str(),
                    (r.p && *r.p >= 0.05) ? "*" : "");
      out += buf;
      if (!r.domain_ter.empty()) {
        double sum = 0.0;
        for (const auto& [domain, ter_value] : r.domain_ter) {
          std::snprintf(buf, sizeof buf, "%-24s   domain %-8s TER %8.2f\n", "",
                        domain.c_str(), ter_value);
          out += buf;
          sum += ter_value;
        }
        std::snprintf(buf, sizeof buf, "%-24s   domain average  TER %8.2f\n",
                      "", sum / static_cast<double>(r.domain_ter.size()));
        out += buf;
      }
    }
    if (any_failed())
      out += "\n('*' marks improvements that are NOT significant at p < 0.05; "
             "failed rows are isolated)\n";
    else
      out += "\n('*' marks improvements that are NOT significant at p < 0.05)\n";
    return out;
  }
};

// ---- the runner -----------------------------------------------------------------

class ExperimentRunner {
 public:
  explicit ExperimentRunner(GridConfig cfg)
      : cfg_(std::move(cfg)),
        data_(toy::load(cfg_.data_dir)),
        registry_(toy::registry()) {
    build_vocab();
    cfg_.train.model.vocab_size = static_cast<int>(vocab_.size());
    assert_disjoint_splits();
  }

  ReportTable run(const std::vector<ExperimentSpec>& specs) {
    ReportTable table;
    std::map<std::string, MetricReport> reports;  // "system|pair" -> metrics
    for (const auto& spec : specs) {
      ReportRow row;
      row.system = spec.system;
      row.pair = spec.pair;
      try {
        const MetricReport rep = run_system(spec, &row);
        reports[spec.system + "|" + spec.pair] = rep;
        row.ter = rep.ter;
        row.bleu = rep.bleu;
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
        log_warn("grid row " + spec.system + "/" + spec.pair +
                 " failed: " + row.error);
      }
      table.rows.push_back(std::move(row));
    }
    // Significance against each row's declared baseline, where both sides
    // completed. Per-sentence stats pair up because every system decodes the
    // same test split.
    for (auto& row : table.rows) {
      if (row.failed) continue;
      const auto spec = std::find_if(specs.begin(), specs.end(), [&](const auto& s) {
        return s.system == row.system && s.pair == row.pair;
      });
      if (spec == specs.end() || spec->baseline.empty()) continue;
      const auto base = reports.find(spec->baseline + "|" + row.pair);
      const auto self = reports.find(row.system + "|" + row.pair);
      if (base == reports.end() || self == reports.end()) continue;
      row.p = significance_test(self->second.stats, base->second.stats,
                                cfg_.significance_trials,
                                derive_seed(cfg_.significance_seed,
                                            row.system + "|" + row.pair));
    }
    return table;
  }

  const Vocab& vocab() const { return vocab_; }
  const toy::ToyData& data() const { return data_; }
  // Grid configuration after construction fixed the vocabulary size.
  const GridConfig& config() const { return cfg_; }

  // Exposed so tests and the acceptance suite can drive individual systems.
  MetricReport run_system(const ExperimentSpec& spec, ReportRow* row = nullptr) {
    const toy::ToyPair& P = pair_data(spec.pair);
    if (spec.system == "do-nothing")
      return evaluate_system(do_nothing(P.test), refs(P.test));

    if (spec.system == "domain-adapt") return run_domain_adapt(spec, row);

    const std::string ckpt = ensure_trained(spec);
    auto loaded = load_checkpoint(ckpt);
    const Corpus test =
        prefix_langid(P.test, langid_mode(spec.system), registry_);
    const auto hyps =
        decode_corpus(loaded.model, loaded.vocab, test, cfg_.beam);
    return evaluate_system(hyps, refs(P.test));
  }

  // Trains (or resumes) the checkpoints behind a system row and returns the
  // final checkpoint path. Multilingual systems train once and serve both
  // pair rows.
  std::string ensure_trained(const ExperimentSpec& spec) {
    const std::string& sys = spec.system;
    if (sys == "do-nothing")
      throw ArgumentError("do-nothing has no checkpoint");
    if (sys == "domain-adapt")
      throw ArgumentError("domain-adapt produces per-domain checkpoints");

    if (sys == "baseline-ape") return train_baseline(spec.pair);
    if (sys == "transfer") return train_transfer(spec.pair);

    const std::string dir = cfg_.out_dir + "/" + sys;
    TrainLogWriter log(dir_log(claim(dir)));
    run_cts(multilingual_inputs(sys, spec.augment_n), cfg_.train,
            train_mode(sys), dir, true, log);
    return dir + "/final.ckpt";
  }

  // Per-domain checkpoints for the adapter system (training on demand).
  std::map<std::string, std::string> ensure_domain_checkpoints(int augment_n) {
    const std::string dir = cfg_.out_dir + "/domain-adapt";
    TrainLogWriter log(dir_log(claim(dir)));
    const auto result =
        run_cts(multilingual_inputs("domain-adapt", augment_n), cfg_.train,
                TrainMode::DomainAdapt, dir, true, log);
    return result.domain_checkpoints;
  }

  static LangIdMode langid_mode(const std::string& system) {
    if (system == "wo-langid" || system == "baseline-ape" ||
        system == "transfer")
      return LangIdMode::None;
    if (system == "only-auth-langid") return LangIdMode::OnlyAuthentic;
    return LangIdMode::All;
  }

  static TrainMode train_mode(const std::string& system) {
    if (system == "mtl-ls") return TrainMode::LsMtl;
    if (system == "mtl-nash" || system == "mtl-nash+dataaug")
      return TrainMode::NashMtl;
    if (system == "domain-adapt") return TrainMode::DomainAdapt;
    return TrainMode::Single;
  }

  // Assembles curriculum inputs from explicit knobs instead of a system name,
  // for callers that mix their own configuration (the command-line trainer).
  CtsInputs build_inputs(LangIdMode mode, TrainMode tm,
                         const std::string& augment_kind, int augment_n) const {
    const std::uint64_t seed = cfg_.train.seed;
    CtsInputs in;
    in.vocab = vocab_;
    in.nmt_train = merge_multilingual(
        {prefix_langid(data_.eng_hin.nmt_train, registry_),
         prefix_langid(data_.eng_mar.nmt_train, registry_)},
        derive_seed(seed, "nmt-train"));
    in.nmt_dev = merge_multilingual(
        {prefix_langid(data_.eng_hin.nmt_dev, registry_),
         prefix_langid(data_.eng_mar.nmt_dev, registry_)},
        derive_seed(seed, "nmt-dev"));

    Corpus synth =
        augment_kind.empty()
            ? merge_multilingual({data_.eng_hin.synth_train,
                                  data_.eng_mar.synth_train},
                                 derive_seed(seed, "synth-train"))
            : augmented_synth(augment_kind,
                              augment_n > 0 ? augment_n : cfg_.augment_n);
    in.synth_train = prefix_langid(std::move(synth), mode, registry_);
    in.synth_dev = prefix_langid(
        merge_multilingual({data_.eng_hin.synth_dev, data_.eng_mar.synth_dev},
                           derive_seed(seed, "synth-dev")),
        mode, registry_);

    Corpus auth_train = merge_multilingual(
        {data_.eng_hin.auth_train, data_.eng_mar.auth_train},
        derive_seed(seed, "auth-train"));
    Corpus auth_dev = merge_multilingual(
        {data_.eng_hin.auth_dev, data_.eng_mar.auth_dev},
        derive_seed(seed, "auth-dev"));
    if (tm == TrainMode::LsMtl || tm == TrainMode::NashMtl) {
      // DA targets are standardized before regression, like the real
      // pipeline does with raw assessment scores.
      auth_train = normalize_da(std::move(auth_train), DaNorm::ZScore);
      auth_dev = normalize_da(std::move(auth_dev), DaNorm::ZScore);
    }
    in.auth_train = prefix_langid(std::move(auth_train), mode, registry_);
    in.auth_dev = prefix_langid(std::move(auth_dev), mode, registry_);
    return in;
  }

  CtsInputs single_pair_inputs(const std::string& pair) const {
    const toy::ToyPair& P = pair_data(pair);
    const std::uint64_t seed = cfg_.train.seed;
    CtsInputs in;
    in.vocab = vocab_;
    in.nmt_train = prefix_langid(P.nmt_train, registry_);
    in.nmt_dev = prefix_langid(P.nmt_dev, registry_);
    in.synth_train = merge_multilingual({P.synth_train},
                                        derive_seed(seed, "synth-train"));
    in.synth_dev = P.synth_dev;
    in.auth_train = P.auth_train;
    in.auth_dev = P.auth_dev;
    return in;
  }

 private:
  static std::string dir_log(const std::string& dir) {
    std::filesystem::create_directories(dir);
    return dir + "/trainlog.jsonl";
  }

  // First touch of a training directory in this run. Without resume, stale
  // checkpoints from earlier invocations are cleared; later rows of the same
  // run always reuse what this run trained.
  std::string claim(const std::string& dir) {
    if (claimed_.insert(dir).second && !cfg_.resume)
      std::filesystem::remove_all(dir);
    return dir;
  }

  const toy::ToyPair& pair_data(const std::string& pair) const {
    if (pair == "eng-hin") return data_.eng_hin;
    if (pair == "eng-mar") return data_.eng_mar;
    throw ArgumentError("unknown pair: " + pair);
  }

  static std::vector<Tokens> refs(const Corpus& c) {
    std::vector<Tokens> out;
    out.reserve(c.size());
    for (const auto& t : c.triplets) out.push_back(t.post_edit);
    return out;
  }

  void build_vocab() {
    std::vector<Tokens> text;
    auto add_corpus = [&](const Corpus& c) {
      for (const auto& t : c.triplets) {
        text.push_back(t.source);
        text.push_back(t.translation);
        text.push_back(t.post_edit);
      }
    };
    auto add_parallel = [&](const ParallelCorpus& c) {
      for (const auto& it : c.items) {
        text.push_back(it.source);
        text.push_back(it.target);
      }
    };
    for (const toy::ToyPair* p : {&data_.eng_hin, &data_.eng_mar}) {
      add_parallel(p->nmt_train);
      add_parallel(p->nmt_dev);
      add_corpus(p->synth_train);
      add_corpus(p->synth_dev);
      add_corpus(p->auth_train);
      add_corpus(p->auth_dev);
    }
    std::vector<std::string> atoms = {"<sep>"};
    for (const auto& code : registry_.codes()) atoms.push_back(code);
    vocab_ = Vocab::train(text, cfg_.bpe_merges, atoms);
  }

  // Training must never see an evaluation sentence.
  void assert_disjoint_splits() const {
    std::set<std::string> eval;
    for (const toy::ToyPair* p : {&data_.eng_hin, &data_.eng_mar}) {
      for (const auto& t : p->test.triplets) eval.insert(join(t.source, " "));
      for (const auto& t : p->auth_dev.triplets) eval.insert(join(t.source, " "));
      for (const auto& t : p->synth_dev.triplets) eval.insert(join(t.source, " "));
      for (const auto& it : p->nmt_dev.items) eval.insert(join(it.source, " "));
    }
    auto check = [&](const Tokens& src, const char* where) {
      if (eval.count(join(src, " ")))
        throw DataError(std::string("evaluation sentence leaked into ") + where);
    };
    for (const toy::ToyPair* p : {&data_.eng_hin, &data_.eng_mar}) {
      for (const auto& it : p->nmt_train.items) check(it.source, "nmt train");
      for (const auto& t : p->synth_train.triplets) check(t.source, "synthetic train");
      for (const auto& t : p->auth_train.triplets) check(t.source, "authentic train");
    }
  }

  // Quadruples for augmentation come from each pair's synthetic corpus; the
  // exact rule-based system plays the strong external NMT engine.
  Corpus augmented_synth(const std::string& kind, int n) const {
    const toy::ExactToyTranslator ext(data_.spec);
    auto make = [&](const Corpus& base, const LangId& other) {
      return make_quadruples(base, ext, other,
                             static_cast<std::size_t>(n),
                             derive_seed(cfg_.train.seed, "augment-" + other.code));
    };
    const auto quads_hin = make(data_.eng_hin.synth_train, toy::mar());
    const auto quads_mar = make(data_.eng_mar.synth_train, toy::hin());
    std::vector<Corpus> parts = {data_.eng_hin.synth_train,
                                 data_.eng_mar.synth_train};
    if (kind == "pairs") {
      parts.push_back(additional_pair_triplets(quads_hin));
      parts.push_back(additional_pair_triplets(quads_mar));
    } else if (kind == "candidates") {
      parts.push_back(external_candidate_triplets(quads_hin, "<sep>"));
      parts.push_back(external_candidate_triplets(quads_mar, "<sep>"));
    } else {
      throw ArgumentError("unknown augmentation kind: " + kind);
    }
    return merge_multilingual(parts, derive_seed(cfg_.train.seed, "synth-aug"));
  }

  static std::string augmentation_of(const std::string& system) {
    if (system == "w-langid+pairs" || system == "mtl-nash+dataaug")
      return "pairs";
    if (system == "w-langid+candidates") return "candidates";
    return "";
  }

  CtsInputs multilingual_inputs(const std::string& system, int augment_n) const {
    return build_inputs(langid_mode(system), train_mode(system),
                        augmentation_of(system), augment_n);
  }

  std::string train_baseline(const std::string& pair) {
    const std::string dir = cfg_.out_dir + "/baseline-ape/" + pair;
    TrainLogWriter log(dir_log(claim(dir)));
    run_cts(single_pair_inputs(pair), cfg_.train, TrainMode::Single, dir,
            true, log);
    return dir + "/final.ckpt";
  }

  std::string train_transfer(const std::string& pair) {
    const std::string other = pair == "eng-hin" ? "eng-mar" : "eng-hin";
    // Donor: the other pair's synthetic-stage model, before its own
    // authentic fine-tuning.
    train_baseline(other);
    const std::string donor_dir = cfg_.out_dir + "/baseline-ape/" + other;
    const std::string dir = claim(cfg_.out_dir + "/transfer/" + pair);
    const std::string final_path = dir + "/final.ckpt";
    if (std::filesystem::exists(final_path)) return final_path;
    TrainLogWriter log(dir_log(dir));
    const toy::ToyPair& P = pair_data(pair);
    transfer_finetune(donor_dir + "/stage2b.ckpt", P.auth_train, P.auth_dev,
                      cfg_.train, TrainMode::Single, dir, log);
    return final_path;
  }

  MetricReport run_domain_adapt(const ExperimentSpec& spec, ReportRow* row) {
    const auto checkpoints = ensure_domain_checkpoints(spec.augment_n);
    const toy::ToyPair& P = pair_data(spec.pair);
    const Corpus test = prefix_langid(P.test, LangIdMode::All, registry_);

    // Decode each test sentence with its domain's checkpoint, then score the
    // reassembled full set; per-domain TERs are reported alongside.
    std::vector<Tokens> hyps(test.size());
    std::map<std::string, std::vector<std::size_t>> by_domain;
    for (std::size_t i = 0; i < test.size(); ++i)
      by_domain[test.triplets[i].domain].push_back(i);
    for (const auto& [domain, indices] : by_domain) {
      const auto it = checkpoints.find(domain);
      if (it == checkpoints.end())
        throw DataError("no adapter checkpoint for test domain " + domain);
      auto loaded = load_checkpoint(it->second);
      Corpus subset;
      for (const std::size_t i : indices)
        subset.triplets.push_back(test.triplets[i]);
      const auto decoded =
          decode_corpus(loaded.model, loaded.vocab, subset, cfg_.beam);
      std::vector<Tokens> domain_refs;
      for (const std::size_t i : indices)
        domain_refs.push_back(P.test.triplets[i].post_edit);
      if (row)
        row->domain_ter[domain] =
            evaluate_system(decoded, domain_refs).ter;
      for (std::size_t k = 0; k < indices.size(); ++k)
        hyps[indices[k]] = decoded[k];
    }
    return evaluate_system(hyps, refs(P.test));
  }

  GridConfig cfg_;
  toy::ToyData data_;
  LangRegistry registry_;
  Vocab vocab_;
  std::set<std::string> claimed_;
};

inline ReportTable run_experiment_grid(const GridConfig& cfg,
                                       const std::vector<ExperimentSpec>& specs) {
  ExperimentRunner runner(cfg);
  return runner.run(specs);
}

// One grid row per augmentation size, equal quadruple counts per direction
// (asserted against the manifests inside augmented_synth via make_quadruples'
// own size checks).
inline ReportTable ablate_augmentation_size(const GridConfig& cfg,
                                            const std::vector<int>& sizes,
                                            const std::string& pair) {
  std::vector<ExperimentSpec> specs;
  specs.push_back({"do-nothing", pair, "", -1});
  specs.push_back({"w-langid", pair, "do-nothing", -1});
  for (const int n : sizes)
    specs.push_back({"w-langid+pairs", pair, "w-langid", n});

  ExperimentRunner runner(cfg);
  ReportTable table;
  std::map<std::string, MetricReport> reports;
  for (auto& spec : specs) {
    ReportRow row;
    row.system = spec.augment_n > 0
                     ? spec.system + "@" + std::to_string(spec.augment_n)
                     : spec.system;
    row.pair = spec.pair;
    try {
      // Each size trains in its own directory so checkpoints never collide.
      GridConfig sized = cfg;
      if (spec.augment_n > 0)
        sized.out_dir = cfg.out_dir + "/ablate-n" + std::to_string(spec.augment_n);
      ExperimentRunner* active = &runner;
      std::optional<ExperimentRunner> own;
      if (spec.augment_n > 0) {
        own.emplace(sized);
        active = &*own;
      }
      const MetricReport rep = active->run_system(spec, &row);
      reports[row.system] = rep;
      row.ter = rep.ter;
      row.bleu = rep.bleu;
      const auto base = reports.find(spec.baseline);
      if (base != reports.end())
        row.p = significance_test(rep.stats, base->second.stats,
                                  cfg.significance_trials,
                                  derive_seed(cfg.significance_seed, row.system));
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace mape
