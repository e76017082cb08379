// Umbrella command-line entry point for the post-editing workbench. Every
// pipeline step is a subcommand over the on-disk corpus layout, so a full
// experiment can be scripted end to end without touching the library.

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "mape/experiment.hpp"
#include "mape/translator.hpp"

namespace {

using namespace mape;

std::unique_ptr<ExternalTranslator> make_translator(const std::string& spec) {
  auto rest = [&](std::size_t prefix_len) { return spec.substr(prefix_len); };
  if (spec == "toy-exact")
    return std::make_unique<toy::ExactToyTranslator>(toy::ToySpec{});
  if (spec.rfind("toy-noisy:", 0) == 0)
    return std::make_unique<toy::NoisyToyTranslator>(toy::ToySpec{},
                                                     std::stoull(rest(10)));
  if (spec.rfind("cipher:", 0) == 0)
    return std::make_unique<CipherTranslator>(std::stoull(rest(7)));
  if (spec.rfind("cmd:", 0) == 0)
    return std::make_unique<CommandTranslator>(rest(4));
  throw ConfigError(
      "unknown translator spec: " + spec +
      " (expected toy-exact, toy-noisy:SEED, cipher:SEED, or cmd:TEMPLATE)");
}

// Language registry for standalone corpora: whatever target codes appear.
LangRegistry registry_of(const Corpus& corpus) {
  LangRegistry reg;
  for (const auto& t : corpus.triplets) {
    reg.add(t.source_lang.code);
    reg.add(t.target_lang.code);
  }
  return reg;
}

std::vector<Tokens> tokenize_file(const std::string& path) {
  std::vector<Tokens> out;
  for (const auto& line : read_lines(path)) out.push_back(tokenize(line));
  return out;
}

std::vector<SentenceStats> sentence_stats(const std::vector<Tokens>& hyps,
                                          const std::vector<Tokens>& refs) {
  std::vector<SentenceStats> stats;
  stats.reserve(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto r = ter(hyps[i], refs[i]);
    stats.push_back({static_cast<double>(r.trace.total_edits()),
                     static_cast<double>(refs[i].size())});
  }
  return stats;
}

// ---- subcommand bodies ----------------------------------------------------------

int cmd_gen_toy(const toy::ToySpec& spec, const std::string& out) {
  const auto data = toy::generate(spec);
  toy::write(data, out);
  for (const toy::ToyPair* p : {&data.eng_hin, &data.eng_mar})
    std::printf("eng-%s\tnmt %zu/%zu\tsynth %zu/%zu\tauth %zu/%zu\ttest %zu\n",
                p->target.code.c_str(), p->nmt_train.items.size(),
                p->nmt_dev.items.size(), p->synth_train.size(),
                p->synth_dev.size(), p->auth_train.size(), p->auth_dev.size(),
                p->test.size());
  return 0;
}

int cmd_build_synthetic(const std::string& parallel_dir,
                        const std::string& translator_spec,
                        const std::string& domain, const std::string& out) {
  const auto parallel = load_parallel_dir(parallel_dir);
  const auto translator = make_translator(translator_spec);
  const Corpus corpus = build_synthetic_triplets(parallel, *translator, domain);
  save_corpus(corpus, out);
  std::printf("triplets\t%zu\n", corpus.size());
  return 0;
}

int cmd_merge(const std::vector<std::string>& in_dirs, const std::string& out,
              std::uint64_t seed, const std::string& langid) {
  std::vector<Corpus> parts;
  parts.reserve(in_dirs.size());
  for (const auto& dir : in_dirs) parts.push_back(load_corpus_dir(dir));
  Corpus merged = merge_multilingual(parts, seed);
  if (!langid.empty())
    merged = prefix_langid(std::move(merged), langid_mode_from_string(langid),
                           registry_of(merged));
  save_corpus(merged, out);
  std::printf("triplets\t%zu\n", merged.size());
  return 0;
}

int cmd_split_domains(const std::string& in_dir, const std::string& out,
                      const std::vector<std::string>& group_specs) {
  std::map<std::string, std::string> grouping;
  for (const auto& g : group_specs) {
    const auto eq = g.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == g.size())
      throw ConfigError("bad --group (expected DOMAIN=GROUP): " + g);
    grouping[g.substr(0, eq)] = g.substr(eq + 1);
  }
  const Corpus corpus = load_corpus_dir(in_dir);
  for (const auto& [group, sub] : split_by_domain(corpus, grouping)) {
    save_corpus(sub, out + "/" + group);
    std::printf("%s\t%zu\n", group.c_str(), sub.size());
  }
  return 0;
}

int cmd_augment(const std::string& corpus_dir,
                const std::string& translator_spec, const std::string& to_code,
                const std::string& mode, int n, std::uint64_t seed,
                const std::string& sep, const std::string& out) {
  const Corpus corpus = load_corpus_dir(corpus_dir);
  const auto translator = make_translator(translator_spec);
  const auto quads = make_quadruples(corpus, *translator, LangId{to_code},
                                     static_cast<std::size_t>(n), seed);
  Corpus extra;
  if (mode == "pairs")
    extra = additional_pair_triplets(quads);
  else if (mode == "candidates")
    extra = external_candidate_triplets(quads, sep);
  else
    throw ConfigError("unknown augmentation mode: " + mode);
  save_corpus(extra, out);
  std::printf("quadruples\t%zu\ntriplets\t%zu\n", quads.size(), extra.size());
  return 0;
}

int cmd_annotate_qe(const std::string& corpus_dir, const std::string& da_file,
                    const std::string& norm, double da_lo, double da_hi,
                    const std::string& out) {
  Corpus corpus = annotate_word_tags(load_corpus_dir(corpus_dir));
  if (!da_file.empty()) {
    // One decimal score or the literal NA per line, aligned with the corpus.
    const auto lines = read_lines(da_file);
    if (lines.size() != corpus.size())
      throw DataError("score file has " + std::to_string(lines.size()) +
                      " lines for a corpus of " + std::to_string(corpus.size()));
    std::map<std::size_t, double> scores;
    for (std::size_t i = 0; i < lines.size(); ++i)
      if (lines[i] != "NA") scores[i] = std::stod(lines[i]);
    corpus = attach_da(std::move(corpus), scores, {da_lo, da_hi});
  }
  if (!norm.empty())
    corpus = normalize_da(std::move(corpus), da_norm_from_string(norm));
  save_corpus(corpus, out.empty() ? corpus_dir : out);
  std::size_t with_da = 0;
  for (const auto& a : corpus.annotations)
    if (a.da_available()) ++with_da;
  std::printf("tagged\t%zu\nscored\t%zu\n", corpus.size(), with_da);
  return 0;
}

int cmd_evaluate(const std::string& hyp_path, const std::string& ref_path,
                 bool per_sentence) {
  const auto hyps = tokenize_file(hyp_path);
  const auto refs = tokenize_file(ref_path);
  if (hyps.size() != refs.size())
    throw DataError("line count mismatch: " + std::to_string(hyps.size()) +
                    " vs " + std::to_string(refs.size()));
  if (per_sentence)
    for (std::size_t i = 0; i < hyps.size(); ++i)
      std::printf("%zu\t%.2f\n", i, 100.0 * ter(hyps[i], refs[i]).score);
  std::printf("TER\t%.2f\n", 100.0 * ter_corpus(hyps, refs));
  std::printf("BLEU\t%.2f\n", bleu(hyps, refs));
  return 0;
}

int cmd_significance(const std::string& a_path, const std::string& b_path,
                     const std::string& ref_path, int trials,
                     std::uint64_t seed) {
  const auto a = tokenize_file(a_path);
  const auto b = tokenize_file(b_path);
  const auto refs = tokenize_file(ref_path);
  if (a.size() != refs.size() || b.size() != refs.size())
    throw DataError("systems and reference are not line-aligned");
  std::printf("ter_a\t%.2f\n", 100.0 * ter_corpus(a, refs));
  std::printf("ter_b\t%.2f\n", 100.0 * ter_corpus(b, refs));
  const double p = significance_test(sentence_stats(a, refs),
                                     sentence_stats(b, refs), trials, seed);
  std::printf("p\t%.4f\n", p);
  return 0;
}

struct TrainArgs {
  std::string data, out, stage = "full", mode = "single", config;
  std::string langid = "all", augment_kind, single_pair;
  int augment_n = 200;
  int bpe_merges = 400;
  bool resume = false;
  bool paper_scale = false;
};

int cmd_train(const TrainArgs& args) {
  GridConfig gc;
  gc.data_dir = args.data;
  gc.out_dir = args.out;
  gc.bpe_merges = args.bpe_merges;
  gc.augment_n = args.augment_n;
  if (args.paper_scale)
    gc.train = TrainConfig{};  // library defaults mirror the full-scale recipe
  else if (!args.config.empty())
    gc.train = load_train_config(args.config);

  ExperimentRunner runner(gc);
  const TrainMode tm = train_mode_from_string(args.mode);
  const CtsInputs inputs =
      args.single_pair.empty()
          ? runner.build_inputs(langid_mode_from_string(args.langid), tm,
                                args.augment_kind, args.augment_n)
          : runner.single_pair_inputs(args.single_pair);

  std::string stop_after;
  if (args.stage == "nmt" || args.stage == "synthetic-phase1" ||
      args.stage == "synthetic-phase2")
    stop_after = args.stage;
  else if (args.stage != "full")
    throw ConfigError("unknown stage: " + args.stage +
                      " (expected nmt, synthetic-phase1, synthetic-phase2, "
                      "or full)");

  std::filesystem::create_directories(args.out);
  TrainLogWriter log(args.out + "/trainlog.jsonl", args.resume);
  const CtsResult result = run_cts(inputs, runner.config().train, tm, args.out,
                                   args.resume, log, stop_after);
  for (const auto& s : result.stages_run) std::printf("trained\t%s\n", s.c_str());
  for (const auto& s : result.stages_reused)
    std::printf("reused\t%s\n", s.c_str());
  if (!result.final_checkpoint.empty())
    std::printf("checkpoint\t%s\n", result.final_checkpoint.c_str());
  for (const auto& [domain, path] : result.domain_checkpoints)
    std::printf("checkpoint.%s\t%s\n", domain.c_str(), path.c_str());
  return 0;
}

int cmd_decode(const std::string& ckpt, const std::string& corpus_dir,
               int beam, const std::string& langid, const std::string& out) {
  const auto loaded = load_checkpoint(ckpt);
  Corpus corpus = load_corpus_dir(corpus_dir);
  if (!langid.empty())
    corpus = prefix_langid(std::move(corpus), langid_mode_from_string(langid),
                           registry_of(corpus));
  const auto hyps = decode_corpus(loaded.model, loaded.vocab, corpus, beam);
  std::vector<std::string> lines;
  lines.reserve(hyps.size());
  for (const auto& h : hyps) lines.push_back(join(h));
  if (out.empty())
    for (const auto& line : lines) std::printf("%s\n", line.c_str());
  else
    write_lines(out, lines);
  return 0;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const auto end = comma == std::string::npos ? csv.size() : comma;
    if (end > start) out.push_back(csv.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Exit code 2 flags completed-but-imperfect grids (some row failed); real
// harness faults surface as exceptions and exit 1 from main.
int cmd_report(const std::string& grid_file, const std::string& systems_csv,
               const std::string& pairs_csv, const std::string& tsv_out,
               bool human) {
  const GridConfig cfg = load_grid_config(grid_file);
  std::vector<ExperimentSpec> specs = default_grid();
  const auto systems = split_list(systems_csv);
  const auto pairs = split_list(pairs_csv);
  auto keep = [](const std::vector<std::string>& allow, const std::string& v) {
    return allow.empty() ||
           std::find(allow.begin(), allow.end(), v) != allow.end();
  };
  std::erase_if(specs, [&](const ExperimentSpec& s) {
    return !keep(systems, s.system) || !keep(pairs, s.pair);
  });
  if (specs.empty()) throw ConfigError("system/pair filter matched no rows");

  const ReportTable table = run_experiment_grid(cfg, specs);
  const std::string tsv = table.tsv();
  std::fputs(tsv.c_str(), stdout);
  if (!tsv_out.empty()) write_file(tsv_out, tsv);
  if (human) std::fputs(table.human().c_str(), stdout);
  return table.any_failed() ? 2 : 0;
}

int cmd_ablate(const std::string& grid_file, const std::string& sizes_csv,
               const std::string& pair) {
  const GridConfig cfg = load_grid_config(grid_file);
  std::vector<int> sizes;
  for (const auto& s : split_list(sizes_csv)) sizes.push_back(std::stoi(s));
  if (sizes.empty()) throw ConfigError("--sizes is empty");
  const ReportTable table = ablate_augmentation_size(cfg, sizes, pair);
  std::fputs(table.tsv().c_str(), stdout);
  return table.any_failed() ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multilingual automatic post-editing workbench"};
  app.require_subcommand(1);

  // gen-toy
  toy::ToySpec toy_spec;
  std::string toy_out;
  auto* gen_toy = app.add_subcommand("gen-toy", "generate the toy corpus tree");
  gen_toy->add_option("--out", toy_out, "output directory")->required();
  gen_toy->add_option("--seed", toy_spec.seed, "generation seed");
  gen_toy->add_option("--nmt-train", toy_spec.nmt_train, "parallel train size");
  gen_toy->add_option("--nmt-dev", toy_spec.nmt_dev, "parallel dev size");
  gen_toy->add_option("--synth-train", toy_spec.synth_train,
                      "synthetic train size");
  gen_toy->add_option("--synth-dev", toy_spec.synth_dev, "synthetic dev size");
  gen_toy->add_option("--auth-train", toy_spec.auth_train,
                      "authentic train size");
  gen_toy->add_option("--auth-dev", toy_spec.auth_dev, "authentic dev size");
  gen_toy->add_option("--test", toy_spec.test, "test size per pair");

  // build-synthetic
  std::string bs_parallel, bs_translator, bs_domain = "general", bs_out;
  auto* build_synth = app.add_subcommand(
      "build-synthetic", "make triplets from parallel text plus a translator");
  build_synth->add_option("--parallel", bs_parallel, "parallel corpus dir")
      ->required();
  build_synth
      ->add_option("--translator", bs_translator,
                   "toy-exact | toy-noisy:SEED | cipher:SEED | cmd:TEMPLATE")
      ->required();
  build_synth->add_option("--domain", bs_domain, "domain label");
  build_synth->add_option("--out", bs_out, "output corpus dir")->required();

  // merge
  std::vector<std::string> merge_in;
  std::string merge_out, merge_langid;
  std::uint64_t merge_seed = 1;
  auto* merge = app.add_subcommand("merge", "shuffle corpora together");
  merge->add_option("--in", merge_in, "input corpus dirs")->required();
  merge->add_option("--out", merge_out, "output corpus dir")->required();
  merge->add_option("--seed", merge_seed, "shuffle seed");
  merge->add_option("--langid-mode", merge_langid,
                    "none | only-authentic | all");

  // split-domains
  std::string sd_in, sd_out;
  std::vector<std::string> sd_groups;
  auto* split_domains =
      app.add_subcommand("split-domains", "partition a corpus by domain");
  split_domains->add_option("--in", sd_in, "input corpus dir")->required();
  split_domains->add_option("--out", sd_out, "output directory root")
      ->required();
  split_domains->add_option("--group", sd_groups,
                            "DOMAIN=GROUP remapping (repeatable)");

  // augment
  std::string aug_corpus, aug_translator, aug_to, aug_mode, aug_sep = "<sep>";
  std::string aug_out;
  int aug_n = 0;
  std::uint64_t aug_seed = 1;
  auto* augment = app.add_subcommand(
      "augment", "build cross-lingual triplets from external translations");
  augment->add_option("--corpus", aug_corpus, "triplet corpus dir")->required();
  augment->add_option("--translator", aug_translator, "translator spec")
      ->required();
  augment->add_option("--to", aug_to, "external language code")->required();
  augment->add_option("--mode", aug_mode, "pairs | candidates")->required();
  augment->add_option("--n", aug_n, "quadruples to draw")->required();
  augment->add_option("--seed", aug_seed, "sampling seed");
  augment->add_option("--sep", aug_sep, "candidate separator token");
  augment->add_option("--out", aug_out, "output corpus dir")->required();

  // annotate-qe
  std::string qe_corpus, qe_da, qe_norm, qe_out;
  double qe_lo = 0.0, qe_hi = 100.0;
  auto* annotate =
      app.add_subcommand("annotate-qe", "attach word tags and quality scores");
  annotate->add_option("--corpus", qe_corpus, "corpus dir")->required();
  annotate->add_option("--da", qe_da, "score file (decimal or NA per line)");
  annotate->add_option("--norm", qe_norm, "identity | zscore | minmax");
  annotate->add_option("--da-lo", qe_lo, "declared score minimum");
  annotate->add_option("--da-hi", qe_hi, "declared score maximum");
  annotate->add_option("--out", qe_out, "output dir (default: in place)");

  // evaluate
  std::string ev_hyp, ev_ref;
  bool ev_per_sentence = false;
  auto* evaluate = app.add_subcommand("evaluate", "score a hypothesis file");
  evaluate->add_option("--hyp", ev_hyp, "hypothesis file")->required();
  evaluate->add_option("--ref", ev_ref, "reference file")->required();
  evaluate->add_flag("--per-sentence", ev_per_sentence,
                     "per-sentence TER rows");

  // significance
  std::string sig_a, sig_b, sig_ref;
  int sig_trials = 2000;
  std::uint64_t sig_seed = 17;
  auto* significance = app.add_subcommand(
      "significance", "paired approximate randomization on TER");
  significance->add_option("--a", sig_a, "system A hypotheses")->required();
  significance->add_option("--b", sig_b, "system B hypotheses")->required();
  significance->add_option("--ref", sig_ref, "shared references")->required();
  significance->add_option("--trials", sig_trials, "randomization trials");
  significance->add_option("--seed", sig_seed, "randomization seed");

  // train
  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "run the training curriculum");
  train->add_option("--data", train_args.data, "toy corpus tree")->required();
  train->add_option("--out", train_args.out, "checkpoint directory")
      ->required();
  train->add_option("--stage", train_args.stage,
                    "nmt | synthetic-phase1 | synthetic-phase2 | full");
  train->add_option("--mode", train_args.mode,
                    "single | ls-mtl | nash-mtl | domain-adapt");
  auto* train_config =
      train->add_option("--config", train_args.config,
                        "training config (flat key-value or JSON)");
  train->add_flag("--resume", train_args.resume,
                  "reuse finished stage checkpoints");
  train->add_option("--langid-mode", train_args.langid,
                    "none | only-authentic | all");
  train->add_option("--augment", train_args.augment_kind,
                    "pairs | candidates (synthetic-stage augmentation)");
  train->add_option("--augment-n", train_args.augment_n,
                    "quadruples per direction");
  train->add_option("--single-pair", train_args.single_pair,
                    "train on one pair only (eng-hin | eng-mar)");
  train->add_option("--bpe-merges", train_args.bpe_merges, "subword merges");
  train->add_flag("--paper-scale", train_args.paper_scale,
                  "full-scale hyperparameters instead of a config file")
      ->excludes(train_config);

  // decode
  std::string dec_ckpt, dec_corpus, dec_langid, dec_out;
  int dec_beam = 5;
  auto* decode = app.add_subcommand("decode", "post-edit a corpus");
  decode->add_option("--ckpt", dec_ckpt, "checkpoint file")->required();
  decode->add_option("--corpus", dec_corpus, "corpus dir")->required();
  decode->add_option("--beam", dec_beam, "beam width");
  decode->add_option("--langid-mode", dec_langid,
                     "prefix sources before decoding");
  decode->add_option("--out", dec_out, "hypothesis file (default: stdout)");

  // report
  std::string rep_grid, rep_systems, rep_pairs, rep_tsv;
  bool rep_human = false;
  auto* report = app.add_subcommand("report", "run the experiment grid");
  report->add_option("--grid", rep_grid, "grid config file")->required();
  report->add_option("--systems", rep_systems, "comma list filter");
  report->add_option("--pairs", rep_pairs, "comma list filter");
  report->add_option("--tsv", rep_tsv, "also write the TSV here");
  report->add_flag("--human", rep_human, "append the readable table");

  // ablate
  std::string ab_grid, ab_sizes, ab_pair = "eng-hin";
  auto* ablate =
      app.add_subcommand("ablate", "sweep augmentation sizes for one pair");
  ablate->add_option("--grid", ab_grid, "grid config file")->required();
  ablate->add_option("--sizes", ab_sizes, "comma list of quadruple counts")
      ->required();
  ablate->add_option("--pair", ab_pair, "language pair");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_toy->parsed()) return cmd_gen_toy(toy_spec, toy_out);
    if (build_synth->parsed())
      return cmd_build_synthetic(bs_parallel, bs_translator, bs_domain, bs_out);
    if (merge->parsed())
      return cmd_merge(merge_in, merge_out, merge_seed, merge_langid);
    if (split_domains->parsed())
      return cmd_split_domains(sd_in, sd_out, sd_groups);
    if (augment->parsed())
      return cmd_augment(aug_corpus, aug_translator, aug_to, aug_mode, aug_n,
                         aug_seed, aug_sep, aug_out);
    if (annotate->parsed())
      return cmd_annotate_qe(qe_corpus, qe_da, qe_norm, qe_lo, qe_hi, qe_out);
    if (evaluate->parsed())
      return cmd_evaluate(ev_hyp, ev_ref, ev_per_sentence);
    if (significance->parsed())
      return cmd_significance(sig_a, sig_b, sig_ref, sig_trials, sig_seed);
    if (train->parsed()) return cmd_train(train_args);
    if (decode->parsed())
      return cmd_decode(dec_ckpt, dec_corpus, dec_beam, dec_langid, dec_out);
    if (report->parsed())
      return cmd_report(rep_grid, rep_systems, rep_pairs, rep_tsv, rep_human);
    if (ablate->parsed()) return cmd_ablate(ab_grid, ab_sizes, ab_pair);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
