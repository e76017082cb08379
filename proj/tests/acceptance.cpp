// Acceptance suite: one line of output per criterion, nonzero exit when any
// criterion fails. Each check is independent and self-describing; the later
// pipeline criteria reuse artifacts produced by the earlier ones when
// available and fail honestly when they are not.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mape/experiment.hpp"
#include "mape/losses.hpp"
#include "mape/nash.hpp"
#include "ter_oracle.hpp"

#ifndef MAPE_REPO_ROOT
#define MAPE_REPO_ROOT "."
#endif

namespace {

using namespace mape;
namespace fs = std::filesystem;

const std::string kRoot = MAPE_REPO_ROOT;
const std::string kTmp = "acceptance_tmp";

int g_failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

using Verdict = std::pair<bool, std::string>;

void run_criterion(int id, const std::function<Verdict()>& body) {
  try {
    const auto [pass, detail] = body();
    report(id, pass, detail);
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

// ---- 1: greedy TER against the exhaustive-shift oracle ---------------------------

std::string letters(const std::vector<int>& seq) {
  std::string out;
  for (const int s : seq) out.push_back(static_cast<char>('a' + s));
  return out;
}

Verdict ter_oracle_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  // Enumerate canonical classes directly: symbols are named by first
  // appearance (reference first, then hypothesis), at most four distinct
  // symbols, reference lengths 1..5, hypothesis lengths 0..5. Every raw
  // pair over a 4-symbol alphabet canonicalizes to exactly one such class.
  long long classes = 0;
  std::set<std::string> gaps;
  std::string below_oracle;  // would mean the "oracle" is not an upper bound
  std::vector<int> ref, hyp;
  int hyp_target = 0;

  auto evaluate = [&] {
    ++classes;
    const int greedy = ter_ids(hyp, ref).trace.total_edits();
    const int oracle = terbrute::min_edits(hyp, ref);
    if (greedy < oracle && below_oracle.empty())
      below_oracle = "ref=" + letters(ref) + " hyp=" + letters(hyp);
    if (greedy > oracle)
      gaps.insert("ref=" + letters(ref) + " hyp=" + letters(hyp) +
                  " gap=" + std::to_string(greedy - oracle));
  };
  std::function<void(int)> fill_hyp = [&](int used) {
    if (static_cast<int>(hyp.size()) == hyp_target) {
      evaluate();
      return;
    }
    const int options = std::min(used + 1, 4);
    for (int s = 0; s < options; ++s) {
      hyp.push_back(s);
      fill_hyp(std::max(used, s + 1));
      hyp.pop_back();
    }
  };
  int ref_target = 1;
  std::function<void(int)> fill_ref = [&](int used) {
    if (static_cast<int>(ref.size()) == ref_target) {
      for (hyp_target = 0; hyp_target <= 5; ++hyp_target) fill_hyp(used);
      return;
    }
    const int options = std::min(used + 1, 4);
    for (int s = 0; s < options; ++s) {
      ref.push_back(s);
      fill_ref(std::max(used, s + 1));
      ref.pop_back();
    }
  };
  for (ref_target = 1; ref_target <= 5; ++ref_target) fill_ref(0);

  // Every gap case must appear in the committed inventory and vice versa.
  std::set<std::string> documented;
  for (const auto& line : read_lines(kRoot + "/tests/data/ter_greedy_gaps.txt"))
    if (!line.empty() && line[0] != '#') documented.insert(line);

  long long undocumented = 0, vanished = 0;
  for (const auto& g : gaps)
    if (!documented.count(g)) ++undocumented;
  for (const auto& d : documented)
    if (!gaps.count(d)) ++vanished;

  const double elapsed = seconds_since(t0);
  const bool pass = below_oracle.empty() && undocumented == 0 &&
                    vanished == 0 && elapsed < 120.0;
  std::string detail = fmt(
      "%lld classes swept, %zu gap cases all documented (%lld undocumented, "
      "%lld stale), %.1fs",
      classes, gaps.size(), undocumented, vanished, elapsed);
  if (!below_oracle.empty())
    detail += " BUT greedy beat the oracle at " + below_oracle;
  return {pass, detail};
}

// ---- 2: BLEU worked example and extremes ------------------------------------------

Verdict bleu_hand_check() {
  const std::vector<Tokens> hyp{split_whitespace("a b c d")};
  const std::vector<Tokens> ref{split_whitespace("a b c d e")};
  const double worked = bleu(hyp, ref);  // precisions 1, brevity e^(-1/4)

  const std::vector<Tokens> same{split_whitespace("x y z w"),
                                 split_whitespace("p q r s")};
  const double identity = bleu(same, same);
  const double disjoint =
      bleu({split_whitespace("a b c d")}, {split_whitespace("e f g h")});

  const bool pass = std::abs(worked - 77.8800783) <= 0.01 &&
                    identity == 100.0 && disjoint == 0.0;
  return {pass, fmt("worked example %.7f (want 77.8800783 +/- 0.01), "
                    "identity %.2f, disjoint %.2f",
                    worked, identity, disjoint)};
}

// ---- 3: Nash bargaining solver -----------------------------------------------------

Verdict nash_solver() {
  Rng rng(20260816);
  int solved = 0;
  double worst_residual = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(4));
    const int d = 1 + static_cast<int>(rng.below(64));
    std::vector<Eigen::VectorXd> grads;
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd g(d);
      for (int j = 0; j < d; ++j) g(j) = rng.uniform(-1.0, 1.0);
      grads.push_back(std::move(g));
    }
    // Draws with k > d have singular Gram matrices, where the exact solution
    // runs to infinity along the null space and rounding floors the residual
    // near 1e-7. The solver is therefore asked for the tolerance this check
    // enforces rather than its tighter training default.
    const auto res = nash_combine(grads, 1e-6);
    if (res.diag.fallback_uniform) continue;
    if (static_cast<int>(res.diag.kept.size()) != k) continue;
    if ((res.diag.weights.array() <= 0.0).any()) continue;
    // Residual recomputed here, independent of the solver's own bookkeeping.
    Eigen::MatrixXd M(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) M(i, j) = grads[i].dot(grads[j]);
    const Eigen::VectorXd r =
        M * res.diag.weights - res.diag.weights.cwiseInverse();
    const double residual = r.cwiseAbs().maxCoeff();
    worst_residual = std::max(worst_residual, residual);
    if (residual <= 1e-6) ++solved;
  }

  // Closed forms. One task: alpha = 1/|g|, update = g/|g|. Orthogonal pair:
  // alpha_i = 1/|g_i|, update has unit component along each direction. Two
  // identical tasks: alpha = 1/(sqrt(2)|g|), update = sqrt(2) g/|g|.
  double closed_err = 0.0;
  {
    Eigen::VectorXd g(2);
    g << 3, 4;
    const auto one = nash_combine({g});
    closed_err = std::max(closed_err, std::abs(one.diag.weights(0) - 0.2));
    closed_err = std::max(closed_err, (one.update - g / 5.0).cwiseAbs().maxCoeff());

    Eigen::VectorXd a(2), b(2);
    a << 2, 0;
    b << 0, 4;
    const auto ortho = nash_combine({a, b});
    closed_err = std::max(closed_err, std::abs(ortho.diag.weights(0) - 0.5));
    closed_err = std::max(closed_err, std::abs(ortho.diag.weights(1) - 0.25));
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
    closed_err = std::max(closed_err, (ortho.update - ones).cwiseAbs().maxCoeff());

    Eigen::VectorXd c(3);
    c << 1, 2, 2;
    const auto same = nash_combine({c, c});
    const double w = 1.0 / (std::sqrt(2.0) * c.norm());
    closed_err = std::max(closed_err, std::abs(same.diag.weights(0) - w));
    closed_err = std::max(closed_err, std::abs(same.diag.weights(1) - w));
    const Eigen::VectorXd u = std::sqrt(2.0) * c / c.norm();
    closed_err = std::max(closed_err, (same.update - u).cwiseAbs().maxCoeff());
  }

  // Scale invariance of the combined update, with linear scalarization as
  // the negative control (it must NOT be invariant).
  double worst_rel = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(3));
    const int d = 4 + static_cast<int>(rng.below(61));
    std::vector<Eigen::VectorXd> base, scaled;
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd g(d);
      for (int j = 0; j < d; ++j) g(j) = rng.uniform(-1.0, 1.0);
      scaled.push_back(rng.uniform(0.1, 10.0) * g);
      base.push_back(std::move(g));
    }
    const auto u1 = nash_combine(base);
    const auto u2 = nash_combine(scaled);
    const double rel = (u1.update - u2.update).norm() /
                       std::max(1e-12, u1.update.norm());
    worst_rel = std::max(worst_rel, rel);
  }
  const bool ls_sensitive =
      ls_combine({1.0, 1.0, 1.0}) != ls_combine({10.0, 1.0, 1.0});

  const bool pass = solved == 1000 && closed_err <= 1e-8 &&
                    worst_rel <= 1e-6 && ls_sensitive;
  return {pass, fmt("%d/1000 instances at residual<=1e-6 (worst %.2e), "
                    "closed forms err %.2e, rescaling drift %.2e, "
                    "scalarization control %s",
                    solved, worst_residual, closed_err, worst_rel,
                    ls_sensitive ? "sensitive" : "INSENSITIVE")};
}

// ---- shared tiny-model scaffolding for 4/5/6 -------------------------------------

Vocab micro_vocab() {
  const std::vector<Tokens> text = {
      split_whitespace("hello world again"),
      split_whitespace("world peace now hello"),
      split_whitespace("again and again world"),
      split_whitespace("peace and quiet now"),
  };
  return Vocab::train(text, 64, {"<sep>", "hin_Toy", "mar_Toy"});
}

ModelConfig micro_config(const Vocab& v, bool qe) {
  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(v.size());
  cfg.embed_dim = 16;
  cfg.ff_dim = 24;
  cfg.heads = 2;
  cfg.encoder_layers = 2;
  cfg.decoder_layers = 2;
  cfg.max_len = 32;
  cfg.mode = ModelMode::PostEditing;
  cfg.qe_heads = qe;
  return cfg;
}

Example micro_example(const Vocab& v, bool with_da, bool with_tags) {
  Example ex;
  ex.src_ids = v.encode(split_whitespace("hin_Toy hello world"));
  const auto enc = v.encode_with_word_starts(split_whitespace("world again"));
  ex.trans_ids = enc.ids;
  ex.trans_word_starts = enc.word_starts;
  const auto tgt = v.encode(split_whitespace("world peace"));
  ex.tgt_in.push_back(v.bos_id());
  ex.tgt_in.insert(ex.tgt_in.end(), tgt.begin(), tgt.end());
  ex.tgt_out = tgt;
  ex.tgt_out.push_back(v.eos_id());
  if (with_da) ex.da = 0.4;
  if (with_tags) ex.word_labels = {0, 1};
  return ex;
}

// ---- 4: analytic gradients against central finite differences --------------------

Verdict gradient_check() {
  const Vocab v = micro_vocab();
  ApeModel<double> model(micro_config(v, true), 3);
  Batch batch;
  batch.examples.push_back(micro_example(v, true, true));
  batch.examples.push_back(micro_example(v, false, true));

  auto batch_loss = [&] {
    const auto g = collect_task_gradients(model, batch, ApeReduction::Sum);
    return g.losses.ape + g.losses.sent + g.losses.word;
  };
  const auto grads = collect_task_gradients(model, batch, ApeReduction::Sum);
  auto params = model.params();

  Rng probe(23);
  const double eps = 1e-5;
  double worst = 0.0;
  for (int checked = 0; checked < 32; ++checked) {
    const auto pi = probe.below(params.size());
    Param<double>* p = params[pi];
    const auto r = static_cast<Eigen::Index>(
        probe.below(static_cast<std::uint64_t>(p->value.rows())));
    const auto c = static_cast<Eigen::Index>(
        probe.below(static_cast<std::uint64_t>(p->value.cols())));
    const double analytic =
        grads.ape[pi](r, c) + grads.sent[pi](r, c) + grads.word[pi](r, c);
    const double saved = p->value(r, c);
    p->value(r, c) = saved + eps;
    const double up = batch_loss();
    p->value(r, c) = saved - eps;
    const double dn = batch_loss();
    p->value(r, c) = saved;
    const double fd = (up - dn) / (2 * eps);
    const double rel = std::abs(fd - analytic) /
                       std::max({1.0, std::abs(fd), std::abs(analytic)});
    worst = std::max(worst, rel);
  }
  return {worst <= 1e-4,
          fmt("32 probes, worst relative error %.2e (budget 1e-4)", worst)};
}

// ---- 5: all-masked batches leave the sentence head untouched ----------------------

Verdict masking_check() {
  const Vocab v = micro_vocab();
  ApeModel<float> model(micro_config(v, true), 5);
  Batch batch;
  batch.examples.push_back(micro_example(v, false, true));
  batch.examples.push_back(micro_example(v, false, true));

  const auto grads = collect_task_gradients(model, batch, ApeReduction::Sum);
  bool zero_loss = grads.losses.sent == 0.0 && grads.sent_instances == 0;
  bool bitwise_zero = true;
  long long coeffs = 0;
  auto params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name.rfind("sent_head.", 0) != 0) continue;
    const auto& g = grads.sent[i];
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        ++coeffs;
        if (g(r, c) != 0.0f || std::signbit(g(r, c))) bitwise_zero = false;
      }
  }
  return {zero_loss && bitwise_zero && coeffs > 0,
          fmt("sentence loss %.1f over 0 scored instances, %lld head "
              "gradient coefficients all +0.0: %s",
              grads.losses.sent, coeffs, bitwise_zero ? "yes" : "NO")};
}

// ---- 6: adapters train alone --------------------------------------------------------

Verdict adapter_discipline() {
  const Vocab v = micro_vocab();
  ApeModel<float> model(micro_config(v, false), 13);
  Batch batch;
  batch.examples.push_back(micro_example(v, false, false));
  batch.examples.push_back(micro_example(v, false, false));

  const Mat<float> before = model.logits_for(batch.examples[0]);
  model.insert_adapters(8, 21);
  const Mat<float> after = model.logits_for(batch.examples[0]);
  const float insertion_drift = (before - after).cwiseAbs().maxCoeff();

  model.freeze_except_adapters();
  auto params = model.params();
  std::vector<Mat<float>> snapshot;
  snapshot.reserve(params.size());
  for (const auto* p : params) snapshot.push_back(p->value);

  Adam<float> opt(3e-3, 0.9, 0.997, 10);
  const int steps = 120;
  for (int s = 0; s < steps; ++s) {
    const auto grads = collect_task_gradients(model, batch, ApeReduction::Sum);
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i]->grad = grads.ape[i];
    opt.step(params);
  }

  bool frozen_identical = true;
  bool adapters_moved = false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool is_adapter =
        params[i]->name.find(".adapter.") != std::string::npos;
    const Mat<float>& now = params[i]->value;
    const Mat<float>& was = snapshot[i];
    const bool same =
        now.rows() == was.rows() && now.cols() == was.cols() &&
        std::memcmp(now.data(), was.data(),
                    sizeof(float) * static_cast<std::size_t>(now.size())) == 0;
    if (is_adapter && !same) adapters_moved = true;
    if (!is_adapter && !same) frozen_identical = false;
  }
  const bool pass = insertion_drift <= 1e-6f && frozen_identical &&
                    adapters_moved;
  return {pass, fmt("insertion drift %.2e, %d steps: trunk bitwise %s, "
                    "adapters %s",
                    static_cast<double>(insertion_drift), steps,
                    frozen_identical ? "identical" : "CHANGED",
                    adapters_moved ? "trained" : "UNCHANGED")};
}

// ---- 7: word tags against the edit trace ------------------------------------------

Verdict qe_tags() {
  const toy::ToySpec spec;
  const toy::NoisyToyTranslator noisy(spec, 99);
  Rng rng(7);
  int reconciled = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    Tokens source;
    const int len = 3 + static_cast<int>(rng.below(7));
    for (int i = 0; i < len; ++i)
      source.push_back(toy::source_word(
          static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.source_vocab)))));
    const LangId target = rng.below(2) == 0 ? toy::hin() : toy::mar();
    const Tokens mt = noisy.translate(source, toy::eng(), target);
    const Tokens pe = toy::reference_translation(source, target, spec);
    const auto tags = word_tags(mt, pe);
    if (tags.size() != mt.size()) continue;

    // The tags must mirror the alignment: matched tokens OK, the rest BAD.
    const auto trace = ter(mt, pe).trace;
    std::vector<WordTag> expected(mt.size(), WordTag::Bad);
    bool covered = true;
    std::vector<int> seen(mt.size(), 0);
    for (const auto& link : trace.links) {
      if (link.hyp_index < 0) continue;
      ++seen[static_cast<std::size_t>(link.hyp_index)];
      expected[static_cast<std::size_t>(link.hyp_index)] =
          link.kind == EditKind::Match ? WordTag::Ok : WordTag::Bad;
    }
    for (const int s : seen) covered &= s == 1;
    if (covered && expected == tags) ++reconciled;
  }

  // Degenerate anchors.
  const Tokens same = split_whitespace("h1 c2 h3 c4");
  const auto all_ok = word_tags(same, same);
  const bool identity_ok =
      std::count(all_ok.begin(), all_ok.end(), WordTag::Ok) ==
      static_cast<long>(same.size());
  const auto all_bad =
      word_tags(split_whitespace("x1 x2 x3"), split_whitespace("y1 y2"));
  const bool disjoint_bad =
      std::count(all_bad.begin(), all_bad.end(), WordTag::Bad) == 3;

  const bool pass = reconciled == trials && identity_ok && disjoint_bad;
  return {pass, fmt("%d/%d random pairs reconciled with the edit trace, "
                    "identity all OK: %s, disjoint all BAD: %s",
                    reconciled, trials, identity_ok ? "yes" : "NO",
                    disjoint_bad ? "yes" : "NO")};
}

// ---- 8: the full curriculum on the shipped corpora --------------------------------

struct PipelineOutcome {
  std::string checkpoint;
  GridConfig cfg;
  bool ready = false;
};
PipelineOutcome g_pipeline;

Verdict toy_pipeline() {
  const auto t0 = std::chrono::steady_clock::now();
  GridConfig cfg;
  cfg.data_dir = kRoot + "/data/toy";
  cfg.out_dir = kTmp + "/pipeline";
  cfg.train = load_train_config(kRoot + "/configs/toy.cfg");
  cfg.beam = 5;
  cfg.bpe_merges = 150;
  cfg.augment_n = 100;
  cfg.resume = false;
  fs::remove_all(cfg.out_dir);

  ExperimentRunner runner(cfg);
  const MetricReport dn_hin = runner.run_system({"do-nothing", "eng-hin", ""});
  const MetricReport dn_mar = runner.run_system({"do-nothing", "eng-mar", ""});
  const MetricReport wl_hin =
      runner.run_system({"w-langid", "eng-hin", "do-nothing"});
  const MetricReport wl_mar =
      runner.run_system({"w-langid", "eng-mar", "do-nothing"});
  const double elapsed = seconds_since(t0);

  const double delta_hin = dn_hin.ter - wl_hin.ter;
  const double delta_mar = dn_mar.ter - wl_mar.ter;
  const bool pass =
      elapsed < 600.0 && delta_hin >= 10.0 && delta_mar >= 10.0;
  if (pass) {
    g_pipeline.checkpoint = cfg.out_dir + "/w-langid/final.ckpt";
    g_pipeline.cfg = cfg;
    g_pipeline.ready = true;
  }
  return {pass, fmt("curriculum+decode in %.1fs (budget 600); TER "
                    "do-nothing vs system: eng-hin %.2f -> %.2f (+%.2f), "
                    "eng-mar %.2f -> %.2f (+%.2f), need >= 10.00",
                    elapsed, dn_hin.ter, wl_hin.ter, delta_hin, dn_mar.ter,
                    wl_mar.ter, delta_mar)};
}

// ---- 9: decoded outputs stay inside the selected language --------------------------

Verdict language_conditioning() {
  if (!g_pipeline.ready)
    return {false, "pipeline artifacts unavailable (criterion 8 failed)"};
  const auto loaded = load_checkpoint(g_pipeline.checkpoint);
  const toy::ToyData data = toy::load(g_pipeline.cfg.data_dir);
  const auto registry = toy::registry();
  // The shipped corpora use the default rewrite rules, so the default spec
  // names each language's full surface vocabulary.
  const toy::ToySpec spec;

  int pure = 0, total = 0;
  for (const toy::ToyPair* p : {&data.eng_hin, &data.eng_mar}) {
    const auto allowed = toy::language_vocabulary(p->target, spec);
    const Corpus test =
        prefix_langid(p->test, LangIdMode::All, registry);
    const auto hyps =
        decode_corpus(loaded.model, loaded.vocab, test, g_pipeline.cfg.beam);
    for (const auto& hyp : hyps) {
      ++total;
      bool ok = !hyp.empty();  // an empty output conditions on nothing
      for (const auto& tok : hyp) ok &= allowed.count(tok) > 0;
      if (ok) ++pure;
    }
  }
  const double share = total == 0 ? 0.0 : 100.0 * pure / total;
  return {share >= 95.0, fmt("%d/%d decoded outputs (%.1f%%) use only the "
                             "selected language's vocabulary, need >= 95%%",
                             pure, total, share)};
}

// ---- 10: grid determinism and stage-boundary resume --------------------------------

TrainConfig micro_train_config() {
  TrainConfig cfg;
  cfg.model.embed_dim = 16;
  cfg.model.ff_dim = 32;
  cfg.model.heads = 2;
  cfg.model.encoder_layers = 1;
  cfg.model.decoder_layers = 1;
  cfg.model.max_len = 48;
  cfg.model.adapter_dim = 8;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  cfg.warmup_steps = 20;
  cfg.patience = 2;
  cfg.max_epochs = 2;
  cfg.seed = 7;
  cfg.ape_reduction = ApeReduction::MeanPerToken;
  return cfg;
}

Verdict determinism_and_resume() {
  const auto t0 = std::chrono::steady_clock::now();
  // A reduced world keeps two full grid passes cheap; determinism is a
  // property of the code paths, not of the corpus size.
  toy::ToySpec spec;
  spec.source_vocab = 30;
  spec.min_len = 3;
  spec.max_len = 7;
  spec.nmt_train = 40;
  spec.nmt_dev = 10;
  spec.synth_train = 40;
  spec.synth_dev = 10;
  spec.auth_train = 24;
  spec.auth_dev = 10;
  spec.test = 12;
  const std::string data_dir = kTmp + "/micro_toy";
  fs::remove_all(data_dir);
  toy::write(toy::generate(spec), data_dir);

  GridConfig cfg;
  cfg.data_dir = data_dir;
  cfg.train = micro_train_config();
  cfg.beam = 3;
  cfg.significance_trials = 300;
  cfg.augment_n = 10;
  cfg.bpe_merges = 120;
  cfg.resume = false;

  cfg.out_dir = kTmp + "/grid_a";
  fs::remove_all(cfg.out_dir);
  const std::string tsv_a = run_experiment_grid(cfg, default_grid()).tsv();
  cfg.out_dir = kTmp + "/grid_b";
  fs::remove_all(cfg.out_dir);
  const std::string tsv_b = run_experiment_grid(cfg, default_grid()).tsv();
  const bool grids_identical = tsv_a == tsv_b;

  // Interrupt the curriculum at each stage boundary, resume, and compare
  // against the uninterrupted run: checkpoints and metrics must agree.
  cfg.out_dir = kTmp + "/resume";
  ExperimentRunner runner(cfg);
  const CtsInputs inputs =
      runner.build_inputs(LangIdMode::All, TrainMode::Single, "", 0);
  const TrainConfig train = runner.config().train;

  const std::string plain_dir = kTmp + "/resume_plain";
  fs::remove_all(plain_dir);
  fs::create_directories(plain_dir);
  TrainLogWriter plain_log(plain_dir + "/log.jsonl");
  run_cts(inputs, train, TrainMode::Single, plain_dir, true, plain_log);

  const std::string stop_dir = kTmp + "/resume_interrupted";
  fs::remove_all(stop_dir);
  fs::create_directories(stop_dir);
  for (const char* stop : {"nmt", "synthetic-phase1", "synthetic-phase2"}) {
    TrainLogWriter log(stop_dir + "/log.jsonl", true);
    run_cts(inputs, train, TrainMode::Single, stop_dir, true, log, stop);
  }
  TrainLogWriter final_log(stop_dir + "/log.jsonl", true);
  run_cts(inputs, train, TrainMode::Single, stop_dir, true, final_log);

  bool checkpoints_equal = true;
  for (const char* name :
       {"stage1.ckpt", "stage2a.ckpt", "stage2b.ckpt", "final.ckpt"})
    checkpoints_equal &= read_file(plain_dir + "/" + name) ==
                         read_file(stop_dir + "/" + name);

  const auto plain_ckpt = load_checkpoint(plain_dir + "/final.ckpt");
  const auto resumed_ckpt = load_checkpoint(stop_dir + "/final.ckpt");
  const toy::ToyData micro = toy::load(data_dir);
  const Corpus test =
      prefix_langid(micro.eng_hin.test, LangIdMode::All, toy::registry());
  const auto hyp_plain =
      decode_corpus(plain_ckpt.model, plain_ckpt.vocab, test, cfg.beam);
  const auto hyp_resumed =
      decode_corpus(resumed_ckpt.model, resumed_ckpt.vocab, test, cfg.beam);
  std::vector<Tokens> refs;
  for (const auto& t : micro.eng_hin.test.triplets) refs.push_back(t.post_edit);
  const bool metrics_equal =
      evaluate_system(hyp_plain, refs).ter == evaluate_system(hyp_resumed, refs).ter;

  const bool pass = grids_identical && checkpoints_equal && metrics_equal;
  return {pass, fmt("two 24-row grids byte-identical: %s; interrupted resume "
                    "checkpoints byte-identical: %s, metrics equal: %s; %.1fs",
                    grids_identical ? "yes" : "NO",
                    checkpoints_equal ? "yes" : "NO",
                    metrics_equal ? "yes" : "NO", seconds_since(t0))};
}

}  // namespace

int main() {
  fs::create_directories(kTmp);
  run_criterion(1, ter_oracle_sweep);
  run_criterion(2, bleu_hand_check);
  run_criterion(3, nash_solver);
  run_criterion(4, gradient_check);
  run_criterion(5, masking_check);
  run_criterion(6, adapter_discipline);
  run_criterion(7, qe_tags);
  run_criterion(8, toy_pipeline);
  run_criterion(9, language_conditioning);
  run_criterion(10, determinism_and_resume);
  std::printf("%d of 10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
