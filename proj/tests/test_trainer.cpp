#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "mape/experiment.hpp"

using namespace mape;
namespace fs = std::filesystem;

namespace {

toy::ToySpec tiny_spec() {
  toy::ToySpec s;
  s.source_vocab = 30;
  s.min_len = 3;
  s.max_len = 7;
  s.nmt_train = 40;
  s.nmt_dev = 10;
  s.synth_train = 40;
  s.synth_dev = 10;
  s.auth_train = 24;
  s.auth_dev = 10;
  s.test = 12;
  return s;
}

std::vector<Tokens> all_text(const toy::ToyData& data) {
  std::vector<Tokens> text;
  auto corpus = [&](const Corpus& c) {
    for (const auto& t : c.triplets) {
      text.push_back(t.source);
      text.push_back(t.translation);
      text.push_back(t.post_edit);
    }
  };
  auto parallel = [&](const ParallelCorpus& c) {
    for (const auto& it : c.items) {
      text.push_back(it.source);
      text.push_back(it.target);
    }
  };
  for (const toy::ToyPair* p : {&data.eng_hin, &data.eng_mar}) {
    parallel(p->nmt_train);
    parallel(p->nmt_dev);
    corpus(p->synth_train);
    corpus(p->synth_dev);
    corpus(p->auth_train);
    corpus(p->auth_dev);
    corpus(p->test);
  }
  return text;
}

Vocab toy_vocab(const toy::ToyData& data, int merges = 120) {
  return Vocab::train(all_text(data), merges,
                      {"<sep>", "eng", "hin", "mar"});
}

TrainConfig tiny_train_config(int vocab_size) {
  TrainConfig cfg;
  cfg.model.vocab_size = vocab_size;
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

std::vector<Tokens> post_edits(const Corpus& c) {
  std::vector<Tokens> refs;
  for (const auto& t : c.triplets) refs.push_back(t.post_edit);
  return refs;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fresh_dir(const std::string& tag) {
  const std::string dir = "trainer_test_tmp/" + tag;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Greedy reference decoder written against the low-level model interface;
// the beam search must agree with it at width one.
template <typename S>
std::vector<int> greedy_decode(const ApeModel<S>& model, const Vocab& vocab,
                               const Example& ex) {
  const Mat<S> memory = model.encode_memory(ex);
  std::vector<int> ids{vocab.bos_id()};
  while (static_cast<int>(ids.size()) < model.config().max_len) {
    const Mat<S> logits = model.prefix_logits(memory, ids);
    const auto col = logits.col(logits.cols() - 1);
    int best = -1;
    double best_v = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < col.size(); ++r) {
      const int tok = static_cast<int>(r);
      if (tok == vocab.pad_id() || tok == vocab.bos_id()) continue;
      const double v = static_cast<double>(col(r));
      if (v > best_v) {
        best_v = v;
        best = tok;
      }
    }
    if (best == vocab.eos_id()) break;
    ids.push_back(best);
  }
  return {ids.begin() + 1, ids.end()};
}

}  // namespace

TEST_CASE("toy generation is deterministic and splits stay disjoint") {
  const auto spec = tiny_spec();
  const auto a = toy::generate(spec);
  const auto b = toy::generate(spec);

  REQUIRE(a.eng_hin.nmt_train.size() == static_cast<std::size_t>(spec.nmt_train));
  REQUIRE(a.eng_hin.auth_train.size() == static_cast<std::size_t>(spec.auth_train));
  REQUIRE(a.eng_mar.test.size() == static_cast<std::size_t>(spec.test));

  auto flat = [](const toy::ToyData& d) {
    std::vector<std::string> out;
    auto corpus = [&](const Corpus& c) {
      for (const auto& t : c.triplets) {
        out.push_back(join(t.source, " "));
        out.push_back(join(t.translation, " "));
        out.push_back(join(t.post_edit, " "));
      }
    };
    for (const toy::ToyPair* p : {&d.eng_hin, &d.eng_mar}) {
      for (const auto& it : p->nmt_train.items) out.push_back(join(it.target, " "));
      corpus(p->synth_train);
      corpus(p->auth_train);
      corpus(p->test);
    }
    return out;
  };
  REQUIRE(flat(a) == flat(b));

  // Every split draws from one shared dedupe pool, so no source sentence can
  // appear in two places.
  std::set<std::string> seen;
  std::size_t total = 0;
  auto count = [&](const auto& items, auto get) {
    for (const auto& it : items) {
      seen.insert(join(get(it), " "));
      ++total;
    }
  };
  for (const toy::ToyPair* p : {&a.eng_hin, &a.eng_mar}) {
    count(p->nmt_train.items, [](const auto& it) { return it.source; });
    count(p->nmt_dev.items, [](const auto& it) { return it.source; });
    count(p->synth_train.triplets, [](const auto& t) { return t.source; });
    count(p->synth_dev.triplets, [](const auto& t) { return t.source; });
    count(p->auth_train.triplets, [](const auto& t) { return t.source; });
    count(p->auth_dev.triplets, [](const auto& t) { return t.source; });
    count(p->test.triplets, [](const auto& t) { return t.source; });
  }
  REQUIRE(seen.size() == total);

  // Round-trip through the on-disk layout.
  const std::string dir = fresh_dir("toyio");
  toy::write(a, dir);
  const auto loaded = toy::load(dir);
  REQUIRE(flat(loaded) == flat(a));
  REQUIRE(loaded.eng_hin.auth_train.has_annotations());
  for (std::size_t i = 0; i < a.eng_hin.auth_train.size(); ++i) {
    const auto& x = a.eng_hin.auth_train.annotations[i];
    const auto& y = loaded.eng_hin.auth_train.annotations[i];
    REQUIRE(x.word_tags == y.word_tags);
    REQUIRE(x.da_score.has_value() == y.da_score.has_value());
    if (x.da_score)
      REQUIRE(*x.da_score == Catch::Approx(*y.da_score).margin(1e-9));
  }
}

TEST_CASE("toy translators follow the language conditioning rules") {
  const auto spec = tiny_spec();
  const Tokens src = {"s1", "s4", "s12"};

  const toy::ExactToyTranslator exact(spec);
  const auto as_hin = exact.translate(src, toy::eng(), toy::hin());
  const auto as_mar = exact.translate(src, toy::eng(), toy::mar());
  REQUIRE(as_hin == toy::reference_translation(src, toy::hin(), spec));
  REQUIRE(as_mar == toy::reference_translation(src, toy::mar(), spec));
  REQUIRE(as_hin != as_mar);  // distinct word orders force LangId awareness

  // Same word inventory modulo the shared types: s1 maps to a shared word,
  // s4 and s12 to language-marked ones.
  REQUIRE(toy::is_shared_type(1, spec));
  REQUIRE_FALSE(toy::is_shared_type(4, spec));

  const toy::NoisyToyTranslator noisy(spec, 99);
  const auto n1 = noisy.translate(src, toy::eng(), toy::hin());
  const auto n2 = noisy.translate(src, toy::eng(), toy::hin());
  REQUIRE(n1 == n2);  // pure in (seed, language, sentence)
  const toy::NoisyToyTranslator other(spec, 100);
  REQUIRE_FALSE(noisy.supports(toy::hin(), toy::eng()));

  // Noise stays inside the target language's alphabet.
  const auto vocab_hin = toy::language_vocabulary(toy::hin(), spec);
  for (int i = 0; i < 50; ++i) {
    Tokens s;
    for (int k = 0; k < 5; ++k)
      s.push_back(toy::source_word((i * 5 + k) % spec.source_vocab));
    for (const auto& w : noisy.translate(s, toy::eng(), toy::hin()))
      REQUIRE(vocab_hin.count(w) == 1);
  }
}

TEST_CASE("toy authentic data carries a usable editing signal") {
  const auto data = toy::generate(tiny_spec());
  for (const Corpus* c : {&data.eng_hin.auth_train, &data.eng_mar.auth_train}) {
    const double dn = corpus_do_nothing_ter(*c);
    REQUIRE(dn > 0.02);
    REQUIRE(dn < 0.7);
    REQUIRE(c->has_annotations());
    std::size_t with_da = 0;
    for (const auto& a : c->annotations) {
      REQUIRE(!a.word_tags.empty());
      if (a.da_score) {
        ++with_da;
        REQUIRE(*a.da_score >= 0.0);
        REQUIRE(*a.da_score <= 100.0);
      }
    }
    // 70% coverage with binomial slack
    REQUIRE(with_da > c->size() / 3);
    REQUIRE(with_da < c->size());
  }
}

TEST_CASE("example construction maps triplet fields onto model inputs") {
  const auto data = toy::generate(tiny_spec());
  const Vocab vocab = toy_vocab(data);

  ApeTriplet t;
  t.source = {"s1", "s2", "s3"};
  t.translation = {"h1", "c2", "h5"};
  t.post_edit = {"h1", "c2"};
  QeAnnotation ann;
  ann.da_score = 55.0;
  ann.word_tags = {WordTag::Ok, WordTag::Ok, WordTag::Bad};

  const Example ex = make_example(vocab, t, &ann, true, 48);
  REQUIRE(ex.tgt_in.front() == vocab.bos_id());
  REQUIRE(ex.tgt_out.back() == vocab.eos_id());
  REQUIRE(ex.tgt_in.size() == ex.tgt_out.size());
  // shifted views of the same sequence
  for (std::size_t i = 1; i < ex.tgt_in.size(); ++i)
    REQUIRE(ex.tgt_in[i] == ex.tgt_out[i - 1]);
  REQUIRE(ex.word_labels == std::vector<int>{0, 0, 1});
  REQUIRE(ex.trans_word_starts.size() == t.translation.size());
  REQUIRE(ex.da.has_value());

  const Example plain = make_example(vocab, t, nullptr, false, 48);
  REQUIRE(plain.tgt_in.empty());
  REQUIRE(plain.word_labels.empty());
  REQUIRE_FALSE(plain.da.has_value());

  QeAnnotation bad = ann;
  bad.word_tags.pop_back();
  REQUIRE_THROWS_AS(make_example(vocab, t, &bad, true, 48), DataError);
  REQUIRE_THROWS_AS(make_example(vocab, t, nullptr, true, 2), DataError);
}

TEST_CASE("multilingual merges are deterministic shuffled concatenations") {
  const auto data = toy::generate(tiny_spec());

  const auto m1 = merge_multilingual(
      {data.eng_hin.synth_train, data.eng_mar.synth_train}, 5);
  const auto m2 = merge_multilingual(
      {data.eng_hin.synth_train, data.eng_mar.synth_train}, 5);
  const auto m3 = merge_multilingual(
      {data.eng_hin.synth_train, data.eng_mar.synth_train}, 6);
  REQUIRE(m1.size() ==
          data.eng_hin.synth_train.size() + data.eng_mar.synth_train.size());
  auto sources = [](const Corpus& c) {
    std::vector<std::string> out;
    for (const auto& t : c.triplets) out.push_back(join(t.source, " "));
    return out;
  };
  REQUIRE(sources(m1) == sources(m2));
  REQUIRE(sources(m1) != sources(m3));
  auto sorted = [&](const Corpus& c) {
    auto v = sources(c);
    std::sort(v.begin(), v.end());
    return v;
  };
  REQUIRE(sorted(m1) == sorted(m3));  // same multiset, different order

  const auto p1 = merge_multilingual(
      std::vector<ParallelCorpus>{data.eng_hin.nmt_train, data.eng_mar.nmt_train},
      5);
  const auto p2 = merge_multilingual(
      std::vector<ParallelCorpus>{data.eng_hin.nmt_train, data.eng_mar.nmt_train},
      5);
  REQUIRE(p1.size() ==
          data.eng_hin.nmt_train.size() + data.eng_mar.nmt_train.size());
  for (std::size_t i = 0; i < p1.size(); ++i)
    REQUIRE(p1.items[i].source == p2.items[i].source);
}

TEST_CASE("beam width one reproduces greedy decoding") {
  const auto data = toy::generate(tiny_spec());
  const Vocab vocab = toy_vocab(data);
  TrainConfig cfg = tiny_train_config(static_cast<int>(vocab.size()));
  cfg.model.mode = ModelMode::PostEditing;

  // Untrained models make the comparison adversarial: the distribution is
  // near-uniform, so any normalizer discrepancy would flip the argmax.
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    ApeModel<float> model(cfg.model, seed);
    for (std::size_t i = 0; i < 4; ++i) {
      const Example ex = make_example(vocab, data.eng_hin.test.triplets[i],
                                      nullptr, false, cfg.model.max_len);
      REQUIRE(beam_search(model, vocab, ex, 1) == greedy_decode(model, vocab, ex));
    }
  }
}

TEST_CASE("beam outputs are deterministic and well formed") {
  const auto data = toy::generate(tiny_spec());
  const Vocab vocab = toy_vocab(data);
  TrainConfig cfg = tiny_train_config(static_cast<int>(vocab.size()));
  cfg.model.mode = ModelMode::PostEditing;
  ApeModel<float> model(cfg.model, 21);

  for (int beam : {1, 3, 5}) {
    for (std::size_t i = 0; i < 3; ++i) {
      const Example ex = make_example(vocab, data.eng_hin.test.triplets[i],
                                      nullptr, false, cfg.model.max_len);
      const auto out = beam_search(model, vocab, ex, beam);
      REQUIRE(out == beam_search(model, vocab, ex, beam));
      REQUIRE(static_cast<int>(out.size()) < cfg.model.max_len);
      for (const int id : out) {
        REQUIRE(id != vocab.pad_id());
        REQUIRE(id != vocab.bos_id());
        REQUIRE(id != vocab.eos_id());
        REQUIRE(id >= 0);
        REQUIRE(id < static_cast<int>(vocab.size()));
      }
    }
  }
  REQUIRE_THROWS_AS(
      beam_search(model, vocab,
                  make_example(vocab, data.eng_hin.test.triplets[0], nullptr,
                               false, cfg.model.max_len),
                  0),
      ArgumentError);
}

TEST_CASE("do-nothing evaluation agrees with the corpus statistic") {
  const auto data = toy::generate(tiny_spec());
  const Corpus& c = data.eng_hin.test;
  const auto report = evaluate_system(do_nothing(c), post_edits(c));
  REQUIRE(report.ter ==
          Catch::Approx(100.0 * corpus_do_nothing_ter(c)).epsilon(1e-12));
  REQUIRE(report.sentence_ters.size() == c.size());

  const auto perfect = evaluate_system(post_edits(c), post_edits(c));
  REQUIRE(perfect.ter == 0.0);
  REQUIRE(perfect.bleu == Catch::Approx(100.0).margin(1e-9));

  REQUIRE_THROWS_AS(evaluate_system({}, {}), ArgumentError);
  REQUIRE_THROWS_AS(evaluate_system(do_nothing(c), {}), ArgumentError);
}

TEST_CASE("adam warms up linearly and optimizes a quadratic") {
  Param<float> x;
  x.name = "x";
  x.value = Mat<float>::Constant(3, 2, 4.0f);
  x.grad = Mat<float>::Zero(3, 2);
  Param<float> frozen;
  frozen.name = "frozen";
  frozen.value = Mat<float>::Constant(2, 2, 1.0f);
  frozen.grad = Mat<float>::Constant(2, 2, 9.0f);
  frozen.trainable = false;
  std::vector<Param<float>*> params{&x, &frozen};

  Adam<float> opt(0.1, 0.9, 0.999, 10);
  REQUIRE(opt.current_lr() == 0.0);
  const Mat<float> target = Mat<float>::Constant(3, 2, -1.0f);
  for (int t = 1; t <= 400; ++t) {
    x.grad = x.value - target;  // gradient of 0.5 ||x - target||^2
    opt.step(params);
    if (t < 10)
      REQUIRE(opt.current_lr() == Catch::Approx(0.1 * t / 10.0));
    else
      REQUIRE(opt.current_lr() == Catch::Approx(0.1));
  }
  REQUIRE((x.value - target).norm() < 1e-2);
  REQUIRE(frozen.value(0, 0) == 1.0f);  // untouched

  Param<float> extra;
  extra.value = Mat<float>::Zero(1, 1);
  extra.grad = Mat<float>::Zero(1, 1);
  std::vector<Param<float>*> grown{&x, &frozen, &extra};
  REQUIRE_THROWS_AS(opt.step(grown), ArgumentError);
}

TEST_CASE("train config round-trips and rejects bad values") {
  TrainConfig cfg = tiny_train_config(64);
  const auto j = cfg.to_json();
  const TrainConfig back = TrainConfig::from_json(j);
  REQUIRE(back.learning_rate == cfg.learning_rate);
  REQUIRE(back.model.embed_dim == cfg.model.embed_dim);
  REQUIRE(back.ape_reduction == cfg.ape_reduction);
  REQUIRE(back.seed == cfg.seed);

  TrainConfig bad = cfg;
  bad.learning_rate = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.patience = 0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.beta2 = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("flat key-value documents configure training and grids") {
  const std::string text =
      "# profile\n"
      "embed_dim 24\n"
      "ff_dim = 48\n"
      "heads\t2\n"
      "learning_rate 3e-3\n"
      "warmup_steps 100\n"
      "max_epochs 30\n"
      "seed 17\n"
      "ape_reduction mean-per-token\n";
  const TrainConfig cfg = train_config_from_kv(text);
  REQUIRE(cfg.model.embed_dim == 24);
  REQUIRE(cfg.model.ff_dim == 48);
  REQUIRE(cfg.model.heads == 2);
  REQUIRE(cfg.learning_rate == 3e-3);
  REQUIRE(cfg.warmup_steps == 100);
  REQUIRE(cfg.max_epochs == 30);
  REQUIRE(cfg.seed == 17);
  REQUIRE(cfg.ape_reduction == ApeReduction::MeanPerToken);
  REQUIRE(cfg.batch_size == TrainConfig{}.batch_size);  // untouched default

  REQUIRE_THROWS_AS(train_config_from_kv("no_such_knob 3\n"), ConfigError);
  REQUIRE_THROWS_AS(train_config_from_kv("seed 1\nseed 2\n"), ConfigError);
  REQUIRE_THROWS_AS(train_config_from_kv("seed\n"), ConfigError);

  // The file loader takes both formats and resolves grid paths relative to
  // the grid file itself.
  const std::string dir = fresh_dir("kvcfg");
  write_file(dir + "/train.cfg", text);
  const TrainConfig from_file = load_train_config(dir + "/train.cfg");
  REQUIRE(from_file.model.embed_dim == 24);
  write_file(dir + "/train.json", TrainConfig{}.to_json().dump());
  REQUIRE(load_train_config(dir + "/train.json").batch_size ==
          TrainConfig{}.batch_size);

  write_file(dir + "/grid.cfg",
             "data_dir toy\nout_dir out\ntrain_config train.cfg\n"
             "beam 3\nsignificance_trials 400\naugment_n 25\n"
             "bpe_merges 150\nresume false\n");
  const GridConfig grid = load_grid_config(dir + "/grid.cfg");
  REQUIRE(grid.data_dir == dir + "/toy");
  REQUIRE(grid.out_dir == dir + "/out");
  REQUIRE(grid.train.model.embed_dim == 24);
  REQUIRE(grid.beam == 3);
  REQUIRE(grid.significance_trials == 400);
  REQUIRE(grid.augment_n == 25);
  REQUIRE(grid.bpe_merges == 150);
  REQUIRE_FALSE(grid.resume);

  write_file(dir + "/bad.cfg", "data_dir toy\nout_dir out\nturbo on\n");
  REQUIRE_THROWS_AS(load_grid_config(dir + "/bad.cfg"), ConfigError);
  write_file(dir + "/missing.cfg", "out_dir out\n");
  REQUIRE_THROWS_AS(load_grid_config(dir + "/missing.cfg"), ConfigError);
}

TEST_CASE("training stops after patience epochs without improvement") {
  const auto data = toy::generate(tiny_spec());
  const Vocab vocab = toy_vocab(data);
  TrainConfig cfg = tiny_train_config(static_cast<int>(vocab.size()));
  cfg.model.mode = ModelMode::PostEditing;
  cfg.learning_rate = 1e-30;  // effectively frozen: dev can never improve
  cfg.max_epochs = 50;
  cfg.patience = 3;

  ApeModel<float> model(cfg.model, 3);
  Corpus small;
  small.triplets.assign(data.eng_hin.auth_train.triplets.begin(),
                        data.eng_hin.auth_train.triplets.begin() + 8);
  const auto train = make_examples(vocab, small, false, cfg.model.max_len);
  DevSet dev;
  dev.examples = train;
  dev.refs = post_edits(small);

  TrainLogWriter log;
  const auto r = train_stage(model, "probe", TrainMode::Single, train, dev,
                             vocab, cfg, log);
  REQUIRE(r.best_epoch == 0);
  REQUIRE(r.epochs_run == cfg.patience + 1);
  REQUIRE_FALSE(r.diverged);
  REQUIRE(log.records().size() == static_cast<std::size_t>(r.epochs_run));
  for (const auto& rec : log.records()) {
    REQUIRE(rec.at("event") == "epoch");
    REQUIRE(rec.at("stage") == "probe");
    REQUIRE(rec.contains("dev_ter"));
  }
}

TEST_CASE("divergence aborts the stage and restores the best weights") {
  const auto data = toy::generate(tiny_spec());
  const Vocab vocab = toy_vocab(data);
  TrainConfig cfg = tiny_train_config(static_cast<int>(vocab.size()));
  cfg.model.mode = ModelMode::PostEditing;
  // One step at this rate pushes weights to ~1e20; the next forward pass
  // overflows the pre-norm residual stream into NaN.
  cfg.learning_rate = 1e20;
  cfg.warmup_steps = 0;
  cfg.batch_size = 4;
  cfg.max_epochs = 30;

  ApeModel<float> model(cfg.model, 3);
  Corpus small;
  small.triplets.assign(data.eng_hin.auth_train.triplets.begin(),
                        data.eng_hin.auth_train.triplets.begin() + 8);
  const auto train = make_examples(vocab, small, false, cfg.model.max_len);
  DevSet dev;
  dev.examples = train;
  dev.refs = post_edits(small);

  TrainLogWriter log;
  const auto r = train_stage(model, "blowup", TrainMode::Single, train, dev,
                             vocab, cfg, log);
  REQUIRE(r.diverged);
  for (const auto* p : std::as_const(model).params())
    REQUIRE(p->value.allFinite());
}

TEST_CASE("a tiny model memorizes a copy corpus and decodes it exactly") {
  const auto spec = tiny_spec();
  const auto data = toy::generate(spec);
  const Vocab vocab = toy_vocab(data);
  TrainConfig cfg = tiny_train_config(static_cast<int>(vocab.size()));
  cfg.model.mode = ModelMode::PostEditing;
  cfg.learning_rate = 4e-3;
  cfg.warmup_steps = 10;
  cfg.batch_size = 4;
  cfg.max_epochs = 160;
  cfg.patience = 160;  // run to memorization, no early exit

  // Identity post-editing: output equals the translation stream.
  Corpus copy;
  for (std::size_t i = 0; i < 6; ++i) {
    ApeTriplet t = data.eng_hin.synth_train.triplets[i];
    t.post_edit = t.translation;
    copy.triplets.push_back(std::move(t));
  }
  const auto train = make_examples(vocab, copy, false, cfg.model.max_len);
  DevSet dev;
  dev.examples = train;
  dev.refs = post_edits(copy);

  ApeModel<float> model(cfg.model, 13);
  TrainLogWriter log;
  const auto r = train_stage(model, "memorize", TrainMode::Single, train, dev,
                             vocab, cfg, log);
  INFO("best dev TER " << r.best_dev << " at epoch " << r.best_epoch);
  REQUIRE(r.best_dev == 0.0);

  const auto hyps = decode_corpus(model, vocab, copy, 1);
  for (std::size_t i = 0; i < copy.size(); ++i)
    REQUIRE(hyps[i] == copy.triplets[i].post_edit);
}

TEST_CASE("curriculum run trains four stages and resume reuses checkpoints") {
  const auto data = toy::generate(tiny_spec());
  const Vocab vocab = toy_vocab(data);
  TrainConfig cfg = tiny_train_config(static_cast<int>(vocab.size()));

  CtsInputs in;
  in.vocab = vocab;
  const LangRegistry reg = toy::registry();
  in.nmt_train = prefix_langid(data.eng_hin.nmt_train, reg);
  in.nmt_dev = prefix_langid(data.eng_hin.nmt_dev, reg);
  in.synth_train = data.eng_hin.synth_train;
  in.synth_dev = data.eng_hin.synth_dev;
  in.auth_train = data.eng_hin.auth_train;
  in.auth_dev = data.eng_hin.auth_dev;

  const std::string dir = fresh_dir("cts");
  TrainLogWriter log(dir + "/trainlog.jsonl");
  const auto result = run_cts(in, cfg, TrainMode::Single, dir, true, log);

  REQUIRE(result.stages_run ==
          std::vector<std::string>{"nmt", "synthetic-phase1", "synthetic-phase2",
                                   "finetune"});
  REQUIRE(result.stages_reused.empty());
  REQUIRE(result.final_checkpoint == dir + "/final.ckpt");
  REQUIRE(result.synth_phase_threshold > 0.0);
  for (const char* name : {"stage1.ckpt", "stage2a.ckpt", "stage2b.ckpt",
                           "final.ckpt"})
    REQUIRE(fs::exists(dir + "/" + name));

  int stage_complete = 0;
  for (const auto& rec : log.records())
    if (rec.at("event") == "stage-complete") ++stage_complete;
  REQUIRE(stage_complete == 4);

  // The phase split must cover the synthetic corpus.
  const auto [p1, p2] =
      partition_cts_phases(in.synth_train, result.synth_phase_threshold);
  REQUIRE(p1.size() + p2.size() == in.synth_train.size());
  REQUIRE(p1.size() > 0);
  REQUIRE(p2.size() > 0);

  const std::string before = slurp(result.final_checkpoint);
  TrainLogWriter log2;
  const auto again = run_cts(in, cfg, TrainMode::Single, dir, true, log2);
  REQUIRE(again.stages_run.empty());
  REQUIRE(again.stages_reused.size() == 4);
  REQUIRE(slurp(again.final_checkpoint) == before);
}

TEST_CASE("interrupting between stages and resuming is exact") {
  const auto data = toy::generate(tiny_spec());
  const Vocab vocab = toy_vocab(data);
  TrainConfig cfg = tiny_train_config(static_cast<int>(vocab.size()));

  CtsInputs in;
  in.vocab = vocab;
  const LangRegistry reg = toy::registry();
  in.nmt_train = prefix_langid(data.eng_mar.nmt_train, reg);
  in.nmt_dev = prefix_langid(data.eng_mar.nmt_dev, reg);
  in.synth_train = data.eng_mar.synth_train;
  in.synth_dev = data.eng_mar.synth_dev;
  in.auth_train = data.eng_mar.auth_train;
  in.auth_dev = data.eng_mar.auth_dev;

  const std::string plain = fresh_dir("resume_plain");
  {
    TrainLogWriter log;
    run_cts(in, cfg, TrainMode::Single, plain, false, log);
  }

  const std::string interrupted = fresh_dir("resume_interrupted");
  {
    TrainLogWriter log;
    const auto r =
        run_cts(in, cfg, TrainMode::Single, interrupted, false, log, "nmt");
    REQUIRE(r.stages_run == std::vector<std::string>{"nmt"});
    REQUIRE_FALSE(fs::exists(interrupted + "/final.ckpt"));
  }
  {
    TrainLogWriter log;
    const auto r = run_cts(in, cfg, TrainMode::Single, interrupted, true, log,
                           "synthetic-phase2");
    REQUIRE(r.stages_reused == std::vector<std::string>{"nmt"});
  }
  {
    TrainLogWriter log;
    const auto r = run_cts(in, cfg, TrainMode::Single, interrupted, true, log);
    REQUIRE(r.stages_reused.size() == 3);
    REQUIRE(r.stages_run == std::vector<std::string>{"finetune"});
  }

  for (const char* name : {"stage1.ckpt", "stage2a.ckpt", "stage2b.ckpt",
                           "final.ckpt"})
    REQUIRE(slurp(interrupted + "/" + name) == slurp(plain + "/" + name));
}

TEST_CASE("domain adaptation trains adapters and nothing else") {
  const auto data = toy::generate(tiny_spec());
  const Vocab vocab = toy_vocab(data);
  TrainConfig cfg = tiny_train_config(static_cast<int>(vocab.size()));

  CtsInputs in;
  in.vocab = vocab;
  const LangRegistry reg = toy::registry();
  in.nmt_train = prefix_langid(data.eng_hin.nmt_train, reg);
  in.nmt_dev = prefix_langid(data.eng_hin.nmt_dev, reg);
  in.synth_train = data.eng_hin.synth_train;
  in.synth_dev = data.eng_hin.synth_dev;
  in.auth_train = data.eng_hin.auth_train;
  in.auth_dev = data.eng_hin.auth_dev;

  const std::string dir = fresh_dir("domains");
  TrainLogWriter log;
  const auto result = run_cts(in, cfg, TrainMode::DomainAdapt, dir, true, log);
  REQUIRE(result.domain_checkpoints.size() == 2);
  REQUIRE(result.domain_checkpoints.count("news") == 1);
  REQUIRE(result.domain_checkpoints.count("chat") == 1);

  const auto trunk = load_checkpoint(dir + "/stage2b.ckpt");
  for (const auto& [domain, path] : result.domain_checkpoints) {
    const auto adapted = load_checkpoint(path);
    std::size_t adapters = 0, shared = 0;
    for (const auto* p : std::as_const(adapted.model).params()) {
      if (p->name.find(".adapter.") != std::string::npos) {
        ++adapters;
        continue;
      }
      ++shared;
      const auto* base = std::as_const(trunk.model).find(p->name);
      REQUIRE(base != nullptr);
      REQUIRE(base->value.rows() == p->value.rows());
      REQUIRE(base->value.cols() == p->value.cols());
      REQUIRE(std::memcmp(base->value.data(), p->value.data(),
                          sizeof(float) *
                              static_cast<std::size_t>(p->value.size())) == 0);
    }
    REQUIRE(adapters == 4u * static_cast<std::size_t>(cfg.model.decoder_layers));
    REQUIRE(shared > 0);
  }
}

TEST_CASE("transfer fine-tuning starts from the donor checkpoint") {
  const auto data = toy::generate(tiny_spec());
  const Vocab vocab = toy_vocab(data);
  TrainConfig cfg = tiny_train_config(static_cast<int>(vocab.size()));

  CtsInputs in;
  in.vocab = vocab;
  const LangRegistry reg = toy::registry();
  in.nmt_train = prefix_langid(data.eng_hin.nmt_train, reg);
  in.nmt_dev = prefix_langid(data.eng_hin.nmt_dev, reg);
  in.synth_train = data.eng_hin.synth_train;
  in.synth_dev = data.eng_hin.synth_dev;
  in.auth_train = data.eng_hin.auth_train;
  in.auth_dev = data.eng_hin.auth_dev;

  const std::string donor_dir = fresh_dir("transfer_donor");
  {
    TrainLogWriter log;
    run_cts(in, cfg, TrainMode::Single, donor_dir, false, log,
            "synthetic-phase2");
  }

  const std::string dir = fresh_dir("transfer_out");
  TrainLogWriter log;
  const auto result =
      transfer_finetune(donor_dir + "/stage2b.ckpt", data.eng_mar.auth_train,
                        data.eng_mar.auth_dev, cfg, TrainMode::Single, dir, log);
  REQUIRE(fs::exists(result.final_checkpoint));
  const auto loaded = load_checkpoint(result.final_checkpoint);
  REQUIRE(loaded.info.metadata.at("donor") == donor_dir + "/stage2b.ckpt");
  REQUIRE(loaded.config.mode == ModelMode::PostEditing);
}

TEST_CASE("experiment grid wiring matches the reported systems") {
  const auto grid = default_grid();
  REQUIRE(grid.size() == 24);
  REQUIRE(experiment_systems().size() == 12);

  REQUIRE(default_baseline("do-nothing").empty());
  REQUIRE(default_baseline("baseline-ape") == "do-nothing");
  REQUIRE(default_baseline("w-langid") == "do-nothing");
  REQUIRE(default_baseline("mtl-nash") == "w-langid");
  REQUIRE(default_baseline("mtl-nash+dataaug") == "mtl-nash");
  REQUIRE(default_baseline("domain-adapt") == "w-langid");

  REQUIRE(ExperimentRunner::langid_mode("wo-langid") == LangIdMode::None);
  REQUIRE(ExperimentRunner::langid_mode("only-auth-langid") ==
          LangIdMode::OnlyAuthentic);
  REQUIRE(ExperimentRunner::langid_mode("w-langid") == LangIdMode::All);
  REQUIRE(ExperimentRunner::langid_mode("mtl-nash+dataaug") == LangIdMode::All);
  REQUIRE(ExperimentRunner::train_mode("mtl-ls") == TrainMode::LsMtl);
  REQUIRE(ExperimentRunner::train_mode("mtl-nash") == TrainMode::NashMtl);
  REQUIRE(ExperimentRunner::train_mode("domain-adapt") == TrainMode::DomainAdapt);
  REQUIRE(ExperimentRunner::train_mode("w-langid+pairs") == TrainMode::Single);
}

TEST_CASE("report table renders the exchange schema") {
  ReportTable table;
  ReportRow a;
  a.system = "do-nothing";
  a.pair = "eng-hin";
  a.ter = 31.254;
  a.bleu = 55.118;
  table.rows.push_back(a);
  ReportRow b;
  b.system = "w-langid";
  b.pair = "eng-hin";
  b.ter = 18.4;
  b.bleu = 70.05;
  b.p = 0.0123;
  table.rows.push_back(b);
  ReportRow c;
  c.system = "wo-langid";
  c.pair = "eng-hin";
  c.ter = 30.9;
  c.bleu = 56.0;
  c.p = 0.4219;
  table.rows.push_back(c);
  ReportRow d;
  d.system = "mtl-nash";
  d.pair = "eng-mar";
  d.failed = true;
  d.error = "boom";
  table.rows.push_back(d);

  const std::string tsv = table.tsv();
  REQUIRE(tsv ==
          "system\tpair\tTER\tBLEU\tp\tmarker\n"
          "do-nothing\teng-hin\t31.25\t55.12\tNA\t\n"
          "w-langid\teng-hin\t18.40\t70.05\t0.0123\t\n"
          "wo-langid\teng-hin\t30.90\t56.00\t0.4219\t*\n"
          "mtl-nash\teng-mar\tNA\tNA\tNA\tFAILED\n");
  REQUIRE(table.any_failed());

  const std::string human = table.human();
  REQUIRE(human.find("FAILED: boom") != std::string::npos);
  REQUIRE(human.find("*") != std::string::npos);
}
