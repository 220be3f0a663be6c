#include "mrvpc/harness/experiments.hpp"

#include "mrvpc/common/errors.hpp"
#include "mrvpc/common/seed.hpp"
#include "mrvpc/harness/plot.hpp"
#include "mrvpc/noise/noisebench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

namespace mrvpc::harness {

namespace fs = std::filesystem;

namespace {

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::vector<data::Tokens> references(const data::Corpus& corpus) {
  std::vector<data::Tokens> refs;
  for (const auto& inst : corpus) refs.push_back(inst.caption);
  return refs;
}

std::vector<std::string> ids_of(const data::Corpus& corpus) {
  std::vector<std::string> ids;
  for (const auto& inst : corpus) ids.push_back(inst.id);
  return ids;
}

}  // namespace

Dataset prepare_data(const RunConfig& cfg) {
  cfg.validate();
  Dataset ds{data::World(cfg.world), {}, {}, {}};
  if (cfg.corpus.path.empty()) {
    ds.train = data::gen_corpus(ds.world, cfg.corpus.n_train, cfg.corpus.train_seed);
    ds.test = data::gen_corpus(ds.world, cfg.corpus.n_test, cfg.corpus.test_seed);
    ds.vocab = text::build_vocab(ds.train, cfg.time_bins);
    return ds;
  }
  ds.train = read_corpus(path_in(cfg.corpus.path, "train.jsonl"), &ds.world);
  ds.test = read_corpus(path_in(cfg.corpus.path, "test.jsonl"), &ds.world);
  if (ds.train.empty() || ds.test.size() < 2) throw DataError("corpus '" + cfg.corpus.path + "' is too small");
  const auto vocab_path = path_in(cfg.corpus.path, "vocab.txt");
  ds.vocab = fs::exists(vocab_path) ? read_vocab(vocab_path) : text::build_vocab(ds.train, cfg.time_bins);
  return ds;
}

void write_dataset(const std::string& dir, const RunConfig& cfg, const Dataset& ds) {
  std::vector<std::uint64_t> train_seeds, test_seeds;
  const bool by_seed = !cfg.corpus.inline_video && cfg.corpus.path.empty();
  if (by_seed) {
    train_seeds = corpus_seeds(ds.train.size(), cfg.corpus.train_seed);
    test_seeds = corpus_seeds(ds.test.size(), cfg.corpus.test_seed);
  }
  write_corpus(path_in(dir, "train.jsonl"), ds.train, by_seed ? &train_seeds : nullptr);
  write_corpus(path_in(dir, "test.jsonl"), ds.test, by_seed ? &test_seeds : nullptr);
  write_vocab(path_in(dir, "vocab.txt"), ds.vocab);
}

model::ModelConfig model_config(const RunConfig& cfg, const text::Vocab& vocab) {
  model::ModelConfig mc = cfg.model;
  mc.frames = cfg.world.frames;
  mc.feature_dim = cfg.world.feature_dim;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.pad_id = vocab.pad();
  try {
    mc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return mc;
}

train::TrainPlan make_plan(const RunConfig& cfg, train::Mode mode, const std::string& run_key,
                           std::optional<double> drop_rate) {
  train::TrainPlan plan = cfg.plan;
  plan.mode = mode;
  if (drop_rate) plan.p_asr = plan.p_events = *drop_rate;
  plan.seed = derive_seed(cfg.seed, "train", run_key.empty() ? train::mode_name(mode) : run_key);
  plan.validate();
  return plan;
}

TrainedModel train_model(const RunConfig& cfg, const Dataset& ds, train::Mode mode, const Checkpoint* teacher,
                         const std::string& run_key, std::optional<double> drop_rate) {
  const std::string key = run_key.empty() ? train::mode_name(mode) : run_key;
  const auto mc = model_config(cfg, ds.vocab);
  const auto plan = make_plan(cfg, mode, key, drop_rate);
  model::Mvpc<float> net(mc);
  net.init(derive_seed(cfg.seed, "model.init", key));

  TrainedModel out{{}, {}, std::nullopt};
  std::optional<model::Mvpc<float>> teacher_net;
  if (mode == train::Mode::mrvpc || mode == train::Mode::wordkd) {
    if (!teacher) throw ConfigError(train::mode_name(mode) + " training needs a teacher checkpoint");
    check_vocab(*teacher, ds.vocab);
    if (!(teacher->config == mc)) throw ConfigError("teacher checkpoint config differs from the run config");
    teacher_net.emplace(teacher->make_model());
  }
  if (mode == train::Mode::mrvpc) {
    out.distill = train::build_distill_set(*teacher_net, ds.train, ds.vocab, plan.decode);
    const auto augmented = train::make_augmented(ds.train, *out.distill);
    out.log = train::train(net, augmented, ds.vocab, plan);
  } else {
    out.log = train::train(net, ds.train, ds.vocab, plan, teacher_net ? &*teacher_net : nullptr);
  }
  out.ckpt = make_checkpoint(net, ds.vocab, {key, plan.epochs, plan.seed});
  return out;
}

void check_vocab(const Checkpoint& ckpt, const text::Vocab& vocab) {
  if (ckpt.vocab.hash() != vocab.hash())
    throw DataError("checkpoint vocabulary (" + std::to_string(ckpt.vocab.size()) +
                    " tokens) does not match the corpus vocabulary (" + std::to_string(vocab.size()) + " tokens)");
}

std::vector<metrics::MetricReport> eval_scenarios(const RunConfig& cfg, const Dataset& ds, const Checkpoint& ckpt,
                                                  const std::vector<std::string>& scenarios,
                                                  const std::string& model_name) {
  check_vocab(ckpt, ds.vocab);
  std::vector<noise::Scenario> resolved;
  for (const auto& s : scenarios) resolved.push_back(cfg.scenario(s));  // fail before any work
  const auto net = ckpt.make_model();
  const auto refs = references(ds.test);
  const auto ids = ids_of(ds.test);
  const auto& lexicon = ds.world.lexicon();
  const auto complete = train::predict_corpus(net, ds.test, ds.vocab, cfg.plan.decode);

  std::vector<metrics::MetricReport> out;
  for (const auto& sc : resolved) {
    std::vector<data::Tokens> preds;
    if (sc.asr_ops.empty() && sc.event_ops.empty())
      preds = complete;
    else
      preds = train::predict_corpus(net, noise::apply_scenario(ds.test, sc, lexicon), ds.vocab, cfg.plan.decode);
    auto rep = metrics::evaluate(ids, preds, refs, sc.name, model_name);
    if (sc.name != "complete") metrics::attach_consistency(rep, complete, preds);
    out.push_back(std::move(rep));
  }
  return out;
}

std::vector<ReportRow> run_ablation(const RunConfig& cfg, const Dataset& ds,
                                    const std::map<std::string, const Checkpoint*>& models) {
  std::vector<ReportRow> rows;
  const std::string hash = cfg.hash();
  for (const std::string name : {"vanilla", "dropam", "mrvpc"}) {
    auto it = models.find(name);
    if (it == models.end() || !it->second) throw DataError("ablation: missing checkpoint for model '" + name + "'");
  }
  for (const std::string name : {"vanilla", "dropam", "mrvpc"}) {
    for (const auto& rep : eval_scenarios(cfg, ds, *models.at(name), ablation_scenarios(), name)) {
      rows.push_back({rep.scenario, name, "cider", rep.cider, cfg.seed, hash, build_id()});
      rows.push_back({rep.scenario, name, "meteor", rep.meteor, cfg.seed, hash, build_id()});
    }
  }
  return rows;
}

std::vector<ReportRow> run_missing_curve(const RunConfig& cfg, const Dataset& ds, const Checkpoint& ckpt,
                                         const std::string& model_name, const std::vector<double>& percents) {
  check_vocab(ckpt, ds.vocab);
  const auto net = ckpt.make_model();
  const std::size_t n = ds.test.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, "curve.subset", 0));
  std::shuffle(order.begin(), order.end(), rng);
  const auto refs = references(ds.test);
  const auto ids = ids_of(ds.test);
  const std::string hash = cfg.hash();

  std::vector<ReportRow> rows;
  for (double q : percents) {
    if (!(q >= 0 && q <= 100)) throw ConfigError("missing curve: percentage " + fmt(q, "%g") + " outside [0,100]");
    const auto k = static_cast<std::size_t>(std::llround(q * static_cast<double>(n) / 100.0));
    data::Corpus corpus = ds.test;
    for (std::size_t j = 0; j < k; ++j) corpus[order[j]] = noise::null_asr(std::move(corpus[order[j]]));
    const auto preds = train::predict_corpus(net, corpus, ds.vocab, cfg.plan.decode);
    const auto rep = metrics::evaluate(ids, preds, refs, "asr_missing@" + fmt(q, "%g"), model_name);
    rows.push_back({rep.scenario, model_name, "cider", rep.cider, cfg.seed, hash, build_id()});
    rows.push_back({rep.scenario, model_name, "meteor", rep.meteor, cfg.seed, hash, build_id()});
  }
  return rows;
}

SweepResult run_drop_sweep(const RunConfig& cfg, const Dataset& ds, const std::vector<double>& grid,
                           const std::map<double, const Checkpoint*>& pretrained) {
  SweepResult res;
  res.table_header = {"p_asr", "p_events"};
  for (const auto& s : ablation_scenarios()) res.table_header.push_back(s);
  res.table_header.push_back("average");
  const std::string hash = cfg.hash();
  for (double p : grid) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("drop sweep: rate " + fmt(p, "%g") + " outside [0,1]");
    const std::string name = "dropam@" + fmt(p, "%g");
    std::optional<TrainedModel> trained;
    const Checkpoint* ckpt = nullptr;
    if (auto it = pretrained.find(p); it != pretrained.end() && it->second) {
      ckpt = it->second;
    } else {
      trained = train_model(cfg, ds, train::Mode::dropam, nullptr, name, p);
      ckpt = &trained->ckpt;
    }
    const auto reports = eval_scenarios(cfg, ds, *ckpt, ablation_scenarios(), name);
    std::vector<std::string> row = {fmt(p, "%g"), fmt(p, "%g")};
    double sum_meteor = 0, sum_cider = 0;
    for (const auto& rep : reports) {
      res.rows.push_back({rep.scenario, name, "meteor", rep.meteor, cfg.seed, hash, build_id()});
      res.rows.push_back({rep.scenario, name, "cider", rep.cider, cfg.seed, hash, build_id()});
      row.push_back(fmt(rep.meteor));
      sum_meteor += rep.meteor;
      sum_cider += rep.cider;
    }
    const double avg = sum_meteor / static_cast<double>(reports.size());
    res.rows.push_back({"average", name, "meteor", avg, cfg.seed, hash, build_id()});
    res.rows.push_back(
        {"average", name, "cider", sum_cider / static_cast<double>(reports.size()), cfg.seed, hash, build_id()});
    row.push_back(fmt(avg));
    res.table.push_back(std::move(row));
    res.average.push_back(avg);
  }
  return res;
}

GradCheckRun run_gradcheck(const RunConfig& cfg, const Dataset& ds, std::size_t batch,
                           std::size_t samples_per_tensor, double eps) {
  if (batch < 1 || batch > ds.train.size()) throw ConfigError("gradcheck: batch size out of range");
  const auto mc = model_config(cfg, ds.vocab);
  model::Mvpc<double> net(mc);
  net.init(derive_seed(cfg.seed, "model.init", "gradcheck"));
  std::vector<model::Example> examples;
  for (std::size_t i = 0; i < batch; ++i) {
    const auto& inst = ds.train[i];
    auto caption = text::encode_words(inst.caption, ds.vocab);
    if (static_cast<int>(caption.size()) > mc.max_caption_len) caption.resize(static_cast<std::size_t>(mc.max_caption_len));
    examples.push_back({&inst.video, train::aux_ids(inst, ds.vocab, mc), std::move(caption)});
  }
  const auto b = model::make_batch<double>(examples, mc, ds.vocab.bos(), ds.vocab.eos());

  // Reported loss is the extended-precision mean minus its value at the base
  // point, which keeps central differences above the rounding floor.
  long double baseline = 0;
  bool have_baseline = false;
  nn::LossClosure loss = [&](nn::ParamStore<double>&, bool with_grad) {
    model::ForwardCache<double> cache;
    const auto logits = net.forward(b, with_grad ? &cache : nullptr);
    if (with_grad) {
      nn::Mat<double> dlogits;
      nn::cross_entropy_rows(logits, b.targets, &dlogits);
      net.backward(b, cache, dlogits);
    }
    if (!have_baseline) {
      baseline = static_cast<long double>(nn::cross_entropy_rows_precise(logits, b.targets));
      have_baseline = true;
    }
    return nn::cross_entropy_rows_precise(logits, b.targets, baseline);
  };
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckRun run;
  run.report = nn::grad_check(loss, net.params(), eps, samples_per_tensor, derive_seed(cfg.seed, "gradcheck", 0));
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.parameters = net.params().size();
  return run;
}

PipelineResult run_pipeline(const RunConfig& cfg, bool with_dropam) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineResult res;
  const auto& out = cfg.out_dir;
  const auto ds = prepare_data(cfg);
  write_dataset(path_in(out, "data"), cfg, ds);

  auto& vanilla = res.models["vanilla"] = train_model(cfg, ds, train::Mode::vanilla);
  save_checkpoint(path_in(out, "vanilla.ckpt"), vanilla.ckpt);
  auto& mrvpc = res.models["mrvpc"] = train_model(cfg, ds, train::Mode::mrvpc, &vanilla.ckpt);
  save_checkpoint(path_in(out, "mrvpc.ckpt"), mrvpc.ckpt);
  write_corpus(path_in(out, "distill.jsonl"), mrvpc.distill->instances);
  if (with_dropam) {
    auto& dropam = res.models["dropam"] = train_model(cfg, ds, train::Mode::dropam);
    save_checkpoint(path_in(out, "dropam.ckpt"), dropam.ckpt);
  }

  std::vector<std::vector<std::string>> log_rows;
  for (const auto& [name, m] : res.models)
    for (std::size_t e = 0; e < m.log.epoch_loss.size(); ++e)
      log_rows.push_back({name, std::to_string(e), fmt(m.log.epoch_loss[e], "%.9g")});
  write_table(path_in(out, "train_log.csv"), {"model", "epoch", "loss"}, log_rows);

  std::vector<ReportRow> eval_rows;
  const std::string hash = cfg.hash();
  for (const auto& [name, m] : res.models) {
    for (auto& rep : eval_scenarios(cfg, ds, m.ckpt, cfg.scenarios, name)) {
      for (auto& row : report_rows(rep, cfg.seed, hash)) eval_rows.push_back(std::move(row));
      res.eval[name][rep.scenario] = std::move(rep);
    }
  }
  write_csv(path_in(out, "eval.csv"), eval_rows);

  for (const std::string name : {"vanilla", "mrvpc"})
    for (auto& row : run_missing_curve(cfg, ds, res.models.at(name).ckpt, name, cfg.percent_grid))
      res.curve.push_back(std::move(row));
  write_csv(path_in(out, "curve.csv"), res.curve);
  emit_plot(path_in(out, "curve.csv"), path_in(out, "curve.svg"), "cider");

  if (with_dropam) {
    res.ablation = run_ablation(cfg, ds,
                                {{"vanilla", &res.models.at("vanilla").ckpt},
                                 {"dropam", &res.models.at("dropam").ckpt},
                                 {"mrvpc", &res.models.at("mrvpc").ckpt}});
    write_csv(path_in(out, "ablation.csv"), res.ablation);
    emit_plot(path_in(out, "ablation.csv"), path_in(out, "ablation.svg"), "cider");
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace mrvpc::harness
