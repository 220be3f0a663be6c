// Command-line front end: corpus generation, training, distillation,
// evaluation and the experiment drivers.

#include "mrvpc/common/errors.hpp"
#include "mrvpc/harness/config.hpp"
#include "mrvpc/harness/experiments.hpp"
#include "mrvpc/harness/io.hpp"
#include "mrvpc/harness/plot.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace mrvpc;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

harness::RunConfig resolve(const Common& c) {
  harness::RunConfig cfg = c.config.empty() ? harness::RunConfig{} : harness::load_config(c.config);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key=value configuration file");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "master seed (overrides run.seed)");
}

std::string model_name(const harness::Checkpoint& ckpt, const std::string& path) {
  return ckpt.meta.mode.empty() ? fs::path(path).stem().string() : ckpt.meta.mode;
}

void print_log(const std::string& name, const train::TrainLog& log) {
  std::printf("%s: %lld steps, initial loss %.4f, final epoch loss %.4f, drop_am calls %zu\n", name.c_str(),
              static_cast<long long>(log.steps), log.initial_loss,
              log.epoch_loss.empty() ? log.initial_loss : log.epoch_loss.back(), log.drop_calls);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Missing-modality-robust video paragraph captioning experiments"};
  app.require_subcommand(1);

  Common gen_c, train_c, distill_c, eval_c, sweep_c, curve_c, grad_c, pipe_c;
  std::string mode = "vanilla", teacher_path, checkpoint_path, percent_grid, drop_grid, plot_csv, plot_out,
              plot_metric;
  std::vector<std::string> scenarios, curve_checkpoints;
  std::size_t grad_batch = 2, grad_samples = 8;
  bool pipe_no_dropam = false;

  auto* gen = app.add_subcommand("generate", "write train/test JSONL and the vocabulary");
  add_common(gen, gen_c);

  auto* tr = app.add_subcommand("train", "train one model and write <mode>.ckpt");
  add_common(tr, train_c);
  tr->add_option("--mode", mode, "vanilla | dropam | mrvpc | wordkd");
  tr->add_option("--teacher", teacher_path, "teacher checkpoint (mrvpc, wordkd)");

  auto* dist = app.add_subcommand("distill", "decode the training split with a teacher into distill.jsonl");
  add_common(dist, distill_c);
  dist->add_option("--teacher", teacher_path, "teacher checkpoint")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint under noise scenarios into eval.csv");
  add_common(ev, eval_c);
  ev->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  ev->add_option("--scenario", scenarios, "scenario name (repeatable; default: config list)");

  auto* sw = app.add_subcommand("sweep", "drop-rate sweep into sweep.csv and sweep_table.csv");
  add_common(sw, sweep_c);
  sw->add_option("--drop-grid", drop_grid, "comma-separated drop rates");

  auto* cu = app.add_subcommand("curve", "CIDEr against the percentage of missing ASR");
  add_common(cu, curve_c);
  cu->add_option("--checkpoint", curve_checkpoints, "checkpoint (repeatable)")->required();
  cu->add_option("--percent-grid", percent_grid, "comma-separated percentages");

  auto* gc = app.add_subcommand("gradcheck", "float64 finite-difference check of every parameter tensor");
  add_common(gc, grad_c);
  gc->add_option("--batch", grad_batch, "instances in the checked batch");
  gc->add_option("--samples", grad_samples, "coordinates sampled per tensor");

  auto* pl = app.add_subcommand("plot", "render a report CSV as an SVG line chart");
  pl->add_option("csv", plot_csv, "report CSV")->required();
  pl->add_option("--out", plot_out, "output SVG")->required();
  pl->add_option("--metric", plot_metric, "metric to draw (default: first in file)");

  auto* pipe = app.add_subcommand("pipeline", "teacher, distill, student, eval, curve, ablation and plots");
  add_common(pipe, pipe_c);
  pipe->add_flag("--no-dropam", pipe_no_dropam, "skip the dropam-only model and the ablation grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const auto cfg = resolve(gen_c);
      const auto ds = harness::prepare_data(cfg);
      harness::write_dataset(cfg.out_dir, cfg, ds);
      std::printf("wrote %zu train / %zu test instances, %zu vocab tokens to %s\n", ds.train.size(), ds.test.size(),
                  ds.vocab.size(), cfg.out_dir.c_str());
    } else if (*tr) {
      auto cfg = resolve(train_c);
      const auto m = train::parse_mode(mode);
      const auto ds = harness::prepare_data(cfg);
      std::optional<harness::Checkpoint> teacher;
      if (!teacher_path.empty()) teacher = harness::load_checkpoint(teacher_path);
      if ((m == train::Mode::mrvpc || m == train::Mode::wordkd) && !teacher)
        throw ConfigError("--mode " + mode + " needs --teacher");
      const auto trained = harness::train_model(cfg, ds, m, teacher ? &*teacher : nullptr);
      harness::save_checkpoint(in_dir(cfg.out_dir, mode + ".ckpt"), trained.ckpt);
      std::vector<std::vector<std::string>> rows;
      for (std::size_t e = 0; e < trained.log.epoch_loss.size(); ++e) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", trained.log.epoch_loss[e]);
        rows.push_back({mode, std::to_string(e), buf});
      }
      harness::write_table(in_dir(cfg.out_dir, mode + "_log.csv"), {"model", "epoch", "loss"}, rows);
      if (trained.distill) harness::write_corpus(in_dir(cfg.out_dir, "distill.jsonl"), trained.distill->instances);
      print_log(mode, trained.log);
    } else if (*dist) {
      const auto cfg = resolve(distill_c);
      const auto ds = harness::prepare_data(cfg);
      const auto teacher = harness::load_checkpoint(teacher_path);
      harness::check_vocab(teacher, ds.vocab);
      const auto net = teacher.make_model();
      const auto set = train::build_distill_set(net, ds.train, ds.vocab, cfg.plan.decode);
      harness::write_corpus(in_dir(cfg.out_dir, "distill.jsonl"), set.instances);
      std::size_t empty = 0;
      for (auto e : set.empty) empty += e;
      std::printf("distilled %zu instances (%zu empty) into %s\n", set.instances.size(), empty,
                  in_dir(cfg.out_dir, "distill.jsonl").c_str());
    } else if (*ev) {
      const auto cfg = resolve(eval_c);
      const auto ds = harness::prepare_data(cfg);
      const auto ckpt = harness::load_checkpoint(checkpoint_path);
      harness::check_vocab(ckpt, ds.vocab);
      const auto names = scenarios.empty() ? cfg.scenarios : scenarios;
      const auto name = model_name(ckpt, checkpoint_path);
      std::vector<harness::ReportRow> rows;
      for (const auto& rep : harness::eval_scenarios(cfg, ds, ckpt, names, name)) {
        std::printf("%-20s cider %.4f meteor %.4f r4 %.4f\n", rep.scenario.c_str(), rep.cider, rep.meteor, rep.r4);
        for (auto& r : harness::report_rows(rep, cfg.seed, cfg.hash())) rows.push_back(std::move(r));
      }
      harness::write_csv(in_dir(cfg.out_dir, "eval.csv"), rows);
    } else if (*sw) {
      const auto cfg = resolve(sweep_c);
      const auto grid = drop_grid.empty() ? cfg.drop_grid : harness::parse_number_list(drop_grid);
      const auto ds = harness::prepare_data(cfg);
      const auto res = harness::run_drop_sweep(cfg, ds, grid);
      harness::write_csv(in_dir(cfg.out_dir, "sweep.csv"), res.rows);
      harness::write_table(in_dir(cfg.out_dir, "sweep_table.csv"), res.table_header, res.table);
      for (std::size_t i = 0; i < grid.size(); ++i) std::printf("p=%g average meteor %.4f\n", grid[i], res.average[i]);
    } else if (*cu) {
      const auto cfg = resolve(curve_c);
      const auto grid = percent_grid.empty() ? cfg.percent_grid : harness::parse_number_list(percent_grid);
      const auto ds = harness::prepare_data(cfg);
      std::vector<harness::ReportRow> rows;
      for (const auto& path : curve_checkpoints) {
        const auto ckpt = harness::load_checkpoint(path);
        for (auto& r : harness::run_missing_curve(cfg, ds, ckpt, model_name(ckpt, path), grid)) rows.push_back(std::move(r));
      }
      harness::write_csv(in_dir(cfg.out_dir, "curve.csv"), rows);
      harness::emit_plot(in_dir(cfg.out_dir, "curve.csv"), in_dir(cfg.out_dir, "curve.svg"), "cider");
      for (const auto& r : rows)
        if (r.metric == "cider") std::printf("%-8s %-18s cider %.4f\n", r.model.c_str(), r.scenario.c_str(), r.value);
    } else if (*gc) {
      const auto cfg = resolve(grad_c);
      const auto ds = harness::prepare_data(cfg);
      const auto run = harness::run_gradcheck(cfg, ds, grad_batch, grad_samples);
      std::printf("gradcheck: %zu coordinates over %zu tensors, max relative error %.3e (%s), %.1f s\n",
                  run.report.entries.size(), run.parameters, run.report.max_rel_error, run.report.worst_param.c_str(),
                  run.seconds);
      if (!(run.report.max_rel_error < 1e-4)) {
        std::fprintf(stderr, "error: gradient check failed\n");
        return 4;
      }
    } else if (*pl) {
      harness::emit_plot(plot_csv, plot_out, plot_metric);
    } else if (*pipe) {
      const auto cfg = resolve(pipe_c);
      const auto res = harness::run_pipeline(cfg, !pipe_no_dropam);
      for (const auto& [name, m] : res.models) print_log(name, m.log);
      for (const auto& [model, by_scenario] : res.eval)
        for (const auto& [scenario, rep] : by_scenario)
          std::printf("%-8s %-20s cider %.4f meteor %.4f\n", model.c_str(), scenario.c_str(), rep.cider, rep.meteor);
      std::printf("pipeline finished in %.1f s; outputs in %s\n", res.seconds, cfg.out_dir.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
