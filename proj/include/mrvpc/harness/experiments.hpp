#pragma once

#include "mrvpc/harness/config.hpp"
#include "mrvpc/harness/io.hpp"
#include "mrvpc/metrics/capmetrics.hpp"
#include "mrvpc/nncore/grad_check.hpp"
#include "mrvpc/train/robust_train.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mrvpc::harness {

struct Dataset {
  data::World world;
  data::Corpus train, test;
  text::Vocab vocab;
};

/// Generates the corpus from the config, or reads train.jsonl / test.jsonl
/// (and vocab.txt when present) from corpus.path.
Dataset prepare_data(const RunConfig& cfg);
/// Writes train.jsonl, test.jsonl and vocab.txt into `dir`.
void write_dataset(const std::string& dir, const RunConfig& cfg, const Dataset& ds);

model::ModelConfig model_config(const RunConfig& cfg, const text::Vocab& vocab);

/// Plan for one mode; `drop_rate` overrides both drop rates. The training
/// stream is derived from the master seed and `run_key`.
train::TrainPlan make_plan(const RunConfig& cfg, train::Mode mode, const std::string& run_key,
                           std::optional<double> drop_rate = std::nullopt);

struct TrainedModel {
  Checkpoint ckpt;
  train::TrainLog log;
  std::optional<train::DistillSet> distill;  // mrvpc mode only
};

/// Trains one model. mrvpc mode builds the distill set from `teacher` and
/// trains on the augmented set; wordkd uses the teacher's logits.
TrainedModel train_model(const RunConfig& cfg, const Dataset& ds, train::Mode mode,
                         const Checkpoint* teacher = nullptr, const std::string& run_key = "",
                         std::optional<double> drop_rate = std::nullopt);

/// Throws DataError when the checkpoint vocabulary differs from the data's.
void check_vocab(const Checkpoint& ckpt, const text::Vocab& vocab);

/// Evaluates the named scenarios on the test split. Every report other than
/// "complete" carries consistency against the complete-input predictions.
std::vector<metrics::MetricReport> eval_scenarios(const RunConfig& cfg, const Dataset& ds, const Checkpoint& ckpt,
                                                  const std::vector<std::string>& scenarios,
                                                  const std::string& model_name);

inline const std::vector<std::string>& ablation_scenarios() {
  static const std::vector<std::string> s = {"complete", "no_asr", "no_events", "video_only"};
  return s;
}

/// CIDEr and METEOR-lite for vanilla / dropam / mrvpc over complete, V+E,
/// V+A and V. Throws DataError when one of the three models is missing.
std::vector<ReportRow> run_ablation(const RunConfig& cfg, const Dataset& ds,
                                    const std::map<std::string, const Checkpoint*>& models);

/// ASR removed from a seeded round(q% * n) subset of the test split for each
/// q; subsets are nested. Scenario names are "asr_missing@q".
std::vector<ReportRow> run_missing_curve(const RunConfig& cfg, const Dataset& ds, const Checkpoint& ckpt,
                                         const std::string& model_name, const std::vector<double>& percents);

struct SweepResult {
  std::vector<ReportRow> rows;  // per grid point, scenario and metric, plus "average"
  std::vector<std::string> table_header;
  std::vector<std::vector<std::string>> table;  // one row per grid point
  std::vector<double> average;                  // METEOR-lite average per grid point
};

/// Trains one dropam model per rate p (p_asr = p_events = p). `pretrained`
/// supplies checkpoints for rates that were already trained.
SweepResult run_drop_sweep(const RunConfig& cfg, const Dataset& ds, const std::vector<double>& grid,
                           const std::map<double, const Checkpoint*>& pretrained = {});

struct GradCheckRun {
  nn::GradCheckReport report;
  double seconds = 0;
  std::size_t parameters = 0;
};

/// Float64 gradient check of the full model on one batch of `batch` training
/// instances.
GradCheckRun run_gradcheck(const RunConfig& cfg, const Dataset& ds, std::size_t batch = 2,
                           std::size_t samples_per_tensor = 8, double eps = 1e-5);

struct PipelineResult {
  std::map<std::string, std::map<std::string, metrics::MetricReport>> eval;  // model -> scenario -> report
  std::map<std::string, TrainedModel> models;
  std::vector<ReportRow> curve;
  std::vector<ReportRow> ablation;
  double seconds = 0;
};

/// generate -> teacher (vanilla) -> distill -> student (mrvpc) [-> dropam]
/// -> scenario eval -> missing curve [-> ablation] -> plots, all under
/// cfg.out_dir.
PipelineResult run_pipeline(const RunConfig& cfg, bool with_dropam = true);

}  // namespace mrvpc::harness
