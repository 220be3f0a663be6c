#pragma once

#include "mrvpc/data/datagen.hpp"
#include "mrvpc/model/mvpc.hpp"
#include "mrvpc/noise/noisebench.hpp"
#include "mrvpc/train/robust_train.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mrvpc::harness {

struct CorpusSpec {
  std::string path;  // directory with train.jsonl / test.jsonl; empty -> generate
  std::size_t n_train = 2000;
  std::size_t n_test = 400;
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 2;
  bool inline_video = true;  // JSONL carries features instead of {"gen_seed": ...}
};

/// Everything a run needs. The corpus is fixed by world.seed and the split
/// seeds; the master seed drives initialization, training order, dropout
/// draws and test-time noise.
struct RunConfig {
  data::WorldSpec world;
  CorpusSpec corpus;
  int time_bins = 100;
  model::ModelConfig model;  // frames, feature_dim, vocab_size, pad_id are filled in from data
  train::TrainPlan plan;
  std::vector<std::string> scenarios;  // evaluation list
  std::map<std::string, noise::Scenario> custom_scenarios;
  std::vector<double> percent_grid = {0, 25, 50, 75, 100};
  std::vector<double> drop_grid = {0.1, 0.3, 0.5, 0.7, 0.9};
  std::string out_dir = "out";
  std::uint64_t seed = 1;

  RunConfig();

  /// Applies one key=value setting; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Every setting except the output directory as sorted key=value lines
  /// (custom scenarios included).
  std::string canonical() const;
  /// 16 hex digits of a hash over canonical().
  std::string hash() const;
  void validate() const;

  /// Built-in or custom scenario, seeded with the master seed.
  noise::Scenario scenario(const std::string& name) const;
};

/// Parses flat key=value text; '#' starts a comment, blank lines are ignored.
/// Keys may be written with a "[section]" header instead of a prefix.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path);

std::vector<double> parse_number_list(const std::string& text);
std::string build_id();

}  // namespace mrvpc::harness
