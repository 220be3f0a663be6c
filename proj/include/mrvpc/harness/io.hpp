#pragma once

#include "mrvpc/data/datagen.hpp"
#include "mrvpc/data/instance.hpp"
#include "mrvpc/metrics/capmetrics.hpp"
#include "mrvpc/model/mvpc.hpp"
#include "mrvpc/text/timetok.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mrvpc::harness {

/// Writes `content` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// ------------------------------------------------------------------ JSONL

/// One JSON object per line. With `gen_seeds`, videos are written as
/// {"gen_seed": s} instead of inline features.
std::string corpus_to_jsonl(const data::Corpus& corpus, const std::vector<std::uint64_t>* gen_seeds = nullptr);
/// `world` is needed only for {"gen_seed"} videos. Throws DataError with the
/// line number on malformed input.
data::Corpus corpus_from_jsonl(const std::string& text, const data::World* world = nullptr);

void write_corpus(const std::string& path, const data::Corpus& corpus,
                  const std::vector<std::uint64_t>* gen_seeds = nullptr);
data::Corpus read_corpus(const std::string& path, const data::World* world = nullptr);

/// Per-instance generation seeds of gen_corpus(world, n, split_seed).
std::vector<std::uint64_t> corpus_seeds(std::size_t n, std::uint64_t split_seed);

/// One token per line.
void write_vocab(const std::string& path, const text::Vocab& vocab);
text::Vocab read_vocab(const std::string& path);

// ------------------------------------------------------------- checkpoint

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainMeta {
  std::string mode;
  int epochs = 0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  model::ModelConfig config;
  text::Vocab vocab;
  TrainMeta meta;
  nn::ParamStore<float> params;

  /// Builds a network holding these parameters.
  model::Mvpc<float> make_model() const;
};

Checkpoint make_checkpoint(const model::Mvpc<float>& net, const text::Vocab& vocab, TrainMeta meta);

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on a bad magic, unknown version, truncation, trailing
/// bytes, or parameters whose names/shapes disagree with the stored config.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint parameters into `net`; throws DataError on any
/// name/shape mismatch.
void load_into(model::Mvpc<float>& net, const Checkpoint& ckpt);

// -------------------------------------------------------------------- CSV

struct ReportRow {
  std::string scenario;
  std::string model;
  std::string metric;
  double value = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string build_id;
};

inline const char* kCsvHeader = "scenario,model,metric,value,seed,config_hash,build_id";

std::vector<ReportRow> report_rows(const metrics::MetricReport& rep, std::uint64_t seed,
                                   const std::string& config_hash);

std::string rows_to_csv(const std::vector<ReportRow>& rows);
std::vector<ReportRow> rows_from_csv(const std::string& text);  // throws DataError
void write_csv(const std::string& path, const std::vector<ReportRow>& rows);

/// Generic table with a header line; cells are written verbatim.
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

}  // namespace mrvpc::harness
