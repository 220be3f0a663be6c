#pragma once

#include "mrvpc/common/seed.hpp"
#include "mrvpc/data/instance.hpp"
#include "mrvpc/model/beam.hpp"
#include "mrvpc/model/mvpc.hpp"
#include "mrvpc/nncore/optim.hpp"
#include "mrvpc/text/timetok.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace mrvpc::train {

enum class Mode { vanilla, dropam, mrvpc, wordkd };

std::string mode_name(Mode m);
Mode parse_mode(const std::string& name);  // throws ConfigError

struct TrainPlan {
  int epochs = 30;
  int batch_size = 16;
  double base_lr = 1e-3;
  double warmup_fraction = 0.05;
  double weight_decay = 0.05;
  double grad_clip = 1.0;
  double p_asr = 0.5;
  double p_events = 0.5;
  bool coupled_drop = false;  // one shared draw for both modalities
  Mode mode = Mode::vanilla;
  model::DecodeConfig decode;
  double tau = 2.0;
  double lambda = 0.5;
  bool skip_empty_captions = true;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
  bool uses_drop() const { return mode != Mode::vanilla; }
  nn::ScheduleSpec schedule(std::size_t n_instances) const;
};

/// The two drop decisions (asr, events): each is true iff its draw from
/// (0,1] is <= the rate. With `coupled`, a single draw decides both.
std::pair<bool, bool> drop_decision(double p_asr, double p_events, Rng& rng, bool coupled = false);

data::Instance drop_am(data::Instance inst, double p_asr, double p_events, Rng& rng, bool coupled = false);

struct TrainLog {
  std::vector<double> epoch_loss;  // mean loss per epoch
  double initial_loss = 0;         // first batch, before any update
  std::int64_t steps = 0;
  std::size_t drop_calls = 0;
  std::size_t asr_dropped = 0;
  std::size_t events_dropped = 0;
  std::size_t skipped_empty = 0;
};

/// Trains in place. `teacher` is required for wordkd mode and ignored
/// otherwise. In mrvpc mode `corpus` is expected to be the augmented set.
TrainLog train(model::Mvpc<float>& net, const data::Corpus& corpus, const text::Vocab& vocab,
               const TrainPlan& plan, const model::Mvpc<float>* teacher = nullptr);

/// Model input ids for one instance.
std::vector<int> aux_ids(const data::Instance& inst, const text::Vocab& vocab, const model::ModelConfig& cfg);

/// Beam-decodes one instance; returns caption words.
data::Tokens predict(const model::Mvpc<float>& net, const data::Instance& inst, const text::Vocab& vocab,
                     const model::DecodeConfig& cfg);
std::vector<data::Tokens> predict_corpus(const model::Mvpc<float>& net, const data::Corpus& corpus,
                                         const text::Vocab& vocab, const model::DecodeConfig& cfg);

struct DistillSet {
  data::Corpus instances;           // inputs identical to the source, caption from the teacher
  std::vector<std::string> source;  // provenance tag per instance
  std::vector<std::uint8_t> empty;  // teacher produced nothing
};

using Teacher = std::function<data::Tokens(const data::Instance&)>;

DistillSet build_distill_set(const Teacher& teacher, const data::Corpus& train_set, const std::string& tag);
DistillSet build_distill_set(const model::Mvpc<float>& teacher, const data::Corpus& train_set,
                             const text::Vocab& vocab, const model::DecodeConfig& cfg);

/// Interleaves ground-truth and distilled instances: gt0, kd0, gt1, kd1, ...
data::Corpus make_augmented(const data::Corpus& train_set, const DistillSet& distilled);

/// lambda * CE(student, target) + (1 - lambda) * tau^2 * KL(softmax(t/tau) || softmax(s/tau)),
/// averaged over rows whose target is >= 0. Writes dL/dstudent when asked.
double word_kd_loss(const nn::Mat<float>& student, const nn::Mat<float>& teacher, double tau, double lambda,
                    const std::vector<int>& targets, nn::Mat<float>* dstudent = nullptr);

}  // namespace mrvpc::train
