#include "mrvpc/train/robust_train.hpp"

#include "mrvpc/common/errors.hpp"
#include "mrvpc/common/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mrvpc::train {

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::vanilla: return "vanilla";
    case Mode::dropam: return "dropam";
    case Mode::mrvpc: return "mrvpc";
    case Mode::wordkd: return "wordkd";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  if (name == "vanilla") return Mode::vanilla;
  if (name == "dropam") return Mode::dropam;
  if (name == "mrvpc") return Mode::mrvpc;
  if (name == "wordkd") return Mode::wordkd;
  throw ConfigError("unknown training mode '" + name + "'");
}

void TrainPlan::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(base_lr >= 0)) throw ConfigError("train.lr must be >= 0");
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) throw ConfigError("train.warmup must lie in [0,1)");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(grad_clip > 0)) throw ConfigError("train.grad_clip must be > 0");
  if (!(p_asr >= 0 && p_asr <= 1) || !(p_events >= 0 && p_events <= 1))
    throw ConfigError("drop rates must lie in [0,1]");
  if (coupled_drop && p_asr != p_events) throw ConfigError("coupled drop needs p_asr == p_events");
  if (!(tau > 0)) throw ConfigError("train.tau must be > 0");
  if (!(lambda >= 0 && lambda <= 1)) throw ConfigError("train.lambda must lie in [0,1]");
  try {
    decode.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

nn::ScheduleSpec TrainPlan::schedule(std::size_t n_instances) const {
  nn::ScheduleSpec s;
  s.base_lr = base_lr;
  const std::int64_t per_epoch =
      static_cast<std::int64_t>((n_instances + static_cast<std::size_t>(batch_size) - 1) / batch_size);
  s.total_steps = std::max<std::int64_t>(1, per_epoch * epochs);
  s.warmup_steps = std::min<std::int64_t>(s.total_steps - 1,
                                          std::llround(warmup_fraction * static_cast<double>(s.total_steps)));
  return s;
}

std::pair<bool, bool> drop_decision(double p_asr, double p_events, Rng& rng, bool coupled) {
  if (coupled) {
    const double u = uniform_open_closed(rng);
    return {u <= p_asr, u <= p_events};
  }
  const double ua = uniform_open_closed(rng);
  const double ue = uniform_open_closed(rng);
  return {ua <= p_asr, ue <= p_events};
}

data::Instance drop_am(data::Instance inst, double p_asr, double p_events, Rng& rng, bool coupled) {
  if (!(p_asr >= 0 && p_asr <= 1) || !(p_events >= 0 && p_events <= 1))
    throw std::invalid_argument("drop_am: rates must lie in [0,1]");
  const auto [drop_a, drop_e] = drop_decision(p_asr, p_events, rng, coupled);
  if (drop_a) inst.asr.reset();
  if (drop_e) inst.events.reset();
  return inst;
}

std::vector<int> aux_ids(const data::Instance& inst, const text::Vocab& vocab, const model::ModelConfig& cfg) {
  return text::serialize_aux(inst, vocab, static_cast<std::size_t>(cfg.max_aux_len)).ids;
}

namespace {

// The four modality variants of one instance, encoded once.
struct Encoded {
  const data::Instance* inst = nullptr;
  std::vector<int> aux[2][2];  // [asr dropped][events dropped]
  std::vector<int> caption;
};

std::vector<Encoded> encode_corpus(const data::Corpus& corpus, const text::Vocab& vocab,
                                   const model::ModelConfig& cfg, bool variants) {
  std::vector<Encoded> out(corpus.size());
  const std::size_t max_aux = static_cast<std::size_t>(cfg.max_aux_len);
  static const std::optional<std::vector<data::AsrSentence>> no_asr;
  static const std::optional<std::vector<data::Event>> no_events;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& inst = corpus[i];
    auto& e = out[i];
    e.inst = &inst;
    e.caption = text::encode_words(inst.caption, vocab);
    if (static_cast<int>(e.caption.size()) > cfg.max_caption_len)
      e.caption.resize(static_cast<std::size_t>(cfg.max_caption_len));
    e.aux[0][0] = text::serialize_aux(inst.asr, inst.events, vocab, max_aux).ids;
    if (variants) {
      e.aux[1][0] = text::serialize_aux(no_asr, inst.events, vocab, max_aux).ids;
      e.aux[0][1] = text::serialize_aux(inst.asr, no_events, vocab, max_aux).ids;
      e.aux[1][1] = text::serialize_aux(no_asr, no_events, vocab, max_aux).ids;
    }
  }
  return out;
}

}  // namespace

TrainLog train(model::Mvpc<float>& net, const data::Corpus& corpus, const text::Vocab& vocab,
               const TrainPlan& plan, const model::Mvpc<float>* teacher) {
  plan.validate();
  const auto& cfg = net.config();
  if (static_cast<std::size_t>(cfg.vocab_size) != vocab.size())
    throw ConfigError("train: model vocab size " + std::to_string(cfg.vocab_size) + " != vocab size " +
                      std::to_string(vocab.size()));
  if (cfg.pad_id != vocab.pad()) throw ConfigError("train: model pad id does not match the vocab");
  if (plan.mode == Mode::wordkd) {
    if (!teacher) throw ConfigError("train: wordkd mode needs a teacher");
    if (!(teacher->config() == cfg)) throw ConfigError("train: teacher config differs from the student");
  }

  TrainLog log;
  const auto encoded = encode_corpus(corpus, vocab, cfg, plan.uses_drop());
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    if (encoded[i].caption.empty() && plan.skip_empty_captions) {
      ++log.skipped_empty;
      continue;
    }
    usable.push_back(i);
  }
  if (plan.epochs == 0) return log;
  if (usable.empty()) throw DataError("train: no usable training instances");

  const auto schedule = plan.schedule(usable.size());
  nn::AdamState<float> adam;
  const int bos = vocab.bos(), eos = vocab.eos();
  const std::size_t bs = static_cast<std::size_t>(plan.batch_size);
  std::int64_t step = 0;

  model::ForwardCache<float> cache;
  nn::Mat<float> dlogits;
  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    Rng shuffle_rng(derive_seed(plan.seed, "train.shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t drop_base = derive_seed(plan.seed, "train.drop", static_cast<std::uint64_t>(epoch));

    double loss_sum = 0;
    std::size_t loss_batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += bs) {
      const std::size_t b1 = std::min(order.size(), b0 + bs);
      std::vector<model::Example> examples, complete;
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& e = encoded[order[k]];
        bool da = false, de = false;
        if (plan.uses_drop()) {
          // one stream per (epoch, corpus position): independent of batch order
          Rng rng(derive_seed(drop_base, "instance", static_cast<std::uint64_t>(order[k])));
          std::tie(da, de) = drop_decision(plan.p_asr, plan.p_events, rng, plan.coupled_drop);
          ++log.drop_calls;
          log.asr_dropped += da;
          log.events_dropped += de;
        }
        examples.push_back({&e.inst->video, e.aux[da][de], e.caption});
        if (plan.mode == Mode::wordkd) complete.push_back({&e.inst->video, e.aux[0][0], e.caption});
      }
      const auto batch = model::make_batch<float>(examples, cfg, bos, eos);
      net.params().zero_grad();
      const auto logits = net.forward(batch, &cache);
      double loss;
      if (plan.mode == Mode::wordkd) {
        const auto full = model::make_batch<float>(complete, cfg, bos, eos);
        const auto teacher_logits = teacher->forward(full, nullptr);
        loss = word_kd_loss(logits, teacher_logits, plan.tau, plan.lambda, batch.targets, &dlogits);
      } else {
        loss = static_cast<double>(nn::cross_entropy_rows(logits, batch.targets, &dlogits));
      }
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at step " << step << " (epoch " << epoch << "), batch ids:";
        for (std::size_t k = b0; k < b1; ++k) msg << ' ' << encoded[order[k]].inst->id;
        throw NumericError(msg.str());
      }
      if (step == 0) log.initial_loss = loss;
      net.backward(batch, cache, dlogits);
      nn::clip_global_norm(net.params(), plan.grad_clip);
      nn::adam_step(net.params(), adam, nn::cosine_lr(step, schedule), plan.weight_decay);
      ++step;
      loss_sum += loss;
      ++loss_batches;
    }
    log.epoch_loss.push_back(loss_sum / static_cast<double>(loss_batches));
  }
  log.steps = step;
  if (!net.params().all_finite()) throw NumericError("train: parameters became non-finite");
  return log;
}

data::Tokens predict(const model::Mvpc<float>& net, const data::Instance& inst, const text::Vocab& vocab,
                     const model::DecodeConfig& cfg) {
  std::vector<std::uint8_t> valid;
  const auto memory = net.encode(inst.video, aux_ids(inst, vocab, net.config()), &valid);
  const auto res = net.beam_decode(memory, &valid, cfg, vocab.bos(), vocab.eos());
  return text::decode_ids(res.tokens, vocab);
}

std::vector<data::Tokens> predict_corpus(const model::Mvpc<float>& net, const data::Corpus& corpus,
                                         const text::Vocab& vocab, const model::DecodeConfig& cfg) {
  std::vector<data::Tokens> out(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { out[i] = predict(net, corpus[i], vocab, cfg); });
  return out;
}

DistillSet build_distill_set(const Teacher& teacher, const data::Corpus& train_set, const std::string& tag) {
  DistillSet ds;
  ds.instances = train_set;
  ds.source.assign(train_set.size(), tag);
  ds.empty.assign(train_set.size(), 0);
  parallel_for(train_set.size(), [&](std::size_t i) {
    ds.instances[i].caption = teacher(train_set[i]);
    ds.empty[i] = ds.instances[i].caption.empty();
  });
  return ds;
}

DistillSet build_distill_set(const model::Mvpc<float>& teacher, const data::Corpus& train_set,
                             const text::Vocab& vocab, const model::DecodeConfig& cfg) {
  cfg.validate();
  return build_distill_set([&](const data::Instance& inst) { return predict(teacher, inst, vocab, cfg); },
                           train_set, "teacher");
}

data::Corpus make_augmented(const data::Corpus& train_set, const DistillSet& distilled) {
  if (train_set.size() != distilled.instances.size())
    throw std::invalid_argument("make_augmented: training set has " + std::to_string(train_set.size()) +
                                " instances, distill set " + std::to_string(distilled.instances.size()));
  data::Corpus out;
  out.reserve(2 * train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    out.push_back(train_set[i]);
    out.push_back(distilled.instances[i]);
  }
  return out;
}

double word_kd_loss(const nn::Mat<float>& student, const nn::Mat<float>& teacher, double tau, double lambda,
                    const std::vector<int>& targets, nn::Mat<float>* dstudent) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols())
    throw std::invalid_argument("word_kd_loss: student/teacher shape mismatch");
  if (static_cast<std::size_t>(student.rows()) != targets.size())
    throw std::invalid_argument("word_kd_loss: row/target count mismatch");
  if (!(tau > 0) || !(lambda >= 0 && lambda <= 1)) throw std::invalid_argument("word_kd_loss: bad tau or lambda");
  std::size_t count = 0;
  for (int t : targets) count += t >= 0;
  if (dstudent) *dstudent = nn::Mat<float>::Zero(student.rows(), student.cols());
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  const Eigen::Index v = student.cols();
  double total = 0;
  for (Eigen::Index r = 0; r < student.rows(); ++r) {
    const int target = targets[static_cast<std::size_t>(r)];
    if (target < 0) continue;
    if (target >= v) throw std::invalid_argument("word_kd_loss: target out of range");
    const Eigen::RowVectorXd s = student.row(r).cast<double>();
    const Eigen::RowVectorXd t = teacher.row(r).cast<double>();
    // plain softmax for CE
    const double smax = s.maxCoeff();
    Eigen::RowVectorXd p = (s.array() - smax).exp().matrix();
    const double zp = p.sum();
    p /= zp;
    const double ce = -(s(target) - smax - std::log(zp));
    // tempered distributions
    const Eigen::RowVectorXd st = s / tau, tt = t / tau;
    const double ms = st.maxCoeff(), mt = tt.maxCoeff();
    Eigen::RowVectorXd qs = (st.array() - ms).exp().matrix();
    Eigen::RowVectorXd qt = (tt.array() - mt).exp().matrix();
    const double zs = qs.sum(), zt = qt.sum();
    qs /= zs;
    qt /= zt;
    const Eigen::ArrayXd log_qs = st.array() - ms - std::log(zs);
    const Eigen::ArrayXd log_qt = tt.array() - mt - std::log(zt);
    double kl = 0;
    for (Eigen::Index j = 0; j < v; ++j)
      if (qt(j) > 0) kl += qt(j) * (log_qt(j) - log_qs(j));
    total += lambda * ce + (1.0 - lambda) * tau * tau * kl;
    if (dstudent) {
      Eigen::RowVectorXd g = lambda * p + (1.0 - lambda) * tau * (qs - qt);
      g(target) -= lambda;
      dstudent->row(r) = (g * inv).cast<float>();
    }
  }
  return total * inv;
}

}  // namespace mrvpc::train
