#include "doctest.h"

#include "mrvpc/common/seed.hpp"
#include "mrvpc/data/datagen.hpp"
#include "mrvpc/model/beam.hpp"
#include "mrvpc/model/mvpc.hpp"
#include "mrvpc/nncore/grad_check.hpp"
#include "mrvpc/text/timetok.hpp"

#include <array>
#include <cmath>
#include <map>
#include <random>

using namespace mrvpc;
using namespace mrvpc::model;
using nn::Mat;

namespace {

constexpr int kVocab = 40;
constexpr int kBos = 37, kEos = 38, kPad = 39;

ModelConfig small_config() {
  ModelConfig c;
  c.d = 16;
  c.heads = 2;
  c.video_layers = 1;
  c.text_layers = 1;
  c.decoder_layers = 1;
  c.frames = 6;
  c.feature_dim = 4;
  c.vocab_size = kVocab;
  c.max_caption_len = 10;
  c.max_aux_len = 20;
  c.pad_id = kPad;
  return c;
}

nn::Tensor<float> random_frames(int frames, int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> n(0.f, 1.f);
  nn::Tensor<float> t({static_cast<std::size_t>(frames), static_cast<std::size_t>(dim)});
  for (auto& v : t.values) v = n(rng);
  return t;
}

std::vector<int> random_ids(std::size_t n, std::uint64_t seed, int hi = 30) {
  Rng rng(seed);
  std::uniform_int_distribution<int> u(0, hi);
  std::vector<int> out(n);
  for (auto& v : out) v = u(rng);
  return out;
}

template <typename T>
Mvpc<T> make_net(std::uint64_t seed, double init_std = 0.02) {
  auto cfg = small_config();
  cfg.init_std = init_std;
  Mvpc<T> net(cfg);
  net.init(seed);
  return net;
}

double batch_loss(const Mvpc<double>& net, const Batch<double>& b) {
  return nn::cross_entropy_rows(net.forward(b, nullptr), b.targets, static_cast<Mat<double>*>(nullptr));
}

}  // namespace

TEST_CASE("config validation") {
  auto c = small_config();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.decoder_layers = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("encoder shapes and errors") {
  auto net = make_net<double>(1);
  const auto frames = random_frames(6, 4, 2);
  const auto v = net.encode_video(frames);
  CHECK(v.rows() == 6);
  CHECK(v.cols() == 16);
  const std::vector<int> minimal = {1, 2, 3, 4};
  const auto t = net.encode_text(minimal);
  CHECK(t.rows() == 4);
  CHECK(t.cols() == 16);
  CHECK(net.encode_text(minimal) == t);
  CHECK_THROWS_AS(net.encode_video(random_frames(5, 4, 2)), std::invalid_argument);
  CHECK_THROWS_AS(net.encode_text({1, kVocab}), std::invalid_argument);
  CHECK_THROWS_AS(net.encode_text(std::vector<int>(21, 1)), std::invalid_argument);
  for (const auto& e : net.params()) CHECK(e.value.all_finite());
}

TEST_CASE("fuse is lossless concatenation") {
  Mat<double> a = Mat<double>::Random(3, 5), b = Mat<double>::Random(2, 5);
  const auto f = Mvpc<double>::fuse(a, b);
  CHECK(f.rows() == 5);
  CHECK(f.topRows(3) == a);
  CHECK(f.bottomRows(2) == b);
  CHECK(Mvpc<double>::fuse(a, Mat<double>(0, 5)) == a);
  CHECK_THROWS_AS(Mvpc<double>::fuse(a, Mat<double>::Zero(2, 4)), std::invalid_argument);
}

TEST_CASE("padding does not change non-pad text outputs") {
  auto net = make_net<double>(3, 0.2);
  const auto aux = random_ids(7, 4);
  auto padded = aux;
  padded.insert(padded.end(), 5, kPad);
  const auto a = net.encode_text(aux);
  const auto b = net.encode_text(padded);
  CHECK(b.rows() == 12);
  CHECK((a - b.topRows(7)).cwiseAbs().maxCoeff() < 1e-12);

  // padded rows are excluded from the decoder memory as well
  std::vector<std::uint8_t> valid;
  const auto mem = net.encode(random_frames(6, 4, 5), padded, &valid);
  CHECK(mem.rows() == 18);
  CHECK(valid.size() == 18);
  for (int i = 0; i < 18; ++i) CHECK(valid[static_cast<std::size_t>(i)] == (i < 13 ? 1 : 0));
}

TEST_CASE("video encoder sensitivity and projection linearity") {
  auto net = make_net<double>(6, 0.2);
  const auto frames = random_frames(6, 4, 7);
  auto swapped = frames;
  for (int c = 0; c < 4; ++c) std::swap(swapped.values[static_cast<std::size_t>(c)], swapped.values[static_cast<std::size_t>(4 + c)]);
  CHECK((net.encode_video(frames) - net.encode_video(swapped)).cwiseAbs().maxCoeff() > 1e-6);

  net.params()[net.layout().video_proj.w].value.fill(0.0);
  nn::Tensor<float> zeros({6, 4});
  CHECK((net.encode_video(zeros) - net.encode_video(frames)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("untrained loss is near ln V") {
  auto net = make_net<double>(8);
  const auto frames = random_frames(6, 4, 9);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto mem = net.encode(frames, random_ids(8, s));
    const double loss = net.forward_loss(mem, random_ids(6, 100 + s), kBos, kEos);
    CHECK(loss > 0.85 * std::log(kVocab));
    CHECK(loss < 1.15 * std::log(kVocab));
  }
  const auto mem = net.encode(frames, random_ids(8, 1));
  CHECK_THROWS_AS(net.forward_loss(mem, {}, kBos, kEos), std::invalid_argument);
  CHECK_THROWS_AS(net.forward_loss(mem, std::vector<int>(11, 1), kBos, kEos), std::invalid_argument);
}

TEST_CASE("batched loss matches single-instance loss and duplicate invariance") {
  auto net = make_net<double>(10, 0.2);
  const auto f1 = random_frames(6, 4, 11), f2 = random_frames(6, 4, 12);
  const Example e1{&f1, random_ids(5, 13), random_ids(4, 14)};
  const Example e2{&f2, random_ids(9, 15), random_ids(7, 16)};
  const auto b1 = make_batch<double>({e1}, net.config(), kBos, kEos);
  const double single = batch_loss(net, b1);
  CHECK(single == doctest::Approx(net.forward_loss(net.encode(f1, e1.aux), e1.caption, kBos, kEos)).epsilon(1e-10));

  const auto b12 = make_batch<double>({e1, e2}, net.config(), kBos, kEos);
  const auto b1122 = make_batch<double>({e1, e1, e2, e2}, net.config(), kBos, kEos);
  CHECK(batch_loss(net, b1122) == doctest::Approx(batch_loss(net, b12)).epsilon(1e-12));
  const auto b11 = make_batch<double>({e1, e1}, net.config(), kBos, kEos);
  CHECK(batch_loss(net, b11) == doctest::Approx(single).epsilon(1e-12));

  CHECK_THROWS_AS(make_batch<double>({Example{&f1, e1.aux, {}}}, net.config(), kBos, kEos), std::invalid_argument);
  CHECK_THROWS_AS(make_batch<double>({Example{nullptr, e1.aux, e1.caption}}, net.config(), kBos, kEos),
                  std::invalid_argument);
}

TEST_CASE("decoder causality") {
  auto net = make_net<double>(17, 0.2);
  const auto f = random_frames(6, 4, 18);
  Example e{&f, random_ids(6, 19), random_ids(8, 20)};
  const auto base = net.forward(make_batch<double>({e}, net.config(), kBos, kEos), nullptr);
  for (int j = 0; j < 8; ++j) {
    auto changed = e;
    changed.caption[static_cast<std::size_t>(j)] = (changed.caption[static_cast<std::size_t>(j)] + 1) % 30;
    const auto logits = net.forward(make_batch<double>({changed}, net.config(), kBos, kEos), nullptr);
    // row r predicts target r from inputs BOS, c_0..c_{r-1}
    CHECK((logits.topRows(j + 1) - base.topRows(j + 1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((logits.row(j + 1) - base.row(j + 1)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("incremental decoding matches the full forward") {
  auto net = make_net<double>(21, 0.2);
  const auto f = random_frames(6, 4, 22);
  std::vector<int> aux = random_ids(7, 23);
  aux.push_back(kPad);
  const Example e{&f, aux, random_ids(6, 24)};
  const auto full = net.forward(make_batch<double>({e}, net.config(), kBos, kEos), nullptr);
  std::vector<std::uint8_t> valid;
  const auto mem = net.encode(f, aux, &valid);
  auto state = net.start_decoding(mem, &valid, 1);
  std::vector<int> inputs = {kBos};
  inputs.insert(inputs.end(), e.caption.begin(), e.caption.end());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const auto logits = net.decode_step(state, {0}, {inputs[t]});
    CHECK((logits.row(0) - full.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("null text pathway leaves word embeddings untouched") {
  auto net = make_net<double>(25, 0.2);
  const auto f = random_frames(6, 4, 26);
  // 30/31/32/33 stand for the separator and null markers
  const Example e{&f, {30, 31, 32, 33}, random_ids(5, 27, 20)};
  const auto b = make_batch<double>({e}, net.config(), kBos, kEos);
  ForwardCache<double> cache;
  const auto logits = net.forward(b, &cache);
  Mat<double> d;
  nn::cross_entropy_rows(logits, b.targets, &d);
  net.params().zero_grad();
  net.backward(b, cache, d);
  const auto g = net.params()[net.layout().text_embed].grad.mat();
  for (int r = 0; r < kVocab; ++r) {
    const bool used = r >= 30 && r <= 33;
    if (used)
      CHECK(g.row(r).cwiseAbs().maxCoeff() > 0);
    else
      CHECK(g.row(r).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("full-model gradients pass the numerical check") {
  auto net = make_net<double>(28, 0.3);
  const auto f1 = random_frames(6, 4, 29), f2 = random_frames(6, 4, 30);
  std::vector<int> aux2 = random_ids(5, 32);
  aux2.push_back(kPad);
  const std::vector<Example> ex = {{&f1, random_ids(7, 31), random_ids(4, 33)}, {&f2, aux2, random_ids(6, 34)}};
  const auto b = make_batch<double>(ex, net.config(), kBos, kEos);
  nn::LossClosure loss = [&](nn::ParamStore<double>&, bool grad) {
    ForwardCache<double> cache;
    const auto logits = net.forward(b, grad ? &cache : nullptr);
    Mat<double> d;
    const double l = nn::cross_entropy_rows(logits, b.targets, grad ? &d : nullptr);
    if (grad) net.backward(b, cache, d);
    return l;
  };
  const auto rep = nn::grad_check(loss, net.params(), 1e-5, 6, 1);
  INFO("worst: " << rep.worst_param);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("float and double models agree") {
  auto net = make_net<double>(35, 0.2);
  const auto netf = convert_model<float>(net);
  const auto f = random_frames(6, 4, 36);
  const Example e{&f, random_ids(6, 37), random_ids(5, 38)};
  const double ld = batch_loss(net, make_batch<double>({e}, net.config(), kBos, kEos));
  const auto bf = make_batch<float>({e}, netf.config(), kBos, kEos);
  const double lf = nn::cross_entropy_rows(netf.forward(bf, nullptr), bf.targets, static_cast<Mat<float>*>(nullptr));
  CHECK(lf == doctest::Approx(ld).epsilon(1e-4));
}

TEST_CASE("beam decoding is deterministic and bounded") {
  auto net = make_net<double>(39, 0.5);
  const auto f = random_frames(6, 4, 40);
  std::vector<std::uint8_t> valid;
  const auto mem = net.encode(f, random_ids(6, 41), &valid);
  DecodeConfig cfg;
  cfg.max_steps = 10;
  const auto a = net.beam_decode(mem, &valid, cfg, kBos, kEos);
  const auto b = net.beam_decode(mem, &valid, cfg, kBos, kEos);
  CHECK(a.tokens == b.tokens);
  CHECK(a.score == b.score);
  CHECK(a.tokens.size() <= 10);
  CHECK(a.truncated == (a.tokens.size() == 10));
}

// ----------------------------------------------------------------- beam search

namespace {

// Deterministic pseudo-random logits keyed on the prefix.
Eigen::RowVectorXd prefix_logits(const std::vector<int>& prefix, int vocab, std::uint64_t salt) {
  std::uint64_t key = salt;
  for (int t : prefix) key = splitmix64(key ^ static_cast<std::uint64_t>(t + 1));
  Rng rng(key);
  std::normal_distribution<double> n(0.0, 2.0);
  Eigen::RowVectorXd l(vocab);
  for (int i = 0; i < vocab; ++i) l(i) = n(rng);
  return l;
}

StepFn table_step(int vocab, std::uint64_t salt) {
  return [=](std::span<const int>, std::span<const std::vector<int>> prefixes) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(prefixes.size()), vocab);
    for (std::size_t i = 0; i < prefixes.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = prefix_logits(prefixes[i], vocab, salt);
    return out;
  };
}

}  // namespace

TEST_CASE("repetition penalty rule") {
  Eigen::RowVectorXd l(4);
  l << 2.0, -2.0, 1.0, 0.0;
  auto same = l;
  apply_repetition_penalty(same, {0, 1, 3}, 1.0);
  CHECK(same == l);
  apply_repetition_penalty(l, {0, 1, 0, 3}, 2.0);
  CHECK(l(0) == 1.0);
  CHECK(l(1) == -4.0);
  CHECK(l(2) == 1.0);
  CHECK(l(3) == 0.0);
}

TEST_CASE("beam of one is greedy decoding") {
  const int vocab = 6, eos = 0;
  for (std::uint64_t salt = 0; salt < 30; ++salt) {
    DecodeConfig cfg{1, 1.0, 0.0, 8};
    const auto res = beam_search(table_step(vocab, salt), eos, cfg);
    std::vector<int> greedy;
    bool finished = false;
    for (int step = 0; step < 8; ++step) {
      const auto l = prefix_logits(greedy, vocab, salt);
      Eigen::Index arg;
      l.maxCoeff(&arg);
      if (arg == eos) {
        finished = true;
        break;
      }
      greedy.push_back(static_cast<int>(arg));
    }
    CHECK(res.tokens == greedy);
    CHECK(res.truncated == !finished);
  }
}

TEST_CASE("beam of two beats greedy on a three-step toy") {
  // tokens: 0 = EOS, 1 = a, 2 = b. Every hypothesis emits three words, then EOS.
  const std::map<std::vector<int>, std::array<double, 2>> probs = {
      {{}, {0.6, 0.4}},     {{1}, {0.5, 0.5}},    {{2}, {0.9, 0.1}},   {{1, 1}, {0.5, 0.5}},
      {{1, 2}, {0.5, 0.5}}, {{2, 1}, {0.9, 0.1}}, {{2, 2}, {0.5, 0.5}}};
  StepFn step = [&](std::span<const int>, std::span<const std::vector<int>> prefixes) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(prefixes.size()), 3);
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
      auto row = out.row(static_cast<Eigen::Index>(i));
      if (prefixes[i].size() == 3) {
        row << 0.0, -1e9, -1e9;
      } else {
        const auto& p = probs.at(prefixes[i]);
        row << -1e9, std::log(p[0]), std::log(p[1]);
      }
    }
    return out;
  };
  // exhaustive enumeration of all length-3 word sequences
  double best_lp = -1e300;
  std::vector<int> best;
  for (int a = 1; a <= 2; ++a)
    for (int b = 1; b <= 2; ++b)
      for (int c = 1; c <= 2; ++c) {
        const double lp = std::log(probs.at({})[a - 1]) + std::log(probs.at({a})[b - 1]) +
                          std::log(probs.at({a, b})[c - 1]);
        if (lp > best_lp) best_lp = lp, best = {a, b, c};
      }
  const auto greedy = beam_search(step, 0, DecodeConfig{1, 1.0, 0.0, 6});
  const auto beam2 = beam_search(step, 0, DecodeConfig{2, 1.0, 0.0, 6});
  CHECK(beam2.tokens == best);
  CHECK(beam2.log_prob == doctest::Approx(best_lp).epsilon(1e-9));
  CHECK(greedy.log_prob < beam2.log_prob - 0.5);
  CHECK(greedy.tokens == std::vector<int>{1, 1, 1});
}

TEST_CASE("decode config validation and truncation") {
  CHECK_THROWS_AS((DecodeConfig{0, 1.2, 1.0, 5}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DecodeConfig{2, 0.9, 1.0, 5}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DecodeConfig{2, 1.2, 1.0, 0}.validate()), std::invalid_argument);
  StepFn never_eos = [](std::span<const int>, std::span<const std::vector<int>> prefixes) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(prefixes.size()), 8);
    out.col(0).setConstant(-1e9);
    return out;
  };
  const auto r = beam_search(never_eos, 0, DecodeConfig{3, 1.2, 1.0, 4});
  CHECK(r.truncated);
  CHECK(r.tokens.size() == 4);
}
