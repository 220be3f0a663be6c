#include "doctest.h"

#include "mrvpc/common/errors.hpp"
#include "mrvpc/data/datagen.hpp"
#include "mrvpc/noise/noisebench.hpp"
#include "mrvpc/text/timetok.hpp"

#include <cmath>

using namespace mrvpc;
using namespace mrvpc::noise;
using data::Event;

namespace {

const data::World& world() {
  static const data::World w{data::WorldSpec{}};
  return w;
}

const data::Corpus& corpus() {
  static const data::Corpus c = data::gen_corpus(world(), 200, 17);
  return c;
}

bool same_events(const std::optional<std::vector<Event>>& a, const std::optional<std::vector<Event>>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  if (a->size() != b->size()) return false;
  for (std::size_t i = 0; i < a->size(); ++i) {
    const auto &x = (*a)[i], &y = (*b)[i];
    if (x.start != y.start || x.end != y.end || x.action != y.action || x.object != y.object) return false;
  }
  return true;
}

bool same_asr(const std::optional<std::vector<data::AsrSentence>>& a,
              const std::optional<std::vector<data::AsrSentence>>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  if (a->size() != b->size()) return false;
  for (std::size_t i = 0; i < a->size(); ++i)
    if ((*a)[i].tokens != (*b)[i].tokens || (*a)[i].start != (*b)[i].start || (*a)[i].end != (*b)[i].end)
      return false;
  return true;
}

bool same(const data::Instance& a, const data::Instance& b) {
  return a.id == b.id && a.caption == b.caption && a.video.values == b.video.values && same_asr(a.asr, b.asr) &&
         same_events(a.events, b.events);
}

data::Instance four_sentence_instance() {
  data::Instance inst;
  inst.id = "four";
  inst.caption = {"x"};
  inst.asr = std::vector<data::AsrSentence>{
      {{"a", "b"}, 0.1, 0.2}, {{"c"}, 0.3, 0.4}, {{"d"}, 0.5, 0.6}, {{"e", "f"}, 0.7, 0.8}};
  inst.events = std::vector<Event>{{0, 0, 0.1, 0.2}, {1, 1, 0.3, 0.4}, {2, 2, 0.5, 0.6}, {3, 3, 0.7, 0.8}};
  return inst;
}

double ci999(double p, double n) { return 3.2905 * std::sqrt(p * (1 - p) / n); }

}  // namespace

TEST_CASE("null ops") {
  const auto& inst = corpus()[0];
  const auto a = null_asr(inst);
  CHECK_FALSE(a.asr.has_value());
  CHECK(same_events(a.events, inst.events));
  CHECK(a.caption == inst.caption);
  CHECK(same(null_asr(a), a));
  const auto both = null_events(a);
  const text::Vocab v(world().lexicon(), 100);
  CHECK(text::serialize_aux(both, v).ids == std::vector<int>{v.sep_asr(), v.null_asr(), v.sep_evt(), v.null_evt()});
  CHECK(both.video.values == inst.video.values);
}

TEST_CASE("random_missing") {
  Rng rng(1);
  const auto& inst = corpus()[1];
  CHECK(same(random_missing(inst, 0.0, rng), inst));
  const auto vo = random_missing(inst, 1.0, rng);
  CHECK_FALSE(vo.asr.has_value());
  CHECK_FALSE(vo.events.has_value());

  double both_present = 0, asr_present = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const auto r = random_missing(inst, 0.5, rng);
    both_present += r.asr.has_value() && r.events.has_value();
    asr_present += r.asr.has_value();
  }
  CHECK(std::fabs(both_present / n - 0.25) <= 0.01);
  CHECK(std::fabs(asr_present / n - 0.5) <= ci999(0.5, n));
}

TEST_CASE("asr_sentence_delete") {
  Rng rng(2);
  const auto inst = four_sentence_instance();
  CHECK(same(asr_sentence_delete(inst, 0.0, rng), inst));
  CHECK_FALSE(asr_sentence_delete(inst, 1.0, rng).asr.has_value());

  // survivor counts against Binomial(4, 0.5): chi-square with 4 degrees of freedom
  std::array<double, 5> observed{};
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto r = asr_sentence_delete(inst, 0.5, rng);
    const std::size_t k = r.asr ? r.asr->size() : 0;
    observed[k] += 1;
    if (r.asr) {
      for (std::size_t i = 1; i < r.asr->size(); ++i) CHECK((*r.asr)[i - 1].start < (*r.asr)[i].start);
    }
  }
  const std::array<double, 5> pmf = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  double chi2 = 0;
  for (std::size_t k = 0; k < 5; ++k) {
    const double e = pmf[k] * trials;
    chi2 += (observed[k] - e) * (observed[k] - e) / e;
  }
  CHECK(chi2 < 18.467);  // 99.9% quantile of chi-square(4)
  double mean = 0;
  for (std::size_t k = 0; k < 5; ++k) mean += static_cast<double>(k) * observed[k];
  CHECK(mean / trials == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("asr_degrade") {
  Rng rng(3);
  const std::vector<std::string> foreign = {"zz0", "zz1", "zz2", "zz3"};
  const auto& inst = corpus()[2];
  CHECK(same(asr_degrade(inst, 0.0, 0.0, rng, foreign), inst));
  CHECK_FALSE(asr_degrade(inst, 0.0, 1.0, rng, foreign).asr.has_value());
  const auto all_sub = asr_degrade(inst, 1.0, 0.0, rng, foreign);
  for (const auto& s : *all_sub.asr)
    for (const auto& t : s.tokens) CHECK(t.rfind("zz", 0) == 0);

  double total = 0, substituted = 0, surviving = 0;
  for (int rep = 0; rep < 10; ++rep) {
    for (const auto& src : corpus()) {
      for (const auto& s : *src.asr) total += static_cast<double>(s.tokens.size());
      const auto r = asr_degrade(src, 0.15, 0.10, rng, foreign);
      if (!r.asr) continue;
      for (const auto& s : *r.asr) {
        CHECK_FALSE(s.tokens.empty());
        for (const auto& t : s.tokens) {
          surviving += 1;
          substituted += t.rfind("zz", 0) == 0;
        }
      }
    }
  }
  const double deleted = total - surviving;
  CHECK(std::fabs((substituted + deleted) / total - 0.25) <= ci999(0.25, total));
  CHECK(std::fabs(substituted / total - 0.15) <= ci999(0.15, total));
  CHECK(std::fabs(deleted / total - 0.10) <= ci999(0.10, total));
}

TEST_CASE("event_delete") {
  Rng rng(4);
  const auto inst = four_sentence_instance();
  CHECK(same(event_delete(inst, 0.0, rng), inst));
  CHECK_FALSE(event_delete(inst, 1.0, rng).events.has_value());
  for (int t = 0; t < 200; ++t) {
    const auto r = event_delete(inst, 0.5, rng);
    if (!r.events) continue;
    for (std::size_t i = 1; i < r.events->size(); ++i) CHECK((*r.events)[i - 1].action < (*r.events)[i].action);
    CHECK(same_asr(r.asr, inst.asr));
  }
}

TEST_CASE("boundary perturbation arithmetic and repair") {
  const auto e = perturb_event({1, 2, 0.20, 0.40}, 0.05, -0.05);
  CHECK(e.start == doctest::Approx(0.25));
  CHECK(e.end == doctest::Approx(0.35));
  CHECK(e.action == 1);
  CHECK(e.object == 2);

  const auto inv = perturb_event({0, 0, 0.50, 0.52}, 0.10, -0.10);
  CHECK(inv.start == doctest::Approx(0.505));
  CHECK(inv.end == doctest::Approx(0.515));

  const auto top = perturb_event({0, 0, 0.98, 1.0}, 0.05, 0.05);
  CHECK(top.start == doctest::Approx(0.99));
  CHECK(top.end == doctest::Approx(1.0));
  const auto bottom = perturb_event({0, 0, 0.0, 0.01}, -0.05, -0.05);
  CHECK(bottom.start == doctest::Approx(0.0));
  CHECK(bottom.end == doctest::Approx(0.01));

  Rng rng(5);
  const auto& inst = corpus()[3];
  CHECK(same(boundary_perturb(inst, 0.0, rng), inst));
  for (const auto& src : corpus()) {
    const auto r = boundary_perturb(src, 0.05, rng);
    REQUIRE(r.events->size() == src.events->size());
    for (std::size_t i = 0; i < r.events->size(); ++i) {
      const auto &a = (*r.events)[i], &b = (*src.events)[i];
      CHECK(0.0 <= a.start);
      CHECK(a.start < a.end);
      CHECK(a.end <= 1.0);
      CHECK(std::fabs(a.start - b.start) <= 0.05 + 0.01);
    }
  }
}

TEST_CASE("uniform_boundaries") {
  const auto& inst = corpus()[4];
  const auto one = uniform_boundaries(inst, 1);
  REQUIRE(one.events->size() == 1);
  CHECK((*one.events)[0].start == 0.0);
  CHECK((*one.events)[0].end == 1.0);
  const auto four = uniform_boundaries(inst, 4);
  REQUIRE(four.events->size() == 4);
  const double edges[] = {0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK((*four.events)[i].start == doctest::Approx(edges[i]));
    CHECK((*four.events)[i].end == doctest::Approx(edges[i + 1]));
  }
  for (const auto& src : corpus()) CHECK(uniform_boundaries(src, 4).events->size() == 4);
  CHECK_THROWS(uniform_boundaries(inst, 0));
}

TEST_CASE("scenario registry and parsing") {
  const auto& names = builtin_scenario_names();
  CHECK(names == std::vector<std::string>{"complete", "video_only", "random_missing", "asr_low_quality",
                                          "asr_sentence_del", "event_del", "boundary_perturb", "uniform_boundaries"});
  for (const auto& n : names) CHECK(builtin_scenario(n, 1).name == n);
  CHECK(builtin_scenario("no_asr").asr_ops.size() == 1);
  CHECK_THROWS_AS(builtin_scenario("fog"), ConfigError);

  const auto ops = parse_ops("asr_degrade(sub=0.3, del=0.2); asr_sentence_delete", "asr");
  REQUIRE(ops.size() == 2);
  CHECK(ops[0].name == "asr_degrade");
  CHECK(ops[0].params.at("sub") == 0.3);
  CHECK(ops[0].params.at("del") == 0.2);
  CHECK(ops[1].params.empty());  // registry defaults apply when the op runs
  CHECK(parse_ops("", "events").empty());
  CHECK_THROWS_AS(parse_ops("blur(x=1)", "asr"), ConfigError);
  CHECK_THROWS_AS(parse_ops("event_delete", "asr"), ConfigError);
  CHECK_THROWS_AS(parse_ops("event_delete(speed=2)", "events"), ConfigError);
  CHECK_THROWS_AS(parse_ops("event_delete(rate=abc)", "events"), ConfigError);
}

TEST_CASE("apply_scenario") {
  const auto& lex = world().lexicon();
  const auto complete = apply_scenario(corpus(), builtin_scenario("complete", 3), lex);
  for (std::size_t i = 0; i < corpus().size(); ++i) CHECK(same(complete[i], corpus()[i]));
  for (const auto& inst : apply_scenario(corpus(), builtin_scenario("video_only", 3), lex)) {
    CHECK_FALSE(inst.asr.has_value());
    CHECK_FALSE(inst.events.has_value());
  }
  for (const auto& name : builtin_scenario_names()) {
    const auto a = apply_scenario(corpus(), builtin_scenario(name, 3), lex);
    const auto b = apply_scenario(corpus(), builtin_scenario(name, 3), lex);
    REQUIRE(a.size() == corpus().size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(same(a[i], b[i]));
      CHECK(a[i].video.values == corpus()[i].video.values);
      CHECK(a[i].caption == corpus()[i].caption);
      CHECK_NOTHROW(data::validate_instance(a[i]));
    }
  }
  const auto s3 = apply_scenario(corpus(), builtin_scenario("random_missing", 3), lex);
  const auto s4 = apply_scenario(corpus(), builtin_scenario("random_missing", 4), lex);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < s3.size(); ++i) differ += !same(s3[i], s4[i]);
  CHECK(differ > 0);

  // a per-instance stream does not depend on corpus position
  data::Corpus tail(corpus().begin() + 100, corpus().end());
  const auto t = apply_scenario(tail, builtin_scenario("random_missing", 3), lex);
  for (std::size_t i = 0; i < tail.size(); ++i) CHECK(same(t[i], s3[100 + i]));

  Scenario custom{"custom", parse_ops("asr_sentence_delete(rate=1)", "asr"), parse_ops("uniform_boundaries(k=2)", "events"), 1};
  for (const auto& inst : apply_scenario(corpus(), custom, lex)) {
    CHECK_FALSE(inst.asr.has_value());
    CHECK(inst.events->size() == 2);
  }
}
