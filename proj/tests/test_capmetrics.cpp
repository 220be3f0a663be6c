#include "doctest.h"

#include "mrvpc/common/seed.hpp"
#include "mrvpc/metrics/capmetrics.hpp"

#include "cider_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

using namespace mrvpc;
using namespace mrvpc::metrics;
using mrvpc::testing::oracle_cider;

namespace {

Tokens toks(const std::string& s) {
  Tokens out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur), cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Tokens random_tokens(Rng& rng, int max_len, int alphabet) {
  std::uniform_int_distribution<int> len(0, max_len), sym(0, alphabet - 1);
  Tokens t(static_cast<std::size_t>(len(rng)));
  for (auto& w : t) w = "w" + std::to_string(sym(rng));
  return t;
}

// ---- exhaustive METEOR alignment search

void enumerate(const Tokens& c, const Tokens& r, std::size_t i, std::vector<int>& align, std::vector<bool>& used,
               int target_m, int& best_chunks) {
  if (i == c.size()) {
    int m = 0, chunks = 0, prev_c = -2, prev_r = -2;
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (align[k] < 0) continue;
      ++m;
      if (!(prev_c == static_cast<int>(k) - 1 && prev_r == align[k] - 1)) ++chunks;
      prev_c = static_cast<int>(k);
      prev_r = align[k];
    }
    if (m == target_m) best_chunks = std::min(best_chunks, chunks);
    return;
  }
  align[i] = -1;
  enumerate(c, r, i + 1, align, used, target_m, best_chunks);
  for (std::size_t j = 0; j < r.size(); ++j) {
    if (used[j] || r[j] != c[i]) continue;
    used[j] = true;
    align[i] = static_cast<int>(j);
    enumerate(c, r, i + 1, align, used, target_m, best_chunks);
    used[j] = false;
  }
  align[i] = -1;
}

double meteor_formula(int m, int chunks, std::size_t lc, std::size_t lr) {
  if (m == 0) return 0.0;
  const double p = static_cast<double>(m) / static_cast<double>(lc), r = static_cast<double>(m) / static_cast<double>(lr);
  const double f = 10 * p * r / (r + 9 * p);
  const double frag = static_cast<double>(chunks) / m;
  return f * (1 - 0.5 * frag * frag * frag);
}

}  // namespace

TEST_CASE("cider matches a brute-force oracle") {
  Rng rng(11);
  std::uniform_int_distribution<int> size(2, 20);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = size(rng);
    std::vector<Tokens> cands, refs;
    for (int i = 0; i < n; ++i) {
      refs.push_back(random_tokens(rng, 20, 6));
      if (refs.back().empty()) refs.back() = {"w0"};
      cands.push_back(random_tokens(rng, 20, 6));
    }
    const auto res = cider_corpus(cands, refs);
    const auto oracle = oracle_cider(cands, refs);
    double mean = 0;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      CHECK(std::fabs(res.per_instance[i] - oracle[i]) < 1e-9);
      mean += oracle[i];
    }
    CHECK(std::fabs(res.score - mean / n) < 1e-9);
    CHECK(res.score >= 0);
  }
}

TEST_CASE("cider examples") {
  const std::vector<Tokens> refs = {toks("cut the onion ."), toks("fry the egg in oil ."), toks("add salt to the soup ."),
                                    toks("stir the sauce slowly .")};
  SUBCASE("exact candidates attain the per-reference maximum") {
    const auto self = cider_corpus(refs, refs);
    const auto oracle = oracle_cider(refs, refs);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      CHECK(std::fabs(self.per_instance[i] - oracle[i]) < 1e-9);
      for (std::size_t j = 0; j < refs.size(); ++j) {
        auto cands = refs;
        cands[i] = refs[j];
        CHECK(cider_corpus(cands, refs).per_instance[i] <= self.per_instance[i] + 1e-12);
      }
    }
  }
  SUBCASE("no shared token scores zero") {
    auto cands = refs;
    cands[1] = toks("zebra xylophone");
    CHECK(cider_corpus(cands, refs).per_instance[1] == 0.0);
  }
  SUBCASE("empty candidate scores zero") {
    auto cands = refs;
    cands[2] = {};
    CHECK(cider_corpus(cands, refs).per_instance[2] == 0.0);
  }
  SUBCASE("doubling the corpus") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Tokens> c, r, slices;
      for (int i = 0; i < 6; ++i) {
        r.push_back(random_tokens(rng, 12, 5));
        if (r.back().empty()) r.back() = {"w1"};
        c.push_back(random_tokens(rng, 12, 5));
      }
      // candidates whose n-grams all occur in some reference: contiguous slices
      std::uniform_int_distribution<std::size_t> pick(0, r.size() - 1);
      for (std::size_t i = 0; i < r.size(); ++i) {
        const Tokens& src = r[pick(rng)];
        std::uniform_int_distribution<std::size_t> lo(0, src.size() - 1);
        const std::size_t a = lo(rng);
        std::uniform_int_distribution<std::size_t> hi(a + 1, src.size());
        slices.emplace_back(src.begin() + static_cast<long>(a), src.begin() + static_cast<long>(hi(rng)));
      }
      auto twice = [](std::vector<Tokens> v) {
        const auto copy = v;
        v.insert(v.end(), copy.begin(), copy.end());
        return v;
      };
      CHECK(std::fabs(cider_corpus(slices, r).score - cider_corpus(twice(slices), twice(r)).score) < 1e-9);

      // in general only unseen n-grams (document frequency floored at 1) see the idf shift
      const double doubled = cider_corpus(twice(c), twice(r)).score;
      const auto o = oracle_cider(twice(c), twice(r));
      double mean = 0;
      for (double v : o) mean += v;
      CHECK(std::fabs(doubled - mean / static_cast<double>(o.size())) < 1e-9);
    }
  }
  SUBCASE("argument errors") {
    CHECK_THROWS_AS(cider_corpus({refs[0]}, {refs[0]}), std::invalid_argument);
    CHECK_THROWS_AS(cider_corpus(refs, {refs[0], refs[1]}), std::invalid_argument);
  }
}

TEST_CASE("meteor hand cases") {
  CHECK(meteor_lite(toks("a b c d"), toks("a b c d")) == doctest::Approx(0.9921875).epsilon(1e-15));
  CHECK(meteor_lite(toks("a"), toks("a")) == doctest::Approx(0.5));
  CHECK(meteor_lite(toks("a b"), toks("c d")) == 0.0);
  CHECK(meteor_lite({}, {}) == 0.0);
  CHECK(meteor_lite({}, toks("a")) == 0.0);
  // m = 2 in 2 chunks: P = R = 1, penalty 0.5
  CHECK(meteor_lite(toks("b a"), toks("a b")) == doctest::Approx(0.5));
  // one chunk preferred over the leftmost-first alignment
  const auto d = meteor_lite_detail(toks("a b a c"), toks("a c"));
  CHECK(d.matches == 2);
  CHECK(d.chunks == 1);
  CHECK(d.exact);
}

TEST_CASE("meteor matches exhaustive alignment search") {
  Rng rng(21);
  for (int trial = 0; trial < 400; ++trial) {
    const Tokens c = random_tokens(rng, 7, 3), r = random_tokens(rng, 7, 3);
    int m = 0;
    {
      Tokens rc = r;
      for (const auto& w : c) {
        auto it = std::find(rc.begin(), rc.end(), w);
        if (it != rc.end()) ++m, rc.erase(it);
      }
    }
    std::vector<int> align(c.size(), -1);
    std::vector<bool> used(r.size(), false);
    int best = 1 << 30;
    enumerate(c, r, 0, align, used, m, best);
    const auto d = meteor_lite_detail(c, r);
    CHECK(d.matches == m);
    if (m > 0) {
      CHECK(d.chunks == best);
      CHECK(std::fabs(d.score - meteor_formula(m, best, c.size(), r.size())) < 1e-12);
    } else {
      CHECK(d.score == 0.0);
    }
    CHECK(d.score >= 0.0);
    CHECK(d.score <= 1.0);
    // F is a weighted harmonic mean of P and R, so it never exceeds the larger
    if (!c.empty() && !r.empty())
      CHECK(d.score <= std::max(static_cast<double>(m) / static_cast<double>(c.size()),
                                static_cast<double>(m) / static_cast<double>(r.size())) + 1e-12);
  }
}

TEST_CASE("meteor self score is maximal among same-length candidates") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    Tokens x = random_tokens(rng, 8, 4);
    if (x.empty()) x = {"w0"};
    const double self = meteor_lite(x, x);
    for (int k = 0; k < 20; ++k) {
      Tokens y = x;
      std::uniform_int_distribution<int> sym(0, 4);
      for (auto& w : y)
        if (sym(rng) == 0) w = "w" + std::to_string(sym(rng));
      std::shuffle(y.begin(), y.end(), rng);
      CHECK(meteor_lite(y, x) <= self + 1e-12);
    }
  }
}

TEST_CASE("meteor falls back to a greedy pass on long references") {
  Tokens longref;
  for (int i = 0; i < 130; ++i) longref.push_back("t" + std::to_string(i % 7));
  const auto d = meteor_lite_detail(longref, longref);
  CHECK_FALSE(d.exact);
  CHECK(d.matches == 130);
  CHECK(d.chunks >= 1);
  CHECK(d.score > 0.9);
}

TEST_CASE("r4") {
  CHECK(r4(toks("a b c d e f")) == 0.0);
  CHECK(r4(toks("a b c d a b c d")) == doctest::Approx(0.2));
  CHECK(r4(toks("x x x x x")) == doctest::Approx(0.5));
  CHECK(r4(toks("a b c")) == 0.0);
  CHECK(r4({}) == 0.0);
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Tokens t = random_tokens(rng, 16, 3);
    Tokens relabeled = t;
    for (auto& w : relabeled) w = "q_" + w + "_z";
    const double v = r4(t);
    CHECK(v == r4(relabeled));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("consistency_f1") {
  CHECK(consistency_f1(toks("a b c"), toks("a b c")) == 1.0);
  CHECK(consistency_f1(toks("a b"), toks("c d")) == 0.0);
  CHECK(consistency_f1(toks("a b"), toks("a c")) == doctest::Approx(0.5));
  CHECK(consistency_f1({}, {}) == 1.0);
  CHECK(consistency_f1({}, toks("a")) == 0.0);
  // multiset overlap: "a a b" vs "a b b" share a, b
  CHECK(consistency_f1(toks("a a b"), toks("a b b")) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("evaluate and attach_consistency") {
  const std::vector<Tokens> refs = {toks("cut the onion ."), toks("fry the egg .")};
  const std::vector<Tokens> cands = {toks("cut the onion ."), toks("boil the egg .")};
  auto rep = evaluate({"i0", "i1"}, cands, refs, "complete", "vanilla");
  CHECK(rep.scenario == "complete");
  CHECK(rep.model == "vanilla");
  REQUIRE(rep.per_instance.size() == 2);
  CHECK(rep.per_instance[1].id == "i1");
  const auto cider = cider_corpus(cands, refs);
  CHECK(rep.cider == doctest::Approx(cider.score));
  CHECK(rep.meteor == doctest::Approx((meteor_lite(cands[0], refs[0]) + meteor_lite(cands[1], refs[1])) / 2));
  CHECK(rep.r4 == 0.0);
  CHECK_FALSE(rep.consistency.has_value());
  attach_consistency(rep, cands, refs);
  REQUIRE(rep.consistency.has_value());
  CHECK(*rep.consistency == doctest::Approx((1.0 + 0.75) / 2));
  CHECK(*rep.per_instance[0].consistency == 1.0);
  CHECK_THROWS_AS(attach_consistency(rep, cands, {refs[0]}), std::invalid_argument);
}
