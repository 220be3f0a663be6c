#include "mrvpc/metrics/capmetrics.hpp"

#include "mrvpc/common/parallel.hpp"

#include <algorithm>
#include <bitset>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace mrvpc::metrics {

namespace {

using NgramCounts = std::map<std::vector<std::string>, double>;

NgramCounts count_ngrams(const Tokens& toks, int n) {
  NgramCounts out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) out[Tokens(toks.begin() + i, toks.begin() + i + n)] += 1.0;
  return out;
}

}  // namespace

CiderResult cider_corpus(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                         double sigma, int n_max) {
  if (candidates.size() != references.size())
    throw std::invalid_argument("cider_corpus: candidate/reference count mismatch");
  if (candidates.size() < 2) throw std::invalid_argument("cider_corpus: corpus needs at least two instances");
  if (n_max < 1 || !(sigma > 0)) throw std::invalid_argument("cider_corpus: bad n_max or sigma");

  const std::size_t n_inst = candidates.size();
  const double log_n = std::log(static_cast<double>(n_inst));

  // ref_counts[n-1][i], cand_counts likewise; df over references
  std::vector<std::vector<NgramCounts>> ref_counts(n_max, std::vector<NgramCounts>(n_inst));
  std::vector<std::vector<NgramCounts>> cand_counts(n_max, std::vector<NgramCounts>(n_inst));
  std::vector<std::map<Tokens, double>> df(n_max);
  for (int n = 1; n <= n_max; ++n) {
    for (std::size_t i = 0; i < n_inst; ++i) {
      ref_counts[n - 1][i] = count_ngrams(references[i], n);
      cand_counts[n - 1][i] = count_ngrams(candidates[i], n);
      for (const auto& [g, c] : ref_counts[n - 1][i]) df[n - 1][g] += 1.0;
    }
  }

  CiderResult result;
  result.per_instance.assign(n_inst, 0.0);
  parallel_for(n_inst, [&](std::size_t i) {
    if (candidates[i].empty()) return;
    const double delta = static_cast<double>(candidates[i].size()) - static_cast<double>(references[i].size());
    const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
    double total = 0;
    for (int n = 1; n <= n_max; ++n) {
      auto weight = [&](const Tokens& g) {
        auto it = df[n - 1].find(g);
        const double d = it == df[n - 1].end() ? 0.0 : it->second;
        return log_n - std::log(std::max(1.0, d));
      };
      std::map<Tokens, double> vc, vr;
      double norm_c = 0, norm_r = 0;
      for (const auto& [g, c] : cand_counts[n - 1][i]) {
        const double w = c * weight(g);
        vc[g] = w;
        norm_c += w * w;
      }
      for (const auto& [g, c] : ref_counts[n - 1][i]) {
        const double w = c * weight(g);
        vr[g] = w;
        norm_r += w * w;
      }
      double dot = 0;
      for (const auto& [g, w] : vc) {
        auto it = vr.find(g);
        if (it != vr.end()) dot += std::min(w, it->second) * it->second;
      }
      if (norm_c > 0 && norm_r > 0) total += dot / (std::sqrt(norm_c) * std::sqrt(norm_r)) * penalty;
    }
    result.per_instance[i] = 10.0 * total / n_max;
  });
  double sum = 0;
  for (double v : result.per_instance) sum += v;
  result.score = sum / static_cast<double>(n_inst);
  return result;
}

// ------------------------------------------------------------- METEOR-lite

namespace {

constexpr std::size_t kMaxExactRef = 128;
constexpr std::size_t kStateBudget = 400000;

using RefMask = std::bitset<kMaxExactRef>;

struct Key {
  int i;
  int prev;
  RefMask mask;
  bool operator==(const Key& o) const { return i == o.i && prev == o.prev && mask == o.mask; }
};

struct KeyHash {
  std::size_t operator()(const Key& k) const {
    return std::hash<RefMask>()(k.mask) ^ (static_cast<std::size_t>(k.i) * 0x9e3779b97f4a7c15ULL) ^
           (static_cast<std::size_t>(k.prev + 1) << 20);
  }
};

struct AlignProblem {
  std::vector<int> cand_type;               // token type per candidate position, -1 if not in reference
  std::vector<std::vector<int>> ref_pos;    // ref positions per type
  std::vector<int> need;                    // matches required per type
  std::vector<std::vector<int>> cand_left;  // cand_left[i][t]: occurrences of t at positions >= i (sparse use)
};

struct ChunkSearch {
  const AlignProblem& p;
  std::unordered_map<Key, int, KeyHash> memo;
  bool exhausted = false;

  int matched_of(int t, const RefMask& mask) const {
    int c = 0;
    for (int r : p.ref_pos[t]) c += mask[r];
    return c;
  }

  // Minimal number of chunk starts from position i on. prev is the reference
  // position matched at i-1, or -1 when i-1 was unmatched.
  int solve(int i, int prev, const RefMask& mask) {
    if (i == static_cast<int>(p.cand_type.size())) return 0;
    if (exhausted) return 0;
    Key key{i, prev, mask};
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    if (memo.size() >= kStateBudget) {
      exhausted = true;
      return 0;
    }
    const int t = p.cand_type[i];
    int best = 1 << 29;
    if (t < 0) {
      best = solve(i + 1, -1, mask);
    } else {
      const int done = matched_of(t, mask);
      const int still = p.need[t] - done;
      if (p.cand_left[i][t] > still) best = std::min(best, solve(i + 1, -1, mask));
      if (still > 0) {
        for (int r : p.ref_pos[t]) {
          if (mask[r]) continue;
          RefMask next = mask;
          next.set(r);
          const int start = (prev >= 0 && r == prev + 1) ? 0 : 1;
          best = std::min(best, start + solve(i + 1, r, next));
        }
      }
    }
    memo.emplace(key, best);
    return best;
  }
};

int greedy_chunks(const AlignProblem& p, std::size_t ref_len) {
  std::vector<char> used(ref_len, 0);
  std::vector<int> done(p.need.size(), 0);
  int chunks = 0;
  int prev = -1;
  for (std::size_t i = 0; i < p.cand_type.size(); ++i) {
    const int t = p.cand_type[i];
    if (t < 0 || done[t] >= p.need[t]) {
      prev = -1;
      continue;
    }
    int pick = -1;
    if (prev >= 0 && prev + 1 < static_cast<int>(ref_len) && !used[prev + 1]) {
      for (int r : p.ref_pos[t])
        if (r == prev + 1) pick = r;
    }
    if (pick < 0)
      for (int r : p.ref_pos[t])
        if (!used[r]) {
          pick = r;
          break;
        }
    if (pick < 0) throw std::logic_error("meteor_lite: no free reference position");
    used[static_cast<std::size_t>(pick)] = 1;
    ++done[t];
    if (!(prev >= 0 && pick == prev + 1)) ++chunks;
    prev = pick;
  }
  return chunks;
}

}  // namespace

MeteorDetail meteor_lite_detail(const Tokens& candidate, const Tokens& reference) {
  MeteorDetail d;
  if (candidate.empty() || reference.empty()) return d;

  AlignProblem p;
  std::unordered_map<std::string, int> type_of;
  for (std::size_t r = 0; r < reference.size(); ++r) {
    auto [it, fresh] = type_of.emplace(reference[r], static_cast<int>(p.ref_pos.size()));
    if (fresh) p.ref_pos.emplace_back();
    p.ref_pos[it->second].push_back(static_cast<int>(r));
  }
  const std::size_t n_types = p.ref_pos.size();
  std::vector<int> cand_count(n_types, 0);
  for (const auto& tok : candidate) {
    auto it = type_of.find(tok);
    p.cand_type.push_back(it == type_of.end() ? -1 : it->second);
    if (it != type_of.end()) ++cand_count[it->second];
  }
  p.need.resize(n_types);
  for (std::size_t t = 0; t < n_types; ++t) {
    p.need[t] = std::min<int>(cand_count[t], static_cast<int>(p.ref_pos[t].size()));
    d.matches += p.need[t];
  }
  if (d.matches == 0) return d;

  bool solved = false;
  if (reference.size() <= kMaxExactRef) {
    p.cand_left.assign(candidate.size() + 1, std::vector<int>(n_types, 0));
    for (std::size_t i = candidate.size(); i-- > 0;) {
      p.cand_left[i] = p.cand_left[i + 1];
      if (p.cand_type[i] >= 0) ++p.cand_left[i][p.cand_type[i]];
    }
    ChunkSearch search{p, {}, false};
    const int chunks = search.solve(0, -1, RefMask());
    if (!search.exhausted) {
      d.chunks = chunks;
      solved = true;
    }
  }
  if (!solved) {
    d.chunks = greedy_chunks(p, reference.size());
    d.exact = false;
  }

  const double m = d.matches;
  const double precision = m / static_cast<double>(candidate.size());
  const double recall = m / static_cast<double>(reference.size());
  const double f = 10.0 * precision * recall / (recall + 9.0 * precision);
  const double frag = static_cast<double>(d.chunks) / m;
  d.score = f * (1.0 - 0.5 * frag * frag * frag);
  return d;
}

double meteor_lite(const Tokens& candidate, const Tokens& reference) {
  return meteor_lite_detail(candidate, reference).score;
}

double r4(const Tokens& candidate) {
  if (candidate.size() < 4) return 0.0;
  const std::size_t positions = candidate.size() - 3;
  std::map<Tokens, int> seen;
  std::size_t repeats = 0;
  for (std::size_t i = 0; i < positions; ++i) {
    Tokens g(candidate.begin() + i, candidate.begin() + i + 4);
    if (seen[g]++ > 0) ++repeats;
  }
  return static_cast<double>(repeats) / static_cast<double>(positions);
}

double consistency_f1(const Tokens& a, const Tokens& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::unordered_map<std::string, int> ca;
  for (const auto& t : a) ++ca[t];
  int overlap = 0;
  for (const auto& t : b) {
    auto it = ca.find(t);
    if (it != ca.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(a.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(b.size());
  return 2.0 * p * r / (p + r);
}

MetricReport evaluate(const std::vector<std::string>& ids, const std::vector<Tokens>& candidates,
                      const std::vector<Tokens>& references, const std::string& scenario,
                      const std::string& model) {
  if (ids.size() != candidates.size()) throw std::invalid_argument("evaluate: id/candidate count mismatch");
  MetricReport rep;
  rep.scenario = scenario;
  rep.model = model;
  const auto cider = cider_corpus(candidates, references);
  rep.cider = cider.score;
  rep.per_instance.resize(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    auto& s = rep.per_instance[i];
    s.id = ids[i];
    s.cider = cider.per_instance[i];
    s.meteor = meteor_lite(candidates[i], references[i]);
    s.r4 = r4(candidates[i]);
  });
  double m = 0, r = 0;
  for (const auto& s : rep.per_instance) {
    m += s.meteor;
    r += s.r4;
  }
  rep.meteor = m / static_cast<double>(ids.size());
  rep.r4 = r / static_cast<double>(ids.size());
  return rep;
}

void attach_consistency(MetricReport& report, const std::vector<Tokens>& predictions,
                        const std::vector<Tokens>& other_predictions) {
  if (predictions.size() != report.per_instance.size() || other_predictions.size() != predictions.size())
    throw std::invalid_argument("attach_consistency: size mismatch");
  double sum = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double c = consistency_f1(predictions[i], other_predictions[i]);
    report.per_instance[i].consistency = c;
    sum += c;
  }
  report.consistency = predictions.empty() ? 0.0 : sum / static_cast<double>(predictions.size());
}

}  // namespace mrvpc::metrics
