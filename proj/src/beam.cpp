#include "mrvpc/model/beam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace mrvpc::model {

void DecodeConfig::validate() const {
  if (beam < 1) throw std::invalid_argument("decode: beam must be >= 1");
  if (repetition_penalty < 1.0) throw std::invalid_argument("decode: repetition_penalty must be >= 1");
  if (max_steps < 1) throw std::invalid_argument("decode: max_steps must be >= 1");
  if (length_alpha < 0) throw std::invalid_argument("decode: length_alpha must be >= 0");
}

void apply_repetition_penalty(Eigen::Ref<Eigen::RowVectorXd> logits, const std::vector<int>& history,
                              double penalty) {
  if (penalty == 1.0) return;
  std::unordered_set<int> seen(history.begin(), history.end());
  for (int tok : seen) {
    if (tok < 0 || tok >= logits.size()) continue;
    double& l = logits(tok);
    l = l > 0 ? l / penalty : l * penalty;
  }
}

namespace {

struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0;
};

struct Candidate {
  int hyp = 0;
  int token = 0;
  double log_prob = 0;
};

double normalized(double log_prob, std::size_t length, double alpha) {
  if (alpha == 0.0 || length == 0) return log_prob;
  return log_prob / std::pow(static_cast<double>(length), alpha);
}

}  // namespace

DecodeResult beam_search(const StepFn& step, int eos, const DecodeConfig& cfg) {
  cfg.validate();
  std::vector<Hypothesis> live(1);
  std::vector<int> parents;
  std::vector<DecodeResult> finished;

  for (int t = 0; t < cfg.max_steps && !live.empty(); ++t) {
    std::vector<std::vector<int>> prefixes;
    prefixes.reserve(live.size());
    for (const auto& h : live) prefixes.push_back(h.tokens);
    Eigen::MatrixXd logits = step(parents, prefixes);
    if (logits.rows() != static_cast<Eigen::Index>(live.size()))
      throw std::logic_error("beam_search: step returned " + std::to_string(logits.rows()) +
                             " rows for " + std::to_string(live.size()) + " hypotheses");

    std::vector<Candidate> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(logits.cols()));
    for (std::size_t h = 0; h < live.size(); ++h) {
      Eigen::RowVectorXd row = logits.row(static_cast<Eigen::Index>(h));
      apply_repetition_penalty(row, live[h].tokens, cfg.repetition_penalty);
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      for (Eigen::Index v = 0; v < row.size(); ++v)
        cands.push_back({static_cast<int>(h), static_cast<int>(v), live[h].log_prob + row(v) - lse});
    }
    const std::size_t keep = std::min(cands.size(), 2 * static_cast<std::size_t>(cfg.beam));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.token != b.token) return a.token < b.token;
                        return a.hyp < b.hyp;
                      });

    std::vector<Hypothesis> next;
    std::vector<int> next_parents;
    for (std::size_t rank = 0; rank < keep; ++rank) {
      const Candidate& c = cands[rank];
      if (c.token == eos) {
        if (rank < static_cast<std::size_t>(cfg.beam)) {
          DecodeResult r;
          r.tokens = live[static_cast<std::size_t>(c.hyp)].tokens;
          r.log_prob = c.log_prob;
          r.score = normalized(c.log_prob, r.tokens.size() + 1, cfg.length_alpha);
          finished.push_back(std::move(r));
        }
      } else {
        Hypothesis h;
        h.tokens = live[static_cast<std::size_t>(c.hyp)].tokens;
        h.tokens.push_back(c.token);
        h.log_prob = c.log_prob;
        next.push_back(std::move(h));
        next_parents.push_back(c.hyp);
      }
      if (next.size() == static_cast<std::size_t>(cfg.beam)) break;
    }
    if (finished.size() >= static_cast<std::size_t>(cfg.beam)) break;
    live = std::move(next);
    parents = std::move(next_parents);
  }

  if (finished.empty()) {
    DecodeResult best;
    bool have = false;
    for (const auto& h : live) {
      const double s = normalized(h.log_prob, h.tokens.size(), cfg.length_alpha);
      if (!have || s > best.score) {
        best.tokens = h.tokens;
        best.log_prob = h.log_prob;
        best.score = s;
        have = true;
      }
    }
    best.truncated = true;
    return best;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (finished[i].score > finished[best].score) best = i;
  return finished[best];
}

}  // namespace mrvpc::model
