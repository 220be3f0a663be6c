#pragma once

#include "mrvpc/metrics/capmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mrvpc::testing {

using metrics::Tokens;

inline std::vector<std::string> ngrams(const Tokens& t, int n) {
  std::vector<std::string> out;
  for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) {
    std::string g;
    for (int k = 0; k < n; ++k) g += t[static_cast<std::size_t>(i + k)] + "\x1f";
    out.push_back(g);
  }
  return out;
}

inline double count_of(const std::vector<std::string>& grams, const std::string& g) {
  double c = 0;
  for (const auto& x : grams) c += x == g;
  return c;
}

/// CIDEr-D per instance (x10), computed naively: n-grams as joined strings,
/// counts and document frequencies by linear scans.
inline std::vector<double> oracle_cider(const std::vector<Tokens>& cands, const std::vector<Tokens>& refs) {
  const double n_docs = static_cast<double>(refs.size());
  std::vector<double> scores(cands.size(), 0.0);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    double total = 0;
    for (int n = 1; n <= 4; ++n) {
      const auto cg = ngrams(cands[i], n), rg = ngrams(refs[i], n);
      auto idf = [&](const std::string& g) {
        double df = 0;
        for (const auto& r : refs) df += count_of(ngrams(r, n), g) > 0;
        return std::log(n_docs) - std::log(std::max(1.0, df));
      };
      std::vector<std::string> vocab;
      for (const auto& g : cg)
        if (std::find(vocab.begin(), vocab.end(), g) == vocab.end()) vocab.push_back(g);
      for (const auto& g : rg)
        if (std::find(vocab.begin(), vocab.end(), g) == vocab.end()) vocab.push_back(g);
      double dot = 0, nc = 0, nr = 0;
      for (const auto& g : vocab) {
        const double w = idf(g);
        const double vc = count_of(cg, g) * w, vr = count_of(rg, g) * w;
        dot += std::min(vc, vr) * vr;
        nc += vc * vc;
        nr += vr * vr;
      }
      double sim = (nc > 0 && nr > 0) ? dot / (std::sqrt(nc) * std::sqrt(nr)) : 0.0;
      const double delta = static_cast<double>(cands[i].size()) - static_cast<double>(refs[i].size());
      sim *= std::exp(-delta * delta / (2 * 36.0));
      total += sim;
    }
    scores[i] = cands[i].empty() ? 0.0 : total / 4 * 10;
  }
  return scores;
}

}  // namespace mrvpc::testing
