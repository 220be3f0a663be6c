#pragma once

#include <optional>
#include <string>
#include <vector>

namespace mrvpc::metrics {

using Tokens = std::vector<std::string>;

struct CiderResult {
  double score = 0;                  // corpus mean, x10 scale
  std::vector<double> per_instance;  // x10 scale
};

/// CIDEr-D with one reference per instance. Document frequencies come from
/// the references of the whole corpus, so a single instance's score depends
/// on the rest of the corpus. Throws std::invalid_argument for fewer than two
/// instances or mismatched sizes.
CiderResult cider_corpus(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                         double sigma = 6.0, int n_max = 4);

struct MeteorDetail {
  int matches = 0;
  int chunks = 0;
  double score = 0;
  bool exact = true;  // false when the alignment search fell back to the greedy pass
};

/// Exact-match METEOR: a maximal one-to-one unigram alignment with the fewest
/// chunks, F = 10PR/(R+9P), penalty 0.5 (chunks/m)^3.
MeteorDetail meteor_lite_detail(const Tokens& candidate, const Tokens& reference);
double meteor_lite(const Tokens& candidate, const Tokens& reference);

/// Fraction of 4-gram positions whose 4-gram already appeared earlier.
double r4(const Tokens& candidate);

/// Bag-of-tokens F1 between two predictions; both empty gives 1.
double consistency_f1(const Tokens& a, const Tokens& b);

struct InstanceScore {
  std::string id;
  double cider = 0;
  double meteor = 0;
  double r4 = 0;
  std::optional<double> consistency;
};

struct MetricReport {
  std::string scenario;
  std::string model;
  double cider = 0;
  double meteor = 0;
  double r4 = 0;
  std::optional<double> consistency;
  std::vector<InstanceScore> per_instance;
};

MetricReport evaluate(const std::vector<std::string>& ids, const std::vector<Tokens>& candidates,
                      const std::vector<Tokens>& references, const std::string& scenario,
                      const std::string& model);

/// Adds per-instance consistency against predictions of the same instances
/// under another scenario, and its mean.
void attach_consistency(MetricReport& report, const std::vector<Tokens>& predictions,
                        const std::vector<Tokens>& other_predictions);

}  // namespace mrvpc::metrics
