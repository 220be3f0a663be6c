#pragma once

#include <Eigen/Core>

#include <functional>
#include <span>
#include <vector>

namespace mrvpc::model {

struct DecodeConfig {
  int beam = 4;
  double repetition_penalty = 1.2;
  double length_alpha = 1.0;
  int max_steps = 96;

  void validate() const;
};

struct DecodeResult {
  std::vector<int> tokens;  // generated tokens, EOS excluded
  double log_prob = 0;      // total log-probability, EOS included when present
  double score = 0;         // log_prob / length^alpha
  bool truncated = false;   // max_steps reached without EOS
};

/// Returns one row of next-token logits per live hypothesis. `parents[i]` is
/// the index (in the previous call's hypothesis list) that hypothesis i
/// extends; it is empty on the first call, where there is a single empty
/// prefix. `prefixes[i]` is the full generated prefix of hypothesis i.
using StepFn = std::function<Eigen::MatrixXd(std::span<const int> parents,
                                             std::span<const std::vector<int>> prefixes)>;

/// Logit rescaling for tokens already in the hypothesis: l / penalty when
/// l > 0, l * penalty otherwise.
void apply_repetition_penalty(Eigen::Ref<Eigen::RowVectorXd> logits, const std::vector<int>& history,
                              double penalty);

/// Beam search. At each step the candidates (hypothesis, token) are ranked by
/// cumulative log-probability, ties broken by lower token id and then by
/// earlier hypothesis. EOS candidates ranked within the top `beam` finish;
/// the rest fill the next beam. Search stops when `beam` hypotheses have
/// finished or after max_steps. Finished hypotheses are ranked by
/// log_prob / length^alpha (length counts EOS).
DecodeResult beam_search(const StepFn& step, int eos, const DecodeConfig& cfg);

}  // namespace mrvpc::model
