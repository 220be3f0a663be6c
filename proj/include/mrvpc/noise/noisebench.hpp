#pragma once

#include "mrvpc/common/seed.hpp"
#include "mrvpc/data/instance.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mrvpc::noise {

using data::Instance;

// Test-time noise functions. None of them touch the video or the caption.

Instance null_asr(Instance inst);
Instance null_events(Instance inst);

/// ASR and events each independently nulled with probability p.
Instance random_missing(Instance inst, double p, Rng& rng);

/// Each ASR sentence removed with probability `rate`; nothing left -> absent.
Instance asr_sentence_delete(Instance inst, double rate, Rng& rng);

/// Per ASR token one uniform draw u: u < del_rate deletes it, otherwise
/// u < del_rate + sub_rate replaces it with a random lexicon word. Sentences
/// left empty are dropped; nothing left -> absent.
Instance asr_degrade(Instance inst, double sub_rate, double del_rate, Rng& rng,
                     const std::vector<std::string>& lexicon);

/// Each event removed with probability `rate` (order of survivors kept).
Instance event_delete(Instance inst, double rate, Rng& rng);

/// Shifts both ends of one event and repairs it: ends clamp to [0,1]; an
/// inverted or empty segment collapses to its midpoint +- 0.005.
data::Event perturb_event(data::Event e, double shift_start, double shift_end);

/// Every event timestamp shifted by Uniform(-radius, radius).
Instance boundary_perturb(Instance inst, double radius, Rng& rng);

/// Replaces the events with k equal contiguous segments of [0,1].
Instance uniform_boundaries(Instance inst, int k);

struct NoiseOp {
  std::string name;
  std::map<std::string, double> params;
};

/// Named composition of noise ops: ASR ops run first, then event ops, each
/// list in declared order, on a per-instance stream
/// derive_seed(seed, "noise." + name, instance id).
struct Scenario {
  std::string name;
  std::vector<NoiseOp> asr_ops;
  std::vector<NoiseOp> event_ops;
  std::uint64_t seed = 0;
};

/// complete, video_only, random_missing, asr_low_quality, asr_sentence_del,
/// event_del, boundary_perturb, uniform_boundaries.
const std::vector<std::string>& builtin_scenario_names();

/// Also knows "no_asr" (V+E) and "no_events" (V+A). Throws ConfigError on
/// unknown names.
Scenario builtin_scenario(const std::string& name, std::uint64_t seed = 0);

/// Parses "op(key=value,...);op2" into a list of ops, validating op names and
/// parameters against the registry for the given side ("asr" or "events").
std::vector<NoiseOp> parse_ops(const std::string& text, const std::string& side);

Instance apply_ops(Instance inst, const Scenario& scenario, const std::vector<std::string>& lexicon);

data::Corpus apply_scenario(const data::Corpus& corpus, const Scenario& scenario,
                            const std::vector<std::string>& lexicon);

}  // namespace mrvpc::noise
