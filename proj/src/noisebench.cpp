#include "mrvpc/noise/noisebench.hpp"

#include "mrvpc/common/errors.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

namespace mrvpc::noise {

namespace {

void check_rate(double r, const char* what) {
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0,1]");
}

bool draw(Rng& rng, double p) { return uniform_open_closed(rng) <= p; }

}  // namespace

Instance null_asr(Instance inst) {
  inst.asr.reset();
  return inst;
}

Instance null_events(Instance inst) {
  inst.events.reset();
  return inst;
}

Instance random_missing(Instance inst, double p, Rng& rng) {
  check_rate(p, "random_missing: p");
  const bool drop_asr = draw(rng, p);
  const bool drop_events = draw(rng, p);
  if (drop_asr) inst.asr.reset();
  if (drop_events) inst.events.reset();
  return inst;
}

Instance asr_sentence_delete(Instance inst, double rate, Rng& rng) {
  check_rate(rate, "asr_sentence_delete: rate");
  if (!inst.asr) return inst;
  std::vector<data::AsrSentence> kept;
  for (auto& s : *inst.asr)
    if (!draw(rng, rate)) kept.push_back(std::move(s));
  if (kept.empty())
    inst.asr.reset();
  else
    inst.asr = std::move(kept);
  return inst;
}

Instance asr_degrade(Instance inst, double sub_rate, double del_rate, Rng& rng,
                     const std::vector<std::string>& lexicon) {
  check_rate(sub_rate, "asr_degrade: sub_rate");
  check_rate(del_rate, "asr_degrade: del_rate");
  if (sub_rate + del_rate > 1.0) throw std::invalid_argument("asr_degrade: sub_rate + del_rate > 1");
  if (sub_rate > 0 && lexicon.empty()) throw std::invalid_argument("asr_degrade: empty lexicon");
  if (!inst.asr) return inst;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, lexicon.empty() ? 0 : lexicon.size() - 1);
  std::vector<data::AsrSentence> kept;
  for (auto& s : *inst.asr) {
    data::Tokens tokens;
    for (auto& tok : s.tokens) {
      const double u = unit(rng);
      if (u < del_rate) continue;
      if (u < del_rate + sub_rate)
        tokens.push_back(lexicon[pick(rng)]);
      else
        tokens.push_back(std::move(tok));
    }
    if (!tokens.empty()) {
      s.tokens = std::move(tokens);
      kept.push_back(std::move(s));
    }
  }
  if (kept.empty())
    inst.asr.reset();
  else
    inst.asr = std::move(kept);
  return inst;
}

Instance event_delete(Instance inst, double rate, Rng& rng) {
  check_rate(rate, "event_delete: rate");
  if (!inst.events) return inst;
  std::vector<data::Event> kept;
  for (const auto& e : *inst.events)
    if (!draw(rng, rate)) kept.push_back(e);
  if (kept.empty())
    inst.events.reset();
  else
    inst.events = std::move(kept);
  return inst;
}

data::Event perturb_event(data::Event e, double shift_start, double shift_end) {
  e.start = std::clamp(e.start + shift_start, 0.0, 1.0);
  e.end = std::clamp(e.end + shift_end, 0.0, 1.0);
  if (e.start >= e.end) {
    const double mid = std::clamp(0.5 * (e.start + e.end), 0.005, 0.995);
    e.start = mid - 0.005;
    e.end = mid + 0.005;
  }
  return e;
}

Instance boundary_perturb(Instance inst, double radius, Rng& rng) {
  if (!(radius >= 0)) throw std::invalid_argument("boundary_perturb: radius must be >= 0");
  if (!inst.events || radius == 0) return inst;
  std::uniform_real_distribution<double> shift(-radius, radius);
  for (auto& e : *inst.events) {
    const double ds = shift(rng);
    const double de = shift(rng);
    e = perturb_event(e, ds, de);
  }
  return inst;
}

Instance uniform_boundaries(Instance inst, int k) {
  if (k < 1) throw std::invalid_argument("uniform_boundaries: k must be >= 1");
  std::vector<data::Event> events;
  for (int i = 0; i < k; ++i) {
    data::Event e;
    e.start = static_cast<double>(i) / k;
    e.end = i + 1 == k ? 1.0 : static_cast<double>(i + 1) / k;
    events.push_back(e);
  }
  inst.events = std::move(events);
  return inst;
}

// ------------------------------------------------------------- registry

namespace {

struct OpSpec {
  std::string side;  // "asr" or "events"
  std::map<std::string, double> defaults;
};

const std::map<std::string, OpSpec>& registry() {
  static const std::map<std::string, OpSpec> ops = {
      {"null_asr", {"asr", {}}},
      {"asr_missing", {"asr", {{"p", 0.5}}}},
      {"asr_sentence_delete", {"asr", {{"rate", 0.5}}}},
      {"asr_degrade", {"asr", {{"sub", 0.15}, {"del", 0.10}}}},
      {"null_events", {"events", {}}},
      {"events_missing", {"events", {{"p", 0.5}}}},
      {"event_delete", {"events", {{"rate", 0.5}}}},
      {"boundary_perturb", {"events", {{"radius", 0.05}}}},
      {"uniform_boundaries", {"events", {{"k", 4}}}},
  };
  return ops;
}

NoiseOp make_op(const std::string& name, std::map<std::string, double> params = {}) {
  return NoiseOp{name, std::move(params)};
}

double param(const NoiseOp& op, const std::string& key) {
  auto it = op.params.find(key);
  if (it != op.params.end()) return it->second;
  return registry().at(op.name).defaults.at(key);
}

void validate_op(const NoiseOp& op, const std::string& side) {
  auto it = registry().find(op.name);
  if (it == registry().end()) throw ConfigError("unknown noise op '" + op.name + "'");
  if (it->second.side != side)
    throw ConfigError("noise op '" + op.name + "' acts on " + it->second.side + ", listed under " + side);
  for (const auto& [k, v] : op.params)
    if (!it->second.defaults.count(k)) throw ConfigError("noise op '" + op.name + "' has no parameter '" + k + "'");
}

Instance apply_op(Instance inst, const NoiseOp& op, Rng& rng, const std::vector<std::string>& lexicon) {
  const std::string& n = op.name;
  if (n == "null_asr") return null_asr(std::move(inst));
  if (n == "null_events") return null_events(std::move(inst));
  if (n == "asr_missing") return draw(rng, param(op, "p")) ? null_asr(std::move(inst)) : inst;
  if (n == "events_missing") return draw(rng, param(op, "p")) ? null_events(std::move(inst)) : inst;
  if (n == "asr_sentence_delete") return asr_sentence_delete(std::move(inst), param(op, "rate"), rng);
  if (n == "asr_degrade") return asr_degrade(std::move(inst), param(op, "sub"), param(op, "del"), rng, lexicon);
  if (n == "event_delete") return event_delete(std::move(inst), param(op, "rate"), rng);
  if (n == "boundary_perturb") return boundary_perturb(std::move(inst), param(op, "radius"), rng);
  if (n == "uniform_boundaries") return uniform_boundaries(std::move(inst), static_cast<int>(param(op, "k")));
  throw ConfigError("unknown noise op '" + n + "'");
}

}  // namespace

const std::vector<std::string>& builtin_scenario_names() {
  static const std::vector<std::string> names = {"complete",         "video_only",       "random_missing",
                                                 "asr_low_quality",  "asr_sentence_del", "event_del",
                                                 "boundary_perturb", "uniform_boundaries"};
  return names;
}

Scenario builtin_scenario(const std::string& name, std::uint64_t seed) {
  Scenario s;
  s.name = name;
  s.seed = seed;
  if (name == "complete") {
  } else if (name == "video_only") {
    s.asr_ops = {make_op("null_asr")};
    s.event_ops = {make_op("null_events")};
  } else if (name == "no_asr") {
    s.asr_ops = {make_op("null_asr")};
  } else if (name == "no_events") {
    s.event_ops = {make_op("null_events")};
  } else if (name == "random_missing") {
    s.asr_ops = {make_op("asr_missing", {{"p", 0.5}})};
    s.event_ops = {make_op("events_missing", {{"p", 0.5}})};
  } else if (name == "asr_low_quality") {
    s.asr_ops = {make_op("asr_degrade", {{"sub", 0.15}, {"del", 0.10}})};
  } else if (name == "asr_sentence_del") {
    s.asr_ops = {make_op("asr_sentence_delete", {{"rate", 0.5}})};
  } else if (name == "event_del") {
    s.event_ops = {make_op("event_delete", {{"rate", 0.5}})};
  } else if (name == "boundary_perturb") {
    s.event_ops = {make_op("boundary_perturb", {{"radius", 0.05}})};
  } else if (name == "uniform_boundaries") {
    s.event_ops = {make_op("uniform_boundaries", {{"k", 4}})};
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  return s;
}

std::vector<NoiseOp> parse_ops(const std::string& text, const std::string& side) {
  std::vector<NoiseOp> ops;
  std::stringstream ss(text);
  std::string item;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(ss, item, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    NoiseOp op;
    const auto open = item.find('(');
    if (open == std::string::npos) {
      op.name = item;
    } else {
      if (item.back() != ')') throw ConfigError("noise op '" + item + "': missing ')'");
      op.name = trim(item.substr(0, open));
      std::stringstream args(item.substr(open + 1, item.size() - open - 2));
      std::string kv;
      while (std::getline(args, kv, ',')) {
        kv = trim(kv);
        if (kv.empty()) continue;
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("noise op '" + op.name + "': expected key=value");
        try {
          op.params[trim(kv.substr(0, eq))] = std::stod(kv.substr(eq + 1));
        } catch (const std::exception&) {
          throw ConfigError("noise op '" + op.name + "': bad number in '" + kv + "'");
        }
      }
    }
    validate_op(op, side);
    ops.push_back(std::move(op));
  }
  return ops;
}

Instance apply_ops(Instance inst, const Scenario& scenario, const std::vector<std::string>& lexicon) {
  Rng rng(derive_seed(scenario.seed, "noise." + scenario.name, inst.id));
  for (const auto& op : scenario.asr_ops) {
    validate_op(op, "asr");
    inst = apply_op(std::move(inst), op, rng, lexicon);
  }
  for (const auto& op : scenario.event_ops) {
    validate_op(op, "events");
    inst = apply_op(std::move(inst), op, rng, lexicon);
  }
  return inst;
}

data::Corpus apply_scenario(const data::Corpus& corpus, const Scenario& scenario,
                            const std::vector<std::string>& lexicon) {
  for (const auto& op : scenario.asr_ops) validate_op(op, "asr");
  for (const auto& op : scenario.event_ops) validate_op(op, "events");
  data::Corpus out;
  out.reserve(corpus.size());
  for (const auto& inst : corpus) out.push_back(apply_ops(inst, scenario, lexicon));
  return out;
}

}  // namespace mrvpc::noise
