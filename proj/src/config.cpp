#include "mrvpc/harness/config.hpp"

#include "mrvpc/common/errors.hpp"
#include "mrvpc/common/seed.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#ifndef MRVPC_BUILD_ID
#define MRVPC_BUILD_ID "unknown"
#endif

namespace mrvpc::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string join_numbers(const std::vector<double>& xs) {
  std::vector<std::string> s;
  for (double x : xs) s.push_back(fmt_double(x));
  return join_list(s);
}

std::string ops_text(const std::vector<noise::NoiseOp>& ops) {
  std::string out;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i) out += ";";
    out += ops[i].name;
    if (!ops[i].params.empty()) {
      out += "(";
      bool first = true;
      for (const auto& [k, v] : ops[i].params) {
        out += (first ? "" : ",") + k + "=" + fmt_double(v);
        first = false;
      }
      out += ")";
    }
  }
  return out;
}

struct Binding {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename I>
Binding int_binding(const std::string& key, I& ref) {
  return {[&ref, key](const std::string& v) { ref = parse_int<I>(key, v); },
          [&ref] { return std::to_string(ref); }};
}

Binding double_binding(const std::string& key, double& ref) {
  return {[&ref, key](const std::string& v) { ref = parse_double(key, v); }, [&ref] { return fmt_double(ref); }};
}

Binding bool_binding(const std::string& key, bool& ref) {
  return {[&ref, key](const std::string& v) { ref = parse_bool(key, v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

Binding string_binding(std::string& ref) {
  return {[&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }};
}

std::map<std::string, Binding> bindings(RunConfig& c) {
  std::map<std::string, Binding> b;
  auto& w = c.world;
  b["world.n_actions"] = int_binding("world.n_actions", w.n_actions);
  b["world.n_objects"] = int_binding("world.n_objects", w.n_objects);
  b["world.n_confusable_pairs"] = int_binding("world.n_confusable_pairs", w.n_confusable_pairs);
  b["world.frames"] = int_binding("world.frames", w.frames);
  b["world.feature_dim"] = int_binding("world.feature_dim", w.feature_dim);
  b["world.k_min"] = int_binding("world.k_min", w.k_min);
  b["world.k_max"] = int_binding("world.k_max", w.k_max);
  b["world.visual_noise"] = double_binding("world.visual_noise", w.visual_noise);
  b["world.asr_fidelity"] = double_binding("world.asr_fidelity", w.asr_fidelity);
  b["world.min_event_duration"] = double_binding("world.min_event_duration", w.min_event_duration);
  b["world.seed"] = int_binding("world.seed", w.seed);

  b["corpus.path"] = string_binding(c.corpus.path);
  b["corpus.n_train"] = int_binding("corpus.n_train", c.corpus.n_train);
  b["corpus.n_test"] = int_binding("corpus.n_test", c.corpus.n_test);
  b["corpus.train_seed"] = int_binding("corpus.train_seed", c.corpus.train_seed);
  b["corpus.test_seed"] = int_binding("corpus.test_seed", c.corpus.test_seed);
  b["corpus.inline_video"] = bool_binding("corpus.inline_video", c.corpus.inline_video);

  b["vocab.time_bins"] = int_binding("vocab.time_bins", c.time_bins);

  auto& m = c.model;
  b["model.d"] = int_binding("model.d", m.d);
  b["model.heads"] = int_binding("model.heads", m.heads);
  b["model.video_layers"] = int_binding("model.video_layers", m.video_layers);
  b["model.text_layers"] = int_binding("model.text_layers", m.text_layers);
  b["model.decoder_layers"] = int_binding("model.decoder_layers", m.decoder_layers);
  b["model.max_caption_len"] = int_binding("model.max_caption_len", m.max_caption_len);
  b["model.max_aux_len"] = int_binding("model.max_aux_len", m.max_aux_len);
  b["model.init_std"] = double_binding("model.init_std", m.init_std);

  auto& p = c.plan;
  b["train.epochs"] = int_binding("train.epochs", p.epochs);
  b["train.batch_size"] = int_binding("train.batch_size", p.batch_size);
  b["train.lr"] = double_binding("train.lr", p.base_lr);
  b["train.warmup"] = double_binding("train.warmup", p.warmup_fraction);
  b["train.weight_decay"] = double_binding("train.weight_decay", p.weight_decay);
  b["train.grad_clip"] = double_binding("train.grad_clip", p.grad_clip);
  b["train.p_asr"] = double_binding("train.p_asr", p.p_asr);
  b["train.p_events"] = double_binding("train.p_events", p.p_events);
  b["train.coupled_drop"] = bool_binding("train.coupled_drop", p.coupled_drop);
  b["train.mode"] = {[&p](const std::string& v) { p.mode = train::parse_mode(v); },
                     [&p] { return train::mode_name(p.mode); }};
  b["train.tau"] = double_binding("train.tau", p.tau);
  b["train.lambda"] = double_binding("train.lambda", p.lambda);
  b["train.skip_empty_captions"] = bool_binding("train.skip_empty_captions", p.skip_empty_captions);

  auto& d = p.decode;
  b["decode.beam"] = int_binding("decode.beam", d.beam);
  b["decode.repetition_penalty"] = double_binding("decode.repetition_penalty", d.repetition_penalty);
  b["decode.length_alpha"] = double_binding("decode.length_alpha", d.length_alpha);
  b["decode.max_steps"] = int_binding("decode.max_steps", d.max_steps);

  b["eval.scenarios"] = {[&c](const std::string& v) { c.scenarios = split_list(v); },
                         [&c] { return join_list(c.scenarios); }};
  b["eval.percent_grid"] = {[&c](const std::string& v) { c.percent_grid = parse_number_list(v); },
                            [&c] { return join_numbers(c.percent_grid); }};
  b["eval.drop_grid"] = {[&c](const std::string& v) { c.drop_grid = parse_number_list(v); },
                         [&c] { return join_numbers(c.drop_grid); }};

  b["run.out"] = string_binding(c.out_dir);
  b["run.seed"] = int_binding("run.seed", c.seed);
  return b;
}

}  // namespace

RunConfig::RunConfig() : scenarios(noise::builtin_scenario_names()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  // scenario.<name>.asr / scenario.<name>.events define custom scenarios
  if (key.rfind("scenario.", 0) == 0) {
    const auto dot = key.rfind('.');
    const std::string name = key.substr(9, dot == std::string::npos ? std::string::npos : dot - 9);
    const std::string side = dot == std::string::npos ? "" : key.substr(dot + 1);
    if (name.empty() || dot <= 9 || (side != "asr" && side != "events"))
      throw ConfigError("config: expected scenario.<name>.asr or scenario.<name>.events, got '" + key + "'");
    auto& s = custom_scenarios[name];
    s.name = name;
    if (side == "asr")
      s.asr_ops = noise::parse_ops(value, "asr");
    else
      s.event_ops = noise::parse_ops(value, "events");
    return;
  }
  auto b = bindings(*this);
  auto it = b.find(key);
  if (it == b.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second.set(value);
}

std::string RunConfig::canonical() const {
  auto& self = const_cast<RunConfig&>(*this);
  std::string out;
  for (const auto& [k, b] : bindings(self))
    if (k != "run.out") out += k + "=" + b.get() + "\n";
  for (const auto& [name, s] : custom_scenarios) {
    out += "scenario." + name + ".asr=" + ops_text(s.asr_ops) + "\n";
    out += "scenario." + name + ".events=" + ops_text(s.event_ops) + "\n";
  }
  return out;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(splitmix64(fnv1a(canonical()))));
  return buf;
}

void RunConfig::validate() const {
  world.validate();
  plan.validate();
  if (time_bins < 1) throw ConfigError("vocab.time_bins must be >= 1");
  if (corpus.path.empty() && (corpus.n_train < 1 || corpus.n_test < 2))
    throw ConfigError("corpus: need n_train >= 1 and n_test >= 2");
  for (const auto& s : scenarios) (void)scenario(s);
  for (double q : percent_grid)
    if (!(q >= 0 && q <= 100)) throw ConfigError("eval.percent_grid values must lie in [0,100]");
  for (double p : drop_grid)
    if (!(p >= 0 && p <= 1)) throw ConfigError("eval.drop_grid values must lie in [0,1]");
  model::ModelConfig probe = model;
  probe.frames = world.frames;
  probe.feature_dim = world.feature_dim;
  probe.vocab_size = std::max(probe.vocab_size, 1);
  try {
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

noise::Scenario RunConfig::scenario(const std::string& name) const {
  auto it = custom_scenarios.find(name);
  if (it != custom_scenarios.end()) {
    auto s = it->second;
    s.seed = seed;
    return s;
  }
  return noise::builtin_scenario(name, seed);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    base.set(key, trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_double("list", item));
  if (out.empty()) throw ConfigError("empty number list '" + text + "'");
  return out;
}

std::string build_id() { return MRVPC_BUILD_ID; }

}  // namespace mrvpc::harness
