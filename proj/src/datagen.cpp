#include "mrvpc/data/datagen.hpp"

#include "mrvpc/common/errors.hpp"
#include "mrvpc/common/seed.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace mrvpc::data {

namespace {

constexpr std::array kVerbs = {"cut",  "slice", "add",   "pour",  "stir",  "mix",   "chop",
                               "fry",  "boil",  "peel",  "grate", "bake",  "wash",  "season",
                               "mash", "roll",  "spread", "drain", "whisk", "knead"};
constexpr std::array kNouns = {"onion",  "garlic", "tomato", "butter", "flour", "egg",
                               "rice",   "pepper", "carrot", "cheese", "dough", "potato",
                               "noodle", "sauce",  "salt",   "oil",    "sugar", "bread"};

std::vector<std::string> names(const auto& base, int n, const std::string& prefix) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    if (static_cast<std::size_t>(i) < base.size())
      out.emplace_back(base[static_cast<std::size_t>(i)]);
    else
      out.push_back(prefix + std::to_string(i));
  }
  return out;
}

std::vector<float> gaussian_vector(Rng& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = static_cast<float>(normal(rng));
  return v;
}

}  // namespace

void WorldSpec::validate() const {
  if (n_actions < 1 || n_objects < 1) throw ConfigError("world: need at least one action and object");
  if (n_confusable_pairs < 0 || 2 * n_confusable_pairs > n_actions)
    throw ConfigError("world: n_confusable_pairs must be <= n_actions / 2");
  if (frames < 1 || feature_dim < 1) throw ConfigError("world: frames and feature_dim must be >= 1");
  if (k_min < 1 || k_max < k_min) throw ConfigError("world: need 1 <= k_min <= k_max");
  if (visual_noise < 0) throw ConfigError("world: visual_noise must be >= 0");
  if (asr_fidelity < 0 || asr_fidelity > 1) throw ConfigError("world: asr_fidelity must lie in [0,1]");
  if (!(min_event_duration > 0)) throw ConfigError("world: min_event_duration must be > 0");
  if (static_cast<double>(k_max) * min_event_duration > 1.0)
    throw ConfigError("world: " + std::to_string(k_max) + " events of minimum duration " +
                      std::to_string(min_event_duration) + " cannot fit in one video");
  if (min_event_duration * frames < 1.0)
    throw ConfigError("world: minimum event duration shorter than one frame");
}

World::World(WorldSpec spec) : spec_(spec) {
  spec_.validate();
  verbs_ = names(kVerbs, spec_.n_actions, "verb");
  nouns_ = names(kNouns, spec_.n_objects, "noun");
  lexicon_ = verbs_;
  lexicon_.insert(lexicon_.end(), nouns_.begin(), nouns_.end());
  lexicon_.push_back("the");
  lexicon_.push_back(".");
  Rng rng(derive_seed(spec_.seed, "datagen.prototypes"));
  for (int a = 0; a < spec_.n_actions; ++a) action_proto_.push_back(gaussian_vector(rng, spec_.feature_dim));
  for (int o = 0; o < spec_.n_objects; ++o) object_proto_.push_back(gaussian_vector(rng, spec_.feature_dim));
  background_ = gaussian_vector(rng, spec_.feature_dim);
}

int World::visual_class(int action) const {
  if (action < 2 * spec_.n_confusable_pairs) return action - action % 2;
  return action;
}

std::vector<float> World::prototype(int action, int object) const {
  const auto& a = action_proto_.at(static_cast<std::size_t>(visual_class(action)));
  const auto& o = object_proto_.at(static_cast<std::size_t>(object));
  std::vector<float> p(a.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = a[i] + o[i];
  return p;
}

Tokens render_caption(const World& world, const std::vector<Event>& events) {
  Tokens out;
  out.reserve(events.size() * 4);
  for (const auto& e : events) {
    out.push_back(world.verb(e.action));
    out.push_back("the");
    out.push_back(world.noun(e.object));
    out.push_back(".");
  }
  return out;
}

std::pair<int, int> frames_in_segment(int frames, double start, double end) {
  auto first_at_or_after = [frames](double t) {
    // smallest f with (f + 0.5) / frames >= t
    int f = static_cast<int>(std::ceil(t * frames - 0.5));
    return std::clamp(f, 0, frames);
  };
  return {first_at_or_after(start), first_at_or_after(end)};
}

Instance gen_instance(const World& world, std::uint64_t seed, std::string id) {
  const WorldSpec& spec = world.spec();
  Rng rng(seed);
  const int k = std::uniform_int_distribution<int>(spec.k_min, spec.k_max)(rng);

  // Stick-breaking layout: k events (each at least min duration) and k + 1 gaps
  // share the unit interval in proportion to exponential weights.
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> event_w(static_cast<std::size_t>(k)), gap_w(static_cast<std::size_t>(k + 1));
  double total = 0;
  for (auto& w : event_w) total += (w = expo(rng));
  for (auto& w : gap_w) total += (w = 0.25 * expo(rng));
  const double free = 1.0 - k * spec.min_event_duration;

  std::vector<Event> events(static_cast<std::size_t>(k));
  std::uniform_int_distribution<int> pick_action(0, spec.n_actions - 1);
  std::uniform_int_distribution<int> pick_object(0, spec.n_objects - 1);
  double at = 0;
  for (int i = 0; i < k; ++i) {
    auto& e = events[static_cast<std::size_t>(i)];
    at += free * gap_w[static_cast<std::size_t>(i)] / total;
    e.start = at;
    at += spec.min_event_duration + free * event_w[static_cast<std::size_t>(i)] / total;
    e.end = std::min(at, 1.0);
    e.action = pick_action(rng);
    e.object = pick_object(rng);
  }

  Instance inst;
  inst.id = std::move(id);
  inst.video = nn::Tensor<float>({static_cast<std::size_t>(spec.frames),
                                  static_cast<std::size_t>(spec.feature_dim)});
  std::normal_distribution<double> noise(0.0, 1.0);
  auto frame_mat = inst.video.mat();
  std::vector<const Event*> owner(static_cast<std::size_t>(spec.frames), nullptr);
  for (const auto& e : events) {
    auto [lo, hi] = frames_in_segment(spec.frames, e.start, e.end);
    for (int f = lo; f < hi; ++f) owner[static_cast<std::size_t>(f)] = &e;
  }
  for (int f = 0; f < spec.frames; ++f) {
    const Event* e = owner[static_cast<std::size_t>(f)];
    const std::vector<float> proto = e ? world.prototype(e->action, e->object) : world.background();
    for (int c = 0; c < spec.feature_dim; ++c)
      frame_mat(f, c) = static_cast<float>(proto[static_cast<std::size_t>(c)] +
                                           spec.visual_noise * noise(rng));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_word(0, world.lexicon().size() - 1);
  std::vector<AsrSentence> asr;
  for (const auto& e : events) {
    AsrSentence s;
    s.tokens = {world.verb(e.action), "the", world.noun(e.object)};
    for (auto& tok : s.tokens)
      if (unit(rng) >= spec.asr_fidelity) tok = world.lexicon()[pick_word(rng)];
    s.start = e.start;
    s.end = e.end;
    asr.push_back(std::move(s));
  }
  inst.caption = render_caption(world, events);
  inst.asr = std::move(asr);
  inst.events = std::move(events);
  return inst;
}

Corpus gen_corpus(const World& world, std::size_t n, std::uint64_t split_seed) {
  if (n == 0) throw ConfigError("gen_corpus: n must be > 0");
  Corpus corpus;
  corpus.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    corpus.push_back(gen_instance(world, derive_seed(split_seed, "datagen.instance", i),
                                  "s" + std::to_string(split_seed) + "-" + std::to_string(i)));
  return corpus;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("corpus_stats: empty corpus");
  CorpusStats st;
  st.instances = corpus.size();
  std::size_t event_total = 0, segments = 0;
  double dur_sum = 0;
  st.min_duration = 1.0;
  st.max_duration = 0.0;
  for (const auto& inst : corpus) {
    const std::size_t k = inst.events ? inst.events->size() : 0;
    st.event_histogram[static_cast<int>(k)] += 1;
    event_total += k;
    st.caption_tokens += inst.caption.size();
    if (inst.asr)
      for (const auto& s : *inst.asr) st.asr_tokens += s.tokens.size();
    if (inst.events) {
      for (const auto& e : *inst.events) {
        const double d = e.end - e.start;
        dur_sum += d;
        st.min_duration = std::min(st.min_duration, d);
        st.max_duration = std::max(st.max_duration, d);
        ++segments;
      }
    }
  }
  st.mean_events = static_cast<double>(event_total) / static_cast<double>(corpus.size());
  st.mean_duration = segments ? dur_sum / static_cast<double>(segments) : 0.0;
  if (!segments) st.min_duration = 0.0;
  return st;
}

}  // namespace mrvpc::data
