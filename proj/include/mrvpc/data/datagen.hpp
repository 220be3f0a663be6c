#pragma once

#include "mrvpc/data/instance.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mrvpc::data {

/// Parameters of the synthetic world. Confusable action pairs share a visual
/// prototype, so only the ASR stream can tell them apart.
struct WorldSpec {
  int n_actions = 16;
  int n_objects = 12;
  int n_confusable_pairs = 3;
  int frames = 48;
  int feature_dim = 16;
  int k_min = 2;
  int k_max = 6;
  double visual_noise = 0.8;
  double asr_fidelity = 0.95;
  double min_event_duration = 0.05;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Prototypes and lexicon derived from a WorldSpec.
class World {
 public:
  explicit World(WorldSpec spec);

  const WorldSpec& spec() const { return spec_; }
  const std::string& verb(int action) const { return verbs_.at(static_cast<std::size_t>(action)); }
  const std::string& noun(int object) const { return nouns_.at(static_cast<std::size_t>(object)); }
  /// Every word a generated instance can contain.
  const std::vector<std::string>& lexicon() const { return lexicon_; }

  /// Action whose prototype `action` shares (itself for non-confusable ones).
  int visual_class(int action) const;
  std::vector<float> prototype(int action, int object) const;
  const std::vector<float>& background() const { return background_; }

 private:
  WorldSpec spec_;
  std::vector<std::string> verbs_, nouns_, lexicon_;
  std::vector<std::vector<float>> action_proto_, object_proto_;
  std::vector<float> background_;
};

/// "<verb> the <noun> ." per event, in list order.
Tokens render_caption(const World& world, const std::vector<Event>& events);

Instance gen_instance(const World& world, std::uint64_t seed, std::string id);

/// Instance i is generated from derive_seed(split_seed, "datagen.instance", i).
Corpus gen_corpus(const World& world, std::size_t n, std::uint64_t split_seed);

/// Frame index range [first, last) covered by [start, end) at frame centers.
std::pair<int, int> frames_in_segment(int frames, double start, double end);

struct CorpusStats {
  std::size_t instances = 0;
  std::map<int, std::size_t> event_histogram;  // absent events count as 0
  std::size_t caption_tokens = 0;
  std::size_t asr_tokens = 0;
  double mean_events = 0;
  double mean_duration = 0;
  double min_duration = 0;
  double max_duration = 0;
};

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace mrvpc::data
