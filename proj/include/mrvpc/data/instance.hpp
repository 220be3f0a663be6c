#pragma once

#include "mrvpc/nncore/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mrvpc::data {

/// One event segment; times are fractions of the video duration.
struct Event {
  int action = -1;
  int object = -1;
  double start = 0;
  double end = 0;
};

/// A timed ASR sentence.
struct AsrSentence {
  std::vector<std::string> tokens;
  double start = 0;
  double end = 0;
};

using Tokens = std::vector<std::string>;

/// One sample (V, A, E, C). An absent modality is std::nullopt, which is
/// distinct from a present-but-empty list.
struct Instance {
  std::string id;
  nn::Tensor<float> video;  // frames x feature_dim
  std::optional<std::vector<AsrSentence>> asr;
  std::optional<std::vector<Event>> events;
  Tokens caption;
};

using Corpus = std::vector<Instance>;

/// Throws DataError when timestamps are out of range or a segment is empty.
/// With `require_disjoint`, events must also be ordered and non-overlapping.
void validate_instance(const Instance& inst, bool require_disjoint = false);

std::string join_tokens(const Tokens& tokens);
Tokens split_tokens(const std::string& text);

}  // namespace mrvpc::data
