#pragma once

#include "mrvpc/data/instance.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mrvpc::text {

inline constexpr int kDefaultTimeBins = 100;

struct TimeToken {
  int index = 0;
  bool clamped = false;  // input was outside [0,1]
};

/// floor(t * bins), clamped to [0, bins - 1]. NaN is an argument error.
TimeToken time_to_token(double t, int bins = kDefaultTimeBins);

/// Bin center (index + 0.5) / bins.
double token_to_time(int index, int bins = kDefaultTimeBins);

/// Word tokens first (first-occurrence order), then <time_0>..<time_{N-1}>,
/// then control tokens. Immutable after construction.
class Vocab {
 public:
  static constexpr const char* kBos = "<bos>";
  static constexpr const char* kEos = "<eos>";
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kSepAsr = "<sep_asr>";
  static constexpr const char* kSepEvt = "<sep_evt>";
  static constexpr const char* kNullAsr = "<null_asr>";
  static constexpr const char* kNullEvt = "<null_evt>";
  static constexpr const char* kUnk = "<unk>";

  Vocab() = default;
  Vocab(std::vector<std::string> words, int time_bins);

  /// Rebuilds from a serialized token list (as written by tokens()).
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  int time_bins() const { return time_bins_; }
  std::size_t word_count() const { return word_count_; }

  bool is_word(int id) const { return id >= 0 && static_cast<std::size_t>(id) < word_count_; }
  bool is_time(int id) const {
    return id >= time_base() && id < time_base() + time_bins_;
  }
  int time_base() const { return static_cast<int>(word_count_); }
  int time_id(int bin) const { return time_base() + bin; }

  /// Word lookup; nullopt when unknown.
  std::optional<int> find(const std::string& token) const;
  int id(const std::string& token) const;  // throws on unknown
  const std::string& token(int id) const;

  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int pad() const { return pad_; }
  int sep_asr() const { return sep_asr_; }
  int sep_evt() const { return sep_evt_; }
  int null_asr() const { return null_asr_; }
  int null_evt() const { return null_evt_; }
  int unk() const { return unk_; }

  /// FNV-1a over the ordered token list.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::size_t word_count_ = 0;
  int time_bins_ = 0;
  int bos_ = -1, eos_ = -1, pad_ = -1, sep_asr_ = -1, sep_evt_ = -1, null_asr_ = -1,
      null_evt_ = -1, unk_ = -1;
};

/// Words from captions then ASR, instance by instance, in corpus order.
Vocab build_vocab(const data::Corpus& corpus, int time_bins = kDefaultTimeBins);

/// Text-encoder input: SEP_ASR, ASR block (or NULL_ASR), SEP_EVT, event block
/// (or NULL_EVT).
struct AuxSequence {
  std::vector<int> ids;
  std::size_t unknown_words = 0;
  bool truncated = false;
};

inline constexpr std::size_t kDefaultMaxAuxLen = 256;

AuxSequence serialize_aux(const std::optional<std::vector<data::AsrSentence>>& asr,
                          const std::optional<std::vector<data::Event>>& events, const Vocab& vocab,
                          std::size_t max_len = kDefaultMaxAuxLen);

inline AuxSequence serialize_aux(const data::Instance& inst, const Vocab& vocab,
                                 std::size_t max_len = kDefaultMaxAuxLen) {
  return serialize_aux(inst.asr, inst.events, vocab, max_len);
}

/// Caption words to ids (unknown words map to UNK).
std::vector<int> encode_words(const data::Tokens& words, const Vocab& vocab);
/// Ids to words, stopping at EOS and skipping control tokens.
data::Tokens decode_ids(const std::vector<int>& ids, const Vocab& vocab);

}  // namespace mrvpc::text
