#include "mrvpc/text/timetok.hpp"

#include "mrvpc/common/errors.hpp"
#include "mrvpc/common/seed.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace mrvpc::text {

TimeToken time_to_token(double t, int bins) {
  if (std::isnan(t)) throw std::invalid_argument("time_to_token: NaN timestamp");
  if (bins < 2) throw std::invalid_argument("time_to_token: need at least 2 bins");
  TimeToken out;
  if (t < 0.0 || t > 1.0) {
    out.clamped = true;
    t = std::clamp(t, 0.0, 1.0);
  }
  out.index = std::min(static_cast<int>(std::floor(t * bins)), bins - 1);
  return out;
}

double token_to_time(int index, int bins) {
  if (bins < 2) throw std::invalid_argument("token_to_time: need at least 2 bins");
  if (index < 0 || index >= bins)
    throw std::invalid_argument("token_to_time: index " + std::to_string(index) + " out of range");
  return (index + 0.5) / bins;
}

namespace {

std::string time_name(int bin) { return "<time_" + std::to_string(bin) + ">"; }

const std::vector<std::string>& control_names() {
  static const std::vector<std::string> names = {Vocab::kBos,     Vocab::kEos,     Vocab::kPad,
                                                 Vocab::kSepAsr,  Vocab::kSepEvt,  Vocab::kNullAsr,
                                                 Vocab::kNullEvt, Vocab::kUnk};
  return names;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> words, int time_bins) : time_bins_(time_bins) {
  if (time_bins < 2) throw std::invalid_argument("vocab: need at least 2 time bins");
  std::unordered_set<std::string> reserved(control_names().begin(), control_names().end());
  for (auto& w : words) {
    if (w.empty() || reserved.count(w) || (w.rfind("<time_", 0) == 0))
      throw std::invalid_argument("vocab: word token '" + w + "' collides with a reserved token");
    if (index_.count(w)) continue;
    index_.emplace(w, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(w));
  }
  word_count_ = tokens_.size();
  for (int b = 0; b < time_bins; ++b) {
    index_.emplace(time_name(b), static_cast<int>(tokens_.size()));
    tokens_.push_back(time_name(b));
  }
  for (const auto& c : control_names()) {
    index_.emplace(c, static_cast<int>(tokens_.size()));
    tokens_.push_back(c);
  }
  bos_ = index_.at(kBos);
  eos_ = index_.at(kEos);
  pad_ = index_.at(kPad);
  sep_asr_ = index_.at(kSepAsr);
  sep_evt_ = index_.at(kSepEvt);
  null_asr_ = index_.at(kNullAsr);
  null_evt_ = index_.at(kNullEvt);
  unk_ = index_.at(kUnk);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  std::vector<std::string> words;
  std::size_t i = 0;
  for (; i < tokens.size() && tokens[i].rfind("<time_", 0) != 0; ++i) words.push_back(tokens[i]);
  int bins = 0;
  for (; i < tokens.size() && tokens[i] == time_name(bins); ++i) ++bins;
  Vocab v(std::move(words), bins);
  if (v.tokens() != tokens) throw DataError("vocab: serialized token list is not in canonical layout");
  return v;
}

std::optional<int> Vocab::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw std::out_of_range("vocab: unknown token '" + token + "'");
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = fnv1a("vocab");
  for (const auto& t : tokens_) h = splitmix64(h ^ fnv1a(t));
  return h;
}

Vocab build_vocab(const data::Corpus& corpus, int time_bins) {
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  auto note = [&](const std::string& w) {
    if (seen.insert(w).second) words.push_back(w);
  };
  for (const auto& inst : corpus) {
    for (const auto& w : inst.caption) note(w);
    if (inst.asr)
      for (const auto& s : *inst.asr)
        for (const auto& w : s.tokens) note(w);
  }
  return Vocab(std::move(words), time_bins);
}

AuxSequence serialize_aux(const std::optional<std::vector<data::AsrSentence>>& asr,
                          const std::optional<std::vector<data::Event>>& events, const Vocab& vocab,
                          std::size_t max_len) {
  AuxSequence out;
  auto& ids = out.ids;
  const int bins = vocab.time_bins();
  auto time = [&](double t) { return vocab.time_id(time_to_token(t, bins).index); };

  ids.push_back(vocab.sep_asr());
  if (asr) {
    for (const auto& s : *asr) {
      ids.push_back(time(s.start));
      for (const auto& w : s.tokens) {
        auto id = vocab.find(w);
        if (!id || !vocab.is_word(*id)) {
          ids.push_back(vocab.unk());
          ++out.unknown_words;
        } else {
          ids.push_back(*id);
        }
      }
    }
  } else {
    ids.push_back(vocab.null_asr());
  }
  const std::size_t event_block = ids.size() + 1;
  ids.push_back(vocab.sep_evt());
  if (events) {
    for (const auto& e : *events) {
      ids.push_back(time(e.start));
      ids.push_back(time(e.end));
    }
  } else {
    ids.push_back(vocab.null_evt());
  }

  if (ids.size() > max_len) {
    out.truncated = true;
    std::size_t keep = max_len;
    // an event pair must not be split: drop a dangling start token
    if (events && keep > event_block && (keep - event_block) % 2 == 1) --keep;
    ids.resize(keep);
  }
  return out;
}

std::vector<int> encode_words(const data::Tokens& words, const Vocab& vocab) {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) {
    auto id = vocab.find(w);
    ids.push_back(id && vocab.is_word(*id) ? *id : vocab.unk());
  }
  return ids;
}

data::Tokens decode_ids(const std::vector<int>& ids, const Vocab& vocab) {
  data::Tokens out;
  for (int id : ids) {
    if (id == vocab.eos()) break;
    if (vocab.is_word(id)) out.push_back(vocab.token(id));
  }
  return out;
}

}  // namespace mrvpc::text
