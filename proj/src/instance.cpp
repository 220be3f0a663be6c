#include "mrvpc/data/instance.hpp"

#include "mrvpc/common/errors.hpp"

#include <sstream>

namespace mrvpc::data {

namespace {
bool in_unit(double t) { return t >= 0.0 && t <= 1.0; }
}  // namespace

void validate_instance(const Instance& inst, bool require_disjoint) {
  const std::string where = "instance " + inst.id + ": ";
  if (inst.video.shape.size() != 2) throw DataError(where + "video must be a matrix");
  if (inst.asr) {
    for (const auto& s : *inst.asr)
      if (!in_unit(s.start) || !in_unit(s.end) || s.start > s.end)
        throw DataError(where + "ASR timestamp out of range");
  }
  if (inst.events) {
    double prev_end = 0;
    for (const auto& e : *inst.events) {
      if (!in_unit(e.start) || !in_unit(e.end) || !(e.start < e.end))
        throw DataError(where + "event segment invalid");
      if (require_disjoint && e.start < prev_end) throw DataError(where + "events overlap");
      prev_end = e.end;
    }
  }
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Tokens split_tokens(const std::string& text) {
  Tokens out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace mrvpc::data
