#include "mrvpc/harness/io.hpp"

#include "mrvpc/common/errors.hpp"
#include "mrvpc/common/seed.hpp"
#include "mrvpc/harness/config.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mrvpc::harness {

using nlohmann::json;

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + tmp + "'");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw DataError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------------ JSONL

std::string corpus_to_jsonl(const data::Corpus& corpus, const std::vector<std::uint64_t>* gen_seeds) {
  if (gen_seeds && gen_seeds->size() != corpus.size())
    throw std::invalid_argument("corpus_to_jsonl: one generation seed per instance required");
  std::string out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& inst = corpus[i];
    json j;
    j["id"] = inst.id;
    if (gen_seeds) {
      j["video"] = {{"gen_seed", (*gen_seeds)[i]}};
    } else {
      json rows = json::array();
      for (std::size_t r = 0; r < inst.video.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < inst.video.cols(); ++c) row.push_back(inst.video.values[r * inst.video.cols() + c]);
        rows.push_back(std::move(row));
      }
      j["video"] = std::move(rows);
    }
    json asr = json::array();
    if (inst.asr)
      for (const auto& s : *inst.asr)
        asr.push_back({{"t", s.start}, {"start", s.start}, {"end", s.end}, {"text", data::join_tokens(s.tokens)}});
    j["asr"] = std::move(asr);
    json events = json::array();
    if (inst.events)
      for (const auto& e : *inst.events)
        events.push_back({{"start", e.start}, {"end", e.end}, {"action", e.action}, {"object", e.object}});
    j["events"] = std::move(events);
    j["caption"] = data::join_tokens(inst.caption);
    j["absent"] = {{"asr", !inst.asr.has_value()}, {"events", !inst.events.has_value()}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

data::Instance instance_from_json(const json& j, const data::World* world) {
  data::Instance inst;
  inst.id = j.at("id").get<std::string>();
  const auto& video = j.at("video");
  if (video.is_object()) {
    if (!world) throw DataError("instance '" + inst.id + "': gen_seed video needs a world spec");
    inst.video = data::gen_instance(*world, video.at("gen_seed").get<std::uint64_t>(), inst.id).video;
  } else {
    const std::size_t rows = video.size();
    const std::size_t cols = rows ? video.at(0).size() : 0;
    inst.video = nn::Tensor<float>::zeros({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
      if (video[r].size() != cols) throw DataError("instance '" + inst.id + "': ragged video rows");
      for (std::size_t c = 0; c < cols; ++c) inst.video.values[r * cols + c] = video[r][c].get<float>();
    }
  }
  const auto absent = j.value("absent", json::object());
  if (!absent.value("asr", false)) {
    std::vector<data::AsrSentence> asr;
    for (const auto& s : j.at("asr"))
      asr.push_back({data::split_tokens(s.at("text").get<std::string>()), s.at("start").get<double>(),
                     s.at("end").get<double>()});
    inst.asr = std::move(asr);
  }
  if (!absent.value("events", false)) {
    std::vector<data::Event> events;
    for (const auto& e : j.at("events"))
      events.push_back({e.value("action", -1), e.value("object", -1), e.at("start").get<double>(),
                        e.at("end").get<double>()});
    inst.events = std::move(events);
  }
  inst.caption = data::split_tokens(j.at("caption").get<std::string>());
  data::validate_instance(inst);
  return inst;
}

}  // namespace

data::Corpus corpus_from_jsonl(const std::string& text, const data::World* world) {
  data::Corpus out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(instance_from_json(json::parse(line), world));
    } catch (const json::exception& e) {
      throw DataError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_corpus(const std::string& path, const data::Corpus& corpus, const std::vector<std::uint64_t>* gen_seeds) {
  write_file_atomic(path, corpus_to_jsonl(corpus, gen_seeds));
}

data::Corpus read_corpus(const std::string& path, const data::World* world) {
  return corpus_from_jsonl(read_file(path), world);
}

std::vector<std::uint64_t> corpus_seeds(std::size_t n, std::uint64_t split_seed) {
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = derive_seed(split_seed, "datagen.instance", static_cast<std::uint64_t>(i));
  return out;
}

void write_vocab(const std::string& path, const text::Vocab& vocab) {
  std::string out;
  for (const auto& t : vocab.tokens()) out += t + "\n";
  write_file_atomic(path, out);
}

text::Vocab read_vocab(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) tokens.push_back(line);
  try {
    return text::Vocab::from_tokens(tokens);
  } catch (const std::exception& e) {
    throw DataError("vocab file '" + path + "': " + e.what());
  }
}

// ------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'M', 'R', 'V', 'P', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

std::string model_config_text(const model::ModelConfig& c) {
  std::ostringstream o;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", c.init_std);
  o << "d=" << c.d << "\nheads=" << c.heads << "\nvideo_layers=" << c.video_layers
    << "\ntext_layers=" << c.text_layers << "\ndecoder_layers=" << c.decoder_layers << "\nframes=" << c.frames
    << "\nfeature_dim=" << c.feature_dim << "\nvocab_size=" << c.vocab_size
    << "\nmax_caption_len=" << c.max_caption_len << "\nmax_aux_len=" << c.max_aux_len << "\npad_id=" << c.pad_id
    << "\ninit_std=" << buf << "\n";
  return o.str();
}

model::ModelConfig model_config_from_text(const std::string& text) {
  model::ModelConfig c;
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: bad config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError("checkpoint: config lacks '" + k + "'");
    return it->second;
  };
  try {
    c.d = std::stoi(get("d"));
    c.heads = std::stoi(get("heads"));
    c.video_layers = std::stoi(get("video_layers"));
    c.text_layers = std::stoi(get("text_layers"));
    c.decoder_layers = std::stoi(get("decoder_layers"));
    c.frames = std::stoi(get("frames"));
    c.feature_dim = std::stoi(get("feature_dim"));
    c.vocab_size = std::stoi(get("vocab_size"));
    c.max_caption_len = std::stoi(get("max_caption_len"));
    c.max_aux_len = std::stoi(get("max_aux_len"));
    c.pad_id = std::stoi(get("pad_id"));
    c.init_std = std::stod(get("init_std"));
    c.validate();
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint: bad model config: ") + e.what());
  }
  return c;
}

}  // namespace

model::Mvpc<float> Checkpoint::make_model() const {
  model::Mvpc<float> net(config);
  load_into(net, *this);
  return net;
}

Checkpoint make_checkpoint(const model::Mvpc<float>& net, const text::Vocab& vocab, TrainMeta meta) {
  if (static_cast<std::size_t>(net.config().vocab_size) != vocab.size())
    throw std::invalid_argument("make_checkpoint: model and vocab sizes differ");
  Checkpoint c{net.config(), vocab, std::move(meta), net.params()};
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.str(model_config_text(ckpt.config));
  w.u64(ckpt.vocab.tokens().size());
  for (const auto& t : ckpt.vocab.tokens()) w.str(t);
  w.str(ckpt.meta.mode);
  w.u64(static_cast<std::uint64_t>(ckpt.meta.epochs));
  w.u64(ckpt.meta.seed);
  const auto& entries = ckpt.params.entries();
  w.u64(entries.size());
  for (const auto& e : entries) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.value.shape.size()));
    for (auto d : e.value.shape) w.u64(d);
    for (float v : e.value.values) w.f32(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw DataError("checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  const auto config = model_config_from_text(r.str());
  const std::uint64_t n_tokens = r.u64();
  if (n_tokens > bytes.size()) throw DataError("checkpoint: implausible vocab size");
  std::vector<std::string> tokens;
  for (std::uint64_t i = 0; i < n_tokens; ++i) tokens.push_back(r.str());
  TrainMeta meta;
  meta.mode = r.str();
  meta.epochs = static_cast<int>(r.u64());
  meta.seed = r.u64();
  text::Vocab vocab;
  try {
    vocab = text::Vocab::from_tokens(tokens);
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint: bad vocab: ") + e.what());
  }
  if (vocab.size() != static_cast<std::size_t>(config.vocab_size))
    throw DataError("checkpoint: vocab has " + std::to_string(vocab.size()) + " tokens, config says " +
                    std::to_string(config.vocab_size));

  // the stored config dictates the expected parameter list
  model::Mvpc<float> reference(config);
  const auto& expected = reference.params().entries();
  const std::uint64_t n_params = r.u64();
  if (n_params != expected.size())
    throw DataError("checkpoint: " + std::to_string(n_params) + " parameters, expected " +
                    std::to_string(expected.size()));
  nn::ParamStore<float> params;
  for (const auto& e : expected) {
    const std::string name = r.str();
    if (name != e.name) throw DataError("checkpoint: parameter '" + name + "' where '" + e.name + "' was expected");
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw DataError("checkpoint: parameter '" + name + "' has implausible rank");
    nn::Shape shape;
    for (std::uint32_t k = 0; k < ndim; ++k) shape.push_back(static_cast<std::size_t>(r.u64()));
    if (shape != e.value.shape)
      throw DataError("checkpoint: parameter '" + name + "' has shape " + nn::shape_string(shape) + ", expected " +
                      nn::shape_string(e.value.shape));
    const std::size_t id = params.add(name, shape);
    r.need(4 * nn::shape_size(shape));
    for (auto& v : params[id].value.values) v = r.f32();
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes after parameter records");
  return Checkpoint{config, std::move(vocab), std::move(meta), std::move(params)};
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return deserialize_checkpoint(read_file(path));
  } catch (const DataError& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

void load_into(model::Mvpc<float>& net, const Checkpoint& ckpt) {
  auto& dst = net.params().entries();
  const auto& src = ckpt.params.entries();
  if (dst.size() != src.size())
    throw DataError("checkpoint has " + std::to_string(src.size()) + " parameters, model has " +
                    std::to_string(dst.size()));
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].value.shape != src[i].value.shape)
      throw DataError("checkpoint parameter '" + src[i].name + "' " + nn::shape_string(src[i].value.shape) +
                      " does not match model parameter '" + dst[i].name + "' " +
                      nn::shape_string(dst[i].value.shape));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].value.values = src[i].value.values;
}

// -------------------------------------------------------------------- CSV

std::vector<ReportRow> report_rows(const metrics::MetricReport& rep, std::uint64_t seed,
                                   const std::string& config_hash) {
  std::vector<ReportRow> rows;
  auto add = [&](const char* metric, double v) {
    rows.push_back({rep.scenario, rep.model, metric, v, seed, config_hash, build_id()});
  };
  add("cider", rep.cider);
  add("meteor", rep.meteor);
  add("r4", rep.r4);
  if (rep.consistency) add("consistency", *rep.consistency);
  return rows;
}

namespace {

void check_cell(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos)
    throw std::invalid_argument("csv: cell '" + s + "' contains a separator");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string rows_to_csv(const std::vector<ReportRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  char buf[64];
  for (const auto& r : rows) {
    for (const auto* s : {&r.scenario, &r.model, &r.metric, &r.config_hash, &r.build_id}) check_cell(*s);
    std::snprintf(buf, sizeof(buf), "%.6f", r.value);
    out += r.scenario + "," + r.model + "," + r.metric + "," + buf + "," + std::to_string(r.seed) + "," +
           r.config_hash + "," + r.build_id + "\n";
  }
  return out;
}

std::vector<ReportRow> rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw DataError("csv: unexpected header '" + line + "'");
  std::vector<ReportRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 7) throw DataError("csv line " + std::to_string(lineno) + ": expected 7 cells");
    ReportRow r;
    r.scenario = cells[0];
    r.model = cells[1];
    r.metric = cells[2];
    try {
      std::size_t used = 0;
      r.value = std::stod(cells[3], &used);
      if (used != cells[3].size()) throw std::invalid_argument(cells[3]);
      r.seed = std::stoull(cells[4]);
    } catch (const std::exception&) {
      throw DataError("csv line " + std::to_string(lineno) + ": bad number");
    }
    r.config_hash = cells[5];
    r.build_id = cells[6];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  write_file_atomic(path, rows_to_csv(rows));
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      check_cell(cells[i]);
      out += (i ? "," : "") + cells[i];
    }
    out += "\n";
  };
  line(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw std::invalid_argument("write_table: row width differs from header");
    line(r);
  }
  write_file_atomic(path, out);
}

}  // namespace mrvpc::harness
