#include "mrvpc/model/mvpc.hpp"

#include "mrvpc/common/seed.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace mrvpc::model {

using nn::SegmentLayout;

void ModelConfig::validate() const {
  if (d < 1 || heads < 1 || d % heads != 0)
    throw std::invalid_argument("model: d must be a positive multiple of heads");
  if (video_layers < 1 || text_layers < 1 || decoder_layers < 1)
    throw std::invalid_argument("model: layer counts must be >= 1");
  if (frames < 1 || feature_dim < 1) throw std::invalid_argument("model: frames/feature_dim must be >= 1");
  if (vocab_size < 1) throw std::invalid_argument("model: vocab_size must be set");
  if (max_caption_len < 1 || max_aux_len < 4)
    throw std::invalid_argument("model: max_caption_len >= 1 and max_aux_len >= 4 required");
  if (!(init_std > 0)) throw std::invalid_argument("model: init_std must be > 0");
}

namespace {

template <typename T>
nn::LinearIds add_linear(nn::ParamStore<T>& ps, const std::string& name, int in, int out) {
  return {ps.add(name + ".w", {static_cast<std::size_t>(in), static_cast<std::size_t>(out)}),
          ps.add(name + ".b", {static_cast<std::size_t>(out)})};
}

template <typename T>
nn::NormIds add_norm(nn::ParamStore<T>& ps, const std::string& name, int d) {
  return {ps.add(name + ".gain", {static_cast<std::size_t>(d)}),
          ps.add(name + ".bias", {static_cast<std::size_t>(d)})};
}

template <typename T>
nn::AttnIds add_attn(nn::ParamStore<T>& ps, const std::string& name, int d) {
  auto square = [&](const std::string& part) {
    return ps.add(name + "." + part + ".w", {static_cast<std::size_t>(d), static_cast<std::size_t>(d)});
  };
  nn::AttnIds ids;
  ids.q = square("q");
  ids.k = square("k");
  ids.v = square("v");
  ids.o = square("o");
  return ids;
}

template <typename T>
EncoderBlockIds add_encoder_block(nn::ParamStore<T>& ps, const std::string& name, int d) {
  EncoderBlockIds b;
  b.ln1 = add_norm(ps, name + ".ln1", d);
  b.attn = add_attn(ps, name + ".attn", d);
  b.ln2 = add_norm(ps, name + ".ln2", d);
  b.ff1 = add_linear(ps, name + ".ff1", d, 4 * d);
  b.ff2 = add_linear(ps, name + ".ff2", 4 * d, d);
  return b;
}

template <typename T>
DecoderBlockIds add_decoder_block(nn::ParamStore<T>& ps, const std::string& name, int d) {
  DecoderBlockIds b;
  b.ln1 = add_norm(ps, name + ".ln1", d);
  b.self = add_attn(ps, name + ".self", d);
  b.ln2 = add_norm(ps, name + ".ln2", d);
  b.cross = add_attn(ps, name + ".cross", d);
  b.ln3 = add_norm(ps, name + ".ln3", d);
  b.ff1 = add_linear(ps, name + ".ff1", d, 4 * d);
  b.ff2 = add_linear(ps, name + ".ff2", 4 * d, d);
  return b;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Feed-forward sublayer: x + W2 gelu(W1 LN(x)).
template <typename T>
void ffn_forward(const nn::ParamStore<T>& ps, nn::NormIds ln, nn::LinearIds ff1, nn::LinearIds ff2,
                 Mat<T>& x, nn::LayerNormCache<T>* ln_cache, Mat<T>* ff_in, Mat<T>* ff_pre,
                 Mat<T>* ff_act) {
  Mat<T> in = nn::layer_norm_forward(ps, ln, x, ln_cache);
  Mat<T> pre = nn::linear_forward(ps, ff1, in);
  Mat<T> act = nn::gelu_forward(pre);
  x += nn::linear_forward(ps, ff2, act);
  if (ff_in) {
    *ff_in = std::move(in);
    *ff_pre = std::move(pre);
    *ff_act = std::move(act);
  }
}

template <typename T>
Mat<T> ffn_backward(nn::ParamStore<T>& ps, nn::NormIds ln, nn::LinearIds ff1, nn::LinearIds ff2,
                    const nn::LayerNormCache<T>& ln_cache, const Mat<T>& ff_in, const Mat<T>& ff_pre,
                    const Mat<T>& ff_act, const Mat<T>& dy) {
  Mat<T> dact = nn::linear_backward(ps, ff2, ff_act, dy);
  Mat<T> dpre = nn::gelu_backward(ff_pre, dact);
  Mat<T> din = nn::linear_backward(ps, ff1, ff_in, dpre);
  return nn::layer_norm_backward(ps, ln, ln_cache, din);
}

}  // namespace

template <typename T>
Mvpc<T>::Mvpc(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.d;
  auto& ps = params_;
  ids_.video_proj = add_linear(ps, "video.proj", cfg_.feature_dim, d);
  ids_.video_pos = ps.add("video.pos", {static_cast<std::size_t>(cfg_.frames), static_cast<std::size_t>(d)});
  for (int l = 0; l < cfg_.video_layers; ++l)
    ids_.video_blocks.push_back(add_encoder_block(ps, "video.block" + std::to_string(l), d));
  ids_.video_norm = add_norm(ps, "video.norm", d);

  ids_.text_embed = ps.add("text.embed", {static_cast<std::size_t>(cfg_.vocab_size), static_cast<std::size_t>(d)});
  ids_.text_pos = ps.add("text.pos", {static_cast<std::size_t>(cfg_.max_aux_len), static_cast<std::size_t>(d)});
  for (int l = 0; l < cfg_.text_layers; ++l)
    ids_.text_blocks.push_back(add_encoder_block(ps, "text.block" + std::to_string(l), d));
  ids_.text_norm = add_norm(ps, "text.norm", d);

  ids_.dec_embed = ps.add("dec.embed", {static_cast<std::size_t>(cfg_.vocab_size), static_cast<std::size_t>(d)});
  ids_.dec_pos = ps.add("dec.pos", {static_cast<std::size_t>(cfg_.max_caption_len + 1), static_cast<std::size_t>(d)});
  for (int l = 0; l < cfg_.decoder_layers; ++l)
    ids_.dec_blocks.push_back(add_decoder_block(ps, "dec.block" + std::to_string(l), d));
  ids_.dec_norm = add_norm(ps, "dec.norm", d);
  ids_.out = add_linear(ps, "out", d, cfg_.vocab_size);
  for (auto& e : params_)
    if (ends_with(e.name, ".gain")) e.value.fill(T(1));
}

template <typename T>
void Mvpc<T>::init(std::uint64_t seed) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& e : params_) {
    if (ends_with(e.name, ".gain")) {
      e.value.fill(T(1));
    } else if (ends_with(e.name, ".b") || ends_with(e.name, ".bias")) {
      e.value.fill(T(0));
    } else {
      Rng rng(derive_seed(seed, "model.init", e.name));
      for (auto& v : e.value.values) {
        double z;
        do {
          z = normal(rng);
        } while (std::abs(z) > 2.0);
        v = static_cast<T>(z * cfg_.init_std);
      }
    }
    e.grad.fill(T(0));
  }
}

// ------------------------------------------------------------ encoders

template <typename T>
Mat<T> Mvpc<T>::run_stack(const std::vector<EncoderBlockIds>& blocks, nn::NormIds norm, Mat<T> x,
                          const SegmentLayout& lay, const std::vector<std::uint8_t>* key_valid,
                          StackCache<T>* cache) const {
  if (cache) cache->blocks.assign(blocks.size(), {});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    EncoderBlockCache<T>* bc = cache ? &cache->blocks[l] : nullptr;
    Mat<T> a = nn::layer_norm_forward(params_, b.ln1, x, bc ? &bc->ln1 : nullptr);
    x += nn::attention_forward(params_, b.attn, cfg_.heads, a, static_cast<const Mat<T>*>(nullptr), lay,
                               lay, false, key_valid, bc ? &bc->attn : nullptr);
    ffn_forward(params_, b.ln2, b.ff1, b.ff2, x, bc ? &bc->ln2 : nullptr, bc ? &bc->ff_in : nullptr,
                bc ? &bc->ff_pre : nullptr, bc ? &bc->ff_act : nullptr);
  }
  return nn::layer_norm_forward(params_, norm, x, cache ? &cache->norm : nullptr);
}

template <typename T>
Mat<T> Mvpc<T>::stack_backward(const std::vector<EncoderBlockIds>& blocks, nn::NormIds norm,
                               const StackCache<T>& cache, const SegmentLayout& lay, Mat<T> dy) {
  Mat<T> dx = nn::layer_norm_backward(params_, norm, cache.norm, dy);
  for (std::size_t l = blocks.size(); l-- > 0;) {
    const auto& b = blocks[l];
    const auto& bc = cache.blocks[l];
    dx += ffn_backward(params_, b.ln2, b.ff1, b.ff2, bc.ln2, bc.ff_in, bc.ff_pre, bc.ff_act, dx);
    auto [dq, dkv] = nn::attention_backward(params_, b.attn, cfg_.heads, bc.attn, lay, lay, dx);
    dq += dkv;
    dx += nn::layer_norm_backward(params_, b.ln1, bc.ln1, dq);
  }
  return dx;
}

template <typename T>
Mat<T> Mvpc<T>::video_forward(const Mat<T>& frames, const SegmentLayout& lay, ForwardCache<T>* cache) const {
  Mat<T> x = nn::linear_forward(params_, ids_.video_proj, frames);
  nn::add_positions(params_, ids_.video_pos, lay, x);
  if (cache) cache->video_in = frames;
  return run_stack(ids_.video_blocks, ids_.video_norm, std::move(x), lay, nullptr,
                   cache ? &cache->video : nullptr);
}

template <typename T>
Mat<T> Mvpc<T>::text_forward(const std::vector<int>& aux, const SegmentLayout& lay,
                             const std::vector<std::uint8_t>& valid, ForwardCache<T>* cache) const {
  for (int len : lay.length)
    if (len > cfg_.max_aux_len)
      throw std::invalid_argument("text encoder: sequence of " + std::to_string(len) +
                                  " tokens exceeds max_aux_len");
  Mat<T> x = nn::embedding_forward(params_, ids_.text_embed, aux);
  nn::add_positions(params_, ids_.text_pos, lay, x);
  return run_stack(ids_.text_blocks, ids_.text_norm, std::move(x), lay, &valid,
                   cache ? &cache->text : nullptr);
}

namespace {

template <typename T>
Mat<T> frames_matrix(const nn::Tensor<float>& frames, const ModelConfig& cfg) {
  if (frames.shape.size() != 2 || frames.shape[0] != static_cast<std::size_t>(cfg.frames) ||
      frames.shape[1] != static_cast<std::size_t>(cfg.feature_dim))
    throw std::invalid_argument("video: expected " + std::to_string(cfg.frames) + "x" +
                                std::to_string(cfg.feature_dim) + " frames, got " +
                                nn::shape_string(frames.shape));
  return frames.mat().template cast<T>();
}

std::vector<std::uint8_t> pad_mask(const std::vector<int>& ids, int pad) {
  std::vector<std::uint8_t> valid(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) valid[i] = ids[i] != pad;
  return valid;
}

}  // namespace

template <typename T>
Mat<T> Mvpc<T>::encode_video(const nn::Tensor<float>& frames) const {
  return video_forward(frames_matrix<T>(frames, cfg_), SegmentLayout::from_lengths({cfg_.frames}), nullptr);
}

template <typename T>
Mat<T> Mvpc<T>::encode_text(const std::vector<int>& aux) const {
  return text_forward(aux, SegmentLayout::from_lengths({static_cast<int>(aux.size())}),
                      pad_mask(aux, cfg_.pad_id), nullptr);
}

template <typename T>
Mat<T> Mvpc<T>::encode(const nn::Tensor<float>& frames, const std::vector<int>& aux,
                       std::vector<std::uint8_t>* mem_valid) const {
  Mat<T> memory = fuse(encode_video(frames), encode_text(aux));
  if (mem_valid) {
    mem_valid->assign(static_cast<std::size_t>(cfg_.frames), 1);
    const auto text_valid = pad_mask(aux, cfg_.pad_id);
    mem_valid->insert(mem_valid->end(), text_valid.begin(), text_valid.end());
  }
  return memory;
}

// ------------------------------------------------------------- decoder

template <typename T>
Mat<T> Mvpc<T>::decoder_forward(const Mat<T>& memory, const SegmentLayout& mem_layout,
                                const std::vector<std::uint8_t>* mem_valid, const std::vector<int>& dec_in,
                                const SegmentLayout& dec_layout, ForwardCache<T>* cache) const {
  Mat<T> x = nn::embedding_forward(params_, ids_.dec_embed, dec_in);
  nn::add_positions(params_, ids_.dec_pos, dec_layout, x);
  if (cache) cache->dec_blocks.assign(ids_.dec_blocks.size(), {});
  for (std::size_t l = 0; l < ids_.dec_blocks.size(); ++l) {
    const auto& b = ids_.dec_blocks[l];
    DecoderBlockCache<T>* bc = cache ? &cache->dec_blocks[l] : nullptr;
    Mat<T> a = nn::layer_norm_forward(params_, b.ln1, x, bc ? &bc->ln1 : nullptr);
    x += nn::attention_forward(params_, b.self, cfg_.heads, a, static_cast<const Mat<T>*>(nullptr),
                               dec_layout, dec_layout, true, nullptr, bc ? &bc->self : nullptr);
    Mat<T> c = nn::layer_norm_forward(params_, b.ln2, x, bc ? &bc->ln2 : nullptr);
    x += nn::attention_forward(params_, b.cross, cfg_.heads, c, &memory, dec_layout, mem_layout, false,
                               mem_valid, bc ? &bc->cross : nullptr);
    ffn_forward(params_, b.ln3, b.ff1, b.ff2, x, bc ? &bc->ln3 : nullptr, bc ? &bc->ff_in : nullptr,
                bc ? &bc->ff_pre : nullptr, bc ? &bc->ff_act : nullptr);
  }
  Mat<T> h = nn::layer_norm_forward(params_, ids_.dec_norm, x, cache ? &cache->dec_norm : nullptr);
  Mat<T> logits = nn::linear_forward(params_, ids_.out, h);
  if (cache) cache->dec_out = std::move(h);
  return logits;
}

template <typename T>
T Mvpc<T>::forward_loss(const Mat<T>& memory, const std::vector<int>& caption, int bos, int eos) const {
  if (caption.empty()) throw std::invalid_argument("forward_loss: empty caption");
  if (static_cast<int>(caption.size()) > cfg_.max_caption_len)
    throw std::invalid_argument("forward_loss: caption longer than max_caption_len");
  std::vector<int> dec_in{bos};
  dec_in.insert(dec_in.end(), caption.begin(), caption.end());
  std::vector<int> targets = caption;
  targets.push_back(eos);
  const auto dec_layout = SegmentLayout::from_lengths({static_cast<int>(dec_in.size())});
  const auto mem_layout = SegmentLayout::from_lengths({static_cast<int>(memory.rows())});
  Mat<T> logits = decoder_forward(memory, mem_layout, nullptr, dec_in, dec_layout, nullptr);
  return nn::cross_entropy_rows(logits, targets, static_cast<Mat<T>*>(nullptr));
}

// ------------------------------------------------------- batched pass

template <typename T>
Mat<T> Mvpc<T>::forward(const Batch<T>& batch, ForwardCache<T>* cache) const {
  const int f = cfg_.frames;
  const auto video_layout = SegmentLayout::from_lengths(std::vector<int>(batch.size, f));
  Mat<T> video = video_forward(batch.frames, video_layout, cache);

  std::vector<std::uint8_t> text_valid = pad_mask(batch.aux, cfg_.pad_id);
  Mat<T> text = text_forward(batch.aux, batch.aux_layout, text_valid, cache);

  std::vector<int> mem_lengths;
  for (std::size_t s = 0; s < batch.size; ++s) mem_lengths.push_back(f + batch.aux_layout.length[s]);
  const auto mem_layout = SegmentLayout::from_lengths(mem_lengths);
  Mat<T> memory(mem_layout.total(), cfg_.d);
  for (std::size_t s = 0; s < batch.size; ++s) {
    memory.middleRows(mem_layout.offset[s], f) = video.middleRows(video_layout.offset[s], f);
    const int n = batch.aux_layout.length[s];
    memory.middleRows(mem_layout.offset[s] + f, n) = text.middleRows(batch.aux_layout.offset[s], n);
  }
  std::vector<std::uint8_t> mem_valid(static_cast<std::size_t>(memory.rows()), 1);
  for (std::size_t s = 0; s < batch.size; ++s)
    for (int i = 0; i < batch.aux_layout.length[s]; ++i)
      mem_valid[static_cast<std::size_t>(mem_layout.offset[s] + f + i)] =
          text_valid[static_cast<std::size_t>(batch.aux_layout.offset[s] + i)];
  Mat<T> logits = decoder_forward(memory, mem_layout, &mem_valid, batch.dec_in, batch.dec_layout, cache);
  if (cache) {
    cache->video_layout = video_layout;
    cache->mem_layout = mem_layout;
    cache->text_valid = std::move(text_valid);
    cache->mem_valid = std::move(mem_valid);
    cache->memory = std::move(memory);
  }
  return logits;
}

template <typename T>
void Mvpc<T>::backward(const Batch<T>& batch, const ForwardCache<T>& cache, const Mat<T>& dlogits) {
  Mat<T> dh = nn::linear_backward(params_, ids_.out, cache.dec_out, dlogits);
  Mat<T> dx = nn::layer_norm_backward(params_, ids_.dec_norm, cache.dec_norm, dh);
  Mat<T> dmemory = Mat<T>::Zero(cache.memory.rows(), cache.memory.cols());
  for (std::size_t l = ids_.dec_blocks.size(); l-- > 0;) {
    const auto& b = ids_.dec_blocks[l];
    const auto& bc = cache.dec_blocks[l];
    dx += ffn_backward(params_, b.ln3, b.ff1, b.ff2, bc.ln3, bc.ff_in, bc.ff_pre, bc.ff_act, dx);
    auto [dq_cross, dmem] =
        nn::attention_backward(params_, b.cross, cfg_.heads, bc.cross, batch.dec_layout, cache.mem_layout, dx);
    dmemory += dmem;
    dx += nn::layer_norm_backward(params_, b.ln2, bc.ln2, dq_cross);
    auto [dq_self, dkv_self] =
        nn::attention_backward(params_, b.self, cfg_.heads, bc.self, batch.dec_layout, batch.dec_layout, dx);
    dq_self += dkv_self;
    dx += nn::layer_norm_backward(params_, b.ln1, bc.ln1, dq_self);
  }
  nn::embedding_backward(params_, ids_.dec_embed, batch.dec_in, dx);
  nn::add_positions_backward(params_, ids_.dec_pos, batch.dec_layout, dx);

  const int f = cfg_.frames;
  Mat<T> dvideo(cache.video_layout.total(), cfg_.d);
  Mat<T> dtext(batch.aux_layout.total(), cfg_.d);
  for (std::size_t s = 0; s < batch.size; ++s) {
    dvideo.middleRows(cache.video_layout.offset[s], f) = dmemory.middleRows(cache.mem_layout.offset[s], f);
    const int n = batch.aux_layout.length[s];
    dtext.middleRows(batch.aux_layout.offset[s], n) = dmemory.middleRows(cache.mem_layout.offset[s] + f, n);
  }
  Mat<T> dtext_in = stack_backward(ids_.text_blocks, ids_.text_norm, cache.text, batch.aux_layout, dtext);
  nn::embedding_backward(params_, ids_.text_embed, batch.aux, dtext_in);
  nn::add_positions_backward(params_, ids_.text_pos, batch.aux_layout, dtext_in);
  Mat<T> dvideo_in =
      stack_backward(ids_.video_blocks, ids_.video_norm, cache.video, cache.video_layout, dvideo);
  nn::add_positions_backward(params_, ids_.video_pos, cache.video_layout, dvideo_in);
  nn::linear_backward(params_, ids_.video_proj, cache.video_in, dvideo_in);
}

// --------------------------------------------------- incremental decode

template <typename T>
DecoderState<T> Mvpc<T>::start_decoding(const Mat<T>& memory, const std::vector<std::uint8_t>* mem_valid,
                                        std::size_t hypotheses) const {
  DecoderState<T> st;
  for (const auto& b : ids_.dec_blocks) {
    st.cross_k.push_back(nn::project_forward(params_, b.cross.k, memory));
    st.cross_v.push_back(nn::project_forward(params_, b.cross.v, memory));
  }
  if (mem_valid) st.mem_valid = *mem_valid;
  const std::size_t layers = ids_.dec_blocks.size();
  const Mat<T> empty = Mat<T>::Zero(cfg_.max_caption_len + 1, cfg_.d);
  st.self_k.assign(hypotheses, std::vector<Mat<T>>(layers, empty));
  st.self_v = st.self_k;
  return st;
}

namespace {

// Single-query attention of each row of q against keys/values [0, len).
template <typename T>
Mat<T> attend_rows(const Mat<T>& q, const std::vector<const Mat<T>*>& keys,
                   const std::vector<const Mat<T>*>& values, int len, int heads,
                   const std::vector<std::uint8_t>* key_valid) {
  const Eigen::Index d = q.cols(), dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> ctx = Mat<T>::Zero(q.rows(), d);
  nn::RowVec<T> s(len);
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    const Mat<T>& k = *keys[static_cast<std::size_t>(r)];
    const Mat<T>& v = *values[static_cast<std::size_t>(r)];
    for (int h = 0; h < heads; ++h) {
      s.noalias() = q.block(r, h * dh, 1, dh) * k.block(0, h * dh, len, dh).transpose();
      s *= scale;
      if (key_valid)
        for (int j = 0; j < len; ++j)
          if (!(*key_valid)[static_cast<std::size_t>(j)]) s(j) = -std::numeric_limits<T>::infinity();
      nn::softmax_rows_inplace<T>(s);
      ctx.block(r, h * dh, 1, dh).noalias() = s * v.block(0, h * dh, len, dh);
    }
  }
  return ctx;
}

}  // namespace

template <typename T>
Mat<T> Mvpc<T>::decode_step(DecoderState<T>& st, const std::vector<int>& parents,
                            const std::vector<int>& tokens) const {
  if (st.position > cfg_.max_caption_len)
    throw std::invalid_argument("decode_step: position exceeds max_caption_len");
  if (!parents.empty()) {
    auto k = st.self_k;
    auto v = st.self_v;
    st.self_k.clear();
    st.self_v.clear();
    for (int p : parents) {
      st.self_k.push_back(k.at(static_cast<std::size_t>(p)));
      st.self_v.push_back(v.at(static_cast<std::size_t>(p)));
    }
  }
  if (st.self_k.size() != tokens.size())
    throw std::invalid_argument("decode_step: token count does not match hypotheses");
  const int pos = st.position;
  Mat<T> x = nn::embedding_forward(params_, ids_.dec_embed, tokens);
  x.rowwise() += params_[ids_.dec_pos].value.mat().row(pos);
  const int mem_len = static_cast<int>(st.cross_k.empty() ? 0 : st.cross_k[0].rows());
  for (std::size_t l = 0; l < ids_.dec_blocks.size(); ++l) {
    const auto& b = ids_.dec_blocks[l];
    Mat<T> a = nn::layer_norm_forward(params_, b.ln1, x, static_cast<nn::LayerNormCache<T>*>(nullptr));
    Mat<T> q = nn::project_forward(params_, b.self.q, a);
    Mat<T> k = nn::project_forward(params_, b.self.k, a);
    Mat<T> v = nn::project_forward(params_, b.self.v, a);
    std::vector<const Mat<T>*> keys, values;
    for (std::size_t h = 0; h < tokens.size(); ++h) {
      st.self_k[h][l].row(pos) = k.row(static_cast<Eigen::Index>(h));
      st.self_v[h][l].row(pos) = v.row(static_cast<Eigen::Index>(h));
      keys.push_back(&st.self_k[h][l]);
      values.push_back(&st.self_v[h][l]);
    }
    x += nn::project_forward(params_, b.self.o, attend_rows(q, keys, values, pos + 1, cfg_.heads, nullptr));

    Mat<T> c = nn::layer_norm_forward(params_, b.ln2, x, static_cast<nn::LayerNormCache<T>*>(nullptr));
    Mat<T> cq = nn::project_forward(params_, b.cross.q, c);
    std::vector<const Mat<T>*> ck(tokens.size(), &st.cross_k[l]), cv(tokens.size(), &st.cross_v[l]);
    x += nn::project_forward(params_, b.cross.o,
                            attend_rows(cq, ck, cv, mem_len, cfg_.heads,
                                        st.mem_valid.empty() ? nullptr : &st.mem_valid));
    ffn_forward(params_, b.ln3, b.ff1, b.ff2, x, static_cast<nn::LayerNormCache<T>*>(nullptr),
                static_cast<Mat<T>*>(nullptr), static_cast<Mat<T>*>(nullptr), static_cast<Mat<T>*>(nullptr));
  }
  st.position += 1;
  Mat<T> h = nn::layer_norm_forward(params_, ids_.dec_norm, x, static_cast<nn::LayerNormCache<T>*>(nullptr));
  return nn::linear_forward(params_, ids_.out, h);
}

template <typename T>
DecodeResult Mvpc<T>::beam_decode(const Mat<T>& memory, const std::vector<std::uint8_t>* mem_valid,
                                  const DecodeConfig& cfg, int bos, int eos) const {
  DecodeConfig c = cfg;
  c.max_steps = std::min(c.max_steps, cfg_.max_caption_len + 1);
  DecoderState<T> st = start_decoding(memory, mem_valid, 1);
  StepFn step = [&](std::span<const int> parents, std::span<const std::vector<int>> prefixes) {
    std::vector<int> last;
    for (const auto& p : prefixes) last.push_back(p.empty() ? bos : p.back());
    Mat<T> logits = decode_step(st, std::vector<int>(parents.begin(), parents.end()), last);
    return Eigen::MatrixXd(logits.template cast<double>());
  };
  return beam_search(step, eos, c);
}

// ------------------------------------------------------------ batching

template <typename T>
Batch<T> make_batch(const std::vector<Example>& examples, const ModelConfig& cfg, int bos, int eos) {
  Batch<T> b;
  b.size = examples.size();
  b.frames.resize(static_cast<Eigen::Index>(examples.size()) * cfg.frames, cfg.feature_dim);
  std::vector<int> aux_len, dec_len;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = examples[i];
    if (!ex.video) throw std::invalid_argument("make_batch: missing video");
    b.frames.middleRows(static_cast<Eigen::Index>(i) * cfg.frames, cfg.frames) = frames_matrix<T>(*ex.video, cfg);
    if (ex.aux.empty() || static_cast<int>(ex.aux.size()) > cfg.max_aux_len)
      throw std::invalid_argument("make_batch: aux sequence length " + std::to_string(ex.aux.size()) +
                                  " outside [1, max_aux_len]");
    if (ex.caption.empty()) throw std::invalid_argument("make_batch: empty caption");
    if (static_cast<int>(ex.caption.size()) > cfg.max_caption_len)
      throw std::invalid_argument("make_batch: caption longer than max_caption_len");
    b.aux.insert(b.aux.end(), ex.aux.begin(), ex.aux.end());
    aux_len.push_back(static_cast<int>(ex.aux.size()));
    b.dec_in.push_back(bos);
    b.dec_in.insert(b.dec_in.end(), ex.caption.begin(), ex.caption.end());
    b.targets.insert(b.targets.end(), ex.caption.begin(), ex.caption.end());
    b.targets.push_back(eos);
    dec_len.push_back(static_cast<int>(ex.caption.size()) + 1);
  }
  b.aux_layout = nn::SegmentLayout::from_lengths(aux_len);
  b.dec_layout = nn::SegmentLayout::from_lengths(dec_len);
  return b;
}

template class Mvpc<float>;
template class Mvpc<double>;
template Batch<float> make_batch<float>(const std::vector<Example>&, const ModelConfig&, int, int);
template Batch<double> make_batch<double>(const std::vector<Example>&, const ModelConfig&, int, int);

}  // namespace mrvpc::model
