#pragma once

// Multimodal captioning network: a video encoder over frame features, a text
// encoder over the serialized ASR/event sequence, parameter-free row
// concatenation of the two embeddings, and an autoregressive decoder with
// cross-attention over the fused memory. Pre-norm transformer blocks with a
// GELU feed-forward of width 4d.

#include "mrvpc/model/beam.hpp"
#include "mrvpc/nncore/ops.hpp"
#include "mrvpc/nncore/param_store.hpp"
#include "mrvpc/nncore/tensor.hpp"

#include <cstdint>
#include <vector>

namespace mrvpc::model {

using nn::Mat;

struct ModelConfig {
  int d = 64;
  int heads = 4;
  int video_layers = 2;
  int text_layers = 2;
  int decoder_layers = 2;
  int frames = 48;
  int feature_dim = 16;
  int vocab_size = 0;
  int max_caption_len = 96;  // caption tokens, EOS excluded
  int max_aux_len = 256;
  int pad_id = -1;  // text tokens with this id are masked out of attention
  double init_std = 0.02;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct EncoderBlockIds {
  nn::NormIds ln1;
  nn::AttnIds attn;
  nn::NormIds ln2;
  nn::LinearIds ff1, ff2;
};

struct DecoderBlockIds {
  nn::NormIds ln1;
  nn::AttnIds self;
  nn::NormIds ln2;
  nn::AttnIds cross;
  nn::NormIds ln3;
  nn::LinearIds ff1, ff2;
};

struct ParamLayout {
  nn::LinearIds video_proj;
  std::size_t video_pos = 0;
  std::vector<EncoderBlockIds> video_blocks;
  nn::NormIds video_norm;
  std::size_t text_embed = 0, text_pos = 0;
  std::vector<EncoderBlockIds> text_blocks;
  nn::NormIds text_norm;
  std::size_t dec_embed = 0, dec_pos = 0;
  std::vector<DecoderBlockIds> dec_blocks;
  nn::NormIds dec_norm;
  nn::LinearIds out;
};

/// One training/evaluation example in id space.
struct Example {
  const nn::Tensor<float>* video = nullptr;
  std::vector<int> aux;
  std::vector<int> caption;  // without BOS/EOS
};

/// Packed batch. Decoder inputs are BOS + caption; targets are caption + EOS.
template <typename T>
struct Batch {
  std::size_t size = 0;
  Mat<T> frames;  // (size * frames) x feature_dim
  std::vector<int> aux;
  nn::SegmentLayout aux_layout;
  std::vector<int> dec_in;
  std::vector<int> targets;
  nn::SegmentLayout dec_layout;
};

template <typename T>
struct EncoderBlockCache {
  nn::LayerNormCache<T> ln1, ln2;
  nn::AttentionCache<T> attn;
  Mat<T> ff_in, ff_pre, ff_act;
};

template <typename T>
struct DecoderBlockCache {
  nn::LayerNormCache<T> ln1, ln2, ln3;
  nn::AttentionCache<T> self, cross;
  Mat<T> ff_in, ff_pre, ff_act;
};

template <typename T>
struct StackCache {
  std::vector<EncoderBlockCache<T>> blocks;
  nn::LayerNormCache<T> norm;
};

template <typename T>
struct ForwardCache {
  Mat<T> video_in;
  StackCache<T> video, text;
  nn::SegmentLayout video_layout, mem_layout;
  std::vector<std::uint8_t> text_valid, mem_valid;
  Mat<T> memory;
  std::vector<DecoderBlockCache<T>> dec_blocks;
  nn::LayerNormCache<T> dec_norm;
  Mat<T> dec_out;
};

/// Incremental decoding state for one fused memory and a set of hypotheses.
template <typename T>
struct DecoderState {
  std::vector<Mat<T>> cross_k, cross_v;                // per layer, memory rows x d
  std::vector<std::vector<Mat<T>>> self_k, self_v;     // [hypothesis][layer], max_len x d
  std::vector<std::uint8_t> mem_valid;
  int position = 0;
};

template <typename T>
class Mvpc {
 public:
  explicit Mvpc(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return ids_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  /// Truncated normal (2 std) weights and embeddings, zero biases, unit gains.
  void init(std::uint64_t seed);

  Mat<T> encode_video(const nn::Tensor<float>& frames) const;
  Mat<T> encode_text(const std::vector<int>& aux) const;
  static Mat<T> fuse(const Mat<T>& video_emb, const Mat<T>& text_emb) {
    return nn::concat_rows(video_emb, text_emb);
  }
  /// Video rows then text rows; text rows holding PAD are masked out.
  Mat<T> encode(const nn::Tensor<float>& frames, const std::vector<int>& aux,
                std::vector<std::uint8_t>* mem_valid = nullptr) const;

  /// Teacher-forced mean token cross-entropy of `caption` given a fused memory.
  T forward_loss(const Mat<T>& memory, const std::vector<int>& caption, int bos, int eos) const;

  /// Batched forward: returns logits, one row per target position.
  Mat<T> forward(const Batch<T>& batch, ForwardCache<T>* cache) const;
  /// Accumulates parameter gradients for dL/dlogits.
  void backward(const Batch<T>& batch, const ForwardCache<T>& cache, const Mat<T>& dlogits);

  DecoderState<T> start_decoding(const Mat<T>& memory, const std::vector<std::uint8_t>* mem_valid,
                                 std::size_t hypotheses) const;
  /// Feeds one token per hypothesis (after reordering caches by `parents`)
  /// and returns next-token logits.
  Mat<T> decode_step(DecoderState<T>& state, const std::vector<int>& parents,
                     const std::vector<int>& tokens) const;

  DecodeResult beam_decode(const Mat<T>& memory, const std::vector<std::uint8_t>* mem_valid,
                           const DecodeConfig& cfg, int bos, int eos) const;

 private:
  Mat<T> run_stack(const std::vector<EncoderBlockIds>& blocks, nn::NormIds norm, Mat<T> x,
                   const nn::SegmentLayout& lay, const std::vector<std::uint8_t>* key_valid,
                   StackCache<T>* cache) const;
  Mat<T> stack_backward(const std::vector<EncoderBlockIds>& blocks, nn::NormIds norm,
                        const StackCache<T>& cache, const nn::SegmentLayout& lay, Mat<T> dy);
  Mat<T> video_forward(const Mat<T>& frames, const nn::SegmentLayout& lay, ForwardCache<T>* cache) const;
  Mat<T> text_forward(const std::vector<int>& aux, const nn::SegmentLayout& lay,
                      const std::vector<std::uint8_t>& valid, ForwardCache<T>* cache) const;
  Mat<T> decoder_forward(const Mat<T>& memory, const nn::SegmentLayout& mem_layout,
                         const std::vector<std::uint8_t>* mem_valid, const std::vector<int>& dec_in,
                         const nn::SegmentLayout& dec_layout, ForwardCache<T>* cache) const;

  ModelConfig cfg_;
  nn::ParamStore<T> params_;
  ParamLayout ids_;
};

extern template class Mvpc<float>;
extern template class Mvpc<double>;

/// Packs examples; throws std::invalid_argument on empty or over-long captions,
/// wrong frame shapes, or over-long aux sequences.
template <typename T>
Batch<T> make_batch(const std::vector<Example>& examples, const ModelConfig& cfg, int bos, int eos);

extern template Batch<float> make_batch<float>(const std::vector<Example>&, const ModelConfig&, int, int);
extern template Batch<double> make_batch<double>(const std::vector<Example>&, const ModelConfig&, int, int);

/// Copies parameter values between precisions (same config).
template <typename To, typename From>
Mvpc<To> convert_model(const Mvpc<From>& src) {
  Mvpc<To> out(src.config());
  out.params().assign_from(src.params());
  return out;
}

}  // namespace mrvpc::model
