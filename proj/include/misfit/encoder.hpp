#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "misfit/attention.hpp"
#include "misfit/tensor.hpp"

namespace misfit {

enum class FusionMode { key_swap, cross_d_to_rgb, rgb_only };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);

/// Shape of the toy shared-encoder transformer.
///
/// Stage 0 tokenizes non-overlapping patch_size×patch_size patches; every later
/// stage first merges 2×2 neighbouring tokens. Both modality streams run
/// through the same weights; the decoder sees only the fused (RGB) stream.
struct EncoderConfig {
    std::size_t patch_size = 4;
    std::size_t in_channels = 3;
    std::vector<std::size_t> stage_dims{16, 32};
    std::vector<std::size_t> heads_per_stage{2, 2};
    std::size_t num_stages = 2;
    std::size_t num_classes = 5;
    std::size_t mlp_ratio = 2;
    std::size_t decoder_dim = 32;
    FusionMode fusion_mode = FusionMode::key_swap;

    void validate() const;
    /// Throws ConfigError unless an H×W input tiles into the stage grids.
    void validate_input(std::size_t height, std::size_t width) const;
    std::size_t head_dim(std::size_t stage) const { return stage_dims[stage] / heads_per_stage[stage]; }

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct NamedTensor {
    std::string name;
    Tensor value;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct StageSlots {
    std::optional<std::size_t> merge_w, merge_b;
    std::size_t ln1_g, ln1_b;
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_g, ln2_b;
    std::size_t mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

/// Index of every parameter tensor inside ModelParams, in declaration order.
struct ParamLayout {
    std::size_t patch_w = 0, patch_b = 0;
    std::vector<StageSlots> stages;
    std::vector<std::size_t> dec_w, dec_b;
    std::size_t cls_w = 0, cls_b = 0;
};

ParamLayout param_layout(const EncoderConfig& cfg);

/// Every learnable weight of the encoder and decoder, one copy each.
/// Gradients reuse the same type and layout.
class ModelParams {
public:
    ModelParams() = default;

    static ModelParams initialize(const EncoderConfig& cfg, std::uint64_t seed);
    static ModelParams zeros(const EncoderConfig& cfg);
    ModelParams zeros_like() const;

    const EncoderConfig& config() const noexcept { return config_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    std::vector<NamedTensor>& tensors() noexcept { return tensors_; }
    const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }

    Tensor& operator[](std::size_t slot) { return tensors_[slot].value; }
    const Tensor& operator[](std::size_t slot) const { return tensors_[slot].value; }
    const Tensor& by_name(std::string_view name) const;
    Tensor& by_name(std::string_view name);

    std::size_t scalar_count() const;
    std::vector<double> flatten() const;
    void assign_flat(std::span<const double> flat);
    bool all_finite() const;
    bool same_layout(const ModelParams& other) const;

    /// Used by checkpoint loading; validates names and shapes against cfg.
    static ModelParams from_tensors(const EncoderConfig& cfg, std::vector<NamedTensor> tensors);

    friend bool operator==(const ModelParams& a, const ModelParams& b) {
        return a.config_ == b.config_ && a.tensors_ == b.tensors_;
    }

private:
    EncoderConfig config_;
    ParamLayout layout_;
    std::vector<NamedTensor> tensors_;
};

AttentionWeights attention_weights(const ModelParams& params, std::size_t stage);

/// One token per non-overlapping patch: flattened (py, px, c) patch · W + b.
TokenGrid patch_embed(const Tensor& image, const ModelParams& params);

struct LayerNormCache {
    Tensor xhat;
    std::vector<double> inv_std;
};

struct StreamBlockCache {
    Tensor merge_input;  // concatenated 2×2 tokens (stages > 0)
    Tensor input;
    LayerNormCache ln1;
    Tensor ln1_out;
    AttentionCache attn;
    Tensor mid;
    LayerNormCache ln2;
    Tensor ln2_out;
    Tensor hidden_pre;
    Tensor hidden;
    Tensor output;
};

struct StageCache {
    std::size_t rows = 0, cols = 0;
    StreamBlockCache rgb;
    StreamBlockCache depth;
};

/// Activations kept by the forward pass for encoder_backward.
struct ForwardCache {
    bool valid = false;
    std::size_t height = 0, width = 0;
    Shape depth_shape;
    bool depth_replicated = false;
    bool has_depth = false;
    Tensor rgb_patches, depth_patches;
    std::vector<StageCache> stages;
    Tensor dec_pre, dec_act;
};

struct EncoderOutput {
    Tensor logits;  // H×W×classes
    ForwardCache cache;
};

/// Per-pixel class logits. `depth` may be H×W, H×W×1 (replicated to the
/// input channel count) or H×W×in_channels.
Tensor encoder_forward(const Tensor& rgb, const Tensor& depth, const ModelParams& params);
EncoderOutput encoder_forward_cached(const Tensor& rgb, const Tensor& depth, const ModelParams& params);

struct EncoderGradients {
    ModelParams params;
    Tensor rgb;
    Tensor depth;  // same shape as the depth input
};

EncoderGradients encoder_backward(const Tensor& dlogits, const ForwardCache& cache, const ModelParams& params);

}  // namespace misfit
