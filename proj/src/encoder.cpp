#include "misfit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "misfit/errors.hpp"
#include "misfit/kernels.hpp"
#include "misfit/rng.hpp"

namespace misfit {

namespace {

constexpr double kLayerNormEps = 1e-6;

struct ParamSpec {
    std::string name;
    Shape shape;
};

ParamLayout build_layout(const EncoderConfig& cfg, std::vector<ParamSpec>* specs) {
    std::vector<ParamSpec> local;
    auto& out = specs ? *specs : local;
    out.clear();
    auto add = [&out](std::string name, Shape shape) {
        out.push_back({std::move(name), std::move(shape)});
        return out.size() - 1;
    };
    ParamLayout l;
    const std::size_t pdim = cfg.patch_size * cfg.patch_size * cfg.in_channels;
    l.patch_w = add("patch.w", {pdim, cfg.stage_dims[0]});
    l.patch_b = add("patch.b", {cfg.stage_dims[0]});
    for (std::size_t s = 0; s < cfg.num_stages; ++s) {
        const std::size_t d = cfg.stage_dims[s];
        const std::size_t hid = d * cfg.mlp_ratio;
        const std::string p = "stage" + std::to_string(s) + ".";
        StageSlots st{};
        if (s > 0) {
            st.merge_w = add(p + "merge.w", {4 * cfg.stage_dims[s - 1], d});
            st.merge_b = add(p + "merge.b", {d});
        }
        st.ln1_g = add(p + "ln1.g", {d});
        st.ln1_b = add(p + "ln1.b", {d});
        st.wq = add(p + "attn.wq", {d, d});
        st.bq = add(p + "attn.bq", {d});
        st.wk = add(p + "attn.wk", {d, d});
        st.bk = add(p + "attn.bk", {d});
        st.wv = add(p + "attn.wv", {d, d});
        st.bv = add(p + "attn.bv", {d});
        st.wo = add(p + "attn.wo", {d, d});
        st.bo = add(p + "attn.bo", {d});
        st.ln2_g = add(p + "ln2.g", {d});
        st.ln2_b = add(p + "ln2.b", {d});
        st.mlp_w1 = add(p + "mlp.w1", {d, hid});
        st.mlp_b1 = add(p + "mlp.b1", {hid});
        st.mlp_w2 = add(p + "mlp.w2", {hid, d});
        st.mlp_b2 = add(p + "mlp.b2", {d});
        l.stages.push_back(st);
    }
    for (std::size_t s = 0; s < cfg.num_stages; ++s) {
        const std::string p = "dec.proj" + std::to_string(s) + ".";
        l.dec_w.push_back(add(p + "w", {cfg.stage_dims[s], cfg.decoder_dim}));
        l.dec_b.push_back(add(p + "b", {cfg.decoder_dim}));
    }
    l.cls_w = add("dec.cls.w", {cfg.decoder_dim, cfg.num_classes});
    l.cls_b = add("dec.cls.b", {cfg.num_classes});
    return l;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// ---- dense helpers ----------------------------------------------------------

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = kernels::matmul(x, w);
    const std::size_t n = y.dim(0), m = y.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) y[i * m + j] += b[j];
    }
    return y;
}

/// dW += xᵀ·dy, db += Σ dy, returns dy·Wᵀ.
Tensor affine_backward(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dw, Tensor& db) {
    kernels::gemm_tn(x.data(), dy.data(), dw.data(), x.dim(0), x.dim(1), dy.dim(1), true);
    const std::size_t n = dy.dim(0), m = dy.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) db[j] += dy[i * m + j];
    }
    return kernels::matmul_nt(dy, w);
}

void add_into(Tensor& dst, const Tensor& src) {
    auto d = dst.data();
    const auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Tensor sum(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    add_into(out, b);
    return out;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

Tensor gelu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        y[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    return y;
}

Tensor gelu_backward(const Tensor& dy, const Tensor& x) {
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        dx[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
    return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& g, const Tensor& b, LayerNormCache& cache) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    Tensor y({n, d});
    cache.xhat = Tensor({n, d});
    cache.inv_std.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.raw() + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.inv_std[i] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mean) * inv;
            cache.xhat[i * d + j] = xh;
            y[i * d + j] = xh * g[j] + b[j];
        }
    }
    return y;
}

Tensor layer_norm_backward(const Tensor& dy, const LayerNormCache& cache, const Tensor& g, Tensor& dg, Tensor& db) {
    const std::size_t n = dy.dim(0), d = dy.dim(1);
    Tensor dx({n, d});
    std::vector<double> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double gy = dy[i * d + j];
            const double xh = cache.xhat[i * d + j];
            dg[j] += gy * xh;
            db[j] += gy;
            dxhat[j] = gy * g[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh;
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            dx[i * d + j] = cache.inv_std[i] * (dxhat[j] - mean_dxhat - cache.xhat[i * d + j] * mean_dxhat_xhat);
        }
    }
    return dx;
}

// ---- token geometry ---------------------------------------------------------

Tensor patchify(const Tensor& image, std::size_t p) {
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    const std::size_t rows = h / p, cols = w / p, pd = p * p * c;
    Tensor out({rows * cols, pd});
    for (std::size_t ty = 0; ty < rows; ++ty) {
        for (std::size_t tx = 0; tx < cols; ++tx) {
            double* dst = out.raw() + (ty * cols + tx) * pd;
            for (std::size_t py = 0; py < p; ++py) {
                const double* src = image.raw() + ((ty * p + py) * w + tx * p) * c;
                std::copy(src, src + p * c, dst + py * p * c);
            }
        }
    }
    return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t h, std::size_t w, std::size_t c, std::size_t p) {
    const std::size_t cols = w / p, pd = p * p * c;
    Tensor image({h, w, c});
    for (std::size_t t = 0; t < patches.dim(0); ++t) {
        const std::size_t ty = t / cols, tx = t % cols;
        const double* src = patches.raw() + t * pd;
        for (std::size_t py = 0; py < p; ++py) {
            double* dst = image.raw() + ((ty * p + py) * w + tx * p) * c;
            std::copy(src + py * p * c, src + (py + 1) * p * c, dst);
        }
    }
    return image;
}

/// (rows×cols)×d → (rows/2×cols/2)×4d, children ordered (0,0),(0,1),(1,0),(1,1).
Tensor merge_tokens(const Tensor& x, std::size_t rows, std::size_t cols) {
    const std::size_t d = x.dim(1), r2 = rows / 2, c2 = cols / 2;
    Tensor out({r2 * c2, 4 * d});
    for (std::size_t r = 0; r < r2; ++r) {
        for (std::size_t c = 0; c < c2; ++c) {
            double* dst = out.raw() + (r * c2 + c) * 4 * d;
            for (std::size_t k = 0; k < 4; ++k) {
                const std::size_t src_tok = (2 * r + k / 2) * cols + (2 * c + k % 2);
                std::copy(x.raw() + src_tok * d, x.raw() + (src_tok + 1) * d, dst + k * d);
            }
        }
    }
    return out;
}

void unmerge_add(const Tensor& dmerged, std::size_t rows, std::size_t cols, Tensor& dx) {
    const std::size_t d = dx.dim(1), r2 = rows / 2, c2 = cols / 2;
    for (std::size_t r = 0; r < r2; ++r) {
        for (std::size_t c = 0; c < c2; ++c) {
            const double* src = dmerged.raw() + (r * c2 + c) * 4 * d;
            for (std::size_t k = 0; k < 4; ++k) {
                const std::size_t tok = (2 * r + k / 2) * cols + (2 * c + k % 2);
                for (std::size_t j = 0; j < d; ++j) dx[tok * d + j] += src[k * d + j];
            }
        }
    }
}

Tensor depth_channels(const Tensor& depth, std::size_t h, std::size_t w, std::size_t c, bool& replicated) {
    const bool planar = depth.rank() == 2 || (depth.rank() == 3 && depth.dim(2) == 1);
    if (depth.rank() < 2 || depth.rank() > 3 || depth.dim(0) != h || depth.dim(1) != w) {
        throw InvalidInput("encoder: depth " + shape_string(depth.shape()) + " does not match rgb spatial size");
    }
    if (planar) {
        replicated = true;
        Tensor out({h, w, c});
        for (std::size_t i = 0; i < h * w; ++i) {
            for (std::size_t k = 0; k < c; ++k) out[i * c + k] = depth[i];
        }
        return out;
    }
    if (depth.dim(2) != c) throw InvalidInput("encoder: depth channel count must be 1 or match the rgb input");
    replicated = false;
    return depth;
}

void check_finite(const Tensor& t, std::size_t stage, const char* what) {
    if (!t.all_finite()) {
        throw NumericError(std::string("encoder: non-finite activation in ") + what + " at stage " +
                           std::to_string(stage));
    }
}

// ---- one stage, two streams --------------------------------------------------

void mlp_forward(StreamBlockCache& c, const ModelParams& p, const StageSlots& st) {
    c.ln2_out = layer_norm(c.mid, p[st.ln2_g], p[st.ln2_b], c.ln2);
    c.hidden_pre = affine(c.ln2_out, p[st.mlp_w1], p[st.mlp_b1]);
    c.hidden = gelu(c.hidden_pre);
    c.output = sum(c.mid, affine(c.hidden, p[st.mlp_w2], p[st.mlp_b2]));
}

/// Returns d(mid) given d(output).
Tensor mlp_backward(const Tensor& dout, const StreamBlockCache& c, const ModelParams& p, ModelParams& g,
                    const StageSlots& st) {
    const Tensor dh = affine_backward(dout, c.hidden, p[st.mlp_w2], g[st.mlp_w2], g[st.mlp_b2]);
    const Tensor dhp = gelu_backward(dh, c.hidden_pre);
    const Tensor dn2 = affine_backward(dhp, c.ln2_out, p[st.mlp_w1], g[st.mlp_w1], g[st.mlp_b1]);
    return sum(dout, layer_norm_backward(dn2, c.ln2, p[st.ln2_g], g[st.ln2_g], g[st.ln2_b]));
}

AttentionGradRefs grad_refs(ModelParams& g, const StageSlots& st) {
    return {g[st.wq], g[st.bq], g[st.wk], g[st.bk], g[st.wv], g[st.bv], g[st.wo], g[st.bo]};
}

}  // namespace

// ---- configuration ------------------------------------------------------------

std::string_view to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::key_swap: return "key_swap";
        case FusionMode::cross_d_to_rgb: return "cross_d_to_rgb";
        case FusionMode::rgb_only: return "rgb_only";
    }
    return "unknown";
}

FusionMode parse_fusion_mode(std::string_view name) {
    if (name == "key_swap") return FusionMode::key_swap;
    if (name == "cross_d_to_rgb") return FusionMode::cross_d_to_rgb;
    if (name == "rgb_only") return FusionMode::rgb_only;
    throw ConfigError("unknown fusion mode '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
    if (patch_size == 0) throw ConfigError("patch_size must be positive");
    if (in_channels == 0) throw ConfigError("in_channels must be positive");
    if (num_stages == 0) throw ConfigError("num_stages must be positive");
    if (stage_dims.size() != num_stages || heads_per_stage.size() != num_stages) {
        throw ConfigError("stage_dims and heads_per_stage must list one entry per stage");
    }
    for (std::size_t s = 0; s < num_stages; ++s) {
        if (stage_dims[s] == 0 || heads_per_stage[s] == 0 || stage_dims[s] % heads_per_stage[s] != 0) {
            throw ConfigError("stage " + std::to_string(s) + " width must be a positive multiple of its head count");
        }
    }
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (mlp_ratio == 0 || decoder_dim == 0) throw ConfigError("mlp_ratio and decoder_dim must be positive");
}

void EncoderConfig::validate_input(std::size_t height, std::size_t width) const {
    validate();
    if (height == 0 || width == 0 || height % patch_size != 0 || width % patch_size != 0) {
        throw ConfigError("patch_size " + std::to_string(patch_size) + " does not divide input " +
                          std::to_string(height) + "x" + std::to_string(width));
    }
    const std::size_t factor = std::size_t{1} << (num_stages - 1);
    if ((height / patch_size) % factor != 0 || (width / patch_size) % factor != 0) {
        throw ConfigError("token grid " + std::to_string(height / patch_size) + "x" + std::to_string(width / patch_size) +
                          " cannot be merged over " + std::to_string(num_stages) + " stages");
    }
}

ParamLayout param_layout(const EncoderConfig& cfg) {
    cfg.validate();
    return build_layout(cfg, nullptr);
}

// ---- parameters ----------------------------------------------------------------

ModelParams ModelParams::zeros(const EncoderConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> specs;
    ModelParams p;
    p.config_ = cfg;
    p.layout_ = build_layout(cfg, &specs);
    for (auto& s : specs) p.tensors_.push_back({std::move(s.name), Tensor(std::move(s.shape))});
    return p;
}

ModelParams ModelParams::initialize(const EncoderConfig& cfg, std::uint64_t seed) {
    ModelParams p = zeros(cfg);
    Rng rng(seed);
    for (auto& [name, t] : p.tensors_) {
        if (ends_with(name, ".g")) {
            t.fill(1.0);
        } else if (t.rank() == 2) {
            const double a = std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
            for (auto& v : t.data()) v = rng.uniform(-a, a);
        }
    }
    return p;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams p = *this;
    for (auto& nt : p.tensors_) nt.value.fill(0.0);
    return p;
}

ModelParams ModelParams::from_tensors(const EncoderConfig& cfg, std::vector<NamedTensor> tensors) {
    ModelParams p = zeros(cfg);
    if (tensors.size() != p.tensors_.size()) throw InvalidInput("parameter count does not match the encoder config");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].name != p.tensors_[i].name || tensors[i].value.shape() != p.tensors_[i].value.shape()) {
            throw InvalidInput("parameter '" + tensors[i].name + "' does not match slot '" + p.tensors_[i].name + "'");
        }
    }
    p.tensors_ = std::move(tensors);
    return p;
}

const Tensor& ModelParams::by_name(std::string_view name) const {
    for (const auto& nt : tensors_) {
        if (nt.name == name) return nt.value;
    }
    throw InvalidInput("no parameter named '" + std::string(name) + "'");
}

Tensor& ModelParams::by_name(std::string_view name) {
    return const_cast<Tensor&>(std::as_const(*this).by_name(name));
}

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& nt : tensors_) n += nt.value.size();
    return n;
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(scalar_count());
    for (const auto& nt : tensors_) flat.insert(flat.end(), nt.value.data().begin(), nt.value.data().end());
    return flat;
}

void ModelParams::assign_flat(std::span<const double> flat) {
    if (flat.size() != scalar_count()) throw InvalidInput("assign_flat: length mismatch");
    std::size_t off = 0;
    for (auto& nt : tensors_) {
        auto d = nt.value.data();
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + d.size()), d.begin());
        off += d.size();
    }
}

bool ModelParams::all_finite() const {
    return std::all_of(tensors_.begin(), tensors_.end(), [](const auto& nt) { return nt.value.all_finite(); });
}

bool ModelParams::same_layout(const ModelParams& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].name != other.tensors_[i].name || tensors_[i].value.shape() != other.tensors_[i].value.shape()) {
            return false;
        }
    }
    return true;
}

AttentionWeights attention_weights(const ModelParams& p, std::size_t stage) {
    const auto& st = p.layout().stages.at(stage);
    return {p[st.wq], p[st.bq], p[st.wk], p[st.bk], p[st.wv], p[st.bv], p[st.wo], p[st.bo],
            p.config().heads_per_stage[stage]};
}

TokenGrid patch_embed(const Tensor& image, const ModelParams& params) {
    const auto& cfg = params.config();
    if (image.rank() != 3 || image.dim(2) != cfg.in_channels) {
        throw InvalidInput("patch_embed: expected H×W×" + std::to_string(cfg.in_channels) + ", got " +
                           shape_string(image.shape()));
    }
    const std::size_t h = image.dim(0), w = image.dim(1), p = cfg.patch_size;
    if (h == 0 || w == 0 || h % p != 0 || w % p != 0) {
        throw ConfigError("patch_embed: patch size " + std::to_string(p) + " does not divide " + std::to_string(h) +
                          "x" + std::to_string(w));
    }
    const auto& l = params.layout();
    return {h / p, w / p, affine(patchify(image, p), params[l.patch_w], params[l.patch_b])};
}

// ---- forward --------------------------------------------------------------------

EncoderOutput encoder_forward_cached(const Tensor& rgb, const Tensor& depth, const ModelParams& params) {
    const auto& cfg = params.config();
    const auto& l = params.layout();
    if (rgb.rank() != 3 || rgb.dim(2) != cfg.in_channels) {
        throw InvalidInput("encoder: rgb must be H×W×" + std::to_string(cfg.in_channels) + ", got " +
                           shape_string(rgb.shape()));
    }
    const std::size_t h = rgb.dim(0), w = rgb.dim(1), p = cfg.patch_size;
    cfg.validate_input(h, w);

    EncoderOutput out;
    ForwardCache& fc = out.cache;
    fc.height = h;
    fc.width = w;
    fc.has_depth = cfg.fusion_mode != FusionMode::rgb_only;
    fc.rgb_patches = patchify(rgb, p);
    fc.depth_shape = depth.shape();
    if (fc.has_depth) {
        fc.depth_patches = patchify(depth_channels(depth, h, w, cfg.in_channels, fc.depth_replicated), p);
    }

    std::size_t rows = h / p, cols = w / p;
    Tensor x_rgb = affine(fc.rgb_patches, params[l.patch_w], params[l.patch_b]);
    Tensor x_d = fc.has_depth ? affine(fc.depth_patches, params[l.patch_w], params[l.patch_b]) : Tensor();

    fc.stages.resize(cfg.num_stages);
    for (std::size_t s = 0; s < cfg.num_stages; ++s) {
        const StageSlots& st = l.stages[s];
        StageCache& sc = fc.stages[s];
        if (s > 0) {
            sc.rgb.merge_input = merge_tokens(x_rgb, rows, cols);
            x_rgb = affine(sc.rgb.merge_input, params[*st.merge_w], params[*st.merge_b]);
            if (fc.has_depth) {
                sc.depth.merge_input = merge_tokens(x_d, rows, cols);
                x_d = affine(sc.depth.merge_input, params[*st.merge_w], params[*st.merge_b]);
            }
            rows /= 2;
            cols /= 2;
        }
        sc.rows = rows;
        sc.cols = cols;
        const bool depth_tail = fc.has_depth && s + 1 < cfg.num_stages;
        const AttentionWeights aw = attention_weights(params, s);

        sc.rgb.input = std::move(x_rgb);
        sc.rgb.ln1_out = layer_norm(sc.rgb.input, params[st.ln1_g], params[st.ln1_b], sc.rgb.ln1);
        if (fc.has_depth) {
            sc.depth.input = std::move(x_d);
            sc.depth.ln1_out = layer_norm(sc.depth.input, params[st.ln1_g], params[st.ln1_b], sc.depth.ln1);
        }
        const Tensor& nr = sc.rgb.ln1_out;
        const Tensor& nd = sc.depth.ln1_out;

        Tensor a_rgb, a_d;
        switch (cfg.fusion_mode) {
            case FusionMode::key_swap:
                a_rgb = attention_forward(nr, nd, nr, aw, &sc.rgb.attn);
                if (depth_tail) a_d = attention_forward(nd, nr, nd, aw, &sc.depth.attn);
                break;
            case FusionMode::cross_d_to_rgb:
                a_rgb = attention_forward(nr, nd, nd, aw, &sc.rgb.attn);
                if (depth_tail) a_d = attention_forward(nd, nd, nd, aw, &sc.depth.attn);
                break;
            case FusionMode::rgb_only:
                a_rgb = attention_forward(nr, nr, nr, aw, &sc.rgb.attn);
                break;
        }
        sc.rgb.mid = sum(sc.rgb.input, a_rgb);
        mlp_forward(sc.rgb, params, st);
        check_finite(sc.rgb.output, s, "rgb stream");
        x_rgb = sc.rgb.output;
        if (depth_tail) {
            sc.depth.mid = sum(sc.depth.input, a_d);
            mlp_forward(sc.depth, params, st);
            check_finite(sc.depth.output, s, "depth stream");
            x_d = sc.depth.output;
        }
    }

    // Decoder: per-stage projection, nearest upsampling to the stage-0 grid, sum, GELU, classifier.
    const std::size_t rows0 = h / p, cols0 = w / p, n0 = rows0 * cols0;
    Tensor z({n0, cfg.decoder_dim});
    for (std::size_t s = 0; s < cfg.num_stages; ++s) {
        const Tensor proj = affine(fc.stages[s].rgb.output, params[l.dec_w[s]], params[l.dec_b[s]]);
        const std::size_t cs = fc.stages[s].cols, e = cfg.decoder_dim;
        for (std::size_t r = 0; r < rows0; ++r) {
            for (std::size_t c = 0; c < cols0; ++c) {
                const double* src = proj.raw() + ((r >> s) * cs + (c >> s)) * e;
                double* dst = z.raw() + (r * cols0 + c) * e;
                for (std::size_t j = 0; j < e; ++j) dst[j] += src[j];
            }
        }
    }
    fc.dec_pre = std::move(z);
    fc.dec_act = gelu(fc.dec_pre);
    const Tensor token_logits = affine(fc.dec_act, params[l.cls_w], params[l.cls_b]);
    check_finite(token_logits, cfg.num_stages, "decoder");

    const std::size_t nc = cfg.num_classes;
    out.logits = Tensor({h, w, nc});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double* src = token_logits.raw() + ((y / p) * cols0 + x / p) * nc;
            std::copy(src, src + nc, out.logits.raw() + (y * w + x) * nc);
        }
    }
    fc.valid = true;
    return out;
}

Tensor encoder_forward(const Tensor& rgb, const Tensor& depth, const ModelParams& params) {
    return encoder_forward_cached(rgb, depth, params).logits;
}

// ---- backward -------------------------------------------------------------------

EncoderGradients encoder_backward(const Tensor& dlogits, const ForwardCache& fc, const ModelParams& params) {
    if (!fc.valid) throw UsageError("encoder_backward: no cached forward pass");
    const auto& cfg = params.config();
    const auto& l = params.layout();
    const std::size_t h = fc.height, w = fc.width, p = cfg.patch_size, nc = cfg.num_classes;
    dlogits.expect_shape({h, w, nc}, "encoder_backward logits gradient");

    EncoderGradients out{params.zeros_like(), Tensor(), Tensor()};
    ModelParams& g = out.params;

    const std::size_t rows0 = h / p, cols0 = w / p, n0 = rows0 * cols0, e = cfg.decoder_dim;
    Tensor dtok({n0, nc});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double* dst = dtok.raw() + ((y / p) * cols0 + x / p) * nc;
            const double* src = dlogits.raw() + (y * w + x) * nc;
            for (std::size_t k = 0; k < nc; ++k) dst[k] += src[k];
        }
    }
    const Tensor dact = affine_backward(dtok, fc.dec_act, params[l.cls_w], g[l.cls_w], g[l.cls_b]);
    const Tensor dz = gelu_backward(dact, fc.dec_pre);

    const std::size_t S = cfg.num_stages;
    std::vector<Tensor> d_out_rgb(S), d_out_d(S);
    for (std::size_t s = 0; s < S; ++s) {
        const auto& sc = fc.stages[s];
        Tensor dproj({sc.rows * sc.cols, e});
        for (std::size_t r = 0; r < rows0; ++r) {
            for (std::size_t c = 0; c < cols0; ++c) {
                double* dst = dproj.raw() + ((r >> s) * sc.cols + (c >> s)) * e;
                const double* src = dz.raw() + (r * cols0 + c) * e;
                for (std::size_t j = 0; j < e; ++j) dst[j] += src[j];
            }
        }
        d_out_rgb[s] = affine_backward(dproj, sc.rgb.output, params[l.dec_w[s]], g[l.dec_w[s]], g[l.dec_b[s]]);
        if (fc.has_depth) d_out_d[s] = Tensor({sc.rows * sc.cols, cfg.stage_dims[s]});
    }

    Tensor d_rgb_patches, d_depth_patches;
    for (std::size_t si = S; si-- > 0;) {
        const StageSlots& st = l.stages[si];
        const StageCache& sc = fc.stages[si];
        const AttentionWeights aw = attention_weights(params, si);
        const AttentionGradRefs gr = grad_refs(g, st);
        const bool depth_tail = fc.has_depth && si + 1 < S;

        const Tensor dmid_r = mlp_backward(d_out_rgb[si], sc.rgb, params, g, st);
        Tensor dmid_d;
        if (depth_tail) dmid_d = mlp_backward(d_out_d[si], sc.depth, params, g, st);

        Tensor dn_r({sc.rows * sc.cols, cfg.stage_dims[si]});
        Tensor dn_d = fc.has_depth ? Tensor(dn_r.shape()) : Tensor();
        const Tensor& nr = sc.rgb.ln1_out;
        const Tensor& nd = sc.depth.ln1_out;
        switch (cfg.fusion_mode) {
            case FusionMode::key_swap: {
                const auto ga = attention_backward(dmid_r, nr, nd, nr, sc.rgb.attn, aw, gr);
                add_into(dn_r, ga.dxq);
                add_into(dn_r, ga.dxv);
                add_into(dn_d, ga.dxk);
                if (depth_tail) {
                    const auto gb = attention_backward(dmid_d, nd, nr, nd, sc.depth.attn, aw, gr);
                    add_into(dn_d, gb.dxq);
                    add_into(dn_d, gb.dxv);
                    add_into(dn_r, gb.dxk);
                }
                break;
            }
            case FusionMode::cross_d_to_rgb: {
                const auto ga = attention_backward(dmid_r, nr, nd, nd, sc.rgb.attn, aw, gr);
                add_into(dn_r, ga.dxq);
                add_into(dn_d, ga.dxk);
                add_into(dn_d, ga.dxv);
                if (depth_tail) {
                    const auto gb = attention_backward(dmid_d, nd, nd, nd, sc.depth.attn, aw, gr);
                    add_into(dn_d, gb.dxq);
                    add_into(dn_d, gb.dxk);
                    add_into(dn_d, gb.dxv);
                }
                break;
            }
            case FusionMode::rgb_only: {
                const auto ga = attention_backward(dmid_r, nr, nr, nr, sc.rgb.attn, aw, gr);
                add_into(dn_r, ga.dxq);
                add_into(dn_r, ga.dxk);
                add_into(dn_r, ga.dxv);
                break;
            }
        }

        Tensor dx_r = sum(dmid_r, layer_norm_backward(dn_r, sc.rgb.ln1, params[st.ln1_g], g[st.ln1_g], g[st.ln1_b]));
        Tensor dx_d;
        if (fc.has_depth) {
            dx_d = layer_norm_backward(dn_d, sc.depth.ln1, params[st.ln1_g], g[st.ln1_g], g[st.ln1_b]);
            if (depth_tail) add_into(dx_d, dmid_d);
        }

        if (si > 0) {
            const auto& prev = fc.stages[si - 1];
            const Tensor dm_r = affine_backward(dx_r, sc.rgb.merge_input, params[*st.merge_w], g[*st.merge_w],
                                                g[*st.merge_b]);
            unmerge_add(dm_r, prev.rows, prev.cols, d_out_rgb[si - 1]);
            if (fc.has_depth) {
                const Tensor dm_d = affine_backward(dx_d, sc.depth.merge_input, params[*st.merge_w],
                                                    g[*st.merge_w], g[*st.merge_b]);
                unmerge_add(dm_d, prev.rows, prev.cols, d_out_d[si - 1]);
            }
        } else {
            d_rgb_patches = affine_backward(dx_r, fc.rgb_patches, params[l.patch_w], g[l.patch_w], g[l.patch_b]);
            if (fc.has_depth) {
                d_depth_patches =
                    affine_backward(dx_d, fc.depth_patches, params[l.patch_w], g[l.patch_w], g[l.patch_b]);
            }
        }
    }

    const std::size_t c = cfg.in_channels;
    out.rgb = unpatchify(d_rgb_patches, h, w, c, p);
    if (fc.has_depth) {
        const Tensor full = unpatchify(d_depth_patches, h, w, c, p);
        if (fc.depth_replicated) {
            out.depth = Tensor(fc.depth_shape);
            for (std::size_t i = 0; i < h * w; ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < c; ++k) s += full[i * c + k];
                out.depth[i] = s;
            }
        } else {
            out.depth = full;
        }
    } else {
        out.depth = Tensor(fc.depth_shape);
    }
    return out;
}

}  // namespace misfit
