#include "misfit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "misfit/errors.hpp"

namespace misfit {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    std::vector<std::uint8_t> out;

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : buf_(b) {}
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const noexcept { return pos_; }
    bool done() const noexcept { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw DecodeError("checkpoint truncated", pos_);
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'M', 'S', 'F', 'T'};
constexpr std::uint32_t kMaxStages = 64;
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
    const auto& cfg = params.config();
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(cfg.patch_size));
    w.u32(static_cast<std::uint32_t>(cfg.in_channels));
    w.u32(static_cast<std::uint32_t>(cfg.num_stages));
    for (std::size_t s = 0; s < cfg.num_stages; ++s) {
        w.u32(static_cast<std::uint32_t>(cfg.stage_dims[s]));
        w.u32(static_cast<std::uint32_t>(cfg.heads_per_stage[s]));
    }
    w.u32(static_cast<std::uint32_t>(cfg.num_classes));
    w.u32(static_cast<std::uint32_t>(cfg.mlp_ratio));
    w.u32(static_cast<std::uint32_t>(cfg.decoder_dim));
    w.u32(static_cast<std::uint32_t>(cfg.fusion_mode));
    w.u32(static_cast<std::uint32_t>(params.tensors().size()));
    for (const auto& [name, t] : params.tensors()) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) w.u64(e);
        for (double v : t.data()) w.f64(v);
    }
    return std::move(w.out);
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.str(4) != std::string(kMagic, 4)) throw DecodeError("bad checkpoint magic", 0);
    const std::size_t version_at = r.pos();
    if (r.u32() != kCheckpointVersion) throw DecodeError("unsupported checkpoint version", version_at);

    EncoderConfig cfg;
    cfg.patch_size = r.u32();
    cfg.in_channels = r.u32();
    const std::size_t stages_at = r.pos();
    const std::uint32_t stages = r.u32();
    if (stages == 0 || stages > kMaxStages) throw DecodeError("implausible stage count", stages_at);
    cfg.num_stages = stages;
    cfg.stage_dims.clear();
    cfg.heads_per_stage.clear();
    for (std::uint32_t s = 0; s < stages; ++s) {
        cfg.stage_dims.push_back(r.u32());
        cfg.heads_per_stage.push_back(r.u32());
    }
    cfg.num_classes = r.u32();
    cfg.mlp_ratio = r.u32();
    cfg.decoder_dim = r.u32();
    const std::size_t mode_at = r.pos();
    const std::uint32_t mode = r.u32();
    if (mode > static_cast<std::uint32_t>(FusionMode::rgb_only)) throw DecodeError("unknown fusion mode", mode_at);
    cfg.fusion_mode = static_cast<FusionMode>(mode);
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw DecodeError(std::string("invalid encoder config (") + e.what() + ")", mode_at);
    }

    const ModelParams expected = ModelParams::zeros(cfg);
    const std::size_t count_at = r.pos();
    const std::uint32_t count = r.u32();
    if (count != expected.tensors().size()) throw DecodeError("tensor count does not match config", count_at);

    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t entry_at = r.pos();
        const std::uint32_t name_len = r.u32();
        std::string name = r.str(name_len);
        const std::uint32_t rank = r.u32();
        if (rank > kMaxRank) throw DecodeError("implausible tensor rank", entry_at);
        Shape shape(rank);
        for (auto& e : shape) e = r.u64();
        const auto& slot = expected.tensors()[i];
        if (name != slot.name || shape != slot.value.shape()) {
            throw DecodeError("tensor '" + name + "' does not match expected slot '" + slot.name + "'", entry_at);
        }
        std::vector<double> data(shape_size(shape));
        for (auto& v : data) v = r.f64();
        tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    if (!r.done()) throw DecodeError("trailing bytes after checkpoint", r.pos());
    return ModelParams::from_tensors(cfg, std::move(tensors));
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    const auto bytes = encode_checkpoint(params);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FileError("cannot open checkpoint for writing", path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FileError("failed writing checkpoint", path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open checkpoint", path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace misfit
