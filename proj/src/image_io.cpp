#include "misfit/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "misfit/errors.hpp"

namespace misfit {

namespace {

struct PnmHeader {
    char kind = 0;  // '5' or '6'
    std::size_t width = 0, height = 0, maxval = 0;
    std::size_t data_offset = 0;
};

class HeaderParser {
public:
    explicit HeaderParser(std::span<const std::uint8_t> b) : b_(b) {}

    PnmHeader parse() {
        PnmHeader h;
        if (b_.size() < 2 || b_[0] != 'P') throw DecodeError("missing PNM magic", 0);
        if (b_[1] != '5' && b_[1] != '6') throw DecodeError("unsupported PNM type", 1);
        h.kind = static_cast<char>(b_[1]);
        pos_ = 2;
        h.width = number();
        h.height = number();
        h.maxval = number();
        if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw DecodeError("expected whitespace after header", pos_);
        h.data_offset = pos_ + 1;
        return h;
    }

private:
    void skip_space() {
        while (pos_ < b_.size()) {
            if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(b_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }
    std::size_t number() {
        skip_space();
        const std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
            v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
            if (v > (1u << 24)) throw DecodeError("header value too large", start);
            ++pos_;
        }
        if (pos_ == start) throw DecodeError("expected a decimal header field", pos_);
        if (v == 0) throw DecodeError("header field must be positive", start);
        return v;
    }

    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

std::string header(char kind, std::size_t w, std::size_t h, std::size_t maxval) {
    return "P" + std::string(1, kind) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
           std::to_string(maxval) + "\n";
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open raster", path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FileError("cannot open raster for writing", path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FileError("failed writing raster", path.string());
}

template <typename F>
auto with_path(const std::filesystem::path& path, F&& f) {
    try {
        return f();
    } catch (const DecodeError& e) {
        throw FileError(e.what(), path.string());
    }
}

}  // namespace

std::vector<std::uint8_t> encode_raster(const Raster8& r) {
    if (r.channels != 1 && r.channels != 3) throw InvalidInput("raster must have 1 or 3 channels");
    if (r.data.size() != r.width * r.height * r.channels) throw InvalidInput("raster data size mismatch");
    const std::string h = header(r.channels == 3 ? '6' : '5', r.width, r.height, 255);
    std::vector<std::uint8_t> out(h.begin(), h.end());
    out.insert(out.end(), r.data.begin(), r.data.end());
    return out;
}

Raster8 decode_raster(std::span<const std::uint8_t> bytes) {
    const PnmHeader h = HeaderParser(bytes).parse();
    if (h.maxval != 255) throw DecodeError("expected an 8-bit raster", h.data_offset - 1);
    Raster8 r{h.width, h.height, h.kind == '6' ? std::size_t{3} : std::size_t{1}, {}};
    const std::size_t need = r.width * r.height * r.channels;
    if (bytes.size() - h.data_offset < need) throw DecodeError("truncated pixel data", bytes.size());
    if (bytes.size() - h.data_offset > need) throw DecodeError("trailing bytes after pixel data", h.data_offset + need);
    r.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset), bytes.end());
    return r;
}

std::vector<std::uint8_t> encode_raster16(const Raster16& r) {
    if (r.data.size() != r.width * r.height) throw InvalidInput("raster data size mismatch");
    const std::string h = header('5', r.width, r.height, 65535);
    std::vector<std::uint8_t> out(h.begin(), h.end());
    out.reserve(out.size() + 2 * r.data.size());
    for (std::uint16_t v : r.data) {
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    }
    return out;
}

Raster16 decode_raster16(std::span<const std::uint8_t> bytes) {
    const PnmHeader h = HeaderParser(bytes).parse();
    if (h.kind != '5') throw DecodeError("expected a single-channel raster", 1);
    if (h.maxval != 65535) throw DecodeError("expected a 16-bit raster", h.data_offset - 1);
    Raster16 r{h.width, h.height, {}};
    const std::size_t need = 2 * r.width * r.height;
    if (bytes.size() - h.data_offset < need) throw DecodeError("truncated pixel data", bytes.size());
    if (bytes.size() - h.data_offset > need) throw DecodeError("trailing bytes after pixel data", h.data_offset + need);
    r.data.resize(r.width * r.height);
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        const std::size_t o = h.data_offset + 2 * i;
        r.data[i] = static_cast<std::uint16_t>((bytes[o] << 8) | bytes[o + 1]);
    }
    return r;
}

void write_raster(const std::filesystem::path& path, const Raster8& r) { write_file(path, encode_raster(r)); }
Raster8 read_raster(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return with_path(path, [&] { return decode_raster(bytes); });
}
void write_raster16(const std::filesystem::path& path, const Raster16& r) { write_file(path, encode_raster16(r)); }
Raster16 read_raster16(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return with_path(path, [&] { return decode_raster16(bytes); });
}

Raster8 rgb_to_raster(const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(2) != 3) throw InvalidInput("rgb_to_raster: expected H×W×3");
    Raster8 r{rgb.dim(1), rgb.dim(0), 3, std::vector<std::uint8_t>(rgb.size())};
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        r.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(rgb[i]), 0L, 255L));
    }
    return r;
}

Tensor raster_to_rgb(const Raster8& r) {
    if (r.channels != 3) throw InvalidInput("raster_to_rgb: expected a colour raster");
    Tensor t({r.height, r.width, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.data[i];
    return t;
}

Raster16 disparity_to_raster(const Tensor& disparity) {
    if (disparity.rank() != 2) throw InvalidInput("disparity_to_raster: expected H×W");
    Raster16 r{disparity.dim(1), disparity.dim(0), std::vector<std::uint16_t>(disparity.size())};
    for (std::size_t i = 0; i < disparity.size(); ++i) {
        const long v = std::lround(disparity[i] * kDisparityScale);
        r.data[i] = static_cast<std::uint16_t>(std::clamp(v, 0L, 65535L));
    }
    return r;
}

Tensor raster_to_disparity(const Raster16& r) {
    Tensor t({r.height, r.width});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(r.data[i]) / kDisparityScale;
    return t;
}

BinaryGrid raster_validity(const Raster16& r) {
    BinaryGrid g(r.height, r.width, 0);
    for (std::size_t i = 0; i < r.data.size(); ++i) g.values[i] = r.data[i] != 0 ? 1 : 0;
    return g;
}

Raster8 labels_to_raster(const LabelGrid& labels) {
    Raster8 r{labels.width, labels.height, 1, std::vector<std::uint8_t>(labels.size())};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int v = labels.values[i];
        if (v < 0 || v > 255) throw InvalidInput("labels_to_raster: label id does not fit in 8 bits");
        r.data[i] = static_cast<std::uint8_t>(v);
    }
    return r;
}

LabelGrid raster_to_labels(const Raster8& r) {
    if (r.channels != 1) throw InvalidInput("raster_to_labels: expected a single-channel raster");
    LabelGrid g(r.height, r.width, 0);
    for (std::size_t i = 0; i < r.data.size(); ++i) g.values[i] = r.data[i];
    return g;
}

}  // namespace misfit
