#include "misfit/dataset.hpp"

#include <fstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "misfit/errors.hpp"
#include "misfit/image_io.hpp"

namespace misfit {

// ---- samples ------------------------------------------------------------------

void ImageSample::validate(std::size_t num_classes) const {
    if (rgb.rank() != 3 || rgb.dim(2) != 3) throw InvalidInput("sample rgb must be H×W×3");
    const std::size_t h = rgb.dim(0), w = rgb.dim(1);
    if (disparity.shape() != Shape{h, w}) throw InvalidInput("sample disparity must match rgb spatial size");
    if (!valid.same_size(h, w)) throw InvalidInput("sample validity mask must match rgb spatial size");
    for (double d : disparity.data()) {
        if (!(d >= 0.0)) throw InvalidInput("sample disparity must be non-negative");
    }
    if (label) {
        if (!label->same_size(h, w)) throw InvalidInput("sample label must match rgb spatial size");
        for (int id : label->values) {
            if (id != kIgnoreLabel && (id < 0 || static_cast<std::size_t>(id) >= num_classes)) {
                throw InvalidInput("sample label id " + std::to_string(id) + " out of range");
            }
        }
    }
}

void SampleStore::check() const {
    if (poisoned_) throw UsageError("sample store accessed after being poisoned");
}

const ImageSample& SampleStore::at(std::size_t i) const {
    check();
    if (i >= samples_.size()) throw InvalidInput("sample index out of range");
    return samples_[i];
}

SampleStore SampleStore::without_labels() const {
    check();
    std::vector<ImageSample> copy = samples_;
    for (auto& s : copy) s.label.reset();
    return SampleStore(std::move(copy));
}

SampleStore SampleStore::head(std::size_t n) const {
    check();
    n = std::min(n, samples_.size());
    return SampleStore(std::vector<ImageSample>(samples_.begin(), samples_.begin() + static_cast<std::ptrdiff_t>(n)));
}

Tensor flip_horizontal(const Tensor& image) {
    if (image.rank() != 2 && image.rank() != 3) throw InvalidInput("flip_horizontal: expected H×W or H×W×C");
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.rank() == 3 ? image.dim(2) : 1;
    Tensor out(image.shape());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t k = 0; k < c; ++k) out[(y * w + x) * c + k] = image[(y * w + (w - 1 - x)) * c + k];
        }
    }
    return out;
}

ImageSample flip_horizontal(const ImageSample& s) {
    ImageSample out{flip_horizontal(s.rgb), flip_horizontal(s.disparity), flip_horizontal(s.valid), std::nullopt};
    if (s.label) out.label = flip_horizontal(*s.label);
    return out;
}

// ---- manifests ------------------------------------------------------------------

namespace {

std::uint32_t file_crc(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open", path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size()));
    return static_cast<std::uint32_t>(crc);
}

std::string frame_name(std::size_t i, const char* suffix) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05zu%s", i, suffix);
    return buf;
}

}  // namespace

std::uint32_t checksum_file(const std::filesystem::path& path) { return file_crc(path); }

DatasetManifest save_dataset(const std::filesystem::path& dir, const std::string& split, const SampleStore& store) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw FileError("cannot create directory", dir.string());
    DatasetManifest m{dir, split, {}};
    for (std::size_t i = 0; i < store.size(); ++i) {
        const ImageSample& s = store.at(i);
        ManifestEntry e;
        e.rgb = frame_name(i, "_rgb.ppm");
        e.disparity = frame_name(i, "_disp.pgm");
        write_raster(dir / e.rgb, rgb_to_raster(s.rgb));
        write_raster16(dir / e.disparity, disparity_to_raster(s.disparity));
        e.rgb_crc = file_crc(dir / e.rgb);
        e.disparity_crc = file_crc(dir / e.disparity);
        if (s.label) {
            e.label = frame_name(i, "_label.pgm");
            write_raster(dir / e.label, labels_to_raster(*s.label));
            e.label_crc = file_crc(dir / e.label);
        }
        m.entries.push_back(std::move(e));
    }
    write_manifest(m);
    return m;
}

void write_manifest(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["split"] = m.split;
    j["files"] = nlohmann::ordered_json::array();
    for (const auto& e : m.entries) {
        nlohmann::ordered_json f;
        f["rgb"] = e.rgb;
        f["disparity"] = e.disparity;
        f["label"] = e.label;
        f["checksums"] = {{"rgb", e.rgb_crc}, {"disparity", e.disparity_crc}, {"label", e.label_crc}};
        j["files"].push_back(std::move(f));
    }
    const auto path = m.root / "manifest.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FileError("cannot write manifest", path.string());
    out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw FileError("cannot open manifest", path.string());
    DatasetManifest m;
    m.root = dir;
    try {
        const auto j = nlohmann::json::parse(in);
        m.split = j.at("split").get<std::string>();
        for (const auto& f : j.at("files")) {
            ManifestEntry e;
            e.rgb = f.at("rgb").get<std::string>();
            e.disparity = f.at("disparity").get<std::string>();
            e.label = f.value("label", std::string());
            const auto& c = f.at("checksums");
            e.rgb_crc = c.at("rgb").get<std::uint32_t>();
            e.disparity_crc = c.at("disparity").get<std::uint32_t>();
            e.label_crc = c.value("label", std::uint32_t{0});
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw FileError(std::string("malformed manifest (") + ex.what() + ")", path.string());
    }
    return m;
}

SampleStore load_dataset(const std::filesystem::path& dir) {
    const DatasetManifest m = read_manifest(dir);
    std::vector<ImageSample> samples;
    samples.reserve(m.entries.size());
    auto verify = [&](const std::string& name, std::uint32_t crc) {
        const auto p = dir / name;
        if (!std::filesystem::exists(p)) throw FileError("manifest references a missing file", p.string());
        if (file_crc(p) != crc) throw FileError("checksum mismatch", p.string());
        return p;
    };
    for (const auto& e : m.entries) {
        ImageSample s;
        s.rgb = raster_to_rgb(read_raster(verify(e.rgb, e.rgb_crc)));
        const Raster16 d = read_raster16(verify(e.disparity, e.disparity_crc));
        s.disparity = raster_to_disparity(d);
        s.valid = raster_validity(d);
        if (!e.label.empty()) s.label = raster_to_labels(read_raster(verify(e.label, e.label_crc)));
        samples.push_back(std::move(s));
    }
    return SampleStore(std::move(samples));
}

}  // namespace misfit
