#pragma once

// DiskWorld: procedurally rendered scenes of colored disks whose color
// encodes their disparity through a bijective hue map. Because the map is
// invertible, the disparity of any rendered (or generated) image can be
// decoded from the image alone, giving an exact consistency oracle.
//
// Hue convention: disparity d in [0.1, 1.0] maps linearly onto hue
// [0, 300] degrees at full saturation and value. The range stops at 300
// (magenta) so the circle never wraps and the map stays injective.
// Background is black and carries disparity 0. Rendering is hard-edged and
// channel values are quantized to 8-bit levels at render time, so decoding
// a rendered scene is exact up to the quantization bound (<= 0.005).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "jointflow/grid.hpp"
#include "jointflow/io.hpp"
#include "jointflow/rng.hpp"

namespace jointflow::world {

inline constexpr double kDispMin = 0.1;
inline constexpr double kDispMax = 1.0;
inline constexpr double kHueSpan = 300.0;  // degrees
inline constexpr float kBlackEps = 0.05f;  // max-channel threshold for "background"
inline constexpr double kMinDispGap = 0.05;

struct Disk {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 2.0;
    double disparity = kDispMin;
};

struct SceneSpec {
    std::vector<Disk> disks;
    int image_size = 32;
};

inline void validate(const SceneSpec& spec) {
    detail::require(spec.image_size > 0, "scene: image_size must be positive");
    detail::require(spec.disks.size() <= 6, "scene: at most 6 disks");
    for (const auto& d : spec.disks) {
        detail::require(d.radius >= 2.0, "scene: disk radius must be >= 2px");
        detail::require(d.disparity >= kDispMin && d.disparity <= kDispMax,
                        "scene: disparity outside [0.1, 1.0]");
    }
    for (std::size_t i = 0; i < spec.disks.size(); ++i)
        for (std::size_t j = i + 1; j < spec.disks.size(); ++j)
            detail::require(std::abs(spec.disks[i].disparity - spec.disks[j].disparity) >=
                                kMinDispGap - 1e-12,
                            "scene: disk disparities must differ by at least 0.05");
}

// Disparity -> quantized RGB at full saturation/value.
inline void hue_color(double disparity, float rgb[3]) {
    const double theta = (disparity - kDispMin) / (kDispMax - kDispMin) * kHueSpan;
    const double hp = theta / 60.0;
    const int i = std::min(5, static_cast<int>(hp));
    const double f = hp - i;
    double r = 0, g = 0, b = 0;
    switch (i) {
        case 0: r = 1; g = f; b = 0; break;
        case 1: r = 1 - f; g = 1; b = 0; break;
        case 2: r = 0; g = 1; b = f; break;
        case 3: r = 0; g = 1 - f; b = 1; break;
        case 4: r = f; g = 0; b = 1; break;
        default: r = 1 - f; g = 0; b = 1; break;
    }
    // Quantize to the 8-bit levels the PPM writer will store, with the same
    // byte/255.0f expression the reader uses, so a reloaded render is
    // bit-identical to the in-memory one.
    rgb[0] = static_cast<float>(std::round(r * 255.0)) / 255.0f;
    rgb[1] = static_cast<float>(std::round(g * 255.0)) / 255.0f;
    rgb[2] = static_cast<float>(std::round(b * 255.0)) / 255.0f;
}

// Inverse of hue_color for arbitrary colors: nearest hue wins; colors close
// to black decode to background (0).
inline float decode_pixel(float r, float g, float b) {
    const float mx = std::max({r, g, b});
    if (mx < kBlackEps) return 0.0f;
    const float mn = std::min({r, g, b});
    const float delta = mx - mn;
    double theta = 0.0;
    if (delta > 0.0f) {
        double hp;
        if (mx == r)
            hp = std::fmod(static_cast<double>(g - b) / delta, 6.0);
        else if (mx == g)
            hp = static_cast<double>(b - r) / delta + 2.0;
        else
            hp = static_cast<double>(r - g) / delta + 4.0;
        if (hp < 0.0) hp += 6.0;
        theta = hp * 60.0;
    }
    // Fold the unused (300, 360) arc onto the nearest end of the range.
    if (theta > kHueSpan) theta = theta > (kHueSpan + 360.0) / 2.0 ? 0.0 : kHueSpan;
    return static_cast<float>(kDispMin + theta / kHueSpan * (kDispMax - kDispMin));
}

inline ModalityPair render_scene(const SceneSpec& spec) {
    validate(spec);
    const int n = spec.image_size;
    ModalityPair out;
    out.rgb = GridF(n, n, 3);
    out.disparity = GridF(n, n, 1);
    out.class_id = static_cast<int>(spec.disks.size());

    // Painter's order: far to near, so larger disparity occludes.
    std::vector<Disk> order = spec.disks;
    std::sort(order.begin(), order.end(),
              [](const Disk& a, const Disk& b) { return a.disparity < b.disparity; });
    for (const auto& d : order) {
        float rgb[3];
        hue_color(d.disparity, rgb);
        const double r2 = d.radius * d.radius;
        for (int y = 0; y < n; ++y) {
            const double dy = y + 0.5 - d.cy;
            for (int x = 0; x < n; ++x) {
                const double dx = x + 0.5 - d.cx;
                if (dx * dx + dy * dy <= r2) {
                    out.rgb.at(y, x, 0) = rgb[0];
                    out.rgb.at(y, x, 1) = rgb[1];
                    out.rgb.at(y, x, 2) = rgb[2];
                    out.disparity.at(y, x) = static_cast<float>(d.disparity);
                }
            }
        }
    }
    return out;
}

inline GridF decode_disparity_oracle(const GridF& rgb) {
    detail::require(rgb.c == 3, "decode_disparity_oracle: rgb grid expected");
    GridF out(rgb.h, rgb.w, 1);
    for (int y = 0; y < rgb.h; ++y)
        for (int x = 0; x < rgb.w; ++x)
            out.at(y, x) = decode_pixel(rgb.at(y, x, 0), rgb.at(y, x, 1), rgb.at(y, x, 2));
    return out;
}

// Random scene with 1..6 disks and pairwise-distinct disparities.
inline SceneSpec sample_scene(Rng& rng, int image_size = 32) {
    SceneSpec spec;
    spec.image_size = image_size;
    const int n_disks = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n_disks; ++i) {
        Disk d;
        d.cx = rng.uniform(4.0, image_size - 4.0);
        d.cy = rng.uniform(4.0, image_size - 4.0);
        d.radius = rng.uniform(3.0, 9.0);
        for (int attempt = 0; attempt < 1000; ++attempt) {
            d.disparity = rng.uniform(kDispMin, kDispMax);
            bool ok = true;
            for (const auto& prev : spec.disks)
                ok &= std::abs(prev.disparity - d.disparity) >= kMinDispGap;
            if (ok) break;
        }
        spec.disks.push_back(d);
    }
    return spec;
}

struct ManifestEntry {
    int id = 0;
    std::string rgb_path;
    std::string depth_path;
    int class_id = 0;
    int n_disks = 0;
};

// Renders n seeded scenes into out_dir and writes manifest.csv. Same seed,
// same bytes.
inline std::vector<ManifestEntry> generate_dataset(int n, std::uint64_t seed,
                                                   const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    detail::require(!ec, "generate_dataset: cannot create directory " + out_dir.string());

    Rng data_rng = Rng(seed).stream("data");
    std::vector<ManifestEntry> manifest;
    manifest.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng item = data_rng.fork(i);
        const SceneSpec spec = sample_scene(item);
        const ModalityPair pair = render_scene(spec);
        char rgb_name[32], depth_name[32];
        std::snprintf(rgb_name, sizeof(rgb_name), "rgb_%05d.ppm", i);
        std::snprintf(depth_name, sizeof(depth_name), "depth_%05d.pgm", i);
        io::write_ppm(out_dir / rgb_name, pair.rgb);
        io::write_pgm16(out_dir / depth_name, pair.disparity);
        manifest.push_back({i, rgb_name, depth_name, pair.class_id,
                            static_cast<int>(spec.disks.size())});
    }
    std::ofstream mf(out_dir / "manifest.csv", std::ios::binary);
    detail::require(mf.good(),
                    "generate_dataset: cannot write " + (out_dir / "manifest.csv").string());
    mf << "id,rgb_path,depth_path,class_id,n_disks\n";
    for (const auto& e : manifest)
        mf << e.id << ',' << e.rgb_path << ',' << e.depth_path << ',' << e.class_id << ','
           << e.n_disks << '\n';
    return manifest;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    detail::require(in.good(), "read_manifest: cannot open " + manifest_path.string());
    std::string line;
    std::getline(in, line);
    detail::require(line == "id,rgb_path,depth_path,class_id,n_disks",
                    "read_manifest: unexpected header in " + manifest_path.string());
    std::vector<ManifestEntry> entries;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ManifestEntry e;
        std::size_t pos = 0;
        auto next = [&](const char* what) {
            const std::size_t comma = line.find(',', pos);
            detail::require(comma != std::string::npos || what == std::string("n_disks"),
                            std::string("read_manifest: missing field ") + what);
            const std::size_t end = comma == std::string::npos ? line.size() : comma;
            std::string tok = line.substr(pos, end - pos);
            pos = end + 1;
            return tok;
        };
        e.id = std::stoi(next("id"));
        e.rgb_path = next("rgb_path");
        e.depth_path = next("depth_path");
        e.class_id = std::stoi(next("class_id"));
        e.n_disks = std::stoi(next("n_disks"));
        entries.push_back(std::move(e));
    }
    return entries;
}

// Loads the rendered pairs referenced by a manifest.
inline std::vector<ModalityPair> load_dataset(const std::filesystem::path& dir) {
    const auto entries = read_manifest(dir / "manifest.csv");
    std::vector<ModalityPair> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        ModalityPair p;
        p.rgb = io::read_ppm(dir / e.rgb_path);
        p.disparity = io::read_pgm16(dir / e.depth_path);
        p.class_id = e.class_id;
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace jointflow::world
