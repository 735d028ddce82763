#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "jointflow/world.hpp"

using namespace jointflow;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("jf_world_" + tag);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("empty scene renders black with zero disparity") {
    world::SceneSpec spec;
    spec.image_size = 16;
    auto pair = world::render_scene(spec);
    for (float v : pair.rgb.v) REQUIRE(v == 0.0f);
    for (float v : pair.disparity.v) REQUIRE(v == 0.0f);
    REQUIRE(pair.class_id == 0);
}

TEST_CASE("single disk decodes to its disparity everywhere inside") {
    world::SceneSpec spec;
    spec.image_size = 32;
    spec.disks.push_back({16.0, 16.0, 8.0, 0.7});
    auto pair = world::render_scene(spec);
    auto decoded = world::decode_disparity_oracle(pair.rgb);
    int interior = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            if (pair.disparity.at(y, x) > 0.0f) {
                ++interior;
                REQUIRE(std::abs(decoded.at(y, x) - 0.7f) <= 0.005f);
            } else {
                REQUIRE(decoded.at(y, x) == 0.0f);
            }
        }
    REQUIRE(interior > 100);
}

TEST_CASE("overlap carries the larger disparity") {
    world::SceneSpec spec;
    spec.image_size = 32;
    spec.disks.push_back({14.0, 16.0, 6.0, 0.3});
    spec.disks.push_back({18.0, 16.0, 6.0, 0.9});
    auto pair = world::render_scene(spec);
    // Pixel (16,16) is inside both disks.
    REQUIRE(pair.disparity.at(16, 16) == 0.9f);
    // A pixel only inside the far disk keeps 0.3.
    REQUIRE(pair.disparity.at(16, 9) == 0.3f);
}

TEST_CASE("renderer agrees with a direct per-pixel occlusion oracle") {
    Rng rng = Rng(404).stream("data");
    for (int rep = 0; rep < 50; ++rep) {
        Rng item = rng.fork(rep);
        auto spec = world::sample_scene(item);
        auto pair = world::render_scene(spec);
        for (int y = 0; y < spec.image_size; ++y)
            for (int x = 0; x < spec.image_size; ++x) {
                float expect = 0.0f;
                for (const auto& d : spec.disks) {
                    const double ddx = x + 0.5 - d.cx;
                    const double ddy = y + 0.5 - d.cy;
                    if (ddx * ddx + ddy * ddy <= d.radius * d.radius)
                        expect = std::max(expect, static_cast<float>(d.disparity));
                }
                REQUIRE(pair.disparity.at(y, x) == expect);
            }
    }
}

TEST_CASE("codec bound holds across random scenes and values stay in range") {
    Rng rng = Rng(7).stream("data");
    for (int rep = 0; rep < 200; ++rep) {
        Rng item = rng.fork(rep);
        auto spec = world::sample_scene(item);
        auto pair = world::render_scene(spec);
        auto decoded = world::decode_disparity_oracle(pair.rgb);
        for (std::size_t i = 0; i < decoded.size(); ++i)
            REQUIRE(std::abs(decoded.v[i] - pair.disparity.v[i]) <= 0.005f);
        for (float v : pair.rgb.v) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 1.0f);
        }
        for (float v : pair.disparity.v) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 1.0f);
        }
    }
}

TEST_CASE("hue codec is a bijection on the 0.005 disparity grid") {
    std::set<std::tuple<int, int, int>> seen;
    for (int k = 0; k <= 180; ++k) {
        const double d = 0.1 + k * 0.005;
        float rgb[3];
        world::hue_color(d, rgb);
        auto key = std::make_tuple(static_cast<int>(std::lround(rgb[0] * 255)),
                                   static_cast<int>(std::lround(rgb[1] * 255)),
                                   static_cast<int>(std::lround(rgb[2] * 255)));
        REQUIRE(seen.insert(key).second);  // distinct color per grid point
        const float dec = world::decode_pixel(rgb[0], rgb[1], rgb[2]);
        REQUIRE(std::abs(dec - d) <= 0.005);
    }
    // All-black input decodes to background.
    REQUIRE(world::decode_pixel(0, 0, 0) == 0.0f);
    // Pure hue for 0.5 round-trips.
    float rgb[3];
    world::hue_color(0.5, rgb);
    REQUIRE(std::abs(world::decode_pixel(rgb[0], rgb[1], rgb[2]) - 0.5f) <= 0.005f);
}

TEST_CASE("scene sampling produces a near-uniform disk-count histogram") {
    Rng rng = Rng(99).stream("data");
    std::vector<int> counts(7, 0);
    const int n = 30000;
    for (int i = 0; i < n; ++i) {
        Rng item = rng.fork(i);
        auto spec = world::sample_scene(item);
        REQUIRE(spec.disks.size() >= 1);
        REQUIRE(spec.disks.size() <= 6);
        counts[spec.disks.size()]++;
    }
    for (int k = 1; k <= 6; ++k)
        REQUIRE(std::abs(counts[k] / double(n) - 1.0 / 6.0) < 0.05 / 6.0);
}

TEST_CASE("generate_dataset is deterministic per seed, byte for byte") {
    auto d1 = temp_dir("a");
    auto d2 = temp_dir("b");
    world::generate_dataset(8, 31337, d1);
    world::generate_dataset(8, 31337, d2);
    std::vector<fs::path> files;
    for (auto& e : fs::directory_iterator(d1)) files.push_back(e.path().filename());
    REQUIRE(files.size() == 17);  // 8 ppm + 8 pgm + manifest
    for (const auto& f : files) REQUIRE(slurp(d1 / f) == slurp(d2 / f));
    // A different seed changes the bytes.
    auto d3 = temp_dir("c");
    world::generate_dataset(8, 31338, d3);
    REQUIRE(slurp(d1 / "rgb_00000.ppm") != slurp(d3 / "rgb_00000.ppm"));
    fs::remove_all(d1);
    fs::remove_all(d2);
    fs::remove_all(d3);
}

TEST_CASE("n = 0 writes an empty manifest and nothing else") {
    auto d = temp_dir("empty");
    auto manifest = world::generate_dataset(0, 1, d);
    REQUIRE(manifest.empty());
    int n_files = 0;
    for ([[maybe_unused]] auto& e : fs::directory_iterator(d)) ++n_files;
    REQUIRE(n_files == 1);
    REQUIRE(world::read_manifest(d / "manifest.csv").empty());
    fs::remove_all(d);
}

TEST_CASE("dataset round trip reproduces rendered values bit-exactly") {
    auto d = temp_dir("rt");
    world::generate_dataset(4, 5, d);
    auto loaded = world::load_dataset(d);
    REQUIRE(loaded.size() == 4);
    Rng data_rng = Rng(5).stream("data");
    for (int i = 0; i < 4; ++i) {
        Rng item = data_rng.fork(i);
        auto pair = world::render_scene(world::sample_scene(item));
        REQUIRE(loaded[i].rgb.v == pair.rgb.v);
        REQUIRE(loaded[i].class_id == pair.class_id);
        for (std::size_t p = 0; p < pair.disparity.size(); ++p)
            REQUIRE(std::abs(loaded[i].disparity.v[p] - pair.disparity.v[p]) <= 0.5f / 65535.0f);
    }
    fs::remove_all(d);
}

TEST_CASE("invalid specs are rejected") {
    world::SceneSpec too_many;
    too_many.image_size = 32;
    for (int i = 0; i < 7; ++i)
        too_many.disks.push_back({16, 16, 3, 0.1 + i * 0.1});
    REQUIRE_THROWS_AS(world::render_scene(too_many), std::invalid_argument);

    world::SceneSpec tiny;
    tiny.image_size = 32;
    tiny.disks.push_back({16, 16, 1.0, 0.5});
    REQUIRE_THROWS_AS(world::render_scene(tiny), std::invalid_argument);

    world::SceneSpec close_disp;
    close_disp.image_size = 32;
    close_disp.disks.push_back({10, 10, 3, 0.50});
    close_disp.disks.push_back({20, 20, 3, 0.52});
    REQUIRE_THROWS_AS(world::render_scene(close_disp), std::invalid_argument);
}
