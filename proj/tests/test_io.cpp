#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "jointflow/config.hpp"
#include "jointflow/io.hpp"
#include "jointflow/rng.hpp"

using namespace jointflow;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) {
    return fs::temp_directory_path() / ("jf_io_" + name);
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("ppm round trip is bit exact on 8-bit levels") {
    Rng rng(1);
    GridF rgb(32, 32, 3);
    for (auto& v : rgb.v) v = static_cast<float>(rng.below(256)) / 255.0f;
    const auto p = tmp("rt.ppm");
    io::write_ppm(p, rgb);
    auto back = io::read_ppm(p);
    REQUIRE(back.h == 32);
    REQUIRE(back.w == 32);
    REQUIRE(back.v == rgb.v);
    // Writing the reloaded grid reproduces the same file bytes.
    const auto p2 = tmp("rt2.ppm");
    io::write_ppm(p2, back);
    std::ifstream a(p, std::ios::binary), b(p2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    REQUIRE(sa == sb);
    fs::remove(p);
    fs::remove(p2);
}

TEST_CASE("pgm16 round trip and big-endian sample decoding") {
    Rng rng(2);
    GridF d(8, 8, 1);
    for (auto& v : d.v) v = static_cast<float>(rng.below(65536)) / 65535.0f;
    const auto p = tmp("rt.pgm");
    io::write_pgm16(p, d);
    auto back = io::read_pgm16(p);
    REQUIRE(back.v == d.v);
    fs::remove(p);

    // 0x12 0x34 decodes as 4660 (MSB first).
    const auto p2 = tmp("be.pgm");
    write_bytes(p2, std::string("P5\n1 1\n65535\n") + '\x12' + '\x34');
    auto g = io::read_pgm16(p2);
    REQUIRE(g.v[0] == Catch::Approx(4660.0f / 65535.0f).epsilon(0).margin(1e-9));
    fs::remove(p2);
}

TEST_CASE("netpbm header rules: comments tolerated, wrong maxval rejected") {
    const auto p = tmp("hdr.ppm");
    write_bytes(p, std::string("P6\n# a comment\n1 1\n255\n") + "\x01\x02\x03");
    auto g = io::read_ppm(p);
    REQUIRE(g.h == 1);
    REQUIRE(g.v[0] == Catch::Approx(1.0f / 255.0f).margin(1e-9));
    fs::remove(p);

    const auto bad = tmp("bad.ppm");
    write_bytes(bad, std::string("P6\n1 1\n128\n") + "\x01\x02\x03");
    REQUIRE_THROWS_WITH(io::read_ppm(bad), Catch::Matchers::ContainsSubstring("maxval"));
    fs::remove(bad);

    const auto wrongmagic = tmp("p5.ppm");
    write_bytes(wrongmagic, std::string("P5\n1 1\n255\n") + "\x01");
    REQUIRE_THROWS_WITH(io::read_ppm(wrongmagic), Catch::Matchers::ContainsSubstring("P6"));
    fs::remove(wrongmagic);

    const auto trunc = tmp("trunc.ppm");
    write_bytes(trunc, std::string("P6\n2 2\n255\n") + "\x01\x02");
    REQUIRE_THROWS_WITH(io::read_ppm(trunc), Catch::Matchers::ContainsSubstring("byte offset"));
    fs::remove(trunc);

    const auto badtok = tmp("tok.ppm");
    write_bytes(badtok, "P6\nxx 1\n255\n");
    REQUIRE_THROWS_WITH(io::read_ppm(badtok), Catch::Matchers::ContainsSubstring("width"));
    fs::remove(badtok);
}

TEST_CASE("checkpoint round trip preserves names, shapes, and bits") {
    Rng rng(3);
    std::vector<io::TensorRecord> records;
    records.push_back({"alpha.w", Mat<float>(3, 5)});
    records.push_back({"beta.bias", Mat<float>(1, 7)});
    records.push_back({"blocks.0.qkv", Mat<float>(16, 48)});
    for (auto& r : records)
        for (auto& v : r.value.v) v = rng.normal_f();
    const auto p = tmp("ck.bin");
    io::write_checkpoint(p, records);
    auto back = io::read_checkpoint(p);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        REQUIRE(back[i].name == records[i].name);
        REQUIRE(back[i].value.rows == records[i].value.rows);
        REQUIRE(back[i].value.cols == records[i].value.cols);
        REQUIRE(std::memcmp(back[i].value.data(), records[i].value.data(),
                            records[i].value.size() * sizeof(float)) == 0);
    }
    // Write-read-write gives identical bytes.
    const auto p2 = tmp("ck2.bin");
    io::write_checkpoint(p2, back);
    std::ifstream a(p, std::ios::binary), b(p2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    REQUIRE(sa == sb);
    REQUIRE(sa.substr(0, 7) == std::string("JFLOW1\0", 7));
    fs::remove(p);
    fs::remove(p2);
}

TEST_CASE("corrupt checkpoints are rejected with context") {
    const auto p = tmp("corrupt.bin");
    write_bytes(p, "NOTJFLOW");
    REQUIRE_THROWS_WITH(io::read_checkpoint(p), Catch::Matchers::ContainsSubstring("magic"));
    fs::remove(p);
}

TEST_CASE("config defaults and the rank/2 alpha rule") {
    auto cfg = parse_config("");
    REQUIRE(cfg.model.image_size == 32);
    REQUIRE(cfg.model.patch == 4);
    REQUIRE(cfg.model.d_model == 64);
    REQUIRE(cfg.model.heads == 4);
    REQUIRE(cfg.model.mm_blocks == 4);
    REQUIRE(cfg.model.p_blocks == 2);
    REQUIRE(cfg.model.lora_rank == 8);
    REQUIRE(cfg.model.lora_alpha() == 4.0);
    REQUIRE(cfg.model.alpha_schedule == 3.0);
    REQUIRE(cfg.train.batch_size == 32);
    REQUIRE(cfg.train.condition_drop_prob == 0.10);
    REQUIRE(cfg.train.resolved_steps() == 8000);

    auto cfg2 = parse_config("lora_rank = 8\nphase = joint\n");
    REQUIRE(cfg2.model.lora_rank == 8);
    REQUIRE(cfg2.model.lora_alpha() == 4.0);
    REQUIRE(cfg2.train.resolved_steps() == 5000);

    auto cfg3 = parse_config("lora_rank = 16");
    REQUIRE(cfg3.model.lora_alpha() == 8.0);
}

TEST_CASE("config rejects bad input with key and line context") {
    REQUIRE_THROWS_WITH(parse_config("steps = abc\n"),
                        Catch::Matchers::ContainsSubstring("steps") &&
                            Catch::Matchers::ContainsSubstring("line 1"));
    REQUIRE_THROWS_WITH(parse_config("# fine\nwidgets = 3\n"),
                        Catch::Matchers::ContainsSubstring("unknown key") &&
                            Catch::Matchers::ContainsSubstring("line 2"));
    REQUIRE_THROWS_WITH(parse_config("steps = 5\nsteps = 6\n"),
                        Catch::Matchers::ContainsSubstring("duplicate"));
    REQUIRE_THROWS_WITH(parse_config("steps\n"), Catch::Matchers::ContainsSubstring("'='"));
    // Comments and blank lines are fine, including trailing comments.
    auto cfg = parse_config("\n# header\nsteps = 10  # trailing\n\n");
    REQUIRE(cfg.train.steps == 10);
    // Invalid combinations are caught by validation.
    REQUIRE_THROWS(parse_config("image_size = 30\n"));  // not divisible by patch 4
}
