#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "flowtomo/io.hpp"
#include "test_support.hpp"

using namespace flowtomo;
using namespace testing_support;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("flowtomo_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void rewrite_manifest(const fs::path& p, const std::function<void(json&)>& edit) {
    json j = json::parse(slurp(p));
    edit(j);
    std::ofstream(p) << j.dump(2);
}

} // namespace

TEST(Dataset, ProjectionRoundTripIsBitwise) {
    TempDir dir;
    const auto g = with_grid(make_interlaced(7, 3, std::numbers::pi), 12, 5);
    const auto p = random_stack<float>(g, 1);
    const json prov{{"seed", 42}, {"note", "round trip"}};
    save_projections(dir.path / "p.json", p, prov);
    const auto back = load_projections<float>(dir.path / "p.json");
    EXPECT_EQ(back.data.data, p.data);
    EXPECT_EQ(back.data.geometry, g);
    EXPECT_TRUE(back.dims_hash_ok);
    EXPECT_TRUE(back.checksums_ok);
    EXPECT_EQ(back.manifest.provenance, prov);
    EXPECT_EQ(back.manifest.files, (std::vector<std::string>{"p.f32"}));
    EXPECT_EQ(fs::file_size(dir.path / "p.f32"), p.data.size() * 4);
}

TEST(Dataset, VolumeFlowFieldRoundTrip) {
    TempDir dir;
    const auto u = random_volume<float>(Shape3{3, 6, 6}, 2);
    save_volume(dir.path / "u.json", u);
    EXPECT_EQ(load_volume<float>(dir.path / "u.json").data, u);

    FlowStack<float> f(Shape3{4, 5, 6});
    f.fs = random_volume<float>(f.shape(), 3);
    f.fz = random_volume<float>(f.shape(), 4);
    save_flow(dir.path / "f.json", f);
    const auto fb = load_flow<float>(dir.path / "f.json").data;
    EXPECT_EQ(fb.fs, f.fs);
    EXPECT_EQ(fb.fz, f.fz);

    const auto w = random_field<float>(Shape3{2, 3, 4}, 5);
    save_field(dir.path / "w.json", w);
    const auto wb = load_field<float>(dir.path / "w.json").data;
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(wb[c], w[c]);

    // double data is stored as f32
    const auto ud = random_volume<double>(Shape3{2, 2, 2}, 6);
    save_volume(dir.path / "ud.json", ud);
    const auto back = load_volume<double>(dir.path / "ud.json").data;
    for (std::size_t i = 0; i < ud.size(); ++i) EXPECT_EQ(back[i], double(float(ud[i])));
}

TEST(Dataset, LittleEndianLayout) {
    TempDir dir;
    Volume<float> u(1, 1, 2);
    u[0] = 1.0f;
    u[1] = -2.5f;
    save_volume(dir.path / "u.json", u);
    const std::string raw = slurp(dir.path / "u.f32");
    ASSERT_EQ(raw.size(), 8u);
    // 1.0f = 0x3f800000, -2.5f = 0xc0200000
    EXPECT_EQ(std::vector<unsigned char>(raw.begin(), raw.end()),
              (std::vector<unsigned char>{0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0}));
}

TEST(Dataset, TruncatedBinaryIsSizeMismatch) {
    TempDir dir;
    const auto u = random_volume<float>(Shape3{2, 3, 4}, 7);
    save_volume(dir.path / "u.json", u);
    fs::resize_file(dir.path / "u.f32", 50);
    try {
        load_volume<float>(dir.path / "u.json");
        FAIL() << "expected size mismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::size_mismatch);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("96"), std::string::npos) << msg;
        EXPECT_NE(msg.find("50"), std::string::npos) << msg;
    }
}

TEST(Dataset, SwappedDimsFlaggedByHash) {
    TempDir dir;
    const auto u = random_volume<float>(Shape3{2, 3, 4}, 8);
    save_volume(dir.path / "u.json", u);
    rewrite_manifest(dir.path / "u.json", [](json& j) { j["dims"] = {4, 3, 2}; });
    const auto back = load_volume<float>(dir.path / "u.json");
    EXPECT_FALSE(back.dims_hash_ok);
    EXPECT_EQ(back.data.shape(), (Shape3{4, 3, 2}));
}

TEST(Dataset, CorruptedBytesFlaggedByChecksum) {
    TempDir dir;
    const auto u = random_volume<float>(Shape3{2, 3, 4}, 9);
    save_volume(dir.path / "u.json", u);
    {
        std::fstream fsx(dir.path / "u.f32", std::ios::in | std::ios::out | std::ios::binary);
        fsx.seekp(5);
        fsx.put('\x7f');
    }
    const auto back = load_volume<float>(dir.path / "u.json");
    EXPECT_TRUE(back.dims_hash_ok);
    EXPECT_FALSE(back.checksums_ok);
}

TEST(Dataset, DistinctErrorCodes) {
    TempDir dir;
    const auto u = random_volume<float>(Shape3{2, 2, 2}, 10);
    save_volume(dir.path / "u.json", u);
    rewrite_manifest(dir.path / "u.json", [](json& j) { j["format_version"] = "flowtomo-dataset/99"; });
    try {
        load_volume<float>(dir.path / "u.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unknown_format);
    }
    try {
        load_volume<float>(dir.path / "missing.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::io_error);
    }
    save_volume(dir.path / "v.json", u);
    try {
        load_projections<float>(dir.path / "v.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unknown_format);
    }
    std::ofstream(dir.path / "junk.json") << "not json";
    EXPECT_THROW(load_manifest(dir.path / "junk.json"), Error);
}

TEST(Dataset, AtomicAndDeterministic) {
    TempDir dir;
    const auto g = with_grid(make_sequential(4, std::numbers::pi), 8, 2);
    const auto p = random_stack<float>(g, 11);
    save_projections(dir.path / "a.json", p, json{{"seed", 1}});
    const std::string first = slurp(dir.path / "a.json");
    save_projections(dir.path / "a.json", p, json{{"seed", 1}});
    EXPECT_EQ(slurp(dir.path / "a.json"), first);
    for (const auto& e : fs::directory_iterator(dir.path)) EXPECT_NE(e.path().extension(), ".tmp");
    const auto m = load_manifest(dir.path / "a.json");
    EXPECT_EQ(m.checksums.size(), 1u);
    EXPECT_EQ(m.checksums[0].size(), 64u);
    EXPECT_EQ(m.dims_hash, dims_hash("projections", p.shape()));
}
