#include <cstdint>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "tdens/io.hpp"
#include "tdens/rng.hpp"
#include "test_helpers.hpp"

using namespace tdens;
using testutil::TempDir;

// ---------------------------------------------------------------- PGM

TEST(Pgm, DecodeMinimal) {
    TempDir tmp;
    const std::string payload = std::string("P5\n2 2\n255\n") +
                                std::string("\x00\xff\x80\x07", 4);
    atomic_write_file(tmp / "f.pgm", payload);
    const Frame f = load_frame(tmp / "f.pgm");
    EXPECT_EQ(f.width, 2);
    EXPECT_EQ(f.height, 2);
    EXPECT_EQ(f.pixels, (std::vector<std::uint8_t>{0, 255, 128, 7}));
}

TEST(Pgm, RoundTripIsByteIdentical) {
    TempDir tmp;
    Xorshift64Star rng(99);
    for (int t = 0; t < 20; ++t) {
        Frame f = make_frame(1 + static_cast<int>(rng.uniform_int(40)),
                             1 + static_cast<int>(rng.uniform_int(40)));
        for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
        save_frame(f, tmp / "g.pgm");
        const std::string bytes = testutil::slurp(tmp / "g.pgm");
        const Frame g = load_frame(tmp / "g.pgm");
        EXPECT_EQ(f, g);
        save_frame(g, tmp / "g2.pgm");
        EXPECT_EQ(bytes, testutil::slurp(tmp / "g2.pgm"));
    }
}

TEST(Pgm, AcceptsCommentsAndWhitespace) {
    TempDir tmp;
    const std::string payload = std::string("P5 # comment\n# another\n 2\t1 \n255 ") +
                                std::string("\x01\x02", 2);
    atomic_write_file(tmp / "c.pgm", payload);
    const Frame f = load_frame(tmp / "c.pgm");
    EXPECT_EQ(f.width, 2);
    EXPECT_EQ(f.height, 1);
    EXPECT_EQ(f.pixels, (std::vector<std::uint8_t>{1, 2}));
}

TEST(Pgm, TruncatedPayload) {
    TempDir tmp;
    atomic_write_file(tmp / "t.pgm", std::string("P5\n2 2\n255\nab"));
    try {
        load_frame(tmp / "t.pgm");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("unexpected end of data"), std::string::npos);
    }
}

TEST(Pgm, RejectsBadInputs) {
    TempDir tmp;
    atomic_write_file(tmp / "p6.pgm", std::string("P6\n1 1\n255\nabc"));
    EXPECT_THROW(load_frame(tmp / "p6.pgm"), IoError);
    atomic_write_file(tmp / "mv.pgm", std::string("P5\n1 1\n127\na"));
    EXPECT_THROW(load_frame(tmp / "mv.pgm"), IoError);
    atomic_write_file(tmp / "tr.pgm", std::string("P5\n1 1\n255\nab")); // trailing byte
    EXPECT_THROW(load_frame(tmp / "tr.pgm"), IoError);
    EXPECT_THROW(load_frame(tmp / "missing.pgm"), IoError);
}

// ---------------------------------------------------------------- annotations

TEST(Annotations, GroupsByFrameKeepingOrder) {
    TempDir tmp;
    atomic_write_file(tmp / "a.csv",
                      std::string("frame_id,x0,y0,x1,y1\na,1,2,3,4\nb,0,0,5,5\na,7,7,9,9\n"));
    const std::vector<Annotation> anns = load_annotations(tmp / "a.csv");
    ASSERT_EQ(anns.size(), 2u);
    EXPECT_EQ(anns[0].frame_id, "a");
    ASSERT_EQ(anns[0].boxes.size(), 2u);
    EXPECT_EQ(anns[0].boxes[0], (BBox{1, 2, 3, 4}));
    EXPECT_EQ(anns[0].boxes[1], (BBox{7, 7, 9, 9}));
    EXPECT_EQ(anns[1].frame_id, "b");
    ASSERT_EQ(anns[1].boxes.size(), 1u);
}

TEST(Annotations, HeaderOnlyIsEmpty) {
    TempDir tmp;
    atomic_write_file(tmp / "e.csv", std::string("frame_id,x0,y0,x1,y1\n"));
    EXPECT_TRUE(load_annotations(tmp / "e.csv").empty());
}

TEST(Annotations, RejectsMalformedRows) {
    TempDir tmp;
    atomic_write_file(tmp / "d.csv", std::string("frame_id,x0,y0,x1,y1\na,5,5,5,9\n"));
    try {
        load_annotations(tmp / "d.csv");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate box"), std::string::npos);
    }
    atomic_write_file(tmp / "n.csv", std::string("frame_id,x0,y0,x1,y1\na,x,0,1,1\n"));
    EXPECT_THROW(load_annotations(tmp / "n.csv"), IoError);
    atomic_write_file(tmp / "h.csv", std::string("frame,x0,y0,x1,y1\n"));
    EXPECT_THROW(load_annotations(tmp / "h.csv"), IoError);
    atomic_write_file(tmp / "f.csv", std::string("frame_id,x0,y0,x1,y1\na,1,2,3\n"));
    EXPECT_THROW(load_annotations(tmp / "f.csv"), IoError);
}

TEST(Annotations, RoundTrip) {
    TempDir tmp;
    std::vector<Annotation> anns{{"frame_0000", {{0, 1, 4, 5}, {2, 2, 6, 9}}},
                                 {"frame_0001", {}},
                                 {"frame_0002", {{10, 10, 30, 20}}}};
    save_annotations(anns, tmp / "r.csv");
    const std::vector<Annotation> back = load_annotations(tmp / "r.csv");
    // frame_0001 has no boxes, so it produces no rows and does not reappear
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].frame_id, "frame_0000");
    EXPECT_EQ(back[0].boxes, anns[0].boxes);
    EXPECT_EQ(back[1].frame_id, "frame_0002");
    EXPECT_EQ(back[1].boxes, anns[2].boxes);
}

// ---------------------------------------------------------------- density raster

TEST(DensityRaster, SingleValueLayout) {
    TempDir tmp;
    DensityMap m = make_density_map(1, 1);
    m.values[0] = 0.25;
    save_density(m, tmp / "d.dmap");
    const std::string bytes = testutil::slurp(tmp / "d.dmap");
    EXPECT_EQ(bytes.size(), 16u + 8u);
    EXPECT_EQ(bytes.substr(0, 4), "DMAP");
    const DensityMap back = load_density(tmp / "d.dmap");
    EXPECT_EQ(back.width, 1);
    EXPECT_EQ(back.height, 1);
    EXPECT_EQ(back.values[0], 0.25);
}

TEST(DensityRaster, RandomRoundTripsAreBitExact) {
    TempDir tmp;
    Xorshift64Star rng(7);
    for (int t = 0; t < 1000; ++t) {
        DensityMap m = make_density_map(1 + static_cast<int>(rng.uniform_int(8)),
                                        1 + static_cast<int>(rng.uniform_int(8)));
        for (double& v : m.values) v = rng.uniform(-10.0, 10.0);
        save_density(m, tmp / "r.dmap");
        const DensityMap back = load_density(tmp / "r.dmap");
        ASSERT_EQ(back.width, m.width);
        ASSERT_EQ(back.height, m.height);
        for (std::size_t i = 0; i < m.values.size(); ++i)
            ASSERT_EQ(back.values[i], m.values[i]); // exact, not approximate
    }
}

TEST(DensityRaster, BadMagic) {
    TempDir tmp;
    atomic_write_file(tmp / "x.dmap", std::string("DMAQ") + std::string(20, '\0'));
    try {
        load_density(tmp / "x.dmap");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("not a density file"), std::string::npos);
    }
}

TEST(DensityRaster, PayloadSizeMismatch) {
    TempDir tmp;
    DensityMap m = make_density_map(2, 2);
    std::string bytes = encode_density(m);
    bytes.pop_back();
    atomic_write_file(tmp / "s.dmap", bytes);
    EXPECT_THROW(load_density(tmp / "s.dmap"), IoError);
}

// ---------------------------------------------------------------- feature cache

TEST(FeatureCache, RoundTrip) {
    TempDir tmp;
    Xorshift64Star rng(3);
    std::vector<FeatureMatrix> frames;
    for (int i = 0; i < 4; ++i) {
        FeatureMatrix x(5, 3);
        for (Eigen::Index r = 0; r < 5; ++r)
            for (Eigen::Index c = 0; c < 3; ++c)
                x(r, c) = rng.uniform(-1.0, 1.0);
        frames.push_back(x);
    }
    save_features(frames, tmp / "f.feat");
    const std::vector<FeatureMatrix> back = load_features(tmp / "f.feat");
    ASSERT_EQ(back.size(), frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i)
        EXPECT_TRUE((back[i].array() == frames[i].array()).all()); // bit-exact
}

TEST(FeatureCache, RejectsInconsistentShapes) {
    std::vector<FeatureMatrix> frames{FeatureMatrix::Zero(2, 3), FeatureMatrix::Zero(2, 4)};
    EXPECT_THROW(encode_features(frames), std::invalid_argument);
}

TEST(FeatureCache, BadMagic) {
    TempDir tmp;
    atomic_write_file(tmp / "x.feat", std::string("FEAX") + std::string(12, '\0'));
    EXPECT_THROW(load_features(tmp / "x.feat"), IoError);
}

// ---------------------------------------------------------------- model file

TEST(ModelFile, RoundTrip) {
    TempDir tmp;
    Model m;
    m.W.resize(3, 4);
    Xorshift64Star rng(11);
    for (Eigen::Index r = 0; r < 3; ++r)
        for (Eigen::Index c = 0; c < 4; ++c)
            m.W(r, c) = rng.uniform(-2.0, 2.0);
    m.rank = 2;
    m.alpha = 1e-3;
    m.beta = 1e-4;
    m.feature_hash = UINT64_C(0xabcdef0123456789);
    save_model(m, tmp / "m.tdm");
    const Model back = load_model(tmp / "m.tdm");
    EXPECT_TRUE((back.W.array() == m.W.array()).all()); // bit-exact
    EXPECT_EQ(back.rank, 2);
    EXPECT_DOUBLE_EQ(back.alpha, 1e-3);
    EXPECT_DOUBLE_EQ(back.beta, 1e-4);
    EXPECT_EQ(back.feature_hash, m.feature_hash);
}

TEST(ModelFile, RejectsCorruptHeaderOrPayload) {
    TempDir tmp;
    Model m;
    m.W = WeightMatrix::Zero(2, 2);
    std::string bytes = encode_model(m);
    atomic_write_file(tmp / "bad1.tdm", "not json\nWMAT" + std::string(32, '\0'));
    EXPECT_THROW(load_model(tmp / "bad1.tdm"), IoError);
    std::string truncated = bytes.substr(0, bytes.size() - 8);
    atomic_write_file(tmp / "bad2.tdm", truncated);
    EXPECT_THROW(load_model(tmp / "bad2.tdm"), IoError);
}

// ---------------------------------------------------------------- manifest

TEST(Manifest, RoundTrip) {
    TempDir tmp;
    DatasetManifest m;
    m.frames = {{"frame_0000", "frames/frame_0000.pgm"}, {"frame_0001", "frames/frame_0001.pgm"}};
    m.annotations_path = "annotations.csv";
    m.background_path = "background.pgm";
    m.roi = RectI{0, 0, 160, 120};
    m.region_length = 60.0;
    save_manifest(m, tmp / "manifest.json");
    const DatasetManifest back = load_manifest(tmp / "manifest.json");
    ASSERT_EQ(back.frames.size(), 2u);
    EXPECT_EQ(back.frames[1].id, "frame_0001");
    EXPECT_EQ(back.annotations_path, "annotations.csv");
    EXPECT_EQ(back.background_path, "background.pgm");
    EXPECT_EQ(back.roi, m.roi);
    EXPECT_DOUBLE_EQ(back.region_length, 60.0);
}

TEST(Manifest, RejectsInvalidContents) {
    TempDir tmp;
    atomic_write_file(tmp / "m1.json", std::string("{\"annotations\": 3}"));
    EXPECT_THROW(load_manifest(tmp / "m1.json"), IoError);
    atomic_write_file(
        tmp / "m2.json",
        std::string("{\"annotations\":\"a.csv\",\"background\":\"b.pgm\",\"frames\":[],"
                    "\"region_length\":60.0,\"roi\":{\"x0\":5,\"y0\":0,\"x1\":5,\"y1\":4}}"));
    EXPECT_THROW(load_manifest(tmp / "m2.json"), IoError); // empty roi
}

TEST(Manifest, ResolvesRelativePaths) {
    const auto p = resolve_path("/data/set1/manifest.json", "frames/f.pgm");
    EXPECT_EQ(p.string(), "/data/set1/frames/f.pgm");
    const auto abs = resolve_path("/data/set1/manifest.json", "/abs/f.pgm");
    EXPECT_EQ(abs.string(), "/abs/f.pgm");
}

// ---------------------------------------------------------------- misc helpers

TEST(IoHelpers, AtomicWriteCreatesParents) {
    TempDir tmp;
    atomic_write_file(tmp / "a/b/c.txt", std::string("hi"));
    EXPECT_EQ(testutil::slurp(tmp / "a/b/c.txt"), "hi");
    EXPECT_FALSE(std::filesystem::exists(tmp / "a/b/c.txt.tmp"));
}

TEST(IoHelpers, FormatDoubleRoundTrips) {
    Xorshift64Star rng(21);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform(-1e6, 1e6);
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
    EXPECT_EQ(format_double(2.0), "2");
    EXPECT_EQ(format_double(0.25), "0.25");
}

TEST(IoHelpers, HashHexRoundTrips) {
    const std::uint64_t h = UINT64_C(0x0123456789abcdef);
    EXPECT_EQ(hash_to_hex(h), "0123456789abcdef");
    EXPECT_EQ(hex_to_hash(hash_to_hex(h)), h);
    EXPECT_EQ(hash_to_hex(0), "0000000000000000");
    EXPECT_THROW(hex_to_hash("123"), IoError);
    EXPECT_THROW(hex_to_hash("zzzzzzzzzzzzzzzz"), IoError);
}
