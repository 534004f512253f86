#include <set>
#include <stdexcept>

#include <gtest/gtest.h>

#include "tdens/types.hpp"

using namespace tdens;

TEST(Frame, MakeFrameFills) {
    const Frame f = make_frame(4, 3, 7);
    EXPECT_EQ(f.width, 4);
    EXPECT_EQ(f.height, 3);
    EXPECT_EQ(f.pixels.size(), 12u);
    EXPECT_EQ(f.at(3, 2), 7);
}

TEST(Frame, RejectsEmptyDimensions) {
    EXPECT_THROW(make_frame(0, 3), std::invalid_argument);
    EXPECT_THROW(make_frame(3, 0), std::invalid_argument);
    EXPECT_THROW(make_density_map(0, 1), std::invalid_argument);
}

TEST(Frame, RowMajorAddressing) {
    Frame f = make_frame(3, 2);
    f.at(1, 0) = 10;
    f.at(2, 1) = 20;
    EXPECT_EQ(f.pixels[1], 10);
    EXPECT_EQ(f.pixels[5], 20);
}

TEST(Rect, Basics) {
    const RectI r{2, 3, 5, 9};
    EXPECT_EQ(r.width(), 3);
    EXPECT_EQ(r.height(), 6);
    EXPECT_TRUE(r.valid());
    EXPECT_FALSE((RectI{2, 3, 2, 9}).valid());
}

TEST(BBox, AreaIsExactInteger) {
    const BBox b{0, 0, 10, 10};
    EXPECT_EQ(b.area(), 100);
    EXPECT_TRUE(b.valid());
    EXPECT_FALSE((BBox{5, 5, 5, 9}).valid());
}

TEST(DensityMap, SumAndAddressing) {
    DensityMap m = make_density_map(2, 2);
    m.at(0, 0) = 0.5;
    m.at(1, 1) = 1.5;
    EXPECT_DOUBLE_EQ(m.sum(), 2.0);
    const Matrix mat = to_matrix(m);
    EXPECT_EQ(mat.rows(), 2);
    EXPECT_EQ(mat.cols(), 2);
    EXPECT_DOUBLE_EQ(mat(1, 1), 1.5);
}

TEST(BlockGrid, ExactTilingWhenDivisible) {
    const Roi roi{RectI{0, 0, 32, 16}, 1.0};
    const BlockGrid g = make_block_grid(roi, 16, 16);
    EXPECT_EQ(g.rows, 1);
    EXPECT_EQ(g.cols, 2);
    EXPECT_EQ(g.block_count(), 2);
    EXPECT_EQ(g.block_rect(0), (RectI{0, 0, 16, 16}));
    EXPECT_EQ(g.block_rect(1), (RectI{16, 0, 32, 16}));
}

TEST(BlockGrid, EdgeBlocksAbsorbRemainder) {
    const Roi roi{RectI{3, 5, 20, 14}, 1.0}; // 17 x 9 region
    const BlockGrid g = make_block_grid(roi, 8, 4);
    EXPECT_EQ(g.cols, 3); // 8 + 8 + 1
    EXPECT_EQ(g.rows, 3); // 4 + 4 + 1
    const RectI last = g.block_rect(g.block_count() - 1);
    EXPECT_EQ(last, (RectI{19, 13, 20, 14}));
}

TEST(BlockGrid, EveryRoiPixelInExactlyOneBlock) {
    const Roi roi{RectI{2, 1, 33, 28}, 1.0};
    const BlockGrid g = make_block_grid(roi, 7, 5);
    std::set<std::pair<int, int>> covered;
    long long total_area = 0;
    for (int j = 0; j < g.block_count(); ++j) {
        const RectI r = g.block_rect(j);
        ASSERT_TRUE(r.valid());
        total_area += static_cast<long long>(r.width()) * r.height();
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x)
                ASSERT_TRUE(covered.emplace(x, y).second) << "pixel covered twice";
    }
    EXPECT_EQ(total_area,
              static_cast<long long>(roi.rect.width()) * roi.rect.height());
    for (int y = roi.rect.y0; y < roi.rect.y1; ++y)
        for (int x = roi.rect.x0; x < roi.rect.x1; ++x)
            ASSERT_TRUE(covered.count({x, y})) << "pixel not covered";
}

TEST(BlockGrid, IndexLayoutIsRowMajor) {
    const Roi roi{RectI{0, 0, 30, 20}, 1.0};
    const BlockGrid g = make_block_grid(roi, 10, 10);
    ASSERT_EQ(g.cols, 3);
    // j = row * cols + col
    EXPECT_EQ(g.block_rect(4), (RectI{10, 10, 20, 20}));
}

TEST(BlockGrid, Validation) {
    EXPECT_THROW(make_block_grid(Roi{RectI{0, 0, 0, 4}, 1.0}, 2, 2), std::invalid_argument);
    EXPECT_THROW(make_block_grid(Roi{RectI{0, 0, 4, 4}, 0.0}, 2, 2), std::invalid_argument);
    EXPECT_THROW(make_block_grid(Roi{RectI{0, 0, 4, 4}, 1.0}, 0, 2), std::invalid_argument);
}
