#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "hiersr/sr_octree.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "trees.hpp"

using namespace hiersr;

namespace {

void expect_sound(const SROctree& t, const Volume& src) {
    EXPECT_EQ(oracle::check_partition(t), "");
    EXPECT_EQ(oracle::check_error_bound(t, src), "");
    EXPECT_EQ(oracle::check_greedy(t, src), "");
    EXPECT_EQ(oracle::check_single_voxel_siblings(t.root, t.min_level()), "");
    EXPECT_EQ(find_invariant_violation(t), std::nullopt);
}

}  // namespace

TEST(NodeError, ConstantFieldIsLossless) {
    Volume c = Volume::filled({16, 16, 16}, 0.42f);
    for (int level = 0; level <= 4; ++level) EXPECT_EQ(node_error(c, level), 0.0);
}

TEST(NodeError, HalfStepAtLevelOne) {
    Volume v({2, 2}, {0, 1, 0, 1});
    EXPECT_EQ(node_error(v, 1, Downscaler::mean_pool), 0.5);
    EXPECT_EQ(node_error(v, 1, Downscaler::subsample), 1.0);
    EXPECT_ERRC(node_error(Volume::zeros({6, 6}), 2), Errc::IndivisibleDimension);
}

TEST(NodeError, MatchesBruteForce) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        Volume v = oracle::random_volume(trial % 2 ? Dims{16, 16} : Dims{8, 16, 8}, rng);
        for (int level = 1; level <= 3; ++level)
            for (auto d : {Downscaler::mean_pool, Downscaler::subsample})
                EXPECT_NEAR(node_error(v, level, d), oracle::node_error(v, level, d == Downscaler::mean_pool), 1e-6);
    }
}

// The cumulative error is not monotone in the level: a coarse block mean can
// sit closer to every voxel than the finer means did. Rows of 0 0 0 1 1 1 1 0
// give 0.5, 0.75, 0.5 at levels 1..3.
TEST(NodeError, NotMonotoneInLevel) {
    const float row[8] = {0, 0, 0, 1, 1, 1, 1, 0};
    std::vector<float> d;
    for (int y = 0; y < 8; ++y) d.insert(d.end(), row, row + 8);
    Volume v({8, 8}, d);
    EXPECT_EQ(node_error(v, 1), 0.5);
    EXPECT_EQ(node_error(v, 2), 0.75);
    EXPECT_EQ(node_error(v, 3), 0.5);
}

TEST(NodeError, BoundedByFieldRangeOnRandomFields) {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        Volume v = oracle::random_volume({16, 16}, rng);
        const auto [lo, hi] = std::minmax_element(v.values().begin(), v.values().end());
        EXPECT_EQ(node_error(v, 0), 0.0);
        for (int level = 1; level <= 4; ++level)
            for (auto d : {Downscaler::mean_pool, Downscaler::subsample}) {
                const double e = node_error(v, level, d);
                EXPECT_GT(e, 0.0);
                EXPECT_LE(e, double(*hi) - double(*lo));
            }
    }
}

TEST(Build, ConstantCollapsesToOneLeaf) {
    BuildConfig cfg;
    cfg.epsilon = 0;
    cfg.max_level = 2;
    SROctree t = build_sr_octree(Volume::filled({8, 8}, 0.5f), cfg);
    ASSERT_TRUE(t.root.is_leaf());
    EXPECT_EQ(t.root.level, 2);
    EXPECT_EQ(t.root.data->dims(), (Dims{2, 2}));
}

TEST(Build, HalfConstantHalfChecker) {
    // left half constant, right half 0/1 checker: mean-pool error of the
    // checker is 0.5 > epsilon, so the right half stays at level 0
    std::vector<float> d(64);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) d[y * 8 + x] = x < 4 ? 0.25f : float((x + y) % 2);
    Volume v({8, 8}, d);
    BuildConfig cfg;
    cfg.epsilon = 0.1;
    cfg.max_level = 2;
    SROctree t = build_sr_octree(v, cfg);
    t.for_each_leaf([](const SRNode& n) {
        if (n.region.origin[1] < 4)
            EXPECT_GE(n.level, 1) << to_string(n.region);
        else
            EXPECT_EQ(n.level, 0) << to_string(n.region);
    });
    EXPECT_EQ(t.max_level(), 2);
    EXPECT_EQ(t.min_level(), 0);
    expect_sound(t, v);
}

TEST(Build, ReductionSettingOnBlob) {
    // epsilon 0.02285, min level 1, max level 3, min_chunk 2
    Volume v = gen_synthetic(SyntheticKind::gaussian_blobs, {64, 64, 64}, 9);
    BuildConfig cfg{0.02285, 2, 1, 3, Downscaler::mean_pool};
    SROctree t = build_sr_octree(v, cfg);
    EXPECT_GE(t.min_level(), 1);
    EXPECT_LE(t.max_level(), 3);
    EXPECT_GT(reduction_factor(t), 8.0);
    EXPECT_LT(reduction_factor(t), 512.0);
    expect_sound(t, v);
}

TEST(Build, PropertiesOnRandomFields) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = std::size_t{16} << (rng() % 2);
        const Dims dims = trial % 3 == 0 ? Dims{n, n, n / 2} : Dims{n, n};
        const auto kind = trial % 2 ? SyntheticKind::gaussian_blobs : SyntheticKind::band_limited_noise;
        Volume v = gen_synthetic(kind, dims, rng());
        BuildConfig cfg;
        cfg.epsilon = 0.005 + 0.1 * oracle::random_volume({1, 1}, rng)[0];
        cfg.max_level = 1 + rng() % 3;
        cfg.min_level = rng() % (cfg.max_level + 1);
        cfg.min_chunk = 2 + rng() % 3;
        cfg.downscaler = trial % 4 == 1 ? Downscaler::subsample : Downscaler::mean_pool;
        SROctree t = build_sr_octree(v, cfg);
        expect_sound(t, v);
        EXPECT_TRUE(same_tree(t, build_sr_octree(v, cfg)));  // deterministic
        EXPECT_TRUE(same_tree(t, join_adjacent(t)));         // already joined
    }
}

TEST(Build, RejectsBadInputs) {
    BuildConfig cfg;
    cfg.max_level = 3;
    EXPECT_ERRC(build_sr_octree(Volume::zeros({12, 12}), cfg), Errc::IndivisibleDimension);
    cfg.min_level = 4;
    EXPECT_ERRC(build_sr_octree(Volume::zeros({16, 16}), cfg), Errc::BadConfig);
    BuildConfig chunk;
    chunk.min_chunk = 1;
    EXPECT_ERRC(build_sr_octree(Volume::zeros({16, 16}), chunk), Errc::BadConfig);
    BuildConfig neg;
    neg.epsilon = -1;
    EXPECT_ERRC(build_sr_octree(Volume::zeros({16, 16}), neg), Errc::BadConfig);
}

TEST(Join, FullMergeOfEqualQuadrants) {
    std::mt19937_64 rng(24);
    Volume v = oracle::random_volume({8, 8}, rng);
    SROctree t;
    t.full_dims = {8, 8};
    t.root.region = full_region(t.full_dims);
    for (const Region& r : child_regions(t.root.region)) t.root.children.push_back(trees::leaf_from(v, r, 1));
    const Volume before = oracle::flatten_nearest(t);
    SROctree j = join_adjacent(t);
    ASSERT_TRUE(j.root.is_leaf());
    EXPECT_EQ(j.root.level, 1);
    EXPECT_TRUE(oracle::flatten_nearest(j).same_bits(before));
    EXPECT_TRUE(j.root.data->same_bits(downscale_by(v, 2)));
}

TEST(Join, MixedSiblingsUnchanged) {
    std::mt19937_64 rng(25);
    Volume v = oracle::random_volume({8, 8}, rng);
    SROctree t;
    t.full_dims = {8, 8};
    t.root.region = full_region(t.full_dims);
    int i = 0;
    for (const Region& r : child_regions(t.root.region)) t.root.children.push_back(trees::leaf_from(v, r, i++ < 3 ? 1 : 0));
    EXPECT_TRUE(same_tree(join_adjacent(t), t));
}

TEST(Join, ContentPreservingAndIdempotent) {
    std::mt19937_64 rng(26);
    Volume v = oracle::random_volume({8, 8}, rng);
    SROctree t = trees::mixed_quadtree(v);
    SROctree j = join_adjacent(t);
    // the four level-0 leaves under [4,0] merge into one
    EXPECT_EQ(j.leaf_count(), 4u);
    EXPECT_TRUE(oracle::flatten_nearest(j).same_bits(oracle::flatten_nearest(t)));
    EXPECT_TRUE(same_tree(join_adjacent(j), j));
}

TEST(ReductionFactor, Values) {
    Volume v3 = Volume::filled({16, 16, 16}, 0.5f);
    EXPECT_EQ(reduction_factor(single_leaf_tree(v3, 0)), 1.0);
    EXPECT_EQ(reduction_factor(single_leaf_tree(v3, 2)), 64.0);
    std::mt19937_64 rng(27);
    SROctree t = trees::mixed_quadtree(oracle::random_volume({8, 8}, rng));
    EXPECT_EQ(t.stored_voxels(), 37u);
    EXPECT_DOUBLE_EQ(reduction_factor(t), 64.0 / 37.0);
}

TEST(LevelMap, SingleLeafAndHistogram) {
    Volume lm = level_map(single_leaf_tree(Volume::zeros({8, 8, 8}), 3));
    for (float x : lm.data()) EXPECT_EQ(x, 3.0f);

    std::mt19937_64 rng(28);
    SROctree t = trees::mixed_quadtree(oracle::random_volume({8, 8}, rng));
    Volume m = level_map(t);
    std::map<int, std::size_t> hist;
    for (float x : m.data()) hist[int(x)]++;
    EXPECT_EQ(hist[0], 32u);
    EXPECT_EQ(hist[1], 16u);
    EXPECT_EQ(hist[2], 16u);
    for (const auto& [level, s] : t.level_histogram()) EXPECT_EQ(s.covered_voxels, hist[level]);
    // boundaries of the map follow leaf regions
    EXPECT_EQ(m.at({3, 3}), 1.0f);
    EXPECT_EQ(m.at({3, 4}), 2.0f);
    EXPECT_EQ(m.at({4, 3}), 0.0f);
}

TEST(Invariants, DetectsCorruption) {
    std::mt19937_64 rng(29);
    Volume v = oracle::random_volume({8, 8}, rng);
    SROctree good = trees::mixed_quadtree(v);
    EXPECT_EQ(find_invariant_violation(good), std::nullopt);

    SROctree overlap = good;
    overlap.root.children[1].region.origin[1] = 2;  // shifts onto its sibling
    auto err = find_invariant_violation(overlap);
    ASSERT_TRUE(err);

    SROctree shape = good;
    shape.root.children[0].data = Volume::zeros({4, 4});  // level 1 needs 2x2
    EXPECT_TRUE(find_invariant_violation(shape));

    SROctree both = good;
    both.root.children[2].data = Volume::zeros({4, 4});
    EXPECT_TRUE(find_invariant_violation(both));

    SROctree missing = good;
    missing.root.children.pop_back();
    EXPECT_TRUE(find_invariant_violation(missing));
    EXPECT_ERRC(validate_tree(missing), Errc::InvariantViolation);
}
