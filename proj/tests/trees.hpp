// Hand-built trees shared by the unit tests.
#ifndef HIERSR_TESTS_TREES_HPP
#define HIERSR_TESTS_TREES_HPP

#include "hiersr/resample.hpp"
#include "hiersr/sr_octree.hpp"

namespace trees {

using namespace hiersr;

/// Leaf for `region` of `src`, stored at `level`.
inline SRNode leaf_from(const Volume& src, Region region, int level, Downscaler d = Downscaler::mean_pool) {
    Volume block = read_region(src, region);
    return make_leaf(region, level, downscale_by(block, pow2(level), d));
}

/// 8x8 quadtree over `src` (not joined):
///   [0,0] level 1 | [0,4] level 2
///   [4,0] four level-0 2x2 leaves | [4,4] level 0
/// Stored voxels: 4 + 1 + 16 + 16 = 37.
inline SROctree mixed_quadtree(const Volume& src, Downscaler d = Downscaler::mean_pool) {
    SROctree t;
    t.full_dims = {8, 8};
    t.config.max_level = 2;
    t.config.downscaler = d;
    t.root.region = full_region(t.full_dims);
    t.root.children.push_back(leaf_from(src, Region{{0, 0}, {4, 4}}, 1, d));
    t.root.children.push_back(leaf_from(src, Region{{0, 4}, {4, 4}}, 2, d));
    SRNode inner;
    inner.region = Region{{4, 0}, {4, 4}};
    for (const Region& r : child_regions(inner.region)) inner.children.push_back(leaf_from(src, r, 0, d));
    t.root.children.push_back(std::move(inner));
    t.root.children.push_back(leaf_from(src, Region{{4, 4}, {4, 4}}, 0, d));
    return t;
}

}  // namespace trees

#endif
