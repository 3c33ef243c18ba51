#ifndef HIERSR_HIER_SR_HPP
#define HIERSR_HIER_SR_HPP

#include <cstddef>
#include <string>
#include <utility>

#include "hiersr/error.hpp"
#include "hiersr/resample.hpp"
#include "hiersr/sr_octree.hpp"
#include "hiersr/volume.hpp"

namespace hiersr {

namespace detail {

// A leaf block that cannot be halved: a single voxel in power-of-two domains,
// more generally any block with an odd axis.
inline bool needs_combining(const SRNode& n, int level) {
    return n.is_leaf() && n.level == level && !all_even(n.data->dims());
}

inline void combine_node(SRNode& n, int level) {
    if (n.is_leaf()) return;
    bool any = false;
    for (const auto& c : n.children) any = any || needs_combining(c, level);
    if (!any) {
        for (auto& c : n.children) combine_node(c, level);
        return;
    }
    Dims shape;
    for (const auto& c : n.children)
        if (needs_combining(c, level)) shape = c.data->dims();
    for (const auto& c : n.children)
        if (!c.is_leaf() || c.level != level || c.data->dims() != shape)
            fail(Errc::OrphanSingleVoxel, "leaf block at level " + std::to_string(level) + " in " +
                                              to_string(n.region) + " has siblings of a different shape or level");
    join_node(n);
}

}  // namespace detail

/// Merges each group of 2^D sibling leaves at `level` whose blocks cannot be
/// halved (single voxels) into one leaf at the same level.
inline SROctree combine_single_voxel_siblings(SROctree t, int level) {
    detail::combine_node(t.root, level);
    return t;
}

/// Places every leaf block into one uniform grid at `level`; all leaves must
/// already be stored at that level.
inline Volume assemble_at_level(const SROctree& t, int level) {
    Volume out = Volume::zeros(region_at_level(full_region(t.full_dims), level).extent);
    t.for_each_leaf([&](const SRNode& n) {
        if (n.level != level)
            fail(Errc::LevelOrder, "leaf at level " + std::to_string(n.level) + " while assembling level " +
                                       std::to_string(level));
        write_region(out, region_at_level(n.region, level), *n.data);
    });
    return out;
}

/// Brings every leaf to MAXDSL one global 2x step at a time and returns the
/// resulting uniform low-resolution volume. `t` itself is not modified.
inline Volume hierarchical_downscale(const SROctree& t) {
    const int maxdsl = t.max_level();
    SROctree work = t;
    for (int level = work.min_level(); level < maxdsl; ++level) {
        work = combine_single_voxel_siblings(std::move(work), level);
        work.for_each_leaf([&](SRNode& n) {
            if (n.level != level) return;
            n.data = downscale2x(*n.data, t.config.downscaler);
            n.level = level + 1;
        });
    }
    return assemble_at_level(work, maxdsl);
}

/// Upscales the whole domain one level at a time and, after each step,
/// overwrites stale voxels with stored data from every leaf at or below the
/// current level. Leaves finer than the current level are downscaled to it
/// on the fly.
inline Volume hierarchical_upscale(const Volume& lr, const SROctree& t, const UpscalerHierarchy& h) {
    const int maxdsl = t.max_level();
    const Dims want = region_at_level(full_region(t.full_dims), maxdsl).extent;
    if (lr.dims() != want)
        fail(Errc::ShapeMismatch,
             "low-resolution input " + to_string(lr.dims()) + " does not match tree grid " + to_string(want));
    Volume v = lr;
    for (int level = maxdsl; level > 0;) {
        v = upscale_step(h, v, level - 1);
        --level;
        t.for_each_leaf([&](const SRNode& n) {
            if (n.level > level) return;
            const Region dst = region_at_level(n.region, level);
            if (n.level == level)
                write_region(v, dst, *n.data);
            else
                write_region(v, dst, downscale_by(*n.data, pow2(level - n.level), t.config.downscaler));
        });
    }
    return v;
}

/// Baseline: every leaf is upscaled on its own by 2^level and the patches are
/// stitched together, with no information shared across leaf boundaries.
inline Volume blockwise_upscale(const SROctree& t, const UpscalerHierarchy& h) {
    Volume out = Volume::zeros(t.full_dims);
    t.for_each_leaf([&](const SRNode& n) {
        if (n.level == 0)
            write_region(out, n.region, *n.data);
        else
            write_region(out, n.region, apply_hierarchy(h, *n.data, n.level, 0));
    });
    return out;
}

/// Hierarchical downscale followed by hierarchical upscale.
inline Volume reconstruct(const SROctree& t, const UpscalerHierarchy& h) {
    return hierarchical_upscale(hierarchical_downscale(t), t, h);
}

}  // namespace hiersr

#endif
