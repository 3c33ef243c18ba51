#ifndef HIERSR_SR_OCTREE_HPP
#define HIERSR_SR_OCTREE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hiersr/error.hpp"
#include "hiersr/resample.hpp"
#include "hiersr/volume.hpp"

namespace hiersr {

/// Parameters of error-bounded SR-octree construction.
struct BuildConfig {
    double epsilon = 0.0;           ///< L-inf bound in normalized data units
    std::uint32_t min_chunk = 2;    ///< suboctants must exceed this on every axis (stored resolution)
    std::uint32_t min_level = 0;    ///< forced initial downscaling level
    std::uint32_t max_level = 0;    ///< cap on downscaling level
    Downscaler downscaler = Downscaler::mean_pool;

    void validate() const {
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) fail(Errc::BadConfig, "epsilon must be finite and >= 0");
        if (min_chunk < 2) fail(Errc::BadConfig, "min_chunk must be >= 2");
        if (min_level > max_level) fail(Errc::BadConfig, "min_level must not exceed max_level");
        if (max_level > 30) fail(Errc::BadConfig, "max_level too large");
    }

    friend bool operator==(const BuildConfig&, const BuildConfig&) = default;
};

/// A node of the SR-octree. Leaves own a data block stored at 1/2^level of
/// full resolution; internal nodes own exactly 2^D children in lexicographic
/// origin order (slowest axis outermost).
struct SRNode {
    Region region;                ///< full-resolution voxel coordinates
    int level = 0;                ///< dwnscl_lvl
    std::optional<Volume> data;   ///< leaves only
    std::vector<SRNode> children; ///< internal nodes only

    bool is_leaf() const { return data.has_value(); }
};

inline std::size_t pow2(int level) { return std::size_t{1} << level; }

/// Region scaled down to the grid of `level`.
inline Region region_at_level(const Region& r, int level) {
    Region out = r;
    const std::size_t f = pow2(level);
    for (auto& o : out.origin) o /= f;
    for (auto& e : out.extent) e /= f;
    return out;
}

/// The 2^D equal halves of `r`, lexicographic by origin.
inline std::vector<Region> child_regions(const Region& r) {
    const std::size_t nd = r.ndim();
    std::vector<Region> out;
    out.reserve(std::size_t{1} << nd);
    for (std::size_t bits = 0; bits < (std::size_t{1} << nd); ++bits) {
        Region c = r;
        for (std::size_t a = 0; a < nd; ++a) {
            c.extent[a] = r.extent[a] / 2;
            const bool upper = (bits >> (nd - 1 - a)) & 1u;
            c.origin[a] = r.origin[a] + (upper ? c.extent[a] : 0);
        }
        out.push_back(std::move(c));
    }
    return out;
}

struct LevelStats {
    std::size_t leaves = 0;
    std::size_t covered_voxels = 0;  ///< full-resolution voxels under leaves of this level
    std::size_t stored_voxels = 0;
};

struct SROctree {
    Dims full_dims;
    SRNode root;
    BuildConfig config;

    template <class Fn>
    void for_each_leaf(Fn&& fn) const {
        visit_leaves(root, fn);
    }
    template <class Fn>
    void for_each_leaf(Fn&& fn) {
        visit_leaves_mut(root, fn);
    }

    /// MAXDSL
    int max_level() const {
        int m = 0;
        bool any = false;
        for_each_leaf([&](const SRNode& n) {
            m = any ? std::max(m, n.level) : n.level;
            any = true;
        });
        return m;
    }

    /// MINDSL
    int min_level() const {
        int m = 0;
        bool any = false;
        for_each_leaf([&](const SRNode& n) {
            m = any ? std::min(m, n.level) : n.level;
            any = true;
        });
        return m;
    }

    std::size_t leaf_count() const {
        std::size_t c = 0;
        for_each_leaf([&](const SRNode&) { ++c; });
        return c;
    }

    std::size_t node_count() const { return count_nodes(root); }

    std::size_t stored_voxels() const {
        std::size_t c = 0;
        for_each_leaf([&](const SRNode& n) { c += n.data->size(); });
        return c;
    }

    std::map<int, LevelStats> level_histogram() const {
        std::map<int, LevelStats> h;
        for_each_leaf([&](const SRNode& n) {
            auto& s = h[n.level];
            ++s.leaves;
            s.covered_voxels += n.region.voxels();
            s.stored_voxels += n.data->size();
        });
        return h;
    }

private:
    template <class Fn>
    static void visit_leaves(const SRNode& n, Fn& fn) {
        if (n.is_leaf()) {
            fn(n);
            return;
        }
        for (const auto& c : n.children) visit_leaves(c, fn);
    }
    template <class Fn>
    static void visit_leaves_mut(SRNode& n, Fn& fn) {
        if (n.is_leaf()) {
            fn(n);
            return;
        }
        for (auto& c : n.children) visit_leaves_mut(c, fn);
    }
    static std::size_t count_nodes(const SRNode& n) {
        std::size_t c = 1;
        for (const auto& ch : n.children) c += count_nodes(ch);
        return c;
    }
};

inline SRNode make_leaf(Region region, int level, Volume data) {
    SRNode n;
    n.region = std::move(region);
    n.level = level;
    n.data = std::move(data);
    return n;
}

/// Tree with one leaf covering the whole domain at `level`.
inline SROctree single_leaf_tree(const Volume& full, int level, Downscaler d = Downscaler::mean_pool) {
    SROctree t;
    t.full_dims = full.dims();
    t.config.min_level = t.config.max_level = static_cast<std::uint32_t>(level);
    t.config.downscaler = d;
    t.root = make_leaf(full_region(full.dims()), level, downscale_by(full, pow2(level), d));
    return t;
}

namespace detail {

// max |fine - replicate(coarse)| where coarse is `fine` reduced by `factor`.
inline double replicated_linf(const Volume& fine, const Volume& coarse, std::size_t factor) {
    const auto fn = pad3(fine.dims());
    const auto cn = pad3(coarse.dims());
    const std::size_t fz = fine.ndim() == 3 ? factor : 1;
    auto f = fine.data();
    auto c = coarse.data();
    double worst = 0.0;
    std::size_t i = 0;
    for (std::size_t z = 0; z < fn[0]; ++z)
        for (std::size_t y = 0; y < fn[1]; ++y) {
            const std::size_t crow = ((z / fz) * cn[1] + y / factor) * cn[2];
            for (std::size_t x = 0; x < fn[2]; ++x, ++i)
                worst = std::max(worst, std::abs(static_cast<double>(f[i]) - static_cast<double>(c[crow + x / factor])));
        }
    return worst;
}

inline bool all_even(const Dims& dims) {
    return std::all_of(dims.begin(), dims.end(), [](std::size_t n) { return n >= 2 && n % 2 == 0; });
}

}  // namespace detail

/// Cumulative L-inf error of storing `original` at `candidate_level`: the
/// downscaled block is replicated back to full resolution and compared.
inline double node_error(const Volume& original, int candidate_level, Downscaler d = Downscaler::mean_pool) {
    if (candidate_level < 0) fail(Errc::LevelOrder, "negative level");
    if (candidate_level == 0) return 0.0;
    const std::size_t f = pow2(candidate_level);
    return detail::replicated_linf(original, downscale_by(original, f, d), f);
}

namespace detail {

inline void refine(SRNode& node, const Volume& original, const BuildConfig& cfg) {
    const int max_level = static_cast<int>(cfg.max_level);
    while (node.level < max_level && all_even(node.data->dims())) {
        Volume candidate = downscale2x(*node.data, cfg.downscaler);
        const double err = replicated_linf(original, candidate, pow2(node.level + 1));
        if (err > cfg.epsilon) break;
        node.data = std::move(candidate);
        ++node.level;
    }
    if (node.level >= max_level) return;

    // Trial downscale failed (or is impossible): split if every suboctant
    // stays strictly above min_chunk at the stored resolution.
    const Dims& stored = node.data->dims();
    if (!all_even(stored)) return;
    for (std::size_t n : stored)
        if (n / 2 <= cfg.min_chunk) return;

    const Volume block = std::move(*node.data);
    node.data.reset();
    for (Region& cr : child_regions(node.region)) {
        Region local = cr;
        for (std::size_t a = 0; a < local.ndim(); ++a) local.origin[a] -= node.region.origin[a];
        Volume child_orig = read_region(original, local);
        Volume child_data = read_region(block, region_at_level(local, node.level));
        SRNode child = make_leaf(std::move(cr), node.level, std::move(child_data));
        refine(child, child_orig, cfg);
        node.children.push_back(std::move(child));
    }
}

inline void join_node(SRNode& n) {
    if (n.is_leaf()) return;
    for (auto& c : n.children) join_node(c);
    const int level = n.children.front().level;
    for (const auto& c : n.children)
        if (!c.is_leaf() || c.level != level) return;
    Volume merged = Volume::zeros(region_at_level(n.region, level).extent);
    for (const auto& c : n.children) {
        Region local = c.region;
        for (std::size_t a = 0; a < local.ndim(); ++a) local.origin[a] -= n.region.origin[a];
        write_region(merged, region_at_level(local, level), *c.data);
    }
    n.children.clear();
    n.level = level;
    n.data = std::move(merged);
}

}  // namespace detail

/// Merges every full set of sibling leaves sharing one level into their
/// parent, bottom-up, until no such set remains. The represented field is
/// unchanged.
inline SROctree join_adjacent(SROctree t) {
    detail::join_node(t.root);
    return t;
}

/// Error-bounded construction: start at min_level, keep halving while the
/// cumulative L-inf error stays within epsilon, split on failure, then join
/// adjacent same-level siblings.
inline SROctree build_sr_octree(const Volume& v, const BuildConfig& cfg) {
    cfg.validate();
    if (v.empty()) fail(Errc::EmptyVolume, "cannot build a tree from an empty volume");
    const std::size_t f = pow2(static_cast<int>(cfg.max_level));
    for (std::size_t n : v.dims())
        if (n % f != 0)
            fail(Errc::IndivisibleDimension,
                 "dims " + to_string(v.dims()) + " not divisible by 2^max_level = " + std::to_string(f));

    SROctree t;
    t.full_dims = v.dims();
    t.config = cfg;
    const int start = static_cast<int>(cfg.min_level);
    t.root = make_leaf(full_region(v.dims()), start, downscale_by(v, pow2(start), cfg.downscaler));
    detail::refine(t.root, v, cfg);
    return join_adjacent(std::move(t));
}

/// Full-resolution voxels stored relative to voxels actually held by leaves.
inline double reduction_factor(const SROctree& t) {
    return static_cast<double>(product(t.full_dims)) / static_cast<double>(t.stored_voxels());
}

/// Full-resolution volume holding the level of the covering leaf.
inline Volume level_map(const SROctree& t) {
    Volume out = Volume::zeros(t.full_dims);
    t.for_each_leaf([&](const SRNode& n) {
        write_region(out, n.region, Volume::filled(n.region.extent, static_cast<float>(n.level)));
    });
    return out;
}

namespace detail {

inline std::optional<std::string> check_node_shape(const SRNode& n, const Dims& full) {
    const std::size_t nd = full.size();
    if (n.region.origin.size() != nd || n.region.extent.size() != nd || !region_within(n.region, full))
        return "node region " + to_string(n.region) + " lies outside the domain";
    if (n.level < 0 || n.level > 30) return "node level out of range";
    if (n.is_leaf() == !n.children.empty()) return "node must hold exactly one of data or children";
    if (n.is_leaf()) {
        const std::size_t f = pow2(n.level);
        for (std::size_t e : n.region.extent)
            if (e % f != 0) return "leaf extent " + to_string(n.region.extent) + " not divisible by 2^level";
        if (n.data->dims() != region_at_level(n.region, n.level).extent)
            return "leaf data dims " + to_string(n.data->dims()) + " do not match extent/2^level";
        return std::nullopt;
    }
    if (n.children.size() != (std::size_t{1} << nd)) return "internal node must have 2^D children";
    for (const auto& c : n.children)
        if (auto err = check_node_shape(c, full)) return err;
    return std::nullopt;
}

inline std::optional<std::string> check_children_halves(const SRNode& n) {
    if (n.is_leaf()) return std::nullopt;
    for (std::size_t a = 0; a < n.region.ndim(); ++a)
        if (n.region.extent[a] % 2 != 0) return "internal node extent not splittable into halves";
    const auto expect = child_regions(n.region);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        if (n.children[i].region != expect[i])
            return "children do not partition parent " + to_string(n.region) + " into ordered halves";
        if (auto err = check_children_halves(n.children[i])) return err;
    }
    return std::nullopt;
}

inline bool is_single_voxel(const SRNode& n) { return n.is_leaf() && n.data->size() == 1; }

inline std::optional<std::string> check_single_voxel_siblings(const SRNode& n, int min_level) {
    if (n.is_leaf()) return std::nullopt;
    bool any = false;
    bool all = true;
    for (const auto& c : n.children) {
        const bool sv = is_single_voxel(c) && c.level == min_level;
        any = any || sv;
        all = all && sv;
    }
    if (any && !all) return "single-voxel leaf at MINDSL without matching single-voxel siblings";
    for (const auto& c : n.children)
        if (auto err = check_single_voxel_siblings(c, min_level)) return err;
    return std::nullopt;
}

}  // namespace detail

/// Returns a description of the first violated tree invariant, if any.
inline std::optional<std::string> find_invariant_violation(const SROctree& t) {
    const std::size_t nd = t.full_dims.size();
    if (nd != 2 && nd != 3) return "tree must be 2D or 3D";
    for (std::size_t d : t.full_dims)
        if (d == 0) return "empty domain";
    if (t.root.region != full_region(t.full_dims)) return "root region does not cover the domain";
    if (auto err = detail::check_node_shape(t.root, t.full_dims)) return err;

    std::vector<std::uint8_t> coverage(product(t.full_dims), 0);
    bool overlap = false;
    t.for_each_leaf([&](const SRNode& n) {
        detail::for_each_row(t.full_dims, n.region, [&](std::size_t off, std::size_t, std::size_t len) {
            for (std::size_t i = off; i < off + len; ++i) overlap = overlap || coverage[i]++ != 0;
        });
    });
    if (overlap) return "partition: leaf regions overlap";
    if (std::find(coverage.begin(), coverage.end(), 0) != coverage.end())
        return "partition: leaf regions do not cover the domain";

    if (auto err = detail::check_children_halves(t.root)) return err;
    return detail::check_single_voxel_siblings(t.root, t.min_level());
}

inline void validate_tree(const SROctree& t) {
    if (auto err = find_invariant_violation(t)) fail(Errc::InvariantViolation, *err);
}

/// Deep structural and bitwise equality of two trees.
inline bool same_tree(const SRNode& a, const SRNode& b) {
    if (a.region != b.region || a.level != b.level || a.is_leaf() != b.is_leaf() ||
        a.children.size() != b.children.size())
        return false;
    if (a.is_leaf()) return a.data->same_bits(*b.data);
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!same_tree(a.children[i], b.children[i])) return false;
    return true;
}

inline bool same_tree(const SROctree& a, const SROctree& b) {
    return a.full_dims == b.full_dims && a.config == b.config && same_tree(a.root, b.root);
}

}  // namespace hiersr

#endif
