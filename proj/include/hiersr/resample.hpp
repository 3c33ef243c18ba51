#ifndef HIERSR_RESAMPLE_HPP
#define HIERSR_RESAMPLE_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "hiersr/detail/parallel.hpp"
#include "hiersr/error.hpp"
#include "hiersr/volume.hpp"

namespace hiersr {

/// 2x downscaling kernels. Both satisfy down(V, 2S) == down(down(V, S), S).
enum class Downscaler : std::uint8_t { mean_pool = 0, subsample = 1 };

inline std::string_view to_string(Downscaler d) {
    return d == Downscaler::mean_pool ? "mean" : "subsample";
}

inline Downscaler parse_downscaler(std::string_view s) {
    if (s == "mean" || s == "mean_pool") return Downscaler::mean_pool;
    if (s == "subsample") return Downscaler::subsample;
    fail(Errc::BadConfig, "unknown downscaler '" + std::string(s) + "'");
}

namespace detail {

// 2D volumes are handled as 3D with a leading inactive axis of size 1.
struct Grid3 {
    std::array<std::size_t, 3> n;
    std::array<std::size_t, 3> scale;  // 2 on active axes, 1 on the padding axis
};

inline Grid3 grid3(const Dims& dims) {
    Grid3 g{pad3(dims), {2, 2, 2}};
    if (dims.size() == 2) g.scale[0] = 1;
    return g;
}

inline Dims scaled_dims(const Dims& dims, std::size_t num, std::size_t den) {
    Dims out(dims);
    for (auto& d : out) d = d * num / den;
    return out;
}

}  // namespace detail

inline bool is_power_of_two(std::size_t x) { return x != 0 && (x & (x - 1)) == 0; }

inline Volume downscale2x(const Volume& v, Downscaler d = Downscaler::mean_pool) {
    for (std::size_t n : v.dims())
        if (n < 2 || n % 2 != 0)
            fail(Errc::OddDimension, "cannot halve dims " + to_string(v.dims()));
    const auto in = detail::grid3(v.dims());
    Volume out = Volume::zeros(detail::scaled_dims(v.dims(), 1, 2));
    const auto on = detail::grid3(out.dims()).n;
    auto src = v.data();
    auto dst = out.data();
    const std::size_t sz = in.scale[0];
    const double inv = 1.0 / static_cast<double>(sz * 4);

    detail::parallel_for(on[0], on[1] * on[2] * sz * 4, [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z)
            for (std::size_t y = 0; y < on[1]; ++y)
                for (std::size_t x = 0; x < on[2]; ++x) {
                    const std::size_t o = (z * on[1] + y) * on[2] + x;
                    const std::size_t base = ((z * sz) * in.n[1] + 2 * y) * in.n[2] + 2 * x;
                    if (d == Downscaler::subsample) {
                        dst[o] = src[base];
                        continue;
                    }
                    double s = 0.0;
                    for (std::size_t dz = 0; dz < sz; ++dz)
                        for (std::size_t dy = 0; dy < 2; ++dy) {
                            const std::size_t row = base + (dz * in.n[1] + dy) * in.n[2];
                            s += static_cast<double>(src[row]) + static_cast<double>(src[row + 1]);
                        }
                    dst[o] = static_cast<float>(s * inv);
                }
    });
    return out;
}

/// Downscale by a power-of-two factor as repeated 2x steps.
inline Volume downscale_by(const Volume& v, std::size_t factor, Downscaler d = Downscaler::mean_pool) {
    if (!is_power_of_two(factor)) fail(Errc::NotPowerOfTwo, "factor " + std::to_string(factor));
    for (std::size_t n : v.dims())
        if (n % factor != 0)
            fail(Errc::IndivisibleDimension,
                 "dims " + to_string(v.dims()) + " not divisible by " + std::to_string(factor));
    Volume out = v;
    for (std::size_t f = factor; f > 1; f /= 2) out = downscale2x(out, d);
    return out;
}

/// Replicates each voxel into its 2^D child block.
inline Volume upscale2x_nearest(const Volume& v) {
    const auto in = detail::grid3(v.dims());
    Volume out = Volume::zeros(detail::scaled_dims(v.dims(), 2, 1));
    const auto on = detail::grid3(out.dims()).n;
    auto src = v.data();
    auto dst = out.data();
    const std::size_t sz = in.scale[0];
    detail::parallel_for(on[0], on[1] * on[2], [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z)
            for (std::size_t y = 0; y < on[1]; ++y) {
                const std::size_t srow = ((z / sz) * in.n[1] + y / 2) * in.n[2];
                const std::size_t drow = (z * on[1] + y) * on[2];
                for (std::size_t x = 0; x < on[2]; ++x) dst[drow + x] = src[srow + x / 2];
            }
    });
    return out;
}

namespace detail {

// Cell-center 2x taps: output j sits at coarse coordinate (j + 0.5) / 2 - 0.5,
// i.e. weight 0.75 on the nearer coarse sample and 0.25 on the farther one,
// clamped at the borders.
struct Taps {
    std::size_t lo, hi;
    double wlo, whi;
};

inline Taps linear_taps(std::size_t j, std::size_t n) {
    const std::size_t m = j / 2;
    if (j % 2 == 0) {
        const std::size_t lo = m == 0 ? 0 : m - 1;
        return {lo, m, 0.25, 0.75};
    }
    const std::size_t hi = m + 1 < n ? m + 1 : n - 1;
    return {m, hi, 0.75, 0.25};
}

}  // namespace detail

/// Bilinear (2D) / trilinear (3D) 2x upscaling under the cell-center convention.
inline Volume upscale2x_linear(const Volume& v) {
    const auto in = detail::grid3(v.dims());
    Volume out = Volume::zeros(detail::scaled_dims(v.dims(), 2, 1));
    const auto on = detail::grid3(out.dims()).n;
    auto src = v.data();
    auto dst = out.data();
    const bool has_z = in.scale[0] == 2;

    std::vector<detail::Taps> tx(on[2]), ty(on[1]);
    for (std::size_t x = 0; x < on[2]; ++x) tx[x] = detail::linear_taps(x, in.n[2]);
    for (std::size_t y = 0; y < on[1]; ++y) ty[y] = detail::linear_taps(y, in.n[1]);

    detail::parallel_for(on[0], on[1] * on[2] * 8, [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z) {
            const detail::Taps tz = has_z ? detail::linear_taps(z, in.n[0]) : detail::Taps{0, 0, 1.0, 0.0};
            for (std::size_t y = 0; y < on[1]; ++y) {
                const detail::Taps& wy = ty[y];
                for (std::size_t x = 0; x < on[2]; ++x) {
                    const detail::Taps& wx = tx[x];
                    auto sample = [&](std::size_t zz, std::size_t yy) {
                        const std::size_t row = (zz * in.n[1] + yy) * in.n[2];
                        return wx.wlo * src[row + wx.lo] + wx.whi * src[row + wx.hi];
                    };
                    auto plane = [&](std::size_t zz) {
                        return wy.wlo * sample(zz, wy.lo) + wy.whi * sample(zz, wy.hi);
                    };
                    double s = tz.wlo * plane(tz.lo);
                    if (tz.whi != 0.0) s += tz.whi * plane(tz.hi);
                    dst[(z * on[1] + y) * on[2] + x] = static_cast<float>(s);
                }
            }
        }
    });
    return out;
}

/// Any deterministic map from a volume to one with every axis doubled.
using Upscaler2x = std::function<Volume(const Volume&)>;

/// One 2x upscaler per downscaling level. The upscaler registered at level i
/// produces level-i data from level i+1; unmapped levels use the fallback.
class UpscalerHierarchy {
public:
    explicit UpscalerHierarchy(Upscaler2x fallback = upscale2x_linear) : fallback_(std::move(fallback)) {}

    UpscalerHierarchy& set(int level, Upscaler2x up) {
        if (level < 0) fail(Errc::LevelOrder, "negative level");
        per_level_[level] = std::move(up);
        return *this;
    }

    const Upscaler2x& at(int level) const {
        auto it = per_level_.find(level);
        return it != per_level_.end() ? it->second : fallback_;
    }

    /// Number of explicitly mapped levels.
    std::size_t mapped() const { return per_level_.size(); }

    static UpscalerHierarchy nearest() { return UpscalerHierarchy(upscale2x_nearest); }
    static UpscalerHierarchy linear() { return UpscalerHierarchy(upscale2x_linear); }

private:
    std::map<int, Upscaler2x> per_level_;
    Upscaler2x fallback_;
};

/// Runs one hierarchy step producing `target_level` and checks the upscaler
/// honoured the doubling contract.
inline Volume upscale_step(const UpscalerHierarchy& h, const Volume& v, int target_level) {
    Volume out = h.at(target_level)(v);
    const Dims want = detail::scaled_dims(v.dims(), 2, 1);
    if (out.dims() != want)
        fail(Errc::ShapeMismatch, "upscaler for level " + std::to_string(target_level) + " returned " +
                                      to_string(out.dims()) + ", expected " + to_string(want));
    return out;
}

/// Upscales from `from_level` to `to_level`, one 2x step per level.
inline Volume apply_hierarchy(const UpscalerHierarchy& h, const Volume& v, int from_level, int to_level) {
    if (to_level < 0 || to_level >= from_level)
        fail(Errc::LevelOrder, "need 0 <= to_level < from_level, got from " + std::to_string(from_level) +
                                   " to " + std::to_string(to_level));
    Volume out = v;
    for (int level = from_level; level > to_level; --level) out = upscale_step(h, out, level - 1);
    return out;
}

}  // namespace hiersr

#endif
