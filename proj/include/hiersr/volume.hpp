#ifndef HIERSR_VOLUME_HPP
#define HIERSR_VOLUME_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hiersr/error.hpp"

namespace hiersr {

/// Axis sizes, slowest axis first. Row-major: the last axis varies fastest.
using Dims = std::vector<std::size_t>;

inline std::size_t product(const Dims& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Dims& dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(dims[i]);
    }
    return s;
}

enum class Normalization { linear, log_then_linear };

/// Original value range recorded by normalize(); enough to invert the mapping.
struct ValueRange {
    double min = 0.0;
    double max = 0.0;
    Normalization mode = Normalization::linear;

    friend bool operator==(const ValueRange&, const ValueRange&) = default;
};

/// Dense 2D or 3D single-precision scalar field.
///
/// Construction validates the shape and that every value is finite. The
/// mutable data() view lets kernels fill a volume in place; it performs no
/// checks.
class Volume {
public:
    Volume() = default;

    Volume(Dims dims, std::vector<float> data, std::optional<ValueRange> meta = std::nullopt)
        : dims_(std::move(dims)), data_(std::move(data)), meta_(meta) {
        check_dims(dims_);
        if (data_.size() != product(dims_))
            fail(Errc::LengthMismatch, "dims " + to_string(dims_) + " need " +
                                           std::to_string(product(dims_)) + " values, got " +
                                           std::to_string(data_.size()));
        for (float x : data_)
            if (!std::isfinite(x)) fail(Errc::NonFiniteValue, "volume data contains NaN or Inf");
    }

    static Volume zeros(Dims dims) {
        check_dims(dims);
        Volume v;
        v.data_.assign(product(dims), 0.0f);
        v.dims_ = std::move(dims);
        return v;
    }

    static Volume filled(Dims dims, float value) {
        Volume v = zeros(std::move(dims));
        std::fill(v.data_.begin(), v.data_.end(), value);
        return v;
    }

    const Dims& dims() const noexcept { return dims_; }
    std::size_t ndim() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }
    const std::vector<float>& values() const noexcept { return data_; }

    const std::optional<ValueRange>& meta() const noexcept { return meta_; }
    void set_meta(std::optional<ValueRange> m) { meta_ = m; }

    float operator[](std::size_t i) const { return data_[i]; }
    float& operator[](std::size_t i) { return data_[i]; }

    /// Flat index of a multi-index (one entry per axis).
    std::size_t index(std::span<const std::size_t> idx) const {
        std::size_t flat = 0;
        for (std::size_t a = 0; a < dims_.size(); ++a) flat = flat * dims_[a] + idx[a];
        return flat;
    }

    float at(std::initializer_list<std::size_t> idx) const {
        return data_[index(std::span<const std::size_t>(idx.begin(), idx.size()))];
    }

    /// Bitwise equality of shape and values (meta ignored).
    bool same_bits(const Volume& o) const {
        return dims_ == o.dims_ &&
               std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) == 0;
    }

    friend bool operator==(const Volume& a, const Volume& b) {
        return a.dims_ == b.dims_ && a.data_ == b.data_ && a.meta_ == b.meta_;
    }

    static void check_dims(const Dims& dims) {
        if (dims.size() != 2 && dims.size() != 3)
            fail(Errc::BadDims, "volume must have 2 or 3 axes, got " + std::to_string(dims.size()));
        for (std::size_t d : dims)
            if (d == 0) fail(Errc::BadDims, "axis sizes must be positive: " + to_string(dims));
    }

private:
    Dims dims_;
    std::vector<float> data_;
    std::optional<ValueRange> meta_;
};

inline Volume create_volume(Dims dims, std::span<const float> data) {
    return Volume(std::move(dims), std::vector<float>(data.begin(), data.end()));
}

/// Axis-aligned box of voxels.
struct Region {
    Dims origin;
    Dims extent;

    std::size_t ndim() const { return extent.size(); }
    std::size_t voxels() const { return product(extent); }

    friend bool operator==(const Region&, const Region&) = default;
};

inline std::string to_string(const Region& r) {
    return "[origin " + to_string(r.origin) + ", extent " + to_string(r.extent) + "]";
}

inline bool region_within(const Region& r, const Dims& dims) {
    if (r.origin.size() != dims.size() || r.extent.size() != dims.size()) return false;
    for (std::size_t a = 0; a < dims.size(); ++a)
        if (r.extent[a] == 0 || r.origin[a] + r.extent[a] > dims[a]) return false;
    return true;
}

inline Region full_region(const Dims& dims) { return Region{Dims(dims.size(), 0), dims}; }

namespace detail {

// Visits each contiguous row (run along the fastest axis) of region r inside
// a volume of `dims`: fn(volume_offset, region_offset, row_length).
template <class Fn>
void for_each_row(const Dims& dims, const Region& r, Fn&& fn) {
    const std::size_t nd = dims.size();
    const std::size_t row = r.extent[nd - 1];
    std::vector<std::size_t> idx(nd - 1, 0);
    std::size_t rows = 1;
    for (std::size_t a = 0; a + 1 < nd; ++a) rows *= r.extent[a];
    for (std::size_t k = 0; k < rows; ++k) {
        std::size_t off = 0;
        for (std::size_t a = 0; a + 1 < nd; ++a) off = off * dims[a] + (r.origin[a] + idx[a]);
        off = off * dims[nd - 1] + r.origin[nd - 1];
        fn(off, k * row, row);
        for (std::size_t a = nd - 1; a-- > 0;) {
            if (++idx[a] < r.extent[a]) break;
            idx[a] = 0;
        }
    }
}

}  // namespace detail

inline Volume read_region(const Volume& v, const Region& r) {
    if (!region_within(r, v.dims()))
        fail(Errc::OutOfBounds, "region " + to_string(r) + " outside " + to_string(v.dims()));
    Volume out = Volume::zeros(r.extent);
    auto src = v.data();
    auto dst = out.data();
    detail::for_each_row(v.dims(), r, [&](std::size_t vo, std::size_t ro, std::size_t n) {
        std::copy_n(src.begin() + vo, n, dst.begin() + ro);
    });
    return out;
}

/// Overwrites the voxels of `v` inside `r` with `patch`; voxels outside `r`
/// are untouched.
inline void write_region(Volume& v, const Region& r, const Volume& patch) {
    if (patch.dims() != r.extent)
        fail(Errc::ShapeMismatch,
             "patch " + to_string(patch.dims()) + " does not match region extent " + to_string(r.extent));
    if (!region_within(r, v.dims()))
        fail(Errc::OutOfBounds, "region " + to_string(r) + " outside " + to_string(v.dims()));
    auto src = patch.data();
    auto dst = v.data();
    detail::for_each_row(v.dims(), r, [&](std::size_t vo, std::size_t ro, std::size_t n) {
        std::copy_n(src.begin() + ro, n, dst.begin() + vo);
    });
}

/// Maps values to [0,1]. A constant input maps to all zeros.
inline Volume normalize(const Volume& v, Normalization mode) {
    std::vector<double> work(v.values().begin(), v.values().end());
    if (mode == Normalization::log_then_linear) {
        for (double& x : work) {
            if (!(x > 0.0)) fail(Errc::NonPositiveForLog, "log normalization needs positive values");
            x = std::log10(x);
        }
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double x : work) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    std::vector<float> out(work.size(), 0.0f);
    if (hi > lo) {
        const double span = hi - lo;
        for (std::size_t i = 0; i < work.size(); ++i)
            out[i] = static_cast<float>(std::clamp((work[i] - lo) / span, 0.0, 1.0));
    }
    ValueRange meta;
    meta.mode = mode;
    meta.min = mode == Normalization::log_then_linear ? std::pow(10.0, lo) : lo;
    meta.max = mode == Normalization::log_then_linear ? std::pow(10.0, hi) : hi;
    return Volume(v.dims(), std::move(out), meta);
}

/// Maps a single normalized value back to original units using `meta`.
inline double denormalize_value(double x, const ValueRange& meta) {
    if (meta.mode == Normalization::linear) return meta.min + x * (meta.max - meta.min);
    const double lo = std::log10(meta.min);
    const double hi = std::log10(meta.max);
    return std::pow(10.0, lo + x * (hi - lo));
}

/// Inverse of normalize(); requires the volume to carry its value range.
inline Volume denormalize(const Volume& v) {
    if (!v.meta()) fail(Errc::BadConfig, "volume carries no normalization record");
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(denormalize_value(v[i], *v.meta()));
    return Volume(v.dims(), std::move(out));
}

enum class SyntheticKind { constant, checker, gaussian_blobs, band_limited_noise };

inline SyntheticKind parse_synthetic_kind(std::string_view s) {
    if (s == "constant") return SyntheticKind::constant;
    if (s == "checker") return SyntheticKind::checker;
    if (s == "gaussian_blobs" || s == "blobs") return SyntheticKind::gaussian_blobs;
    if (s == "band_limited_noise" || s == "noise") return SyntheticKind::band_limited_noise;
    fail(Errc::UnknownKind, "unknown synthetic kind '" + std::string(s) + "'");
}

namespace detail {

// Uniform double in [0,1) from the top 53 bits; unlike the std
// distributions this is identical across standard libraries.
inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

inline std::array<std::size_t, 3> pad3(const Dims& dims) {
    std::array<std::size_t, 3> n{1, 1, 1};
    std::copy(dims.begin(), dims.end(), n.begin() + (3 - dims.size()));
    return n;
}

inline void rescale_unit(std::vector<float>& data, const std::vector<double>& raw) {
    auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double span = *hi - *lo;
    for (std::size_t i = 0; i < raw.size(); ++i)
        data[i] = span > 0 ? static_cast<float>((raw[i] - *lo) / span) : 0.0f;
}

}  // namespace detail

/// Deterministic test fields with values in [0,1].
inline Volume gen_synthetic(SyntheticKind kind, const Dims& dims, std::uint64_t seed) {
    Volume v = Volume::zeros(dims);
    std::mt19937_64 rng(seed);
    const auto n = detail::pad3(dims);
    const bool active0 = dims.size() == 3;
    auto out = v.data();

    switch (kind) {
    case SyntheticKind::constant: {
        const float c = static_cast<float>(detail::unit(rng));
        std::fill(out.begin(), out.end(), c);
        break;
    }
    case SyntheticKind::checker: {
        std::size_t i = 0;
        for (std::size_t z = 0; z < n[0]; ++z)
            for (std::size_t y = 0; y < n[1]; ++y)
                for (std::size_t x = 0; x < n[2]; ++x) out[i++] = static_cast<float>((z + y + x) % 2);
        break;
    }
    case SyntheticKind::gaussian_blobs: {
        struct Blob {
            std::array<double, 3> c;
            double sigma, amp;
        };
        const int count = 3 + static_cast<int>(rng() % 4);
        std::vector<Blob> blobs;
        for (int b = 0; b < count; ++b) {
            Blob bl{};
            for (int a = 0; a < 3; ++a) bl.c[a] = detail::uniform(rng, 0.15, 0.85);
            bl.sigma = detail::uniform(rng, 0.05, 0.14);
            bl.amp = detail::uniform(rng, 0.4, 1.0);
            blobs.push_back(bl);
        }
        std::vector<double> raw(v.size());
        std::size_t i = 0;
        for (std::size_t z = 0; z < n[0]; ++z)
            for (std::size_t y = 0; y < n[1]; ++y)
                for (std::size_t x = 0; x < n[2]; ++x, ++i) {
                    const std::array<double, 3> p{(z + 0.5) / n[0], (y + 0.5) / n[1], (x + 0.5) / n[2]};
                    double s = 0.0;
                    for (const Blob& bl : blobs) {
                        double r2 = 0.0;
                        for (int a = active0 ? 0 : 1; a < 3; ++a) r2 += (p[a] - bl.c[a]) * (p[a] - bl.c[a]);
                        s += bl.amp * std::exp(-r2 / (2.0 * bl.sigma * bl.sigma));
                    }
                    raw[i] = s;
                }
        const double peak = *std::max_element(raw.begin(), raw.end());
        // Tails below the cutoff become an exactly flat background.
        const double cutoff = 2e-3 * peak;
        for (std::size_t k = 0; k < raw.size(); ++k)
            out[k] = raw[k] < cutoff ? 0.0f : static_cast<float>(std::min(1.0, (raw[k] - cutoff) / (peak - cutoff)));
        break;
    }
    case SyntheticKind::band_limited_noise: {
        struct Wave {
            std::array<double, 3> k;
            double phase, amp;
        };
        std::vector<Wave> waves;
        while (waves.size() < 16) {
            Wave w{};
            bool nonzero = false;
            for (int a = 0; a < 3; ++a) {
                w.k[a] = (a == 0 && !active0) ? 0.0 : static_cast<double>(static_cast<int>(rng() % 9) - 4);
                nonzero = nonzero || w.k[a] != 0.0;
            }
            w.phase = detail::uniform(rng, 0.0, 2.0 * M_PI);
            w.amp = detail::uniform(rng, 0.25, 1.0);
            if (nonzero) waves.push_back(w);
        }
        std::vector<double> raw(v.size());
        std::size_t i = 0;
        for (std::size_t z = 0; z < n[0]; ++z)
            for (std::size_t y = 0; y < n[1]; ++y)
                for (std::size_t x = 0; x < n[2]; ++x, ++i) {
                    const std::array<double, 3> p{(z + 0.5) / n[0], (y + 0.5) / n[1], (x + 0.5) / n[2]};
                    double s = 0.0;
                    for (const Wave& w : waves)
                        s += w.amp * std::cos(2.0 * M_PI * (w.k[0] * p[0] + w.k[1] * p[1] + w.k[2] * p[2]) + w.phase);
                    raw[i] = s;
                }
        std::vector<float> scaled(v.size());
        detail::rescale_unit(scaled, raw);
        std::copy(scaled.begin(), scaled.end(), out.begin());
        break;
    }
    }
    return v;
}

}  // namespace hiersr

#endif
