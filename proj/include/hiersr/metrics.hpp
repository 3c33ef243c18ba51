#ifndef HIERSR_METRICS_HPP
#define HIERSR_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiersr/detail/parallel.hpp"
#include "hiersr/error.hpp"
#include "hiersr/sr_octree.hpp"
#include "hiersr/volume.hpp"

namespace hiersr {

namespace detail {
inline void require_same_dims(const Volume& a, const Volume& b) {
    if (a.dims() != b.dims())
        fail(Errc::ShapeMismatch, "dims differ: " + to_string(a.dims()) + " vs " + to_string(b.dims()));
}
}  // namespace detail

inline double mse(const Volume& a, const Volume& b) {
    detail::require_same_dims(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

/// Peak signal-to-noise ratio in dB; +inf for identical inputs.
inline double psnr(const Volume& a, const Volume& b, double data_range = 1.0) {
    if (!(data_range > 0.0)) fail(Errc::BadConfig, "data_range must be positive");
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(data_range) - 10.0 * std::log10(m);
}

inline double linf(const Volume& a, const Volume& b) {
    detail::require_same_dims(a, b);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return worst;
}

/// Maximum relative error: max |a - b| over the value range of the ground
/// truth `a`. When `a` carries a normalization record both volumes are read
/// in original units and the recorded range is used.
inline double mre(const Volume& a, const Volume& b) {
    detail::require_same_dims(a, b);
    double worst = 0.0;
    double range = 0.0;
    if (a.meta() && a.meta()->max > a.meta()->min) {
        const ValueRange& m = *a.meta();
        for (std::size_t i = 0; i < a.size(); ++i)
            worst = std::max(worst, std::abs(denormalize_value(a[i], m) - denormalize_value(b[i], m)));
        range = m.max - m.min;
    } else {
        worst = linf(a, b);
        auto [lo, hi] = std::minmax_element(a.values().begin(), a.values().end());
        range = static_cast<double>(*hi) - static_cast<double>(*lo);
    }
    if (worst == 0.0) return 0.0;
    return range > 0.0 ? worst / range : std::numeric_limits<double>::infinity();
}

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> w(size);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
}

// "Valid" correlation of a padded-3D field with `w` along one axis.
inline std::vector<double> filter_axis(const std::vector<double>& in, std::array<std::size_t, 3>& n, int axis,
                                       const std::vector<double>& w) {
    std::array<std::size_t, 3> on = n;
    on[axis] = n[axis] - w.size() + 1;
    std::array<std::size_t, 3> stride{n[1] * n[2], n[2], 1};
    std::vector<double> out(on[0] * on[1] * on[2]);
    parallel_for(on[0], on[1] * on[2] * w.size(), [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z)
            for (std::size_t y = 0; y < on[1]; ++y)
                for (std::size_t x = 0; x < on[2]; ++x) {
                    const std::size_t base = z * stride[0] + y * stride[1] + x;
                    double s = 0.0;
                    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * in[base + k * stride[axis]];
                    out[(z * on[1] + y) * on[2] + x] = s;
                }
    });
    n = on;
    return out;
}

}  // namespace detail

/// Mean SSIM over all windows that fit entirely inside the volume, using an
/// isotropic Gaussian window (11 per axis, sigma 1.5 by default).
inline double ssim(const Volume& a, const Volume& b, const SsimParams& p = {}) {
    detail::require_same_dims(a, b);
    for (std::size_t d : a.dims())
        if (d < p.window)
            fail(Errc::TooSmallForWindow, "dims " + to_string(a.dims()) + " smaller than window " +
                                              std::to_string(p.window));
    const auto w = detail::gaussian_window(p.window, p.sigma);
    const std::size_t n = a.size();
    std::vector<std::vector<double>> fields(5, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a[i], y = b[i];
        fields[0][i] = x;
        fields[1][i] = y;
        fields[2][i] = x * x;
        fields[3][i] = y * y;
        fields[4][i] = x * y;
    }
    std::array<std::size_t, 3> shape{};
    for (auto& f : fields) {
        shape = detail::pad3(a.dims());
        for (int axis = a.ndim() == 3 ? 0 : 1; axis < 3; ++axis) f = detail::filter_axis(f, shape, axis, w);
    }
    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    const std::size_t windows = fields[0].size();
    double total = 0.0;
    for (std::size_t i = 0; i < windows; ++i) {
        const double mx = fields[0][i], my = fields[1][i];
        const double vx = fields[2][i] - mx * mx;
        const double vy = fields[3][i] - my * my;
        const double cxy = fields[4][i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(windows);
}

/// Seam score: mean |difference| across adjacent voxel pairs that straddle a
/// leaf face, minus the mean over an equally sized, evenly strided sample of
/// pairs inside leaves; clamped at zero.
inline double seam_metric(const Volume& v, const SROctree& t) {
    if (v.dims() != t.full_dims)
        fail(Errc::ShapeMismatch, "volume " + to_string(v.dims()) + " vs tree " + to_string(t.full_dims));
    std::vector<std::uint32_t> owner(v.size(), 0);
    std::uint32_t id = 0;
    t.for_each_leaf([&](const SRNode& leaf) {
        detail::for_each_row(t.full_dims, leaf.region, [&](std::size_t off, std::size_t, std::size_t len) {
            std::fill_n(owner.begin() + off, len, id);
        });
        ++id;
    });

    const auto n = detail::pad3(v.dims());
    const std::array<std::size_t, 3> stride{n[1] * n[2], n[2], 1};
    double boundary_sum = 0.0;
    std::size_t boundary_count = 0;
    std::vector<double> interior;
    interior.reserve(v.size() * v.ndim());
    for (int axis = v.ndim() == 3 ? 0 : 1; axis < 3; ++axis) {
        for (std::size_t z = 0; z < n[0]; ++z)
            for (std::size_t y = 0; y < n[1]; ++y)
                for (std::size_t x = 0; x < n[2]; ++x) {
                    const std::array<std::size_t, 3> p{z, y, x};
                    if (p[axis] + 1 >= n[axis]) continue;
                    const std::size_t i = z * stride[0] + y * stride[1] + x;
                    const std::size_t j = i + stride[axis];
                    const double d = std::abs(static_cast<double>(v[i]) - static_cast<double>(v[j]));
                    if (owner[i] != owner[j]) {
                        boundary_sum += d;
                        ++boundary_count;
                    } else {
                        interior.push_back(d);
                    }
                }
    }
    if (boundary_count == 0) return 0.0;
    const double boundary_mean = boundary_sum / static_cast<double>(boundary_count);
    double interior_mean = 0.0;
    if (!interior.empty()) {
        const std::size_t take = std::min(boundary_count, interior.size());
        double s = 0.0;
        for (std::size_t k = 0; k < take; ++k) s += interior[k * interior.size() / take];
        interior_mean = s / static_cast<double>(take);
    }
    return std::max(0.0, boundary_mean - interior_mean);
}

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double linf = 0.0;
    double mre = 0.0;
    std::optional<double> seam;  ///< present when a tree was supplied
};

/// Compares reconstruction `b` against ground truth `a`. SSIM is reported as
/// NaN when the volume is smaller than the SSIM window.
inline MetricReport evaluate(const Volume& a, const Volume& b, double data_range = 1.0,
                             const SROctree* tree = nullptr) {
    MetricReport r;
    r.psnr_db = psnr(a, b, data_range);
    SsimParams sp;
    sp.data_range = data_range;
    const bool fits = std::all_of(a.dims().begin(), a.dims().end(), [&](std::size_t d) { return d >= sp.window; });
    r.ssim = fits ? ssim(a, b, sp) : std::numeric_limits<double>::quiet_NaN();
    r.linf = linf(a, b);
    r.mre = mre(a, b);
    if (tree) r.seam = seam_metric(b, *tree);
    return r;
}

namespace detail {
inline std::string format_double(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (std::isnan(x)) return "nan";
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

inline double parse_double(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    return std::stod(s);
}

inline nlohmann::json json_number(double x) {
    if (std::isfinite(x)) return x;
    return format_double(x);
}
}  // namespace detail

/// One `key=value` line per field.
inline std::string to_kv(const MetricReport& r) {
    std::string s;
    s += "psnr_db=" + detail::format_double(r.psnr_db) + "\n";
    s += "ssim=" + detail::format_double(r.ssim) + "\n";
    s += "linf=" + detail::format_double(r.linf) + "\n";
    s += "mre=" + detail::format_double(r.mre) + "\n";
    if (r.seam) s += "seam=" + detail::format_double(*r.seam) + "\n";
    return s;
}

inline MetricReport parse_kv_report(const std::string& text) {
    MetricReport r;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const double val = detail::parse_double(line.substr(eq + 1));
        if (key == "psnr_db") r.psnr_db = val;
        else if (key == "ssim") r.ssim = val;
        else if (key == "linf") r.linf = val;
        else if (key == "mre") r.mre = val;
        else if (key == "seam") r.seam = val;
    }
    return r;
}

/// Structured form; non-finite numbers are written as the strings "inf"/"nan".
inline std::string to_json(const MetricReport& r) {
    nlohmann::json j;
    j["psnr_db"] = detail::json_number(r.psnr_db);
    j["ssim"] = detail::json_number(r.ssim);
    j["linf"] = detail::json_number(r.linf);
    j["mre"] = detail::json_number(r.mre);
    j["seam"] = r.seam ? detail::json_number(*r.seam) : nlohmann::json(nullptr);
    return j.dump(2) + "\n";
}

}  // namespace hiersr

#endif
