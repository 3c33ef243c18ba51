#ifndef HIERSR_IO_HPP
#define HIERSR_IO_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "hiersr/detail/bytes.hpp"
#include "hiersr/error.hpp"
#include "hiersr/sr_octree.hpp"
#include "hiersr/volume.hpp"

namespace hiersr {

namespace fs = std::filesystem;

namespace detail {

inline Bytes read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(Errc::IoError, "cannot open " + p.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const fs::path& p, std::span<const std::uint8_t> bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot create " + p.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::IoError, "write failed for " + p.string());
}

inline std::string format_exact(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace detail

/// Payload file paired with a `.hvol` header: same stem, `.raw` extension.
inline fs::path payload_path_for(const fs::path& header) {
    fs::path p = header;
    p.replace_extension(".raw");
    return p;
}

/// Canonical text header for `v` referring to `payload_name`.
inline std::string volume_header(const Volume& v, const std::string& payload_name) {
    std::string h = "HVOL 1\n";
    h += "dims";
    for (std::size_t d : v.dims()) h += " " + std::to_string(d);
    h += "\ntype f32\n";
    h += "order row-major, last axis fastest\n";
    h += "payload " + payload_name + "\n";
    if (v.meta()) {
        h += "value_range " + detail::format_exact(v.meta()->min) + " " + detail::format_exact(v.meta()->max) + "\n";
        h += std::string("normalization ") +
             (v.meta()->mode == Normalization::linear ? "linear" : "log_then_linear") + "\n";
    }
    return h;
}

inline detail::Bytes encode_volume_payload(const Volume& v) {
    detail::ByteWriter w;
    w.f32s(v.data());
    return w.take();
}

/// Writes `<path>` (header) and its `.raw` payload.
inline void write_volume(const fs::path& path, const Volume& v) {
    const fs::path payload = payload_path_for(path);
    const std::string header = volume_header(v, payload.filename().string());
    detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(header.data()), header.size()));
    detail::write_file(payload, encode_volume_payload(v));
}

struct VolumeHeader {
    Dims dims;
    std::string payload;
    std::optional<ValueRange> meta;
};

inline VolumeHeader parse_volume_header(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "HVOL 1") fail(Errc::CorruptHeader, "missing 'HVOL 1' signature");
    VolumeHeader h;
    bool have_type = false, have_order = false;
    std::optional<std::pair<double, double>> range;
    std::optional<Normalization> mode;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "dims") {
            std::size_t d;
            while (ls >> d) h.dims.push_back(d);
            if (!ls.eof()) fail(Errc::CorruptHeader, "bad dims line: " + line);
        } else if (key == "type") {
            std::string t;
            ls >> t;
            if (t != "f32") fail(Errc::UnsupportedElementType, "element type '" + t + "' (only f32)");
            have_type = true;
        } else if (key == "order") {
            if (line != "order row-major, last axis fastest") fail(Errc::CorruptHeader, "unsupported order: " + line);
            have_order = true;
        } else if (key == "payload") {
            ls >> h.payload;
        } else if (key == "value_range") {
            std::string lo, hi;
            ls >> lo >> hi;
            try {
                range = std::pair{std::stod(lo), std::stod(hi)};
            } catch (const std::exception&) {
                fail(Errc::CorruptHeader, "bad value_range: " + line);
            }
        } else if (key == "normalization") {
            std::string m;
            ls >> m;
            if (m == "linear") mode = Normalization::linear;
            else if (m == "log_then_linear") mode = Normalization::log_then_linear;
            else fail(Errc::CorruptHeader, "unknown normalization '" + m + "'");
        } else {
            fail(Errc::CorruptHeader, "unknown header key '" + key + "'");
        }
    }
    if (h.dims.size() != 2 && h.dims.size() != 3) fail(Errc::CorruptHeader, "dims must list 2 or 3 axes");
    for (std::size_t d : h.dims)
        if (d == 0) fail(Errc::CorruptHeader, "zero axis size");
    if (!have_type) fail(Errc::CorruptHeader, "missing type");
    if (!have_order) fail(Errc::CorruptHeader, "missing order");
    if (h.payload.empty()) fail(Errc::CorruptHeader, "missing payload");
    if (range.has_value() != mode.has_value()) fail(Errc::CorruptHeader, "value_range and normalization go together");
    if (range) h.meta = ValueRange{range->first, range->second, *mode};
    return h;
}

inline Volume read_volume(const fs::path& path) {
    const auto hb = detail::read_file(path);
    const VolumeHeader h = parse_volume_header(std::string(hb.begin(), hb.end()));
    const auto payload = detail::read_file(path.parent_path() / h.payload);
    const std::size_t n = product(h.dims);
    if (payload.size() != 4 * n)
        fail(Errc::HeaderPayloadMismatch, "header dims " + to_string(h.dims) + " need " + std::to_string(4 * n) +
                                              " payload bytes, found " + std::to_string(payload.size()));
    detail::ByteReader r(payload, Errc::HeaderPayloadMismatch);
    return Volume(h.dims, r.f32s(n), h.meta);
}

// ---------------------------------------------------------------------------
// SR-octree file (.sroc)

inline constexpr char kTreeMagic[4] = {'S', 'R', 'O', 'C'};
inline constexpr std::uint16_t kTreeVersion = 1;

namespace detail {

inline void encode_node(ByteWriter& w, const SRNode& n) {
    w.u8(n.is_leaf() ? 1 : 0);
    for (auto o : n.region.origin) w.u64(o);
    for (auto e : n.region.extent) w.u64(e);
    w.u32(static_cast<std::uint32_t>(n.level));
    if (n.is_leaf())
        w.f32s(n.data->data());
    else
        for (const auto& c : n.children) encode_node(w, c);
}

inline SRNode decode_node(ByteReader& r, const Dims& full, int depth) {
    if (depth > 64) fail(Errc::InvariantViolation, "tree deeper than 64 levels");
    const std::size_t nd = full.size();
    const std::uint8_t flags = r.u8();
    if (flags > 1) fail(Errc::CorruptHeader, "unknown node flags " + std::to_string(flags));
    SRNode n;
    n.region.origin.resize(nd);
    n.region.extent.resize(nd);
    for (auto& o : n.region.origin) o = r.u64();
    for (auto& e : n.region.extent) e = r.u64();
    const std::uint32_t level = r.u32();
    if (level > 30) fail(Errc::InvariantViolation, "node level " + std::to_string(level) + " out of range");
    n.level = static_cast<int>(level);
    if (!region_within(n.region, full))
        fail(Errc::InvariantViolation, "node region " + to_string(n.region) + " lies outside the domain");
    if (flags & 1) {
        const std::size_t f = pow2(n.level);
        for (auto e : n.region.extent)
            if (e % f != 0) fail(Errc::InvariantViolation, "leaf extent not divisible by 2^level");
        const Dims stored = region_at_level(n.region, n.level).extent;
        const std::size_t count = product(stored);
        r.need_count(count, 4);
        auto values = r.f32s(count);
        for (float x : values)
            if (!std::isfinite(x)) fail(Errc::InvariantViolation, "leaf data must be finite");
        n.data = Volume(stored, std::move(values));
    } else {
        const std::size_t kids = std::size_t{1} << nd;
        n.children.reserve(kids);
        for (std::size_t i = 0; i < kids; ++i) n.children.push_back(decode_node(r, full, depth + 1));
    }
    return n;
}

}  // namespace detail

inline detail::Bytes encode_tree(const SROctree& t) {
    detail::ByteWriter w;
    for (char c : kTreeMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u16(kTreeVersion);
    w.u8(static_cast<std::uint8_t>(t.full_dims.size()));
    for (auto d : t.full_dims) w.u64(d);
    w.f64(t.config.epsilon);
    w.u32(t.config.min_chunk);
    w.u32(t.config.min_level);
    w.u32(t.config.max_level);
    w.u8(static_cast<std::uint8_t>(t.config.downscaler));
    detail::encode_node(w, t.root);
    return w.take();
}

/// Decodes and validates every tree invariant.
inline SROctree decode_tree(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, Errc::CorruptHeader);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kTreeMagic, 4) != 0)
        fail(Errc::BadMagic, "not an SR-octree file");
    r.raw(4);
    const std::uint16_t version = r.u16();
    if (version != kTreeVersion) fail(Errc::VersionUnsupported, "tree file version " + std::to_string(version));
    const std::uint8_t nd = r.u8();
    if (nd != 2 && nd != 3) fail(Errc::InvariantViolation, "tree must be 2D or 3D, got ndim " + std::to_string(nd));
    SROctree t;
    t.full_dims.resize(nd);
    for (auto& d : t.full_dims) {
        d = r.u64();
        if (d == 0 || d > (std::uint64_t{1} << 32)) fail(Errc::InvariantViolation, "bad domain size");
    }
    t.config.epsilon = r.f64();
    t.config.min_chunk = r.u32();
    t.config.min_level = r.u32();
    t.config.max_level = r.u32();
    const std::uint8_t ds = r.u8();
    if (ds > 1) fail(Errc::CorruptHeader, "unknown downscaler id " + std::to_string(ds));
    t.config.downscaler = static_cast<Downscaler>(ds);
    try {
        t.config.validate();
    } catch (const Error& e) {
        fail(Errc::InvariantViolation, e.what());
    }
    t.root = detail::decode_node(r, t.full_dims, 0);
    if (r.remaining() != 0) fail(Errc::CorruptHeader, std::to_string(r.remaining()) + " trailing bytes");
    validate_tree(t);
    return t;
}

inline void write_tree(const fs::path& path, const SROctree& t) { detail::write_file(path, encode_tree(t)); }

inline SROctree read_tree(const fs::path& path) { return decode_tree(detail::read_file(path)); }

}  // namespace hiersr

#endif
