#ifndef HIERSR_MODEL_PROTOCOL_HPP
#define HIERSR_MODEL_PROTOCOL_HPP

// Framed binary protocol spoken between the client and a 2x upscaler server.
//
//   magic   4 bytes  "HSR1"
//   kind    u8       0 = request, 1 = response, 2 = error
//   level   u32      level the model produces toward
//   ndim    u8
//   dims    ndim x u64
//   payload product(dims) x f32       (request / response)
//           dims[0] bytes of UTF-8    (error frames, ndim = 1)
//
// All integers and reals are little-endian. A frame with ndim = 0 carries no
// payload and is used for the handshake.

#include <poll.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "hiersr/detail/bytes.hpp"
#include "hiersr/error.hpp"
#include "hiersr/volume.hpp"

namespace hiersr::protocol {

inline constexpr char kMagic[4] = {'H', 'S', 'R', '1'};

enum class FrameKind : std::uint8_t { request = 0, response = 1, error = 2 };

struct Frame {
    FrameKind kind = FrameKind::request;
    std::uint32_t level = 0;
    Dims dims;                  ///< empty for handshake frames
    std::vector<float> values;  ///< request / response payload
    std::string message;        ///< error frames only

    static Frame handshake(FrameKind kind, std::uint32_t level) { return Frame{kind, level, {}, {}, {}}; }
    static Frame error(std::uint32_t level, std::string msg) {
        return Frame{FrameKind::error, level, {msg.size()}, {}, std::move(msg)};
    }
    static Frame carrying(FrameKind kind, std::uint32_t level, const Volume& v) {
        return Frame{kind, level, v.dims(), v.values(), {}};
    }
};

inline detail::Bytes encode_frame(const Frame& f) {
    detail::ByteWriter w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u8(static_cast<std::uint8_t>(f.kind));
    w.u32(f.level);
    if (f.kind == FrameKind::error) {
        w.u8(1);
        w.u64(f.message.size());
        w.raw(std::span(reinterpret_cast<const std::uint8_t*>(f.message.data()), f.message.size()));
        return w.take();
    }
    w.u8(static_cast<std::uint8_t>(f.dims.size()));
    for (auto d : f.dims) w.u64(d);
    w.f32s(f.values);
    return w.take();
}

inline constexpr std::size_t kFixedHeader = 10;  // magic + kind + level + ndim
inline constexpr std::size_t kMaxErrorMessage = std::size_t{1} << 20;

/// Parsed fixed part of a frame plus its dims; tells the reader how many
/// payload bytes follow.
struct FrameHead {
    FrameKind kind;
    std::uint32_t level;
    Dims dims;

    std::size_t payload_bytes() const {
        if (dims.empty()) return 0;
        if (kind == FrameKind::error) return dims[0];
        return 4 * product(dims);
    }
};

inline FrameHead parse_fixed_header(std::span<const std::uint8_t> b) {
    if (std::memcmp(b.data(), kMagic, 4) != 0) fail(Errc::ProtocolViolation, "bad frame magic");
    detail::ByteReader r(b.subspan(4), Errc::ProtocolViolation);
    FrameHead h;
    const std::uint8_t kind = r.u8();
    if (kind > 2) fail(Errc::ProtocolViolation, "unknown frame kind " + std::to_string(kind));
    h.kind = static_cast<FrameKind>(kind);
    h.level = r.u32();
    h.dims.resize(r.u8());
    if (h.dims.size() > 3) fail(Errc::ProtocolViolation, "frame ndim " + std::to_string(h.dims.size()));
    if (h.kind == FrameKind::error && h.dims.size() != 1)
        fail(Errc::ProtocolViolation, "error frame must have ndim 1");
    return h;
}

inline void parse_dims(FrameHead& h, std::span<const std::uint8_t> b, std::size_t payload_cap) {
    detail::ByteReader r(b, Errc::ProtocolViolation);
    for (auto& d : h.dims) d = r.u64();
    if (h.kind == FrameKind::error) {
        if (h.dims[0] > kMaxErrorMessage) fail(Errc::ProtocolViolation, "error message too long");
        return;
    }
    std::size_t n = 1;
    for (auto d : h.dims) {
        if (d == 0 || d > payload_cap) fail(Errc::ProtocolViolation, "frame dim out of range");
        n *= d;
        if (n > payload_cap / 4) fail(Errc::PayloadTooLarge, "frame payload exceeds cap");
    }
}

inline Frame finish_frame(FrameHead&& h, std::span<const std::uint8_t> payload) {
    Frame f;
    f.kind = h.kind;
    f.level = h.level;
    f.dims = std::move(h.dims);
    if (f.kind == FrameKind::error) {
        f.message.assign(payload.begin(), payload.end());
        return f;
    }
    if (f.dims.empty()) return f;
    detail::ByteReader r(payload, Errc::ProtocolViolation);
    f.values = r.f32s(product(f.dims));
    return f;
}

/// Decodes exactly one frame occupying all of `b`.
inline Frame decode_frame(std::span<const std::uint8_t> b, std::size_t payload_cap = std::size_t{1} << 31) {
    if (b.size() < kFixedHeader) fail(Errc::ProtocolViolation, "frame shorter than header");
    FrameHead h = parse_fixed_header(b.first(kFixedHeader));
    const std::size_t dims_bytes = 8 * h.dims.size();
    if (b.size() < kFixedHeader + dims_bytes) fail(Errc::ProtocolViolation, "frame truncated in dims");
    parse_dims(h, b.subspan(kFixedHeader, dims_bytes), payload_cap);
    const std::size_t want = h.payload_bytes();
    if (b.size() != kFixedHeader + dims_bytes + want) fail(Errc::ProtocolViolation, "payload length mismatch");
    return finish_frame(std::move(h), b.subspan(kFixedHeader + dims_bytes));
}

// ---------------------------------------------------------------------------
// Blocking I/O on file descriptors with deadlines.

using Clock = std::chrono::steady_clock;

enum class IoStatus { ok, eof, timeout };

namespace detail {

inline int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

// Blocks SIGPIPE for the current thread while writing to a pipe whose reader
// may be gone, and discards a SIGPIPE raised meanwhile.
class SigpipeGuard {
public:
    SigpipeGuard() {
        sigemptyset(&set_);
        sigaddset(&set_, SIGPIPE);
        sigset_t pending;
        sigpending(&pending);
        was_pending_ = sigismember(&pending, SIGPIPE) == 1;
        pthread_sigmask(SIG_BLOCK, &set_, &old_);
    }
    ~SigpipeGuard() {
        if (!was_pending_) {
            sigset_t pending;
            sigpending(&pending);
            if (sigismember(&pending, SIGPIPE) == 1) {
                timespec zero{0, 0};
                sigtimedwait(&set_, nullptr, &zero);
            }
        }
        pthread_sigmask(SIG_SETMASK, &old_, nullptr);
    }
    SigpipeGuard(const SigpipeGuard&) = delete;
    SigpipeGuard& operator=(const SigpipeGuard&) = delete;

private:
    sigset_t set_{};
    sigset_t old_{};
    bool was_pending_ = false;
};

}  // namespace detail

inline IoStatus read_exact(int fd, std::uint8_t* buf, std::size_t n, Clock::time_point deadline) {
    std::size_t got = 0;
    while (got < n) {
        pollfd p{fd, POLLIN, 0};
        const int pr = ::poll(&p, 1, detail::remaining_ms(deadline));
        if (pr < 0) {
            if (errno == EINTR) continue;
            fail(Errc::IoError, std::string("poll: ") + std::strerror(errno));
        }
        if (pr == 0) return IoStatus::timeout;
        const ssize_t r = ::read(fd, buf + got, n - got);
        if (r < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            if (errno == ECONNRESET) return IoStatus::eof;
            fail(Errc::IoError, std::string("read: ") + std::strerror(errno));
        }
        if (r == 0) return IoStatus::eof;
        got += static_cast<std::size_t>(r);
    }
    return IoStatus::ok;
}

inline IoStatus write_all(int fd, std::span<const std::uint8_t> bytes, Clock::time_point deadline) {
    detail::SigpipeGuard guard;
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        pollfd p{fd, POLLOUT, 0};
        const int pr = ::poll(&p, 1, detail::remaining_ms(deadline));
        if (pr < 0) {
            if (errno == EINTR) continue;
            fail(Errc::IoError, std::string("poll: ") + std::strerror(errno));
        }
        if (pr == 0) return IoStatus::timeout;
        const ssize_t w = ::write(fd, bytes.data() + sent, bytes.size() - sent);
        if (w < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            if (errno == EPIPE || errno == ECONNRESET) return IoStatus::eof;
            fail(Errc::IoError, std::string("write: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(w);
    }
    return IoStatus::ok;
}

/// Reads one frame. Returns false on a clean end of stream before any byte.
/// A stream that ends mid-frame is a ProtocolViolation; a deadline expiry
/// raises `on_timeout`.
inline bool read_frame(int fd, Frame& out, Clock::time_point deadline, std::size_t payload_cap,
                       Errc on_timeout = Errc::Timeout) {
    std::uint8_t fixed[kFixedHeader];
    auto check = [&](IoStatus s, bool first) {
        if (s == IoStatus::timeout) fail(on_timeout, "no complete frame before deadline");
        if (s == IoStatus::eof) {
            if (first) return false;
            fail(Errc::ProtocolViolation, "stream ended inside a frame");
        }
        return true;
    };
    // The first byte distinguishes a clean close from a truncated frame.
    if (!check(read_exact(fd, fixed, 1, deadline), true)) return false;
    check(read_exact(fd, fixed + 1, kFixedHeader - 1, deadline), false);
    FrameHead h = parse_fixed_header(std::span<const std::uint8_t>(fixed, kFixedHeader));
    std::vector<std::uint8_t> dims(8 * h.dims.size());
    if (!dims.empty()) check(read_exact(fd, dims.data(), dims.size(), deadline), false);
    parse_dims(h, dims, payload_cap);
    std::vector<std::uint8_t> payload(h.payload_bytes());
    if (!payload.empty()) check(read_exact(fd, payload.data(), payload.size(), deadline), false);
    out = finish_frame(std::move(h), payload);
    return true;
}

inline IoStatus write_frame(int fd, const Frame& f, Clock::time_point deadline) {
    return write_all(fd, encode_frame(f), deadline);
}

/// Produces the 2x output for one request; thrown exceptions become error frames.
using FrameHandler = std::function<Volume(const Volume& input, std::uint32_t level)>;

/// Server loop: answers frames from `in_fd` on `out_fd` until the stream
/// closes. Handshakes are echoed; malformed or failing requests get an error
/// frame. Returns after end of stream or an unrecoverable framing error.
inline void serve_stream(int in_fd, int out_fd, const FrameHandler& handler,
                         std::size_t payload_cap = std::size_t{1} << 31) {
    const auto forever = Clock::now() + std::chrono::hours(24 * 365);
    for (;;) {
        Frame req;
        try {
            if (!read_frame(in_fd, req, forever, payload_cap)) return;
        } catch (const std::exception& e) {
            write_frame(out_fd, Frame::error(0, e.what()), Clock::now() + std::chrono::seconds(10));
            return;  // stream position is unknown after a framing error
        }
        Frame resp;
        if (req.kind != FrameKind::request) {
            resp = Frame::error(req.level, "expected a request frame");
        } else if (req.dims.empty()) {
            resp = Frame::handshake(FrameKind::response, req.level);
        } else {
            try {
                Volume in(req.dims, std::move(req.values));
                resp = Frame::carrying(FrameKind::response, req.level, handler(in, req.level));
            } catch (const std::exception& e) {
                resp = Frame::error(req.level, e.what());
            }
        }
        if (write_frame(out_fd, resp, forever) != IoStatus::ok) return;
    }
}

}  // namespace hiersr::protocol

#endif
