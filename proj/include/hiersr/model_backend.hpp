#ifndef HIERSR_MODEL_BACKEND_HPP
#define HIERSR_MODEL_BACKEND_HPP

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "hiersr/error.hpp"
#include "hiersr/model_protocol.hpp"
#include "hiersr/resample.hpp"
#include "hiersr/volume.hpp"

namespace hiersr {

/// Where a level's model server lives.
struct ModelEndpoint {
    enum class Transport { exec, tcp };
    Transport transport = Transport::exec;
    std::string command;  ///< exec
    std::string host;     ///< tcp
    std::uint16_t port = 0;
    int level = 0;        ///< the level this model produces toward

    friend bool operator==(const ModelEndpoint&, const ModelEndpoint&) = default;
};

/// Parses `exec:<command>@level=<i>` or `tcp:<host>:<port>@level=<i>`.
inline ModelEndpoint parse_endpoint(std::string_view spec) {
    const std::string_view tag = "@level=";
    const auto at = spec.rfind(tag);
    if (at == std::string_view::npos) fail(Errc::BadSpec, "missing @level=<i> in '" + std::string(spec) + "'");
    ModelEndpoint ep;
    const std::string level_text(spec.substr(at + tag.size()));
    if (level_text.empty() || level_text.find_first_not_of("0123456789") != std::string::npos ||
        level_text.size() > 2)
        fail(Errc::BadSpec, "bad level in '" + std::string(spec) + "'");
    ep.level = std::stoi(level_text);
    const std::string_view body = spec.substr(0, at);
    if (body.starts_with("exec:")) {
        ep.transport = ModelEndpoint::Transport::exec;
        ep.command = std::string(body.substr(5));
        if (ep.command.empty()) fail(Errc::BadSpec, "empty exec command");
        return ep;
    }
    if (body.starts_with("tcp:")) {
        ep.transport = ModelEndpoint::Transport::tcp;
        const std::string_view hp = body.substr(4);
        const auto colon = hp.rfind(':');
        if (colon == std::string_view::npos || colon == 0) fail(Errc::BadSpec, "expected tcp:<host>:<port>");
        ep.host = std::string(hp.substr(0, colon));
        const std::string port(hp.substr(colon + 1));
        if (port.empty() || port.size() > 5 || port.find_first_not_of("0123456789") != std::string::npos)
            fail(Errc::BadSpec, "bad port '" + port + "'");
        const int p = std::stoi(port);
        if (p < 1 || p > 65535) fail(Errc::BadSpec, "port out of range");
        ep.port = static_cast<std::uint16_t>(p);
        return ep;
    }
    fail(Errc::BadSpec, "unknown transport in '" + std::string(spec) + "'");
}

struct ModelOptions {
    std::chrono::milliseconds handshake_timeout{10'000};
    std::chrono::milliseconds request_timeout{120'000};
    std::size_t payload_cap = std::size_t{2} << 30;
};

/// Live connection to one level's model server. Exclusive use: one request
/// in flight at a time. Move-only; closing the handle ends the session and
/// reaps a spawned server.
class ModelHandle {
public:
    ModelHandle() = default;
    ModelHandle(const ModelHandle&) = delete;
    ModelHandle& operator=(const ModelHandle&) = delete;
    ModelHandle(ModelHandle&& o) noexcept { *this = std::move(o); }
    ModelHandle& operator=(ModelHandle&& o) noexcept {
        if (this != &o) {
            close();
            ep_ = std::move(o.ep_);
            opts_ = o.opts_;
            rfd_ = std::exchange(o.rfd_, -1);
            wfd_ = std::exchange(o.wfd_, -1);
            child_ = std::exchange(o.child_, -1);
            broken_ = o.broken_;
        }
        return *this;
    }
    ~ModelHandle() { close(); }

    static ModelHandle open(const ModelEndpoint& ep, const ModelOptions& opts = {}) {
        ModelHandle h;
        h.ep_ = ep;
        h.opts_ = opts;
        if (ep.transport == ModelEndpoint::Transport::exec)
            h.spawn();
        else
            h.dial();
        h.handshake();
        return h;
    }

    const ModelEndpoint& endpoint() const { return ep_; }
    int level() const { return ep_.level; }
    bool live() const { return rfd_ >= 0 && !broken_; }

    /// Sends `v` to the server and returns its 2x upscaled answer, after
    /// checking the response frame against the request.
    Volume infer2x(const Volume& v) {
        if (!live()) fail(Errc::ProtocolViolation, "model handle is closed or desynchronized");
        for (float x : v.data())
            if (!std::isfinite(x)) fail(Errc::NonFiniteValue, "model input contains NaN or Inf");
        if (4 * v.size() > opts_.payload_cap || 4 * v.size() * (std::size_t{1} << v.ndim()) > opts_.payload_cap)
            fail(Errc::PayloadTooLarge, "volume " + to_string(v.dims()) + " exceeds the payload cap");

        const auto deadline = protocol::Clock::now() + opts_.request_timeout;
        const auto level = static_cast<std::uint32_t>(ep_.level);
        protocol::Frame resp = exchange(protocol::Frame::carrying(protocol::FrameKind::request, level, v), deadline,
                                        Errc::Timeout);
        Dims want = v.dims();
        for (auto& d : want) d *= 2;
        if (resp.dims != want) {
            broken_ = true;  // the server is not speaking the contract; do not reuse
            fail(Errc::ProtocolViolation,
                 "response dims " + to_string(resp.dims) + ", expected " + to_string(want));
        }
        for (float x : resp.values)
            if (!std::isfinite(x)) fail(Errc::ProtocolViolation, "response contains NaN or Inf");
        return Volume(std::move(want), std::move(resp.values));
    }

    void close() {
        if (wfd_ >= 0 && wfd_ != rfd_) ::close(wfd_);
        if (rfd_ >= 0) ::close(rfd_);
        rfd_ = wfd_ = -1;
        if (child_ > 0) {
            // The server sees end of input; give it a moment before forcing.
            bool exited = false;
            for (int i = 0; i < 100 && !exited; ++i) {
                exited = ::waitpid(child_, nullptr, WNOHANG) == child_;
                if (!exited) std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
            ::kill(-child_, SIGKILL);
            if (!exited) ::waitpid(child_, nullptr, 0);
            child_ = -1;
        }
    }

private:
    void spawn() {
        int to_child[2], from_child[2];
        if (::pipe(to_child) != 0) fail(Errc::ConnectFailed, "pipe failed");
        if (::pipe(from_child) != 0) {
            ::close(to_child[0]);
            ::close(to_child[1]);
            fail(Errc::ConnectFailed, "pipe failed");
        }
        const pid_t pid = ::fork();
        if (pid < 0) fail(Errc::ConnectFailed, "fork failed");
        if (pid == 0) {
            ::setpgid(0, 0);  // own group, so close() also reaches anything the shell started
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::execl("/bin/sh", "sh", "-c", ep_.command.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::setpgid(pid, pid);
        ::close(to_child[0]);
        ::close(from_child[1]);
        ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
        ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
        child_ = pid;
        wfd_ = to_child[1];
        rfd_ = from_child[0];
    }

    void dial() {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        const std::string port = std::to_string(ep_.port);
        if (::getaddrinfo(ep_.host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr)
            fail(Errc::ConnectFailed, "cannot resolve " + ep_.host);
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
        const auto deadline = protocol::Clock::now() + opts_.handshake_timeout;
        for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
            const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
            if (fd < 0) continue;
            const int flags = ::fcntl(fd, F_GETFL);
            ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
            int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
            if (rc != 0 && errno == EINPROGRESS) {
                pollfd p{fd, POLLOUT, 0};
                if (::poll(&p, 1, protocol::detail::remaining_ms(deadline)) == 1) {
                    int err = 0;
                    socklen_t len = sizeof err;
                    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
                    rc = err == 0 ? 0 : -1;
                }
            }
            if (rc == 0) {
                ::fcntl(fd, F_SETFL, flags);
                int one = 1;
                ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
                rfd_ = wfd_ = fd;
                return;
            }
            ::close(fd);
        }
        fail(Errc::ConnectFailed, "cannot connect to " + ep_.host + ":" + port);
    }

    void handshake() {
        const auto deadline = protocol::Clock::now() + opts_.handshake_timeout;
        try {
            protocol::Frame resp = exchange(
                protocol::Frame::handshake(protocol::FrameKind::request, static_cast<std::uint32_t>(ep_.level)),
                deadline, Errc::HandshakeTimeout);
            if (!resp.dims.empty()) fail(Errc::ProtocolViolation, "handshake response must have ndim 0");
        } catch (const Error& e) {
            close();
            if (e.code() == Errc::HandshakeTimeout || e.code() == Errc::ServerError) throw;
            fail(Errc::ConnectFailed, std::string("handshake failed: ") + e.what());
        }
    }

    protocol::Frame exchange(const protocol::Frame& req, protocol::Clock::time_point deadline, Errc on_timeout) {
        try {
            const auto ws = protocol::write_frame(wfd_, req, deadline);
            if (ws == protocol::IoStatus::timeout) fail(on_timeout, "request not accepted before deadline");
            if (ws == protocol::IoStatus::eof) fail(Errc::ProtocolViolation, "server closed the connection");
            protocol::Frame resp;
            if (!protocol::read_frame(rfd_, resp, deadline, opts_.payload_cap, on_timeout))
                fail(Errc::ProtocolViolation, "server closed the connection");
            if (resp.kind == protocol::FrameKind::error) fail(Errc::ServerError, resp.message);
            if (resp.kind != protocol::FrameKind::response)
                fail(Errc::ProtocolViolation, "expected a response frame");
            if (resp.level != req.level)
                fail(Errc::ProtocolViolation, "response level " + std::to_string(resp.level) + " != request level " +
                                                  std::to_string(req.level));
            return resp;
        } catch (const Error& e) {
            // A server error frame leaves the stream aligned; anything else does not.
            if (e.code() != Errc::ServerError) broken_ = true;
            throw;
        }
    }

    ModelEndpoint ep_;
    ModelOptions opts_;
    int rfd_ = -1;
    int wfd_ = -1;
    pid_t child_ = -1;
    bool broken_ = false;
};

/// Parses `spec` and opens a handshaken connection.
inline ModelHandle connect(std::string_view spec, const ModelOptions& opts = {}) {
    return ModelHandle::open(parse_endpoint(spec), opts);
}

/// Adapts a handle to the Upscaler2x interface. The handle stays exclusive:
/// do not call the returned upscaler from several threads at once.
inline Upscaler2x model_upscaler(std::shared_ptr<ModelHandle> handle) {
    return [h = std::move(handle)](const Volume& v) { return h->infer2x(v); };
}

}  // namespace hiersr

#endif
