// Reference 2x upscaler server for the model protocol. Serves a fixed kernel
// instead of a trained network; used for integration tests and as a template
// for real model servers.
//
//   hiersr_stub_server [--mode M] [--level N] [--listen PORT]
//
// Modes: nearest (default), linear, wrong-dims, error, nan, hang.
// Without --listen the server speaks on stdin/stdout. With --listen it
// accepts TCP connections one at a time on 127.0.0.1 and prints the bound
// port on stdout (PORT 0 picks a free one).

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "hiersr/model_protocol.hpp"
#include "hiersr/resample.hpp"

namespace {

hiersr::protocol::FrameHandler make_handler(const std::string& mode, std::optional<std::uint32_t> level) {
    return [mode, level](const hiersr::Volume& v, std::uint32_t req_level) -> hiersr::Volume {
        if (level && req_level != *level)
            throw std::runtime_error("this server serves level " + std::to_string(*level) + ", request asked for " +
                                     std::to_string(req_level));
        if (mode == "linear") return hiersr::upscale2x_linear(v);
        if (mode == "wrong-dims") return v;
        if (mode == "error") throw std::runtime_error("stub server configured to fail");
        if (mode == "nan") {
            hiersr::Volume out = hiersr::upscale2x_nearest(v);
            out.data()[0] = std::numeric_limits<float>::quiet_NaN();
            return out;
        }
        if (mode == "hang") std::this_thread::sleep_for(std::chrono::hours(1));
        return hiersr::upscale2x_nearest(v);
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"2x upscaler stub server"};
    std::string mode = "nearest";
    std::optional<std::uint32_t> level;
    std::optional<int> port;
    app.add_option("--mode", mode)->check(CLI::IsMember({"nearest", "linear", "wrong-dims", "error", "nan", "hang"}));
    app.add_option("--level", level);
    app.add_option("--listen", port);
    CLI11_PARSE(app, argc, argv);

    const auto handler = make_handler(mode, level);
    if (!port) {
        hiersr::protocol::serve_stream(STDIN_FILENO, STDOUT_FILENO, handler);
        return 0;
    }

    const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
    int one = 1;
    ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(*port));
    if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(lfd, 8) != 0) {
        std::perror("hiersr_stub_server: bind/listen");
        return 1;
    }
    socklen_t len = sizeof addr;
    ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &len);
    std::printf("%u\n", ntohs(addr.sin_port));
    std::fflush(stdout);
    for (;;) {
        const int cfd = ::accept(lfd, nullptr, nullptr);
        if (cfd < 0) continue;
        hiersr::protocol::serve_stream(cfd, cfd, handler);
        ::close(cfd);
    }
}
