#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <random>
#include <thread>

#include "hiersr/hier_sr.hpp"
#include "hiersr/model_backend.hpp"
#include "hiersr/model_protocol.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hiersr;
using namespace std::chrono_literals;

namespace {

std::string stub(const std::string& args) { return std::string("exec:") + HIERSR_STUB_SERVER + " " + args; }

// Listening socket on 127.0.0.1 with a kernel-chosen port.
struct Listener {
    int fd = -1;
    std::uint16_t port = 0;
    Listener() {
        fd = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in a{};
        a.sin_family = AF_INET;
        a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        ::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a);
        ::listen(fd, 1);
        socklen_t len = sizeof a;
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
        port = ntohs(a.sin_port);
    }
    ~Listener() {
        if (fd >= 0) ::close(fd);
    }
};

std::vector<std::uint8_t> hex(const std::string& s) {
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < s.size();) {
        if (s[i] == ' ') {
            ++i;
            continue;
        }
        out.push_back(static_cast<std::uint8_t>(std::stoul(s.substr(i, 2), nullptr, 16)));
        i += 2;
    }
    return out;
}

}  // namespace

TEST(Endpoint, Parse) {
    ModelEndpoint t = parse_endpoint("tcp:127.0.0.1:7741@level=0");
    EXPECT_EQ(t.transport, ModelEndpoint::Transport::tcp);
    EXPECT_EQ(t.host, "127.0.0.1");
    EXPECT_EQ(t.port, 7741);
    EXPECT_EQ(t.level, 0);
    ModelEndpoint e = parse_endpoint("exec:python serve.py --x=1@level=2");
    EXPECT_EQ(e.transport, ModelEndpoint::Transport::exec);
    EXPECT_EQ(e.command, "python serve.py --x=1");
    EXPECT_EQ(e.level, 2);
}

TEST(Endpoint, Malformed) {
    for (const char* bad : {"tcp:127.0.0.1:7741", "tcp:127.0.0.1@level=0", "tcp:host:99999@level=0",
                            "udp:host:1@level=0", "exec:@level=0", "tcp:h:1@level=x", "tcp::80@level=0"}) {
        SCOPED_TRACE(bad);
        EXPECT_ERRC(parse_endpoint(bad), Errc::BadSpec);
    }
}

TEST(Endpoint, UnreachablePort) {
    std::uint16_t port;
    {
        Listener l;  // grab a free port, then release it
        port = l.port;
    }
    EXPECT_ERRC(connect("tcp:127.0.0.1:" + std::to_string(port) + "@level=0"), Errc::ConnectFailed);
}

TEST(Protocol, GoldenRequestFrame) {
    const auto bytes = protocol::encode_frame(
        protocol::Frame::carrying(protocol::FrameKind::request, 0, Volume({2, 2}, {1, 2, 3, 4})));
    const auto golden = hex(
        "48535231 00 00000000 02 0200000000000000 0200000000000000 "
        "0000803F 00000040 00004040 00008040");
    EXPECT_EQ(bytes, golden);
    const protocol::Frame f = protocol::decode_frame(golden);
    EXPECT_EQ(f.kind, protocol::FrameKind::request);
    EXPECT_EQ(f.dims, (Dims{2, 2}));
    EXPECT_EQ(f.values, (std::vector<float>{1, 2, 3, 4}));
}

TEST(Protocol, HandshakeAndErrorFrames) {
    const auto hs = protocol::encode_frame(protocol::Frame::handshake(protocol::FrameKind::response, 3));
    EXPECT_EQ(hs, hex("48535231 01 03000000 00"));
    const auto err = protocol::encode_frame(protocol::Frame::error(1, "no"));
    EXPECT_EQ(err, hex("48535231 02 01000000 01 0200000000000000 6E6F"));
    EXPECT_EQ(protocol::decode_frame(err).message, "no");
}

TEST(Protocol, DecodeRejectsMalformed) {
    auto good = protocol::encode_frame(
        protocol::Frame::carrying(protocol::FrameKind::response, 0, Volume({2, 2}, {1, 2, 3, 4})));
    auto bad = good;
    bad[0] = 'X';
    EXPECT_ERRC(protocol::decode_frame(bad), Errc::ProtocolViolation);
    bad = good;
    bad.pop_back();
    EXPECT_ERRC(protocol::decode_frame(bad), Errc::ProtocolViolation);
    bad = good;
    bad[4] = 7;
    EXPECT_ERRC(protocol::decode_frame(bad), Errc::ProtocolViolation);
    EXPECT_ERRC(protocol::decode_frame(good, 8), Errc::PayloadTooLarge);
}

TEST(ExecBackend, NearestStubMatchesLocalKernel) {
    auto h = std::make_shared<ModelHandle>(connect(stub("--mode nearest") + "@level=0"));
    EXPECT_TRUE(h->live());
    std::mt19937_64 rng(71);
    for (Dims d : {Dims{3, 5}, Dims{4, 2, 6}}) {
        Volume v = oracle::random_volume(d, rng);
        EXPECT_TRUE(h->infer2x(v).same_bits(upscale2x_nearest(v)));
    }
    // as a hierarchy member
    UpscalerHierarchy hier;
    hier.set(0, model_upscaler(h));
    Volume v = oracle::random_volume({8, 8}, rng);
    EXPECT_TRUE(apply_hierarchy(hier, v, 2, 0).same_bits(upscale2x_nearest(upscale2x_linear(v))));
}

TEST(ExecBackend, CubeDoublesInEveryAxis) {
    ModelHandle h = connect(stub("--mode linear") + "@level=1");
    std::mt19937_64 rng(72);
    Volume v = oracle::random_volume({16, 16, 16}, rng);
    Volume out = h.infer2x(v);
    EXPECT_EQ(out.dims(), (Dims{32, 32, 32}));
    EXPECT_TRUE(out.same_bits(upscale2x_linear(v)));
}

TEST(ExecBackend, WrongDimsIsProtocolViolation) {
    ModelHandle h = connect(stub("--mode wrong-dims") + "@level=0");
    EXPECT_ERRC(h.infer2x(Volume::zeros({4, 4})), Errc::ProtocolViolation);
    EXPECT_FALSE(h.live());
}

TEST(ExecBackend, NonFiniteResponseIsProtocolViolation) {
    ModelHandle h = connect(stub("--mode nan") + "@level=0");
    EXPECT_ERRC(h.infer2x(Volume::zeros({4, 4})), Errc::ProtocolViolation);
}

TEST(ExecBackend, ServerErrorKeepsStreamUsable) {
    ModelHandle h = connect(stub("--mode error") + "@level=0");
    EXPECT_ERRC(h.infer2x(Volume::zeros({4, 4})), Errc::ServerError);
    EXPECT_TRUE(h.live());
    EXPECT_ERRC(h.infer2x(Volume::zeros({2, 2})), Errc::ServerError);
}

TEST(ExecBackend, WrongLevelRequestGetsErrorFrame) {
    // the stub answers handshakes for any level and rejects mismatched requests
    ModelHandle h = connect(stub("--mode nearest --level 1") + "@level=0");
    EXPECT_ERRC(h.infer2x(Volume::zeros({2, 2})), Errc::ServerError);
}

TEST(ExecBackend, MissingCommandFailsToConnect) {
    EXPECT_ERRC(connect("exec:/nonexistent/server@level=0"), Errc::ConnectFailed);
}

TEST(ExecBackend, RequestTimeout) {
    ModelOptions opts;
    opts.request_timeout = 300ms;
    ModelHandle h = connect(stub("--mode hang") + "@level=0", opts);
    const auto t0 = std::chrono::steady_clock::now();
    EXPECT_ERRC(h.infer2x(Volume::zeros({2, 2})), Errc::Timeout);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);
    EXPECT_FALSE(h.live());
}

TEST(ExecBackend, HandshakeTimeout) {
    ModelOptions opts;
    opts.handshake_timeout = 300ms;
    EXPECT_ERRC(connect("exec:sleep 5@level=0", opts), Errc::HandshakeTimeout);
}

TEST(ExecBackend, PayloadCap) {
    ModelOptions opts;
    opts.payload_cap = 64;
    ModelHandle h = connect(stub("") + "@level=0", opts);
    EXPECT_ERRC(h.infer2x(Volume::zeros({4, 4})), Errc::PayloadTooLarge);
    EXPECT_NO_THROW(h.infer2x(Volume::zeros({2, 2})));
}

TEST(TcpBackend, InProcessServer) {
    Listener l;
    std::thread server([&] {
        const int c = ::accept(l.fd, nullptr, nullptr);
        protocol::serve_stream(c, c, [](const Volume& v, std::uint32_t) { return upscale2x_linear(v); });
        ::close(c);
    });
    {
        ModelHandle h = connect("tcp:127.0.0.1:" + std::to_string(l.port) + "@level=0");
        std::mt19937_64 rng(73);
        for (int i = 0; i < 5; ++i) {
            Volume v = oracle::random_volume({4 + std::size_t(i), 6}, rng);
            EXPECT_TRUE(h.infer2x(v).same_bits(upscale2x_linear(v)));
        }
    }
    server.join();
}

TEST(TcpBackend, StubServerOverTcp) {
    // start the stub in listen mode and read its chosen port from stdout
    int out[2];
    ASSERT_EQ(::pipe(out), 0);
    const pid_t pid = ::fork();
    if (pid == 0) {
        ::dup2(out[1], STDOUT_FILENO);
        ::close(out[0]);
        ::execl(HIERSR_STUB_SERVER, HIERSR_STUB_SERVER, "--listen", "0", static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(out[1]);
    std::string line;
    char c;
    while (::read(out[0], &c, 1) == 1 && c != '\n') line += c;
    ::close(out[0]);
    ASSERT_FALSE(line.empty());
    {
        ModelHandle h = connect("tcp:127.0.0.1:" + line + "@level=0");
        Volume v({2, 2}, {1, 2, 3, 4});
        EXPECT_TRUE(h.infer2x(v).same_bits(upscale2x_nearest(v)));
    }
    ::kill(pid, SIGTERM);
    ::waitpid(pid, nullptr, 0);
}
