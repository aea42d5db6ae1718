#include "ddl/runtime/wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "ddl/core/bytes.hpp"
#include "ddl/core/model.hpp"
#include "ddl/errors.hpp"

namespace ddl::runtime::wire {

namespace {

void put_vclock(core::ByteWriter& w, const VectorClock& vc) {
    w.u16(static_cast<std::uint16_t>(vc.entries().size()));
    for (const auto& [wk, s] : vc.entries()) {
        w.u16(wk);
        w.u64(s);
    }
}

VectorClock get_vclock(core::ByteReader& r) {
    VectorClock vc;
    std::uint16_t n = r.u16();
    for (std::uint16_t i = 0; i < n; ++i) {
        WorkerId wk = r.u16();
        Step s = r.u64();
        vc.advance(wk, s);
    }
    return vc;
}

void put_fragment_block(core::ByteWriter& w, std::uint32_t fragment,
                        std::span<const double> values) {
    std::vector<std::uint8_t> block;
    core::encode_fragment_payload(fragment, values, block);
    for (std::uint8_t b : block) w.u8(b);
}

std::pair<std::uint32_t, std::vector<double>> get_fragment_block(core::ByteReader& r,
                                                                 std::span<const std::uint8_t> all) {
    std::uint32_t fragment = 0;
    std::vector<double> values;
    std::size_t used = core::decode_fragment_payload(all.subspan(r.position()), fragment, values);
    for (std::size_t i = 0; i < used; ++i) r.u8();
    return {fragment, std::move(values)};
}

}  // namespace

std::vector<std::uint8_t> encode(const Message& msg) {
    core::ByteWriter w;
    w.u8(static_cast<std::uint8_t>(msg.kind()));
    put_vclock(w, msg.vclock);
    w.u16(msg.sender);
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, MetadataMsg>) {
                w.u64(p.t_m);
                w.u64_vec(p.c_steps);
                w.u64_vec(p.c_tokens);
            } else if constexpr (std::is_same_v<T, PullRequestMsg>) {
                w.i64(p.round);
                w.u32(p.fragment);
            } else if constexpr (std::is_same_v<T, FragmentPayloadMsg>) {
                w.i64(p.round);
                w.u64(p.t_m);
                w.u64(p.c_steps);
                w.u64(p.c_tokens);
                put_fragment_block(w, p.fragment, p.values);
            } else if constexpr (std::is_same_v<T, GlobalFragmentMsg>) {
                w.i64(p.round);
                put_fragment_block(w, p.fragment, p.values);
            } else if constexpr (std::is_same_v<T, RecoveryRequestMsg>) {
                w.i64(p.anchor);
            } else if constexpr (std::is_same_v<T, RecoveryPayloadMsg>) {
                w.i64(p.anchor);
                w.u64(p.peer_step);
                w.f64_vec(p.params);
                w.f64_vec(p.opt_m);
                w.f64_vec(p.opt_v);
                w.u64(p.opt_steps);
            }
        },
        msg.payload);

    auto body = w.take();
    core::ByteWriter framed;
    framed.u32(static_cast<std::uint32_t>(body.size()));
    for (std::uint8_t b : body) framed.u8(b);
    return framed.take();
}

std::optional<std::pair<Message, std::size_t>> decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) return std::nullopt;
    std::uint32_t len = static_cast<std::uint32_t>(bytes[0]) |
                        (static_cast<std::uint32_t>(bytes[1]) << 8) |
                        (static_cast<std::uint32_t>(bytes[2]) << 16) |
                        (static_cast<std::uint32_t>(bytes[3]) << 24);
    if (bytes.size() < 4 + static_cast<std::size_t>(len)) return std::nullopt;
    auto body = bytes.subspan(4, len);
    core::ByteReader r(body);
    Message msg;
    MsgKind kind = static_cast<MsgKind>(r.u8());
    msg.vclock = get_vclock(r);
    msg.sender = r.u16();
    switch (kind) {
        case MsgKind::kMetadata: {
            MetadataMsg p;
            p.t_m = r.u64();
            p.c_steps = r.u64_vec();
            p.c_tokens = r.u64_vec();
            msg.payload = std::move(p);
            break;
        }
        case MsgKind::kFragmentPullRequest: {
            PullRequestMsg p;
            p.round = r.i64();
            p.fragment = r.u32();
            msg.payload = p;
            break;
        }
        case MsgKind::kFragmentPayload: {
            FragmentPayloadMsg p;
            p.round = r.i64();
            p.t_m = r.u64();
            p.c_steps = r.u64();
            p.c_tokens = r.u64();
            auto [fragment, values] = get_fragment_block(r, body);
            p.fragment = fragment;
            p.values = std::move(values);
            msg.payload = std::move(p);
            break;
        }
        case MsgKind::kGlobalFragment: {
            GlobalFragmentMsg p;
            p.round = r.i64();
            auto [fragment, values] = get_fragment_block(r, body);
            p.fragment = fragment;
            p.values = std::move(values);
            msg.payload = std::move(p);
            break;
        }
        case MsgKind::kRecoveryRequest: {
            RecoveryRequestMsg p;
            p.anchor = r.i64();
            msg.payload = p;
            break;
        }
        case MsgKind::kRecoveryPayload: {
            RecoveryPayloadMsg p;
            p.anchor = r.i64();
            p.peer_step = r.u64();
            p.params = r.f64_vec();
            p.opt_m = r.f64_vec();
            p.opt_v = r.f64_vec();
            p.opt_steps = r.u64();
            msg.payload = std::move(p);
            break;
        }
        default:
            throw DimensionError("unknown wire message kind");
    }
    return std::make_pair(std::move(msg), 4 + static_cast<std::size_t>(len));
}

int tcp_listen(std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ConfigError("socket() failed");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        throw ConfigError("bind() failed");
    }
    if (::listen(fd, 8) != 0) {
        ::close(fd);
        throw ConfigError("listen() failed");
    }
    return fd;
}

int tcp_accept(int listen_fd) {
    int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd < 0) throw ConfigError("accept() failed");
    return fd;
}

int tcp_connect(const char* host, std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ConfigError("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host, &addr.sin_addr) != 1) {
        ::close(fd);
        throw ConfigError("bad host address");
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        throw ConfigError("connect() failed");
    }
    return fd;
}

namespace {
bool read_exact(int fd, std::uint8_t* buf, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
        ssize_t r = ::read(fd, buf + got, n - got);
        if (r <= 0) return false;
        got += static_cast<std::size_t>(r);
    }
    return true;
}
}  // namespace

void tcp_send(int fd, const Message& msg) {
    auto bytes = encode(msg);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        ssize_t w = ::write(fd, bytes.data() + sent, bytes.size() - sent);
        if (w <= 0) throw ConfigError("tcp write failed");
        sent += static_cast<std::size_t>(w);
    }
}

std::optional<Message> tcp_recv(int fd) {
    std::uint8_t head[4];
    if (!read_exact(fd, head, 4)) return std::nullopt;
    std::uint32_t len = static_cast<std::uint32_t>(head[0]) |
                        (static_cast<std::uint32_t>(head[1]) << 8) |
                        (static_cast<std::uint32_t>(head[2]) << 16) |
                        (static_cast<std::uint32_t>(head[3]) << 24);
    std::vector<std::uint8_t> frame(4 + len);
    std::memcpy(frame.data(), head, 4);
    if (!read_exact(fd, frame.data() + 4, len)) return std::nullopt;
    auto decoded = decode(frame);
    if (!decoded) throw DimensionError("short tcp frame");
    return std::move(decoded->first);
}

void tcp_close(int fd) { ::close(fd); }

}  // namespace ddl::runtime::wire
