#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ddl/runtime/message.hpp"

namespace ddl::runtime::wire {

/// Frame: u32 length (of everything after it), u8 kind, vclock as
/// (u16 count, then per-entry u16 worker id + u64 step), payload bytes.
/// Fragment values inside payloads use the little-endian f64 block with the
/// (fragment_id: u32, element_count: u64) prefix.
std::vector<std::uint8_t> encode(const Message& msg);

/// Decodes one frame from the front of `bytes`; returns the message and the
/// bytes consumed, or nullopt when the buffer holds less than one frame.
std::optional<std::pair<Message, std::size_t>> decode(std::span<const std::uint8_t> bytes);

/// Blocking loopback-grade TCP transport carrying the frame format, for
/// multi-process demos. Returns a connected socket fd or throws.
int tcp_listen(std::uint16_t port);
int tcp_accept(int listen_fd);
int tcp_connect(const char* host, std::uint16_t port);
void tcp_send(int fd, const Message& msg);
std::optional<Message> tcp_recv(int fd);
void tcp_close(int fd);

}  // namespace ddl::runtime::wire
