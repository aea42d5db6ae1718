#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "ddl/causality/vclock.hpp"

namespace ddl::runtime {

using causality::Step;
using causality::VectorClock;
using causality::WorkerId;

using VirtualTime = std::int64_t;  // nanoseconds
constexpr double kNsPerSecond = 1e9;

inline VirtualTime seconds_to_ns(double s) {
    return static_cast<VirtualTime>(s * kNsPerSecond + 0.5);
}
inline double ns_to_seconds(VirtualTime t) { return static_cast<double>(t) / kNsPerSecond; }

struct MetadataMsg {
    Step t_m = 0;
    std::vector<std::uint64_t> c_steps;   // one per fragment
    std::vector<std::uint64_t> c_tokens;
};

struct PullRequestMsg {
    std::int64_t round = 0;
    std::uint32_t fragment = 0;
};

struct FragmentPayloadMsg {
    std::int64_t round = 0;
    std::uint32_t fragment = 0;
    Step t_m = 0;  // learner step the values snapshot
    std::uint64_t c_steps = 0;
    std::uint64_t c_tokens = 0;
    std::vector<double> values;
};

struct GlobalFragmentMsg {
    std::int64_t round = 0;
    std::uint32_t fragment = 0;
    std::vector<double> values;
};

struct RecoveryRequestMsg {
    std::int64_t anchor = 0;  // syncer step t_s the newcomer observed
};

struct RecoveryPayloadMsg {
    std::int64_t anchor = 0;
    Step peer_step = 0;
    std::vector<double> params;
    std::vector<double> opt_m;
    std::vector<double> opt_v;
    std::uint64_t opt_steps = 0;
};

using Payload = std::variant<MetadataMsg, PullRequestMsg, FragmentPayloadMsg, GlobalFragmentMsg,
                             RecoveryRequestMsg, RecoveryPayloadMsg>;

enum class MsgKind : std::uint8_t {
    kMetadata = 0,
    kFragmentPullRequest = 1,
    kFragmentPayload = 2,
    kGlobalFragment = 3,
    kRecoveryRequest = 4,
    kRecoveryPayload = 5,
};

/// Every message carries the sender's vector clock; the snapshot marker is
/// the clock itself crossing a checkpoint boundary, not a separate message.
struct Message {
    WorkerId sender = 0;
    VectorClock vclock;
    Payload payload;

    MsgKind kind() const { return static_cast<MsgKind>(payload.index()); }
    std::size_t payload_bits() const;
};

}  // namespace ddl::runtime
