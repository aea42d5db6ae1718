#include "ddl/runtime/message.hpp"

namespace ddl::runtime {

std::size_t Message::payload_bits() const {
    // Analytic size for link-delay modeling: header + vclock + payload.
    std::size_t bytes = 7 + 10 * vclock.entries().size();
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, MetadataMsg>) {
                bytes += 8 + 16 * p.c_steps.size();
            } else if constexpr (std::is_same_v<T, PullRequestMsg>) {
                bytes += 12;
            } else if constexpr (std::is_same_v<T, FragmentPayloadMsg>) {
                bytes += 36 + 8 * p.values.size();
            } else if constexpr (std::is_same_v<T, GlobalFragmentMsg>) {
                bytes += 20 + 8 * p.values.size();
            } else if constexpr (std::is_same_v<T, RecoveryRequestMsg>) {
                bytes += 8;
            } else if constexpr (std::is_same_v<T, RecoveryPayloadMsg>) {
                bytes += 40 + 8 * (p.params.size() + p.opt_m.size() + p.opt_v.size());
            }
        },
        payload);
    return bytes * 8;
}

}  // namespace ddl::runtime
