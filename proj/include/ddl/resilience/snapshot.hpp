#pragma once

#include <map>
#include <mutex>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "ddl/runtime/services.hpp"

namespace ddl::resilience {

using runtime::Message;
using runtime::WorkerId;

/// A finalized consistent snapshot loaded back from disk.
struct SnapshotBundle {
    std::int64_t snapshot_id = 0;
    std::uint64_t config_hash = 0;
    std::vector<std::uint8_t> syncer_state;
    std::map<WorkerId, std::vector<std::uint8_t>> learner_states;
    std::map<WorkerId, std::uint64_t> ckpt_seq;  // tape position of each checkpoint
    std::vector<WorkerId> absent;
    std::vector<Message> in_flight;
};

/// Writes one directory per snapshot id: worker blobs, serialized in-flight
/// messages and a JSON manifest with FNV-64 checksums. Workers persist
/// asynchronously with respect to each other; the manifest appears last, so
/// a snapshot without one is incomplete and is ignored by discovery.
class DirectorySink : public runtime::SnapshotSink {
  public:
    DirectorySink(std::string root, std::uint64_t config_hash);

    void learner_checkpoint(WorkerId learner, std::int64_t snapshot_id,
                            std::vector<std::uint8_t> state, std::uint64_t ckpt_seq) override;
    void syncer_checkpoint(std::int64_t snapshot_id, std::vector<std::uint8_t> state) override;
    void syncer_snapshot_complete(std::int64_t snapshot_id, const std::vector<WorkerId>& absent,
                                  const std::vector<Message>& in_flight) override;

    std::int64_t last_complete() const { return last_complete_; }
    const std::vector<std::int64_t>& completed() const { return completed_; }

  private:
    std::string dir_of(std::int64_t snapshot_id) const;
    std::mutex mu_;  // workers checkpoint concurrently in live mode
    std::string root_;
    std::uint64_t config_hash_;
    std::int64_t last_complete_ = -1;
    std::vector<std::int64_t> completed_;
    // staged per-snapshot bookkeeping until completion
    struct Pending {
        std::vector<WorkerId> learners;
        std::map<WorkerId, std::uint64_t> ckpt_seq;
        std::map<std::string, std::uint64_t> checksums;
    };
    std::map<std::int64_t, Pending> pending_;
};

/// Discovery + verified load. Throws SnapshotIntegrityError on checksum or
/// manifest damage.
std::vector<std::int64_t> list_snapshots(const std::string& root);
SnapshotBundle load_snapshot(const std::string& root, std::int64_t snapshot_id);
SnapshotBundle load_latest_snapshot(const std::string& root);

std::vector<std::uint8_t> encode_messages(const std::vector<Message>& msgs);
std::vector<Message> decode_messages(std::span<const std::uint8_t> bytes);

}  // namespace ddl::resilience
