#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "ddl/causality/vclock.hpp"

namespace ddl::causality {

enum class EventKind : std::uint8_t {
    kStep,
    kMetadataRecv,
    kQuorumClose,
    kFragmentPull,
    kFragmentApply,
    kFailure,
    kRecovery,
    kSnapshotBegin,
    kSnapshotEnd,
};

const char* event_kind_name(EventKind k);
EventKind event_kind_from_name(const std::string& name);

/// One recorded causal event. Field use depends on the kind; unused fields
/// keep their defaults.
struct TapeEvent {
    std::uint64_t seq = 0;
    WorkerId worker = 0;
    Step local_step = 0;
    VectorClock vclock;
    EventKind kind = EventKind::kStep;

    std::int64_t round = -1;               // syncer step t
    std::int32_t fragment = -1;            // fragment id p
    std::vector<WorkerId> admitted;        // quorum_close: merged learner set
    std::uint64_t c_steps = 0;             // fragment_pull counters at pull time
    std::uint64_t c_tokens = 0;
    std::uint64_t tokens = 0;              // step: tokens processed this step
    WorkerId peer = 0;                     // recovery: transfer source
    Step peer_step = 0;                    // recovery: peer local step at transfer
    std::int64_t anchor = -1;              // recovery t_s / snapshot id
    std::string detail;                    // failure mode etc.
};

struct TapeHeader {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::uint32_t learners = 0;  // M
    std::uint32_t quorum = 0;    // K
    std::uint32_t sync_interval = 0;  // H
    std::uint32_t fragments = 0;      // P
    std::uint32_t overlap = 0;        // tau
};

/// The recorded or synthetic event stream. JSON Lines on disk: header first,
/// then one event per line.
class Tape {
  public:
    TapeHeader header;
    std::vector<TapeEvent> events;

    void save(const std::string& path) const;
    static Tape load(const std::string& path);
};

/// Append-only serialized sink. Streams events to disk as they arrive when
/// a path is given; always keeps the in-memory copy.
class TapeRecorder {
  public:
    explicit TapeRecorder(TapeHeader header, std::string path = "");
    ~TapeRecorder();

    void record(TapeEvent event);  // stamps seq
    const Tape& tape() const { return tape_; }
    Tape take();

  private:
    Tape tape_;
    std::string path_;
    std::unique_ptr<std::ostream> out_;
};

std::string event_to_json(const TapeEvent& e);
std::string header_to_json(const TapeHeader& h);

}  // namespace ddl::causality
