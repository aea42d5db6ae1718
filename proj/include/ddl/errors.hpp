#pragma once

#include <stdexcept>
#include <string>

namespace ddl {

// Exit-code contract: config errors map to 2, replay integrity to 3,
// snapshot integrity to 4. Everything else is a plain failure.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InfeasiblePlanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UndefinedWeightError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoQuorumError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateDirectionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ReplayIntegrityError : std::runtime_error {
    ReplayIntegrityError(const std::string& what, long long seq = -1)
        : std::runtime_error(what), offending_seq(seq) {}
    long long offending_seq;
};

struct SnapshotIntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RecoveryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ddl
