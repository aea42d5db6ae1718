#pragma once

#include <cstdint>
#include <map>

namespace ddl::causality {

using WorkerId = std::uint16_t;
using Step = std::uint64_t;

/// Per-worker map worker -> last known local step. Entries only ever grow.
class VectorClock {
  public:
    Step get(WorkerId w) const {
        auto it = entries_.find(w);
        return it == entries_.end() ? 0 : it->second;
    }

    /// Raise worker w to step s; lowering is a protocol violation and is ignored.
    void advance(WorkerId w, Step s) {
        auto [it, inserted] = entries_.try_emplace(w, s);
        if (!inserted && it->second < s) it->second = s;
    }

    void merge_from(const VectorClock& other) {
        for (const auto& [w, s] : other.entries_) advance(w, s);
    }

    static VectorClock merged(const VectorClock& a, const VectorClock& b) {
        VectorClock out = a;
        out.merge_from(b);
        return out;
    }

    /// Componentwise <=.
    bool leq(const VectorClock& other) const {
        for (const auto& [w, s] : entries_)
            if (s > other.get(w)) return false;
        return true;
    }

    bool operator==(const VectorClock& other) const { return entries_ == other.entries_; }

    const std::map<WorkerId, Step>& entries() const { return entries_; }

  private:
    std::map<WorkerId, Step> entries_;
};

}  // namespace ddl::causality
