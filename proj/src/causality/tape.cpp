#include "ddl/causality/tape.hpp"

#include <fstream>

#include <json.hpp>

#include "ddl/errors.hpp"

namespace ddl::causality {

using nlohmann::json;

namespace {
const char* kKindNames[] = {"step",       "metadata_recv", "quorum_close",
                            "fragment_pull", "fragment_apply", "failure",
                            "recovery",   "snapshot_begin", "snapshot_end"};
}

const char* event_kind_name(EventKind k) { return kKindNames[static_cast<int>(k)]; }

EventKind event_kind_from_name(const std::string& name) {
    for (int i = 0; i < 9; ++i)
        if (name == kKindNames[i]) return static_cast<EventKind>(i);
    throw ReplayIntegrityError("unknown tape event kind '" + name + "'");
}

namespace {

json vclock_to_json(const VectorClock& vc) {
    json out = json::object();
    for (const auto& [w, s] : vc.entries()) out[std::to_string(w)] = s;
    return out;
}

VectorClock vclock_from_json(const json& j) {
    VectorClock vc;
    for (auto it = j.begin(); it != j.end(); ++it)
        vc.advance(static_cast<WorkerId>(std::stoul(it.key())), it.value().get<Step>());
    return vc;
}

json event_to_json_obj(const TapeEvent& e) {
    json j;
    j["seq"] = e.seq;
    j["worker"] = e.worker;
    j["local_step"] = e.local_step;
    j["vclock"] = vclock_to_json(e.vclock);
    j["kind"] = event_kind_name(e.kind);
    if (e.round >= 0) j["round"] = e.round;
    if (e.fragment >= 0) j["fragment"] = e.fragment;
    if (!e.admitted.empty()) j["admitted"] = e.admitted;
    if (e.c_steps) j["c_steps"] = e.c_steps;
    if (e.c_tokens) j["c_tokens"] = e.c_tokens;
    if (e.tokens) j["tokens"] = e.tokens;
    if (e.kind == EventKind::kRecovery) {
        j["peer"] = e.peer;
        j["peer_step"] = e.peer_step;
    }
    if (e.anchor >= 0) j["anchor"] = e.anchor;
    if (!e.detail.empty()) j["detail"] = e.detail;
    return j;
}

TapeEvent event_from_json(const json& j) {
    TapeEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.worker = j.at("worker").get<WorkerId>();
    e.local_step = j.at("local_step").get<Step>();
    e.vclock = vclock_from_json(j.at("vclock"));
    e.kind = event_kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("round")) e.round = j["round"].get<std::int64_t>();
    if (j.contains("fragment")) e.fragment = j["fragment"].get<std::int32_t>();
    if (j.contains("admitted")) e.admitted = j["admitted"].get<std::vector<WorkerId>>();
    if (j.contains("c_steps")) e.c_steps = j["c_steps"].get<std::uint64_t>();
    if (j.contains("c_tokens")) e.c_tokens = j["c_tokens"].get<std::uint64_t>();
    if (j.contains("tokens")) e.tokens = j["tokens"].get<std::uint64_t>();
    if (j.contains("peer")) e.peer = j["peer"].get<WorkerId>();
    if (j.contains("peer_step")) e.peer_step = j["peer_step"].get<Step>();
    if (j.contains("anchor")) e.anchor = j["anchor"].get<std::int64_t>();
    if (j.contains("detail")) e.detail = j["detail"].get<std::string>();
    return e;
}

json header_to_json_obj(const TapeHeader& h) {
    json j;
    j["config_hash"] = h.config_hash;
    j["seed"] = h.seed;
    j["learners"] = h.learners;
    j["quorum"] = h.quorum;
    j["sync_interval"] = h.sync_interval;
    j["fragments"] = h.fragments;
    j["overlap"] = h.overlap;
    return j;
}

TapeHeader header_from_json(const json& j) {
    TapeHeader h;
    h.config_hash = j.at("config_hash").get<std::uint64_t>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.learners = j.at("learners").get<std::uint32_t>();
    h.quorum = j.at("quorum").get<std::uint32_t>();
    h.sync_interval = j.at("sync_interval").get<std::uint32_t>();
    h.fragments = j.at("fragments").get<std::uint32_t>();
    h.overlap = j.at("overlap").get<std::uint32_t>();
    return h;
}

}  // namespace

std::string event_to_json(const TapeEvent& e) { return event_to_json_obj(e).dump(); }
std::string header_to_json(const TapeHeader& h) { return header_to_json_obj(h).dump(); }

void Tape::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open tape file for writing: " + path);
    out << header_to_json(header) << '\n';
    for (const auto& e : events) out << event_to_json(e) << '\n';
    if (!out) throw ConfigError("tape write failed: " + path);
}

Tape Tape::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open tape file: " + path);
    Tape tape;
    std::string line;
    if (!std::getline(in, line)) throw ReplayIntegrityError("tape has no header line");
    tape.header = header_from_json(json::parse(line));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        tape.events.push_back(event_from_json(json::parse(line)));
    }
    return tape;
}

TapeRecorder::TapeRecorder(TapeHeader header, std::string path) : path_(std::move(path)) {
    tape_.header = header;
    if (!path_.empty()) {
        auto file = std::make_unique<std::ofstream>(path_);
        if (!*file) throw ConfigError("cannot open tape file for writing: " + path_);
        *file << header_to_json(header) << '\n';
        out_ = std::move(file);
    }
}

TapeRecorder::~TapeRecorder() = default;

void TapeRecorder::record(TapeEvent event) {
    event.seq = tape_.events.size();
    if (out_) {
        *out_ << event_to_json(event) << '\n';
        out_->flush();
        // Tapes are the reproducibility contract; a failed write aborts the run.
        if (!*out_) throw ConfigError("tape stream write failed: " + path_);
    }
    tape_.events.push_back(std::move(event));
}

Tape TapeRecorder::take() { return std::move(tape_); }

}  // namespace ddl::causality
