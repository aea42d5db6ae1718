#include "ddl/resilience/snapshot.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ddl/causality/rng.hpp"
#include "ddl/errors.hpp"
#include "ddl/runtime/wire.hpp"

namespace ddl::resilience {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t bytes_checksum(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = rng::kFnvOffset;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= rng::kFnvPrime;
    }
    return h;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SnapshotIntegrityError("cannot write snapshot file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw SnapshotIntegrityError("snapshot write failed: " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SnapshotIntegrityError("cannot read snapshot file: " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<std::uint8_t> encode_messages(const std::vector<Message>& msgs) {
    std::vector<std::uint8_t> out;
    for (const auto& m : msgs) {
        auto frame = runtime::wire::encode(m);
        out.insert(out.end(), frame.begin(), frame.end());
    }
    return out;
}

std::vector<Message> decode_messages(std::span<const std::uint8_t> bytes) {
    std::vector<Message> out;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        auto decoded = runtime::wire::decode(bytes.subspan(pos));
        if (!decoded) throw SnapshotIntegrityError("truncated in-flight message block");
        out.push_back(std::move(decoded->first));
        pos += decoded->second;
    }
    return out;
}

DirectorySink::DirectorySink(std::string root, std::uint64_t config_hash)
    : root_(std::move(root)), config_hash_(config_hash) {
    fs::create_directories(root_);
}

std::string DirectorySink::dir_of(std::int64_t snapshot_id) const {
    return root_ + "/snapshot_" + std::to_string(snapshot_id);
}

void DirectorySink::learner_checkpoint(WorkerId learner, std::int64_t snapshot_id,
                                       std::vector<std::uint8_t> state, std::uint64_t ckpt_seq) {
    std::lock_guard<std::mutex> lock(mu_);
    fs::create_directories(dir_of(snapshot_id));
    std::string name = "learner_" + std::to_string(learner) + ".bin";
    write_file(dir_of(snapshot_id) + "/" + name, state);
    auto& p = pending_[snapshot_id];
    p.learners.push_back(learner);
    p.ckpt_seq[learner] = ckpt_seq;
    p.checksums[name] = bytes_checksum(state);
}

void DirectorySink::syncer_checkpoint(std::int64_t snapshot_id, std::vector<std::uint8_t> state) {
    std::lock_guard<std::mutex> lock(mu_);
    fs::create_directories(dir_of(snapshot_id));
    write_file(dir_of(snapshot_id) + "/syncer.bin", state);
    pending_[snapshot_id].checksums["syncer.bin"] = bytes_checksum(state);
}

void DirectorySink::syncer_snapshot_complete(std::int64_t snapshot_id,
                                             const std::vector<WorkerId>& absent,
                                             const std::vector<Message>& in_flight) {
    std::lock_guard<std::mutex> lock(mu_);
    auto& p = pending_[snapshot_id];
    auto inflight_bytes = encode_messages(in_flight);
    write_file(dir_of(snapshot_id) + "/in_flight.bin", inflight_bytes);
    p.checksums["in_flight.bin"] = bytes_checksum(inflight_bytes);

    json manifest;
    manifest["snapshot_id"] = snapshot_id;
    manifest["config_hash"] = config_hash_;
    manifest["absent"] = absent;
    json files = json::object();
    for (const auto& [name, sum] : p.checksums) files[name] = sum;
    manifest["files"] = files;
    json seqs = json::object();
    for (const auto& [learner, seq] : p.ckpt_seq) seqs[std::to_string(learner)] = seq;
    manifest["ckpt_seq"] = seqs;

    std::ofstream out(dir_of(snapshot_id) + "/manifest.json");
    if (!out) throw SnapshotIntegrityError("cannot write snapshot manifest");
    out << manifest.dump(2) << '\n';
    out.flush();
    last_complete_ = snapshot_id;
    completed_.push_back(snapshot_id);
    pending_.erase(snapshot_id);
}

std::vector<std::int64_t> list_snapshots(const std::string& root) {
    std::vector<std::int64_t> ids;
    if (!fs::exists(root)) return ids;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        std::string name = entry.path().filename().string();
        if (name.rfind("snapshot_", 0) != 0) continue;
        if (!fs::exists(entry.path() / "manifest.json")) continue;  // incomplete
        ids.push_back(std::stoll(name.substr(9)));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

SnapshotBundle load_snapshot(const std::string& root, std::int64_t snapshot_id) {
    std::string dir = root + "/snapshot_" + std::to_string(snapshot_id);
    std::ifstream manifest_in(dir + "/manifest.json");
    if (!manifest_in) throw SnapshotIntegrityError("snapshot has no manifest: " + dir);
    json manifest = json::parse(manifest_in);

    SnapshotBundle bundle;
    bundle.snapshot_id = manifest.at("snapshot_id").get<std::int64_t>();
    bundle.config_hash = manifest.at("config_hash").get<std::uint64_t>();
    bundle.absent = manifest.at("absent").get<std::vector<WorkerId>>();

    for (auto it = manifest.at("files").begin(); it != manifest.at("files").end(); ++it) {
        auto bytes = read_file(dir + "/" + it.key());
        if (bytes_checksum(bytes) != it.value().get<std::uint64_t>())
            throw SnapshotIntegrityError("checksum mismatch in " + it.key());
        if (it.key() == "syncer.bin") {
            bundle.syncer_state = std::move(bytes);
        } else if (it.key() == "in_flight.bin") {
            bundle.in_flight = decode_messages(bytes);
        } else if (it.key().rfind("learner_", 0) == 0) {
            WorkerId id = static_cast<WorkerId>(
                std::stoul(it.key().substr(8, it.key().size() - 8 - 4)));
            bundle.learner_states[id] = std::move(bytes);
        }
    }
    for (auto it = manifest.at("ckpt_seq").begin(); it != manifest.at("ckpt_seq").end(); ++it)
        bundle.ckpt_seq[static_cast<WorkerId>(std::stoul(it.key()))] =
            it.value().get<std::uint64_t>();
    if (bundle.syncer_state.empty())
        throw SnapshotIntegrityError("snapshot is missing the syncer state");
    return bundle;
}

SnapshotBundle load_latest_snapshot(const std::string& root) {
    auto ids = list_snapshots(root);
    if (ids.empty()) throw SnapshotIntegrityError("no complete snapshot under " + root);
    return load_snapshot(root, ids.back());
}

}  // namespace ddl::resilience
