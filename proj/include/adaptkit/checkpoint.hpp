#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adaptkit/errors.hpp"
#include "adaptkit/sha256.hpp"
#include "adaptkit/tensor.hpp"
#include "adaptkit/vit.hpp"

namespace adaptkit {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

// Single-file checkpoint container, fixed little-endian layout:
//
//   offset 0   : magic "AKPT"
//   +4         : u32 format version (currently 1)
//   +8         : u64 metadata count, then per entry
//                u64 key length, key bytes, u64 value length, value bytes
//   ...        : u64 tensor count, then per tensor
//                u64 name length, name bytes,
//                u32 rank, u64 dims[rank],
//                f64 payload[prod(dims)]  (IEEE-754, little-endian)
//   last 32 B  : SHA-256 over every payload byte span, in file order
//
// Integers are little-endian. Loads verify magic, version and hash before
// anything is applied to a model.

inline constexpr char kCheckpointMagic[4] = {'A', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<CheckpointEntry> entries;
    std::string payload_hash;  // hex of the trailing digest

    const CheckpointEntry* find(const std::string& name) const {
        for (const CheckpointEntry& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
};

// Which named tensors a save or load touches.
enum class ParamSubset { all, backbone, adapters, head };

inline std::string to_string(ParamSubset s) {
    switch (s) {
        case ParamSubset::all: return "all";
        case ParamSubset::backbone: return "backbone";
        case ParamSubset::adapters: return "adapters";
        case ParamSubset::head: return "head";
    }
    return "?";
}

inline ParamSubset subset_from_string(std::string_view s) {
    if (s == "all") return ParamSubset::all;
    if (s == "backbone") return ParamSubset::backbone;
    if (s == "adapters") return ParamSubset::adapters;
    if (s == "head") return ParamSubset::head;
    throw ConfigError("unknown checkpoint subset '" + std::string(s) + "'");
}

// The head subset carries the pre-head norm's running statistics along
// with the head weights; they sit on the same side of the freeze boundary.
inline bool subset_matches(ParamSubset subset, std::string_view name) {
    switch (subset) {
        case ParamSubset::all: return true;
        case ParamSubset::backbone: return is_backbone_param(name) && !name.starts_with("head_norm.");
        case ParamSubset::adapters: return is_adapter_param(name);
        case ParamSubset::head:
            return is_head_param(name) || name.starts_with("head_norm.");
    }
    return false;
}

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}
inline void put_u32(std::string& out, std::uint32_t v) { put_bytes(out, &v, 4); }
inline void put_u64(std::string& out, std::uint64_t v) { put_bytes(out, &v, 8); }
inline void put_str(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    put_bytes(out, s.data(), s.size());
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;
    std::string context;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n)
            throw IoError("checkpoint " + context + ": truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, p, 4);
        p += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, p, 8);
        p += 8;
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
};

}  // namespace detail

// Exact on-disk size of a checkpoint holding the given named shapes and
// metadata; save() produces files of precisely this many bytes.
inline std::size_t checkpoint_serialized_size(
    const std::vector<ParamSpec>& tensors,
    const std::vector<std::pair<std::string, std::string>>& metadata = {}) {
    std::size_t size = 4 + 4 + 8;  // magic, version, meta count
    for (const auto& [k, v] : metadata) size += 8 + k.size() + 8 + v.size();
    size += 8;  // tensor count
    for (const ParamSpec& t : tensors)
        size += 8 + t.name.size() + 4 + 8 * t.shape.size() + 8 * shape_numel(t.shape);
    return size + 32;  // trailing digest
}

// Flat snapshot of the model geometry, stored as checkpoint metadata.
inline std::vector<std::pair<std::string, std::string>> config_metadata(const VitModel& model) {
    const VitConfig& c = model.config();
    return {
        {"model.image_size", std::to_string(c.image_size)},
        {"model.patch_size", std::to_string(c.patch_size)},
        {"model.channels", std::to_string(c.channels)},
        {"model.embed_dim", std::to_string(c.embed_dim)},
        {"model.num_layers", std::to_string(c.num_layers)},
        {"model.num_heads", std::to_string(c.num_heads)},
        {"model.mlp_ratio", std::to_string(c.mlp_ratio)},
        {"model.num_classes", std::to_string(c.num_classes)},
        {"model.seq_extra", std::to_string(c.seq_extra)},
        {"model.frames", std::to_string(c.frames)},
        {"model.use_head_norm", c.use_head_norm ? "true" : "false"},
        {"tuning.mode", to_string(model.tuning().mode)},
    };
}

namespace detail {

struct NamedView {
    const std::string* name;
    const Tensor* tensor;
};

inline std::vector<NamedView> collect(const VitModel& model, ParamSubset subset) {
    std::vector<NamedView> views;
    for (const auto& [name, tensor] : model.parameters())
        if (subset_matches(subset, name)) views.push_back({&name, &tensor});
    for (const auto& [name, tensor] : model.buffers())
        if (subset_matches(subset, name)) views.push_back({&name, &tensor});
    return views;
}

inline std::string serialize(const std::vector<NamedView>& views,
                             const std::vector<std::pair<std::string, std::string>>& metadata) {
    std::string out;
    put_bytes(out, kCheckpointMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, metadata.size());
    for (const auto& [k, v] : metadata) {
        put_str(out, k);
        put_str(out, v);
    }
    put_u64(out, views.size());
    Sha256 hash;
    for (const NamedView& v : views) {
        put_str(out, *v.name);
        put_u32(out, static_cast<std::uint32_t>(v.tensor->shape().size()));
        for (std::size_t dim : v.tensor->shape()) put_u64(out, dim);
        const std::size_t bytes = v.tensor->size() * sizeof(double);
        put_bytes(out, v.tensor->data(), bytes);
        hash.update(v.tensor->data(), bytes);
    }
    const auto digest = hash.digest();
    put_bytes(out, digest.data(), digest.size());
    return out;
}

// Atomic write: temp file in the target directory, then rename.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp + " for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os.good()) throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace detail

// Serialize the chosen subset of the model (parameters plus matching
// buffers) to `path`. Returns the hex content hash of the payloads.
inline std::string save_checkpoint(const VitModel& model, const std::string& path,
                                   ParamSubset subset = ParamSubset::all,
                                   std::vector<std::pair<std::string, std::string>> metadata = {}) {
    auto meta = config_metadata(model);
    for (auto& kv : metadata) meta.push_back(std::move(kv));
    const auto views = detail::collect(model, subset);
    const std::string bytes = detail::serialize(views, meta);
    detail::write_file_atomic(path, bytes);
    // The digest sits in the last 32 bytes.
    std::array<unsigned char, 32> d;
    std::memcpy(d.data(), bytes.data() + bytes.size() - 32, 32);
    return Sha256::hex(d);
}

// The per-task delta: every trainable parameter under the model's current
// freeze state, plus the head-norm running statistics.
inline std::string save_delta_checkpoint(const VitModel& model, const std::string& path) {
    std::vector<detail::NamedView> views;
    for (const auto& [name, tensor] : model.parameters())
        if (tensor.requires_grad()) views.push_back({&name, &tensor});
    for (const auto& [name, tensor] : model.buffers()) views.push_back({&name, &tensor});
    const std::string bytes = detail::serialize(views, config_metadata(model));
    detail::write_file_atomic(path, bytes);
    std::array<unsigned char, 32> d;
    std::memcpy(d.data(), bytes.data() + bytes.size() - 32, 32);
    return Sha256::hex(d);
}

// Parse and integrity-check a checkpoint file.
inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + 4 + 8 + 8 + 32) throw IoError("checkpoint " + path + ": truncated file");

    detail::Reader r{reinterpret_cast<const unsigned char*>(bytes.data()),
                     reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size() - 32,
                     path};
    char magic[4];
    r.need(4);
    std::memcpy(magic, r.p, 4);
    r.p += 4;
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("checkpoint " + path + ": bad magic");
    Checkpoint ck;
    ck.version = r.u32();
    if (ck.version != kCheckpointVersion)
        throw IoError("checkpoint " + path + ": unsupported version " +
                      std::to_string(ck.version));
    const std::uint64_t meta_count = r.u64();
    for (std::uint64_t i = 0; i < meta_count; ++i) {
        std::string k = r.str();
        std::string v = r.str();
        ck.metadata.emplace_back(std::move(k), std::move(v));
    }
    const std::uint64_t tensor_count = r.u64();
    Sha256 hash;
    for (std::uint64_t i = 0; i < tensor_count; ++i) {
        CheckpointEntry e;
        e.name = r.str();
        const std::uint32_t rank = r.u32();
        e.shape.resize(rank);
        for (std::uint32_t dim = 0; dim < rank; ++dim) e.shape[dim] = r.u64();
        const std::size_t numel = shape_numel(e.shape);
        r.need(numel * 8);
        e.data.resize(numel);
        std::memcpy(e.data.data(), r.p, numel * 8);
        hash.update(r.p, numel * 8);
        r.p += numel * 8;
        ck.entries.push_back(std::move(e));
    }
    if (r.p != r.end) throw IoError("checkpoint " + path + ": trailing garbage");
    const auto digest = hash.digest();
    if (std::memcmp(digest.data(), bytes.data() + bytes.size() - 32, 32) != 0)
        throw IoError("checkpoint " + path + ": payload hash mismatch (corrupt file)");
    ck.payload_hash = Sha256::hex(digest);
    return ck;
}

// Overwrite exactly the chosen subset of the model from a checkpoint.
// Both sides of the subset must agree (same names, same shapes) before
// anything is written, so a failing load leaves the model untouched.
inline void load_checkpoint_into(VitModel& model, const std::string& path, ParamSubset subset) {
    const Checkpoint ck = read_checkpoint(path);

    std::unordered_map<std::string, const CheckpointEntry*> file_entries;
    for (const CheckpointEntry& e : ck.entries)
        if (subset_matches(subset, e.name)) file_entries.emplace(e.name, &e);

    // Tensor handles share storage, so copies of the handles are enough to
    // write into the model in place.
    std::vector<std::pair<std::string, Tensor>> targets;
    for (const auto& [name, tensor] : model.parameters())
        if (subset_matches(subset, name)) targets.emplace_back(name, tensor);
    for (const auto& [name, tensor] : model.buffers())
        if (subset_matches(subset, name)) targets.emplace_back(name, tensor);

    std::string missing_in_file, missing_in_model, shape_errors;
    for (const auto& [name, tensor] : targets) {
        auto it = file_entries.find(name);
        if (it == file_entries.end()) {
            missing_in_file += (missing_in_file.empty() ? "" : ", ") + name;
        } else if (it->second->shape != tensor.shape()) {
            shape_errors += (shape_errors.empty() ? "" : ", ") + name + " (file " +
                            shape_str(it->second->shape) + ", model " +
                            shape_str(tensor.shape()) + ")";
        }
    }
    for (const auto& [name, entry] : file_entries) {
        bool found = false;
        for (const auto& [tname, tensor] : targets) found |= tname == name;
        if (!found) missing_in_model += (missing_in_model.empty() ? "" : ", ") + name;
    }
    if (!missing_in_file.empty() || !missing_in_model.empty() || !shape_errors.empty()) {
        std::string msg = "load " + path + " subset=" + to_string(subset) + ":";
        if (!missing_in_file.empty()) msg += " missing in checkpoint: " + missing_in_file + ";";
        if (!missing_in_model.empty()) msg += " missing in model: " + missing_in_model + ";";
        if (!shape_errors.empty()) msg += " shape mismatch: " + shape_errors + ";";
        throw IoError(msg);
    }
    for (auto& [name, tensor] : targets) {
        tensor.values() = file_entries.at(name)->data;
    }
}

// Apply every entry of a (delta) checkpoint to the model, whatever subset
// it happens to contain. All entries must resolve to an existing model
// tensor of matching shape before any write happens.
inline void apply_delta_checkpoint(VitModel& model, const std::string& path) {
    const Checkpoint ck = read_checkpoint(path);
    std::vector<std::pair<Tensor, const CheckpointEntry*>> writes;
    std::string missing, shape_errors;
    for (const CheckpointEntry& e : ck.entries) {
        Tensor* target = model.find_param(e.name);
        if (target == nullptr) target = model.find_buffer(e.name);
        if (target == nullptr) {
            missing += (missing.empty() ? "" : ", ") + e.name;
        } else if (target->shape() != e.shape) {
            shape_errors += (shape_errors.empty() ? "" : ", ") + e.name;
        } else {
            writes.emplace_back(*target, &e);
        }
    }
    if (!missing.empty() || !shape_errors.empty()) {
        std::string msg = "apply delta " + path + ":";
        if (!missing.empty()) msg += " missing in model: " + missing + ";";
        if (!shape_errors.empty()) msg += " shape mismatch: " + shape_errors + ";";
        throw IoError(msg);
    }
    for (auto& [tensor, entry] : writes) tensor.values() = entry->data;
}

}  // namespace adaptkit
