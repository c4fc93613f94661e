#include "core/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "util/error.hpp"

namespace acwm::core {

void check_little_endian() {
    const uint32_t probe = 1;
    uint8_t b;
    std::memcpy(&b, &probe, 1);
    ACWM_CHECK(b == 1, internal, "binary io requires a little-endian host");
}

namespace {

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

nlohmann::json Checkpoint::manifest() const {
    nlohmann::json params = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& e : entries) {
        params.push_back({{"name", e.name},
                          {"shape", e.shape},
                          {"offset", offset},
                          {"trainable", e.trainable}});
        offset += e.values.size() * sizeof(float);
    }
    return nlohmann::json{{"params", std::move(params)}, {"config", config}, {"meta", meta}};
}

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const nlohmann::json& config, const nlohmann::json& meta) {
    check_little_endian();
    Checkpoint ckpt;
    for (const auto& e : params.entries())
        ckpt.entries.push_back({e.name, e.tensor.shape(), e.tensor.values(), e.trainable});
    ckpt.config = config;
    ckpt.meta = meta;
    const std::string manifest = ckpt.manifest().dump();
    ACWM_CHECK(manifest.size() <= UINT32_MAX, invalid_argument, "checkpoint manifest too large");

    std::string head;
    head.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u16(head, kCheckpointVersion);
    put_u32(head, static_cast<uint32_t>(manifest.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    ACWM_CHECK(out.good(), io, "cannot open checkpoint for writing: " + path);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const auto& e : ckpt.entries)
        out.write(reinterpret_cast<const char*>(e.values.data()),
                  static_cast<std::streamsize>(e.values.size() * sizeof(float)));
    out.flush();
    ACWM_CHECK(out.good(), io, "write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    check_little_endian();
    std::ifstream in(path, std::ios::binary);
    ACWM_CHECK(in.good(), io, "cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ACWM_CHECK(in.good() || in.eof(), io, "read failed for checkpoint: " + path);
    const auto* p = reinterpret_cast<const uint8_t*>(bytes.data());
    const size_t n = bytes.size();
    ACWM_CHECK(n >= sizeof(kCheckpointMagic) + 6, format, "checkpoint truncated: " + path);
    ACWM_CHECK(std::memcmp(p, kCheckpointMagic, sizeof(kCheckpointMagic)) == 0, format,
               "bad checkpoint magic: " + path);
    const uint16_t version = get_u16(p + 5);
    ACWM_CHECK(version == kCheckpointVersion, format,
               "unsupported checkpoint version " + std::to_string(version));
    const uint32_t manifest_len = get_u32(p + 7);
    const size_t data_start = 11 + static_cast<size_t>(manifest_len);
    ACWM_CHECK(n >= data_start, format, "checkpoint manifest truncated: " + path);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 11, bytes.begin() + data_start);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCategory::format, std::string("checkpoint manifest is not valid JSON: ") + e.what());
    }
    ACWM_CHECK(manifest.contains("params") && manifest["params"].is_array(), format,
               "checkpoint manifest missing params array");

    Checkpoint ckpt;
    ckpt.config = manifest.value("config", nlohmann::json::object());
    ckpt.meta = manifest.value("meta", nlohmann::json::object());
    const size_t data_len = n - data_start;
    for (const auto& jp : manifest["params"]) {
        Checkpoint::Entry e;
        e.name = jp.at("name").get<std::string>();
        e.shape = jp.at("shape").get<Shape>();
        e.trainable = jp.value("trainable", true);
        const uint64_t offset = jp.at("offset").get<uint64_t>();
        const int64_t numel = shape_numel(e.shape);
        ACWM_CHECK(numel >= 0, format, "negative shape in checkpoint manifest");
        const uint64_t bytes_needed = static_cast<uint64_t>(numel) * sizeof(float);
        ACWM_CHECK(offset + bytes_needed <= data_len, format,
                   "checkpoint data truncated for parameter '" + e.name + "'");
        e.values.resize(static_cast<size_t>(numel));
        std::memcpy(e.values.data(), bytes.data() + data_start + offset,
                    static_cast<size_t>(bytes_needed));
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

void load_into(const Checkpoint& ckpt, ParamSet& params) {
    ACWM_CHECK(ckpt.entries.size() == params.size(), invalid_argument,
               "checkpoint has " + std::to_string(ckpt.entries.size()) + " entries, model expects " +
                   std::to_string(params.size()));
    for (const auto& e : ckpt.entries) {
        Tensor& t = params.at(e.name);
        ACWM_CHECK(t.shape() == e.shape, invalid_argument,
                   "shape mismatch for '" + e.name + "': checkpoint " + shape_str(e.shape) +
                       " vs model " + shape_str(t.shape()));
        t.values() = e.values;
    }
}

size_t load_into_prefixed(const Checkpoint& ckpt, ParamSet& params, const std::string& prefix) {
    size_t copied = 0;
    for (const auto& e : ckpt.entries) {
        if (e.name.rfind(prefix, 0) != 0) continue;
        Tensor& t = params.at(e.name);
        ACWM_CHECK(t.shape() == e.shape, invalid_argument,
                   "shape mismatch for '" + e.name + "': checkpoint " + shape_str(e.shape) +
                       " vs model " + shape_str(t.shape()));
        t.values() = e.values;
        ++copied;
    }
    ACWM_CHECK(copied > 0, not_found, "no checkpoint entries match prefix '" + prefix + "'");
    return copied;
}

}  // namespace acwm::core
