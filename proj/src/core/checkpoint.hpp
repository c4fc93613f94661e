// Checkpoint container: "ACWM1" magic, u16 format version, u32 manifest
// length, UTF-8 JSON manifest, then little-endian float32 payload in manifest
// order. Round-trips are bitwise exact.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/params.hpp"
#include "core/tensor.hpp"

namespace acwm::core {

inline constexpr char kCheckpointMagic[5] = {'A', 'C', 'W', 'M', '1'};
inline constexpr uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    struct Entry {
        std::string name;
        Shape shape;
        std::vector<float> values;
        bool trainable = true;
    };
    std::vector<Entry> entries;
    nlohmann::json config;  // config echo; structure owned by the writer
    nlohmann::json meta;    // provenance record

    const Entry* find(const std::string& name) const;
    nlohmann::json manifest() const;  // manifest as written to disk
};

// All binary file formats in this project assume a little-endian host.
void check_little_endian();

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const nlohmann::json& config, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::string& path);

// Copies values into an existing ParamSet; every checkpoint entry must match a
// parameter of the same name and shape, and vice versa.
void load_into(const Checkpoint& ckpt, ParamSet& params);

// Copies only entries whose name starts with `prefix` into matching params.
// Returns the number of entries copied (at least one, else not_found).
size_t load_into_prefixed(const Checkpoint& ckpt, ParamSet& params, const std::string& prefix);

}  // namespace acwm::core
