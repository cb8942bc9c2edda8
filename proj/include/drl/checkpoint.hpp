#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "drl/nn.hpp"

namespace drl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named float tensors plus a free-form JSON header (config, iteration, RNG
/// and optimizer counters).
struct Checkpoint {
    nlohmann::json header = nlohmann::json::object();
    std::map<std::string, Tensor<float>> tensors;

    void put(const ParamList<float>& params);
    /// Copies stored values into `params`. Throws IntegrityError on a missing
    /// name or a shape mismatch.
    void restore(const ParamList<float>& params) const;
    [[nodiscard]] bool has_prefix(const std::string& prefix) const;
};

/// Layout: "DRLCKPT\0", u32 version, u64 payload size, u32 crc32(payload),
/// payload. The payload is u64 header length, header JSON, u32 tensor count and
/// for each tensor u32 name length, name, 4 x i32 shape, float32 data.
/// All integers little-endian. The file is written atomically.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws IoError if unreadable and IntegrityError on bad magic, version,
/// length or checksum.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace drl
