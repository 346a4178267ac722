#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "pcad/backbone.hpp"

namespace pcad {

// Self-describing binary container: magic "PCADCKP1", a u32 little-endian
// header length, a JSON header (format version, network kind, architecture
// config, tensor directory, batch-norm step counters, free-form metadata,
// and an FNV-1a-64 digest of the data section), then the raw float32 tensor
// data in the directory's order (trainable tensors first, running stats
// after). Loading validates the magic, every tensor's name and size against
// the architecture, and the data digest.
struct Checkpoint {
    BackboneParams params;
    std::string kind;  // "teacher" or "student"
    nlohmann::json meta;
    uint64_t data_checksum = 0;
};

void save_checkpoint(const std::string& path, BackboneParams& params, const std::string& kind,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json config_to_json(const BackboneConfig& c);
BackboneConfig config_from_json(const nlohmann::json& j);

uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t fnv1a64_file(const std::string& path);

}  // namespace pcad
