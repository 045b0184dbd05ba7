#pragma once

#include <string>

#include "lacovl/adam.hpp"
#include "lacovl/config.hpp"
#include "lacovl/nn.hpp"

namespace lacovl {

// Checkpoint file: a text manifest (one line per entry with name, shape,
// dtype and byte offset, plus optimizer slots, the run seed, and the config
// needed to rebuild the architecture) followed by an `end` marker and the
// raw little-endian float64 payload. Roundtrips are bit-exact.
void save_checkpoint(const std::string& path, const ParamRegistry& registry, const Adam* adam,
                     std::uint64_t seed, const KvConfig* config = nullptr);

struct CheckpointInfo {
    std::uint64_t seed = 0;
    KvConfig config;
};

// Manifest-only read, enough to reconstruct the model before loading.
CheckpointInfo read_checkpoint_info(const std::string& path);

// Loads into an already-constructed registry; names and shapes must match
// the file exactly. Optimizer slots are restored when `adam` is given and
// the file has them.
std::uint64_t load_checkpoint(const std::string& path, ParamRegistry& registry, Adam* adam);

}  // namespace lacovl
