#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "npt/model.hpp"
#include "npt/tensor.hpp"

namespace npt {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadMagicError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct BadCrcError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct BadVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// On-disk model snapshot. Little-endian "NPT1" container: magic, version,
// named parameter tensors, a training-state block (architecture descriptor,
// epoch, base RNG seed, momentum buffers, seed manifest), then a CRC32 of
// every preceding byte.
struct Checkpoint {
    std::string descriptor;
    std::uint32_t epoch = 0;
    std::uint64_t base_seed = 0;
    ParamList params;
    MomentumState momentum;
    std::vector<std::pair<std::string, std::uint64_t>> seed_manifest;

    ConvNetSpec spec() const { return ConvNetSpec::parse_descriptor(descriptor); }
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace npt
