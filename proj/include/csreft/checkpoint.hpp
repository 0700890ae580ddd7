#pragma once

#include <string>
#include <utility>
#include <vector>

#include "csreft/trainer.hpp"

namespace csreft {

// Binary checkpoint container, version 1:
//
//   bytes 0..3   magic "CSRF"
//   u32 LE       version
//   u32 LE       header length in bytes
//   header       "key = value\n" lines (dims, k, rank, sites, step, ...)
//   records      one per tensor, in order:
//                  u64 LE name length, name bytes,
//                  u64 LE rank, u64 LE dims[rank],
//                  float64 LE payload, row-major
//
// Loading distinguishes BadMagic, VersionMismatch and TruncatedFile.
// Saving goes through a temp file plus rename, so a crash never leaves a
// half-written checkpoint at the target path.
struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> header;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const std::string* find_header(const std::string& key) const;
    const Tensor* find_tensor(const std::string& name) const;
};

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Full training state (edits, router, Adam moments, step counter) as a
// checkpoint and back. Loading restores bit-identical tensors.
Checkpoint checkpoint_from_state(const TrainState& state, const FrozenModel& model,
                                 std::vector<std::pair<std::string, std::string>> extra_header = {});
TrainState state_from_checkpoint(const Checkpoint& ckpt, const FrozenModel& model);

}  // namespace csreft
