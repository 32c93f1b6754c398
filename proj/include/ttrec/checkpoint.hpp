#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ttrec/param_store.hpp"

namespace ttrec {

/// Checkpoint container: a text header (structured key-value model
/// description), a manifest naming each tensor with its extents, then raw
/// row-major float32 payloads in manifest order, all little-endian.
void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ParamStore<float>& store);

struct CheckpointData {
    std::string config_text;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

CheckpointData load_checkpoint(const std::string& path);

/// Rebuild a ParamStore from checkpoint tensors (registration order follows
/// the manifest).
ParamStore<float> store_from_checkpoint(const CheckpointData& data);

} // namespace ttrec
