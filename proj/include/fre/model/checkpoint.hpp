#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fre/model/serialization.hpp"
#include "fre/model/unet.hpp"

namespace fre::model {

// Checkpoint container, version 1. All integers little-endian.
//
//   offset  size  field
//   0       8     magic "FRECKPT\0"
//   8       4     u32 format version (1)
//   12      8     u64 header length L
//   20      L     UTF-8 JSON header {"model": ModelConfig, "meta": {...}}
//   20+L    4     u32 tensor count K
//   then K records:
//           2     u16 name length
//           n     name bytes
//           1     u8 rank r (1..4)
//           4*r   u32 extents
//           4*P   IEEE-754 float32 values, P = product of extents
//   end     8     u64 FNV-1a hash of every preceding byte
//
// Resume checkpoints add "optim.*" records (optimizer state) and "best.*"
// records (best parameters so far); loading network parameters ignores both.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    ag::Shape shape;
    std::vector<float> values;
};

struct CheckpointData {
    Json header;  // {"model": ..., "meta": ...}
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const;
    ModelConfig model_config() const;
    const Json& meta() const;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

template <typename T>
CheckpointData make_checkpoint(const Network<T>& net, Json meta = Json::object());

// Copies every parameter of `store` from `data`; names and shapes must match.
template <typename T>
void load_parameters(ParameterStore<T>& store, const CheckpointData& data);

template <typename T>
Network<T> network_from_checkpoint(const CheckpointData& data);

}  // namespace fre::model
