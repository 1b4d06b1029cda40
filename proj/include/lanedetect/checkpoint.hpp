#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lanedetect/model.hpp"
#include "lanedetect/optim.hpp"

namespace lanedetect {

inline constexpr char kCheckpointMagic[8] = {'L', 'D', 'F', 'C', 'N', '0', '0', '1'};

/// A named f32 array of rank 1..255 as stored on disk.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct AdamSnapshot {
  std::uint64_t step = 0;
  std::vector<NamedTensor> m;  // same names and order as the parameters
  std::vector<NamedTensor> v;

  friend bool operator==(const AdamSnapshot&, const AdamSnapshot&) = default;
};

/// Model weights plus optional optimizer state.
///
/// Layout (all integers little-endian):
///   "LDFCN001" | u32 count | count x tensor
///   [ "ADAM" | u64 step | u32 count | count x tensor (m) | count x tensor (v) ]
///   u32 epoch | u64 seed
/// tensor := u16 name_len | name | u8 dtype (0 = f32) | u8 rank | rank x u32 | f32 data
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::optional<AdamSnapshot> adam;
  std::uint32_t epoch = 0;
  std::uint64_t seed = 0;

  const NamedTensor* find(const std::string& name) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, unknown dtype, truncation or trailing bytes.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters are converted to f32 regardless of T.
template <class T>
Checkpoint make_checkpoint(const ModelGraph& graph, const ModelParams<T>& params,
                           const AdamState<T>* adam, std::uint32_t epoch, std::uint64_t seed);

/// Throws FormatError when a parameter is missing, duplicated or mis-shaped.
ModelParams<float> params_from_checkpoint(const ModelGraph& graph, const Checkpoint& ckpt);

/// Restores m, v and the step counter. Leaves `state` untouched when the checkpoint has none.
void restore_adam(const ModelGraph& graph, const Checkpoint& ckpt, AdamState<float>& state);

/// Recovers the width multiplier from the first layer's weight shape; height and
/// width come from the data the checkpoint will be applied to.
ModelConfig config_from_checkpoint(const Checkpoint& ckpt, std::size_t height, std::size_t width,
                                   double dropout_rate = 0.2);

}  // namespace lanedetect
