#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "graph/model_graph.hpp"

namespace smcdo {

enum class ArchFamily { mini_wrn, mini_segnet };

const char* to_string(ArchFamily f) noexcept;
ArchFamily parse_arch_family(const std::string& s);

struct ArchConfig {
  ArchFamily family = ArchFamily::mini_wrn;
  std::size_t depth_blocks = 1;      // residual blocks per stage (mini_wrn)
  std::size_t widening_factor = 1;   // k
  std::size_t base_channels = 8;
  std::size_t first_stochastic_layer = 5;  // conv index; dropout precedes every conv at or after it
  std::size_t num_classes = 10;
  std::size_t input_channels = 3;
  std::size_t stages = 3;            // mini_wrn only
  std::uint64_t init_seed = 0;

  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

/// Residual stack: stem conv + 2x2 max-pool, then `stages` stages of
/// `depth_blocks` basic blocks at widths base*k, 2*base*k, 4*base*k, ...
/// (stride 2 at each later stage entry, 1x1 projection on shape change),
/// then global average pool, dense and softmax.
ModelGraph build_mini_wrn(const ArchConfig& arch, const DropoutSpec& dropout);

/// Encoder (3 convs, two 2x downsamples) and decoder (nearest upsample + conv,
/// twice, then a 1x1 classifier conv) with per-pixel softmax. Dropout sites
/// are only placed in the decoder.
ModelGraph build_mini_segnet(const ArchConfig& arch, const DropoutSpec& dropout);

ModelGraph build_model(const ArchConfig& arch, const DropoutSpec& dropout);

/// Number of conv layers (excluding residual projections) the builder emits.
std::size_t conv_layer_count(const ArchConfig& arch);

}  // namespace smcdo
