#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graph/model_graph.hpp"

namespace smcdo {

// Weight file layout, all integers u32 little-endian, reals fp64 little-endian:
//
//   "SMCDO1"                 6-byte magic
//   layer_count
//   per layer:
//     kind tag               LayerKind value
//     tensor_count
//     per tensor: rank, rank x extent, product(extents) x fp64
//
// conv / projected residual_end: weight (O,I,kH,kW), bias (O)
// batchnorm: gamma, beta, running_mean, running_var (C), [epsilon, momentum]
// dense: weight (O,I), bias (O)
// other kinds: no tensors

inline constexpr char kWeightMagic[6] = {'S', 'M', 'C', 'D', 'O', '1'};

std::vector<std::uint8_t> encode_weights(const ModelGraph& graph);

/// Decodes into `graph`, whose architecture must match the encoded one
/// (tags, tensor counts and extents). Throws DataError otherwise.
void decode_weights(std::span<const std::uint8_t> bytes, ModelGraph& graph);

void save_weights(const ModelGraph& graph, const std::string& path);
void load_weights(const std::string& path, ModelGraph& graph);

}  // namespace smcdo
