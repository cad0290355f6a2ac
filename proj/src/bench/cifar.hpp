#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "train/dataset.hpp"

namespace smcdo {

// One record: label byte, then 3 x 32 x 32 channel-planar pixel bytes.
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

/// Pixels scaled to [0,1], no normalization. Throws DataError when the size
/// is not a positive multiple of the record length or a label exceeds 9.
Dataset parse_cifar10(std::span<const std::uint8_t> bytes, const std::string& origin = "buffer");
Dataset load_cifar10(const std::string& path);
/// Concatenation of several files in order.
Dataset load_cifar10(std::span<const std::string> paths);

/// Inverse of parse_cifar10: pixels are rounded to the nearest byte after
/// clamping to [0,1].
std::vector<std::uint8_t> encode_cifar10(const Dataset& d);
void write_cifar10(const std::string& path, const Dataset& d);

/// Keeps images whose label is in `classes` and relabels them to their
/// position in that list. `limit` caps the result (0 means no cap).
Dataset select_classes(const Dataset& d, std::span<const int> classes, std::size_t limit = 0);

/// Two-class stand-in for CIFAR-10 with the same record layout: a colour
/// grating within 40 degrees of horizontal (class 0) or vertical (class 1)
/// plus a distractor grating of random orientation and pixel noise.
Dataset synthetic_cifar(std::size_t count, std::uint64_t seed);

}  // namespace smcdo
