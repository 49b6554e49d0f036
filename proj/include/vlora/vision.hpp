#pragma once

// Frozen stand-in for the vision encoder: a synthetic image is a g x g grid
// of symbols, and each cell becomes one feature row
//   z[cell] = symbol_table[symbol] + position_table[cell].

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vlora/tensor.hpp"

namespace vlora {

struct VisionConfig {
  std::size_t grid = 4;
  std::size_t alphabet = 16;
  std::size_t d_v = 32;
  double init_std = 0.02;

  std::size_t cells() const { return grid * grid; }
  void validate() const;
};

struct SyntheticImage {
  std::size_t grid = 0;
  std::vector<std::uint32_t> cells;  // row-major, grid * grid symbols

  bool operator==(const SyntheticImage&) const = default;
};

// Text form: one line of grid^2 space-separated integers. The grid size is
// inferred from the count, which must be a perfect square.
std::string format_image(const SyntheticImage& image);
SyntheticImage parse_image(std::string_view line);

void validate_image(const SyntheticImage& image, const VisionConfig& config);
SyntheticImage random_image(const VisionConfig& config, Rng& rng);

template <typename T>
struct VisionWeights {
  VisionConfig config;
  Tensor<T> symbols;    // [alphabet x d_v]
  Tensor<T> positions;  // [grid^2 x d_v]

  template <typename Fn>
  void visit(Fn&& fn) {
    fn(std::string("vision.symbols"), symbols);
    fn(std::string("vision.positions"), positions);
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    fn(std::string("vision.symbols"), symbols);
    fn(std::string("vision.positions"), positions);
  }
};

template <typename T>
VisionWeights<T> init_vision(const VisionConfig& config, Rng& rng);

// Visual features z [grid^2 x d_v].
template <typename T>
Tensor<T> encode_image(const SyntheticImage& image, const VisionWeights<T>& weights);

}  // namespace vlora
