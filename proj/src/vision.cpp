#include "vlora/vision.hpp"

#include <cmath>
#include <sstream>

namespace vlora {

void VisionConfig::validate() const {
  if (grid == 0 || alphabet == 0 || d_v == 0) throw ContractError("vision config: all extents must be >= 1");
  if (alphabet > 64) throw ContractError("vision config: alphabet must be at most 64 symbols");
  if (!(init_std > 0.0)) throw ContractError("vision config: init_std must be positive");
}

std::string format_image(const SyntheticImage& image) {
  std::ostringstream out;
  for (std::size_t i = 0; i < image.cells.size(); ++i) out << (i ? " " : "") << image.cells[i];
  return out.str();
}

SyntheticImage parse_image(std::string_view line) {
  std::istringstream in{std::string(line)};
  SyntheticImage image;
  std::string word;
  while (in >> word) {
    std::size_t used = 0;
    unsigned long value = 0;
    try {
      value = std::stoul(word, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != word.size() || word.front() == '-') throw ContractError("image: '" + word + "' is not a symbol");
    image.cells.push_back(static_cast<std::uint32_t>(value));
  }
  const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(image.cells.size()))));
  if (image.cells.empty() || g * g != image.cells.size())
    throw ContractError("image: " + std::to_string(image.cells.size()) + " cells do not form a square grid");
  image.grid = g;
  return image;
}

void validate_image(const SyntheticImage& image, const VisionConfig& config) {
  if (image.grid != config.grid || image.cells.size() != config.cells())
    throw ContractError("image: expected a " + std::to_string(config.grid) + "x" + std::to_string(config.grid) +
                        " grid");
  for (auto s : image.cells)
    if (s >= config.alphabet)
      throw ContractError("image: symbol " + std::to_string(s) + " outside alphabet of " +
                          std::to_string(config.alphabet));
}

SyntheticImage random_image(const VisionConfig& config, Rng& rng) {
  SyntheticImage image{config.grid, std::vector<std::uint32_t>(config.cells())};
  for (auto& c : image.cells) c = static_cast<std::uint32_t>(rng.below(config.alphabet));
  return image;
}

template <typename T>
VisionWeights<T> init_vision(const VisionConfig& config, Rng& rng) {
  config.validate();
  VisionWeights<T> w;
  w.config = config;
  w.symbols = Tensor<T>::randn({config.alphabet, config.d_v}, config.init_std, rng);
  w.positions = Tensor<T>::randn({config.cells(), config.d_v}, config.init_std, rng);
  return w;
}

template <typename T>
Tensor<T> encode_image(const SyntheticImage& image, const VisionWeights<T>& weights) {
  validate_image(image, weights.config);
  return add(gather_rows(weights.symbols, std::span<const TokenId>(image.cells)), weights.positions);
}

template VisionWeights<float> init_vision<float>(const VisionConfig&, Rng&);
template VisionWeights<double> init_vision<double>(const VisionConfig&, Rng&);
template Tensor<float> encode_image(const SyntheticImage&, const VisionWeights<float>&);
template Tensor<double> encode_image(const SyntheticImage&, const VisionWeights<double>&);

}  // namespace vlora
