#pragma once

#include <optional>
#include <string>

#include "chronocon/mlp.hpp"
#include "chronocon/train.hpp"

namespace chronocon {

struct ModelBundle {
  Mlp encoder;
  std::optional<Mlp> decoder;
  std::optional<Regressor> regressor;
};

// Versioned binary container: magic "CCMODEL1", a JSON metadata block
// (network shapes, score types), then named parameter arrays as
// little-endian 64-bit floats in column-major order. Byte-stable for
// identical bundles.
void save_model(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model(const std::string& path);

}  // namespace chronocon
