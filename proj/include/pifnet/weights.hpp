#pragma once

#include <filesystem>

#include "pifnet/model.hpp"

namespace pifnet {

/// Writes one PIFT file per parameter and buffer plus `manifest.txt`, a
/// plain-text `name = file` listing in collection order.
void save_weights(Model& model, const std::filesystem::path& dir);

/// Loads tensors named in the manifest. Every model tensor must be present
/// with a matching shape; throws FormatError or ShapeError otherwise.
void load_weights(Model& model, const std::filesystem::path& dir);

}  // namespace pifnet
