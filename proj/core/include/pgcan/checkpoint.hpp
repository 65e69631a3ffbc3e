#pragma once

#include "pgcan/model.hpp"
#include "pgcan/training.hpp"

#include <filesystem>
#include <string>

namespace pgcan {

/// Binary checkpoint: the 8-byte magic "PGCANCK1", a little-endian uint64
/// header length, a JSON header (model kind, parameter block names and
/// shapes, epoch, loss weights, optimizer step count, seed), then the raw
/// doubles of theta, the Adam first moment and the Adam second moment.
constexpr char kCheckpointMagic[9] = "PGCANCK1";

/// Written atomically (temporary file, then rename).
void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainState& state);

/// Restores parameters into `model` and returns the training state. Throws
/// ShapeError when the block layout does not match the model and ConfigError
/// when the file is unreadable or malformed.
TrainState load_checkpoint(const std::filesystem::path& path, Model& model);

}  // namespace pgcan
