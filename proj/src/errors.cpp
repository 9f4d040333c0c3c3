#include "pifnet/errors.hpp"

namespace pifnet {

FormatError::FormatError(const std::string& what, std::size_t byte_offset)
    : Error(what + " (at byte " + std::to_string(byte_offset) + ")"), detail_(what), byte_offset_(byte_offset) {}

TrainingDivergedError::TrainingDivergedError(std::size_t epoch)
    : Error("training diverged: non-finite loss in epoch " + std::to_string(epoch)), epoch_(epoch) {}

}  // namespace pifnet
