#include "faceanon/mask_algebra.hpp"

namespace faceanon {

BinaryMask foreground_mask(const SemanticMask& mask) { return (mask.labels() != 0).cast<std::uint8_t>(); }

BinaryMask background_mask(const SemanticMask& mask) { return (mask.labels() == 0).cast<std::uint8_t>(); }

}  // namespace faceanon
