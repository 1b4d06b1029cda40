#include "lanedetect/tensor.hpp"

#include <limits>

namespace lanedetect {

std::size_t Shape::numel() const {
  std::size_t total = 1;
  for (std::size_t d : {n, c, h, w}) {
    if (d != 0 && total > std::numeric_limits<std::size_t>::max() / d) {
      throw SizeError("element count of shape " + str() + " overflows");
    }
    total *= d;
  }
  return total;
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

void check_shape(const Shape& shape) {
  if (!shape.valid()) throw ShapeError("every dimension must be >= 1, got " + shape.str());
  (void)shape.numel();
}

}  // namespace lanedetect
