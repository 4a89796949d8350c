#include "cxr/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace cxr {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

namespace {

void validate_extents(const Shape& shape) {
  if (shape.empty()) {
    throw std::invalid_argument("tensor shape must have at least one extent");
  }
  for (auto extent : shape) {
    if (extent == 0) {
      throw std::invalid_argument("tensor extents must be positive, got " + to_string(shape));
    }
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_extents(shape_);
  data_.assign(element_count(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_extents(shape_);
  if (element_count(shape_) != data_.size()) {
    std::ostringstream os;
    os << "shape " << to_string(shape_) << " holds " << element_count(shape_) << " elements but "
       << data_.size() << " were supplied";
    throw std::invalid_argument(os.str());
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw std::invalid_argument("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(a) + " vs " +
                                to_string(b));
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cxr
