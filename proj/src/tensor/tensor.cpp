#include "chroma/tensor.hpp"

#include <cmath>
#include <sstream>

#include "chroma/errors.hpp"

namespace chroma {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            os << 'x';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw ShapeError("non-positive extent in shape " + shape_str(shape));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("shape " + shape_str(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
    }
}

Tensor Tensor::randn(const Shape& shape, std::mt19937_64& rng, float mean, float stddev) {
    Tensor t(shape);
    std::normal_distribution<float> dist(mean, stddev);
    for (auto& v : t.data_) {
        v = dist(rng);
    }
    return t;
}

Tensor Tensor::uniform(const Shape& shape, std::mt19937_64& rng, float lo, float hi) {
    Tensor t(shape);
    std::uniform_real_distribution<float> dist(lo, hi);
    for (auto& v : t.data_) {
        v = dist(rng);
    }
    return t;
}

float Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool all_finite(const Tensor& t) {
    for (float v : t.data()) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

void require_finite(const Tensor& t, std::string_view what) {
    if (!all_finite(t)) {
        throw NumericError("non-finite value produced by " + std::string(what) + " (shape " +
                           shape_str(t.shape()) + ")");
    }
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("dot: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

float max_abs(const Tensor& t) {
    float m = 0.0f;
    for (float v : t.data()) {
        m = std::max(m, std::fabs(v));
    }
    return m;
}

}  // namespace chroma
