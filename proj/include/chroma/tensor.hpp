#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chroma {

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major float32 array. Image-like data is NCHW.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor scalar(float v) { return Tensor({1}, v); }
    static Tensor randn(const Shape& shape, std::mt19937_64& rng, float mean = 0.0f,
                        float stddev = 1.0f);
    static Tensor uniform(const Shape& shape, std::mt19937_64& rng, float lo, float hi);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const float> data() const { return data_; }
    std::span<float> mutable_data() { return data_; }
    const float* ptr() const { return data_.data(); }
    float* mutable_ptr() { return data_.data(); }

    float operator[](std::size_t i) const { return data_[i]; }
    float& operator[](std::size_t i) { return data_[i]; }

    // Value of a single-element tensor.
    float item() const;

    Tensor reshaped(Shape shape) const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

bool all_finite(const Tensor& t);

// Throws NumericError naming `what` when any element is NaN or Inf.
void require_finite(const Tensor& t, std::string_view what);

double dot(const Tensor& a, const Tensor& b);
float max_abs(const Tensor& t);

}  // namespace chroma
