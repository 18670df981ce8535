#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hallucinet {

/// Dense n-dimensional array of 32-bit reals, row-major.
///
/// The universal value type for inputs, activations, logits, probabilities,
/// parameters and gradients. Value semantics throughout: copies are deep.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> shape_in, std::vector<float> data_in);

    static Tensor zeros(const std::vector<int>& shape);
    static Tensor full(const std::vector<int>& shape, float value);
    static Tensor scalar(float value);  // shape {1}

    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    size_t numel() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }
    float scalar_value() const;

    // Row-major accessors for the common low ranks.
    float& at(int i) { return data[static_cast<size_t>(i)]; }
    float at(int i) const { return data[static_cast<size_t>(i)]; }
    float& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    float at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

size_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

/// Throws std::invalid_argument naming both shapes when they differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

/// Stack per-sample tensors (all of one shape) into one batch tensor whose
/// leading dimension is indices.size().
Tensor stack_rows(const std::vector<Tensor>& samples, const std::vector<int>& indices);

}  // namespace hallucinet
