#include "hallucinet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace hallucinet {

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape_in, std::vector<float> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got shape " + shape_to_string(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("tensor shape " + shape_to_string(shape) + " does not match data length " +
                                    std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(const std::vector<int>& shape) {
    return Tensor(shape, std::vector<float>(shape_numel(shape), 0.0f));
}

Tensor Tensor::full(const std::vector<int>& shape, float value) {
    return Tensor(shape, std::vector<float>(shape_numel(shape), value));
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

float Tensor::scalar_value() const {
    if (!is_scalar()) throw std::invalid_argument("expected scalar tensor, got shape " + shape_to_string(shape));
    return data[0];
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape) + " vs " +
                                    shape_to_string(b.shape));
    }
}

Tensor stack_rows(const std::vector<Tensor>& samples, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("stack_rows: empty index list");
    const Tensor& first = samples[static_cast<size_t>(indices[0])];
    std::vector<int> out_shape;
    out_shape.push_back(static_cast<int>(indices.size()));
    out_shape.insert(out_shape.end(), first.shape.begin(), first.shape.end());
    Tensor out = Tensor::zeros(out_shape);
    size_t stride = first.numel();
    for (size_t r = 0; r < indices.size(); ++r) {
        const Tensor& s = samples[static_cast<size_t>(indices[r])];
        if (!s.same_shape(first)) {
            throw std::invalid_argument("stack_rows: sample shape " + shape_to_string(s.shape) +
                                        " differs from " + shape_to_string(first.shape));
        }
        std::memcpy(out.data.data() + r * stride, s.data.data(), stride * sizeof(float));
    }
    return out;
}

}  // namespace hallucinet
