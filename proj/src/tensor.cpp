#include "gateprune/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace gateprune {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    for (int e : shape) {
        if (e < 1) throw TensorError("tensor extent must be >= 1, got shape " + shape_str(shape));
    }
    data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    for (int e : shape) {
        if (e < 1) throw TensorError("tensor extent must be >= 1, got shape " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw TensorError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

int Tensor::dim(int i) const {
    if (i < 0 || i >= rank()) throw TensorError("dim index " + std::to_string(i) + " out of range");
    return shape[static_cast<std::size_t>(i)];
}

double Tensor::item() const {
    if (!is_scalar()) throw TensorError("item() on non-scalar tensor of shape " + shape_str(shape));
    return data[0];
}

}  // namespace gateprune
