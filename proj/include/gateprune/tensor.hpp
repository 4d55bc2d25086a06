#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gateprune {

// Dense row-major array of 64-bit floats. Activations use N,C,H,W order,
// conv weights Cout,Cin,Kh,Kw, dense weights D,M. Scalars have shape {1}.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const;
    bool is_scalar() const { return data.size() == 1; }
    double item() const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // Flat offset into a 4-d tensor; no bounds checks, hot-path helper.
    std::int64_t at4(int n, int c, int h, int w) const {
        return ((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Thrown by every operation that receives inconsistent shapes or arguments.
struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gateprune
