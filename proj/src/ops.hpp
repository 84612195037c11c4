#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensor.hpp"

// Differentiable operations over Tensor. Every op checks shapes eagerly and
// throws ShapeError naming the offending shapes.
namespace wdistill::ops {

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched product over the leading axis: [g,m,k] x [g,k,n] -> [g,m,n], or
// with transpose_b, [g,m,k] x [g,n,k]^T -> [g,m,n].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// Adds a vector of length n to every row of a tensor whose last axis is n.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// [b*t, h*e] <-> [b*h, t, e]
Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads);
Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads);

// Softmax over the last axis restricted to entries with allowed != 0.
// Disallowed entries come out as exact zeros; a row with nothing allowed is
// all zeros.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed);

// Row-wise layer normalization of [n,d] with gain and bias of length d.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Gathers rows of a [v,d] table.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Mean over rows with mask != 0 of -sum(target * log_softmax(logits)).
// The target is treated as a constant; every unmasked target row must sum to
// one within 1e-6.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target, std::span<const std::uint8_t> mask);

// Mode-n product of a rank-3 tensor with a matrix: the given axis (length n)
// is contracted against the rows of m ([n,r]) and replaced by an axis of
// length r.
Tensor mode_product(const Tensor& x, const Tensor& m, std::size_t axis);

// Plain row-wise softmax of a [rows, cols] buffer; no graph.
std::vector<double> softmax_rows(std::span<const double> x, std::size_t cols);

}  // namespace wdistill::ops
