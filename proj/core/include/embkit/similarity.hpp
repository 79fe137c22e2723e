#pragma once

#include <span>

#include "embkit/types.hpp"

namespace embkit {

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// a.b / (|a||b|). Throws on dimension mismatch, zero norm, or non-finite
// input. Result is in [-1, 1] up to rounding.
double cosine(std::span<const double> a, std::span<const double> b);

// Scales v to unit norm in place; returns the original norm.
double l2_normalize(Embedding& v);

}  // namespace embkit
