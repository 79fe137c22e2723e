#include "embkit/similarity.hpp"

#include <cmath>
#include <string>

#include "embkit/errors.hpp"

namespace embkit {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) {
  return std::sqrt(dot(v, v));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("cosine: dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine: zero-norm input");
  const double c = dot(a, b) / (na * nb);
  if (!std::isfinite(c)) throw ValidationError("cosine: non-finite result");
  return c;
}

double l2_normalize(Embedding& v) {
  const double n = l2_norm(v);
  if (n == 0.0) throw ValidationError("l2_normalize: zero-norm vector");
  for (double& x : v) x /= n;
  return n;
}

}  // namespace embkit
