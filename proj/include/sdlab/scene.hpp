#pragma once

#include <cstdint>

#include "sdlab/vec.hpp"

namespace sdlab {

/// Linear render map with orthonormal rows: latent = A * theta.
struct View {
    int d = 0;          // latent (row) dimension
    int world_dim = 0;  // column dimension
    Vec a;              // row-major d x world_dim

    double at(int i, int j) const { return a[static_cast<size_t>(i) * world_dim + j]; }
};

struct ViewSet {
    std::vector<View> views;
};

Vec render(const Vec& theta, const View& view);

/// Exact adjoint of render: A^T * grad_z.
Vec backproject_grad(const Vec& grad_z, const View& view);

/// Deterministic orthonormal-row views. For world_dim == d == 2 the views are
/// rotations by 2*pi*k/count; otherwise seeded Gaussian rows orthonormalized
/// by Gram-Schmidt.
ViewSet make_views(int world_dim, int d, int count, uint64_t seed);

enum class EncodeMode { Identity, FixedLinear };

/// Conditioning signal from a render. FixedLinear is a fixed orthogonal map
/// (index reversal with alternating signs), the stand-in for a derived signal
/// such as a normal map.
Vec encode(const Vec& image, EncodeMode mode);

}  // namespace sdlab
