#include "sdlab/scene.hpp"

#include <cmath>

#include "sdlab/rng.hpp"

namespace sdlab {

Vec render(const Vec& theta, const View& view) {
    if (static_cast<int>(theta.size()) != view.world_dim)
        throw std::invalid_argument("render: theta has wrong dimension");
    Vec z(static_cast<size_t>(view.d), 0.0);
    for (int i = 0; i < view.d; ++i) {
        double s = 0.0;
        for (int j = 0; j < view.world_dim; ++j) s += view.at(i, j) * theta[static_cast<size_t>(j)];
        z[static_cast<size_t>(i)] = s;
    }
    return z;
}

Vec backproject_grad(const Vec& grad_z, const View& view) {
    if (static_cast<int>(grad_z.size()) != view.d)
        throw std::invalid_argument("backproject_grad: grad_z has wrong dimension");
    Vec g(static_cast<size_t>(view.world_dim), 0.0);
    for (int i = 0; i < view.d; ++i)
        for (int j = 0; j < view.world_dim; ++j)
            g[static_cast<size_t>(j)] += view.at(i, j) * grad_z[static_cast<size_t>(i)];
    return g;
}

ViewSet make_views(int world_dim, int d, int count, uint64_t seed) {
    if (d > world_dim) throw std::invalid_argument("make_views: d must be <= world_dim");
    if (count < 1) throw std::invalid_argument("make_views: count must be >= 1");
    ViewSet vs;
    vs.views.reserve(static_cast<size_t>(count));

    if (world_dim == 2 && d == 2) {
        for (int k = 0; k < count; ++k) {
            double angle = 2.0 * M_PI * k / count;
            View v{2, 2, {std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle)}};
            vs.views.push_back(std::move(v));
        }
        return vs;
    }

    Rng rng(mix_seed(seed, 0x76696577));
    for (int k = 0; k < count; ++k) {
        View v;
        v.d = d;
        v.world_dim = world_dim;
        v.a.resize(static_cast<size_t>(d) * world_dim);
        bool ok = false;
        while (!ok) {
            for (auto& x : v.a) x = rng.normal();
            ok = true;
            // modified Gram-Schmidt on rows, two passes
            for (int pass = 0; pass < 2 && ok; ++pass) {
                for (int i = 0; i < d && ok; ++i) {
                    double* ri = &v.a[static_cast<size_t>(i) * world_dim];
                    for (int p = 0; p < i; ++p) {
                        const double* rp = &v.a[static_cast<size_t>(p) * world_dim];
                        double proj = 0.0;
                        for (int j = 0; j < world_dim; ++j) proj += ri[j] * rp[j];
                        for (int j = 0; j < world_dim; ++j) ri[j] -= proj * rp[j];
                    }
                    double nrm = 0.0;
                    for (int j = 0; j < world_dim; ++j) nrm += ri[j] * ri[j];
                    nrm = std::sqrt(nrm);
                    if (nrm < 1e-8) {
                        ok = false;  // degenerate draw, retry
                        break;
                    }
                    for (int j = 0; j < world_dim; ++j) ri[j] /= nrm;
                }
            }
        }
        vs.views.push_back(std::move(v));
    }
    return vs;
}

Vec encode(const Vec& image, EncodeMode mode) {
    switch (mode) {
        case EncodeMode::Identity: return image;
        case EncodeMode::FixedLinear: {
            size_t n = image.size();
            Vec out(n);
            for (size_t i = 0; i < n; ++i) {
                double s = (i % 2 == 0) ? 1.0 : -1.0;
                out[i] = s * image[n - 1 - i];
            }
            return out;
        }
    }
    throw std::invalid_argument("encode: unknown mode");
}

}  // namespace sdlab
