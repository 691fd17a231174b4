#pragma once

#include <cstdint>

#include "cfdiff/types.hpp"

namespace cfdiff {

/// Affine encoder/decoder pair: E(x) = W (x - b), D(z) = W^T z + b, where W
/// has orthonormal rows. D is an isometric embedding of latent space, so
/// E(D(z)) == z and E is the orthogonal projection onto the decoder's range.
class AffineCodec {
public:
    /// Seeded codec: W from orthonormalized Gaussian rows, b ~ 0.1 * N(0, I).
    static AffineCodec make(int ambient_dim, int latent_dim, std::uint64_t seed);
    static AffineCodec identity(int dim);
    /// Explicit codec; rows of W must be orthonormal within 1e-10.
    static AffineCodec from_matrix(Mat W, Vec b);

    int ambient_dim() const { return static_cast<int>(W_.cols()); }
    int latent_dim() const { return static_cast<int>(W_.rows()); }
    std::uint64_t seed() const { return seed_; }
    bool is_identity() const { return identity_; }
    const Mat& weights() const { return W_; }
    const Vec& offset() const { return b_; }

    Vec encode(const Vec& x) const;
    Vec decode(const Vec& z) const;

    /// Applies the transposed decoder Jacobian: maps an ambient gradient to
    /// the latent gradient of the same objective composed with D.
    Vec pullback_grad(const Vec& g_ambient) const;

private:
    AffineCodec(Mat W, Vec b, std::uint64_t seed, bool identity)
        : W_(std::move(W)), b_(std::move(b)), seed_(seed), identity_(identity) {}

    Mat W_;
    Vec b_;
    std::uint64_t seed_ = 0;
    bool identity_ = false;
};

}  // namespace cfdiff
