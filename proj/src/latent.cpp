#include "cfdiff/latent.hpp"

#include "cfdiff/rng.hpp"

namespace cfdiff {

AffineCodec AffineCodec::make(int ambient_dim, int latent_dim, std::uint64_t seed) {
    detail::require(latent_dim >= 1 && latent_dim <= ambient_dim,
                    "make_codec: need 1 <= latent_dim <= ambient_dim");
    Rng rng(seed);
    Mat g(ambient_dim, latent_dim);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(ambient_dim, latent_dim);
    Vec b = 0.1 * rng.normal_vec(ambient_dim);
    return AffineCodec(q.transpose(), std::move(b), seed, false);
}

AffineCodec AffineCodec::identity(int dim) {
    detail::require(dim >= 1, "identity codec: dim must be >= 1");
    return AffineCodec(Mat::Identity(dim, dim), Vec::Zero(dim), 0, true);
}

AffineCodec AffineCodec::from_matrix(Mat W, Vec b) {
    detail::require(W.rows() >= 1 && W.rows() <= W.cols(), "from_matrix: need 1 <= latent_dim <= ambient_dim");
    detail::require_dim(b, W.cols(), "from_matrix offset");
    const Mat gram = W * W.transpose();
    detail::require((gram - Mat::Identity(W.rows(), W.rows())).cwiseAbs().maxCoeff() <= 1e-10,
                    "from_matrix: rows of W must be orthonormal");
    return AffineCodec(std::move(W), std::move(b), 0, false);
}

Vec AffineCodec::encode(const Vec& x) const {
    detail::require_dim(x, ambient_dim(), "encode");
    if (identity_) return x;
    return W_ * (x - b_);
}

Vec AffineCodec::decode(const Vec& z) const {
    detail::require_dim(z, latent_dim(), "decode");
    if (identity_) return z;
    return W_.transpose() * z + b_;
}

Vec AffineCodec::pullback_grad(const Vec& g_ambient) const {
    detail::require_dim(g_ambient, ambient_dim(), "pullback_grad");
    if (identity_) return g_ambient;
    return W_ * g_ambient;
}

}  // namespace cfdiff
