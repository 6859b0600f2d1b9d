#pragma once

#include "ingra/matrix.hpp"
#include "ingra/rng.hpp"

namespace ingra {

// Prototype operations work on a K×S matrix of raw (unconstrained) prototype
// rows. Before any similarity or attention computation the rows pass through
// ReLU, which keeps cosines in [0,1] and the softmax's logarithm defined.

inline constexpr double kSimilarityFloor = 1e-8;
inline constexpr double kMassFloor = 1e-12;

struct GumbelSample {
    Vector e;     // relaxed one-hot over K, entries in (0,1), sums to 1
    Vector noise; // the Gumbel draws, kept so training can replay the sample
};

// d_k = cos(relu(p_k), q), clamped to [1e-8, 1]. q must be a nonzero
// non-negative vector (attention on the simplex). min_margin, when given,
// receives the smallest |cos - floor| over prototypes: the distance to the
// clamp boundary, used by gradient checks.
Vector prototype_similarity(const Matrix& protos, const Vector& q,
                            double* min_margin = nullptr);

// Gradient of sum(dd ⊙ d) with respect to prototypes and q. Clamped
// coordinates receive zero gradient. dprotos/dq are accumulated into.
void prototype_similarity_backward(const Matrix& protos, const Vector& q, const Vector& d,
                                   const Vector& dd, Matrix& dprotos, Vector& dq);

// e = softmax((log d + g)/tau), g fresh standard Gumbel noise.
GumbelSample gumbel_softmax_select(const Vector& d, double tau, Rng& rng);

// Same sample with fixed noise (backward replay and tests).
Vector gumbel_softmax_with_noise(const Vector& d, const Vector& noise, double tau);

// Accumulates dL/dd given dL/de through the softmax and the log.
void gumbel_softmax_backward(const Vector& d, const Vector& e, double tau, const Vector& de,
                             Vector& dd);

// p_hat = Σ_k e_k relu(p_k); r = p_hat / Σ_s p_hat_s, uniform when the mass
// is below 1e-12. min_margin, when given, receives |Σ p_hat - floor|.
Vector prototypical_attention(const Matrix& protos, const Vector& e,
                              double* min_margin = nullptr);

// Accumulates gradients of sum(dr ⊙ r) into de and dprotos. The uniform
// fallback is locally constant, so it transmits no gradient.
void prototypical_attention_backward(const Matrix& protos, const Vector& e, const Vector& dr,
                                     Vector& de, Matrix& dprotos);

struct DiversityResult {
    double loss = 0.0;
    // Smallest |cos(p_i,p_j) - gamma| across pairs: distance to the max()
    // kink, used by gradient checks to skip non-differentiable points.
    double min_margin = 1e300;
};

// Σ_{i<j} max(gamma, cos(p_i, p_j)) on raw prototypes.
DiversityResult diversity_loss(const Matrix& protos, double gamma);

// Accumulates dloss · d/dp Σ_{i<j} max(gamma, cos) into dprotos. Pairs at or
// below the floor contribute nothing.
void diversity_backward(const Matrix& protos, double gamma, double dloss, Matrix& dprotos);

// Spherical k-means on the rows of points (N×S, non-negative, nonzero).
// Returns K×S unit-norm centers. Assignment by maximum cosine, recentering by
// normalized mean, empty clusters reseeded from the farthest point. Runs to
// convergence or 100 iterations.
Matrix kmeans_init(const Matrix& points, Index k, Rng& rng);

} // namespace ingra
