#include "ingra/prototype.hpp"

#include <cmath>
#include <vector>

#include "ingra/error.hpp"

namespace ingra {
namespace {

inline Vector relu(const Vector& v) {
    return v.array().max(0.0).matrix();
}

} // namespace

Vector prototype_similarity(const Matrix& protos, const Vector& q, double* min_margin) {
    if (protos.cols() != q.size())
        throw ConfigError("prototype width does not match attention length");
    if ((q.array() < 0.0).any())
        throw ContractError("attention vector has a negative entry");
    const double qn = q.norm();
    if (qn < kMassFloor) throw ContractError("attention vector has zero norm");

    Vector d(protos.rows());
    for (Index k = 0; k < protos.rows(); ++k) {
        const Vector u = relu(protos.row(k).transpose());
        const double un = u.norm();
        double cosv = un < kMassFloor ? 0.0 : u.dot(q) / (un * qn);
        if (min_margin)
            *min_margin = std::min(*min_margin, std::fabs(cosv - kSimilarityFloor));
        if (cosv < kSimilarityFloor) cosv = kSimilarityFloor;
        if (cosv > 1.0) cosv = 1.0;
        d(k) = cosv;
    }
    return d;
}

void prototype_similarity_backward(const Matrix& protos, const Vector& q, const Vector& d,
                                   const Vector& dd, Matrix& dprotos, Vector& dq) {
    const double qn = q.norm();
    for (Index k = 0; k < protos.rows(); ++k) {
        if (d(k) <= kSimilarityFloor || d(k) >= 1.0) continue; // clamped: flat
        const Vector u = relu(protos.row(k).transpose());
        const double un = u.norm();
        if (un < kMassFloor) continue;
        const double inv = 1.0 / (un * qn);
        const double cosv = u.dot(q) * inv;
        // d cos / du and d cos / dq of the cosine of (u, q)
        const Vector dcos_du = q * inv - u * (cosv / (un * un));
        const Vector dcos_dq = u * inv - q * (cosv / (qn * qn));
        for (Index s = 0; s < protos.cols(); ++s)
            if (protos(k, s) > 0.0) dprotos(k, s) += dd(k) * dcos_du(s);
        dq += dd(k) * dcos_dq;
    }
}

Vector gumbel_softmax_with_noise(const Vector& d, const Vector& noise, double tau) {
    if (!(tau > 0.0)) throw ConfigError("softmax temperature must be positive");
    Vector z = (d.array().log() + noise.array()).matrix() / tau;
    const double zmax = z.maxCoeff();
    Vector e = (z.array() - zmax).exp().matrix();
    e /= e.sum();
    return e;
}

GumbelSample gumbel_softmax_select(const Vector& d, double tau, Rng& rng) {
    GumbelSample out;
    out.noise.resize(d.size());
    for (Index k = 0; k < d.size(); ++k) out.noise(k) = rng.gumbel();
    out.e = gumbel_softmax_with_noise(d, out.noise, tau);
    return out;
}

void gumbel_softmax_backward(const Vector& d, const Vector& e, double tau, const Vector& de,
                             Vector& dd) {
    // softmax jacobian: dz_k = e_k (de_k - Σ_j de_j e_j); z = (log d + g)/tau
    const double inner = de.dot(e);
    for (Index k = 0; k < d.size(); ++k) {
        const double dz = e(k) * (de(k) - inner);
        dd(k) += dz / (tau * d(k));
    }
}

Vector prototypical_attention(const Matrix& protos, const Vector& e, double* min_margin) {
    if (protos.rows() != e.size())
        throw ConfigError("selection weights do not match prototype count");
    Vector phat = Vector::Zero(protos.cols());
    for (Index k = 0; k < protos.rows(); ++k)
        phat += e(k) * relu(protos.row(k).transpose());
    const double mass = phat.sum();
    if (min_margin && mass > 0.0)
        *min_margin = std::min(*min_margin, std::fabs(mass - kMassFloor));
    if (mass < kMassFloor)
        return Vector::Constant(protos.cols(), 1.0 / static_cast<double>(protos.cols()));
    return phat / mass;
}

void prototypical_attention_backward(const Matrix& protos, const Vector& e, const Vector& dr,
                                     Vector& de, Matrix& dprotos) {
    Vector phat = Vector::Zero(protos.cols());
    for (Index k = 0; k < protos.rows(); ++k)
        phat += e(k) * relu(protos.row(k).transpose());
    const double mass = phat.sum();
    if (mass < kMassFloor) return; // uniform fallback: locally constant
    const Vector r = phat / mass;
    // r = phat/mass ⇒ dL/dphat_t = (dr_t - Σ_j dr_j r_j)/mass
    const double inner = dr.dot(r);
    const Vector dphat = (dr.array() - inner).matrix() / mass;
    for (Index k = 0; k < protos.rows(); ++k) {
        const Vector u = relu(protos.row(k).transpose());
        de(k) += u.dot(dphat);
        for (Index s = 0; s < protos.cols(); ++s)
            if (protos(k, s) > 0.0) dprotos(k, s) += e(k) * dphat(s);
    }
}

DiversityResult diversity_loss(const Matrix& protos, double gamma) {
    DiversityResult out;
    for (Index i = 0; i < protos.rows(); ++i) {
        for (Index j = i + 1; j < protos.rows(); ++j) {
            const double ni = protos.row(i).norm();
            const double nj = protos.row(j).norm();
            double cosv = 0.0;
            if (ni >= kMassFloor && nj >= kMassFloor)
                cosv = protos.row(i).dot(protos.row(j)) / (ni * nj);
            out.loss += std::max(gamma, cosv);
            const double margin = std::fabs(cosv - gamma);
            if (margin < out.min_margin) out.min_margin = margin;
        }
    }
    return out;
}

void diversity_backward(const Matrix& protos, double gamma, double dloss, Matrix& dprotos) {
    for (Index i = 0; i < protos.rows(); ++i) {
        for (Index j = i + 1; j < protos.rows(); ++j) {
            const double ni = protos.row(i).norm();
            const double nj = protos.row(j).norm();
            if (ni < kMassFloor || nj < kMassFloor) continue;
            const double cosv = protos.row(i).dot(protos.row(j)) / (ni * nj);
            if (cosv <= gamma) continue; // floor active: flat
            const double inv = 1.0 / (ni * nj);
            dprotos.row(i) += dloss * (protos.row(j) * inv - protos.row(i) * (cosv / (ni * ni)));
            dprotos.row(j) += dloss * (protos.row(i) * inv - protos.row(j) * (cosv / (nj * nj)));
        }
    }
}

Matrix kmeans_init(const Matrix& points, Index k, Rng& rng) {
    const Index n = points.rows();
    const Index s = points.cols();
    if (k < 1) throw ConfigError("prototype count must be at least 1");
    if (n < k)
        throw ConfigError("k-means needs at least as many vectors (" + std::to_string(n) +
                          ") as clusters (" + std::to_string(k) + ")");

    Matrix unit(n, s);
    for (Index i = 0; i < n; ++i) {
        const double norm = points.row(i).norm();
        if (norm < kMassFloor) throw ContractError("k-means input row has zero norm");
        unit.row(i) = points.row(i) / norm;
    }

    // Distinct random rows as initial centers.
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    Matrix centers(k, s);
    for (Index c = 0; c < k; ++c) centers.row(c) = unit.row(order[static_cast<std::size_t>(c)]);

    std::vector<Index> assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        // Assign by maximum cosine; ties go to the lowest cluster index.
        for (Index i = 0; i < n; ++i) {
            Index best = 0;
            double best_cos = -2.0;
            for (Index c = 0; c < k; ++c) {
                const double cosv = unit.row(i).dot(centers.row(c));
                if (cosv > best_cos) {
                    best_cos = cosv;
                    best = c;
                }
            }
            if (assign[static_cast<std::size_t>(i)] != best) {
                assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        for (Index c = 0; c < k; ++c) {
            Vector mean = Vector::Zero(s);
            Index count = 0;
            for (Index i = 0; i < n; ++i) {
                if (assign[static_cast<std::size_t>(i)] == c) {
                    mean += unit.row(i).transpose();
                    ++count;
                }
            }
            if (count > 0 && mean.norm() >= kMassFloor) {
                centers.row(c) = mean.transpose() / mean.norm();
            } else {
                // Reseed from the point farthest from every current center.
                Index far = 0;
                double far_cos = 2.0;
                for (Index i = 0; i < n; ++i) {
                    double max_cos = -2.0;
                    for (Index c2 = 0; c2 < k; ++c2)
                        max_cos = std::max(max_cos, unit.row(i).dot(centers.row(c2)));
                    if (max_cos < far_cos) {
                        far_cos = max_cos;
                        far = i;
                    }
                }
                centers.row(c) = unit.row(far);
            }
        }
    }
    return centers;
}

} // namespace ingra
