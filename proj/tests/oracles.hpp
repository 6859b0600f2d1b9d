#pragma once

// Reference implementations and checking harnesses used across the test
// suite. Everything here is written for clarity, not speed, and stays
// independent of the library's own numeric paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ingra/matrix.hpp"
#include "ingra/param_store.hpp"

namespace oracle {

inline double rel_err(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

// Central finite differences over every coefficient of every tensor in the
// store. 'loss' must recompute the full forward pass from current parameter
// values. 'analytic' holds the gradients under test. Returns the largest
// relative error seen.
inline double max_fd_rel_error(ingra::ParamStore& store,
                               const std::function<double()>& loss,
                               const ingra::GradSink& analytic, double step = 1e-5) {
    double worst = 0.0;
    for (std::size_t id = 0; id < store.tensor_count(); ++id) {
        ingra::Tensor& t = store.tensor(id);
        const ingra::Matrix& g = analytic.of(t);
        for (ingra::Index r = 0; r < t.rows(); ++r) {
            for (ingra::Index c = 0; c < t.cols(); ++c) {
                const double saved = t.value(r, c);
                t.value(r, c) = saved + step;
                const double up = loss();
                t.value(r, c) = saved - step;
                const double down = loss();
                t.value(r, c) = saved;
                const double numeric = (up - down) / (2.0 * step);
                worst = std::max(worst, rel_err(g(r, c), numeric));
            }
        }
    }
    return worst;
}

// Same check, but for gradients accumulated directly in store.grad (the
// composite training gradient: batch-mean loss plus diversity).
inline double max_fd_rel_error_store(ingra::ParamStore& store,
                                     const std::function<double()>& loss,
                                     double step = 1e-5) {
    double worst = 0.0;
    for (std::size_t id = 0; id < store.tensor_count(); ++id) {
        ingra::Tensor& t = store.tensor(id);
        for (ingra::Index r = 0; r < t.rows(); ++r) {
            for (ingra::Index c = 0; c < t.cols(); ++c) {
                const double saved = t.value(r, c);
                t.value(r, c) = saved + step;
                const double up = loss();
                t.value(r, c) = saved - step;
                const double down = loss();
                t.value(r, c) = saved;
                const double numeric = (up - down) / (2.0 * step);
                worst = std::max(worst, rel_err(t.grad(r, c), numeric));
            }
        }
    }
    return worst;
}

// Brute-force ranking for the retrieval metrics: repeatedly select the
// highest-scoring unused index, smallest index first among ties. Quadratic
// on purpose; shares no code with the library's sort-based paths.
inline std::vector<int> brute_force_ranking(const std::vector<double>& scores) {
    const int n = static_cast<int>(scores.size());
    std::vector<bool> used(scores.size(), false);
    std::vector<int> order;
    for (int round = 0; round < n; ++round) {
        int pick = -1;
        for (int i = 0; i < n; ++i) {
            if (used[static_cast<std::size_t>(i)]) continue;
            if (pick < 0 || scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(pick)])
                pick = i;
        }
        used[static_cast<std::size_t>(pick)] = true;
        order.push_back(pick);
    }
    return order;
}

// Average precision straight from the definition: walk the ranking, recount
// the positives among the top-k from scratch at every cut, sum the precision
// at each positive and divide by the positive count.
inline double brute_force_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
    const auto order = brute_force_ranking(scores);
    int positives = 0;
    for (int v : labels) positives += v;
    double sum = 0.0;
    for (std::size_t k = 1; k <= order.size(); ++k) {
        if (labels[static_cast<std::size_t>(order[k - 1])] != 1) continue;
        int hits = 0;
        for (std::size_t i = 0; i < k; ++i)
            hits += labels[static_cast<std::size_t>(order[i])];
        sum += static_cast<double>(hits) / static_cast<double>(k);
    }
    return sum / positives;
}

// Exhaustive pairwise Mann-Whitney count: every positive/negative pair,
// ties worth half.
inline double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double numer = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) numer += 1.0;
            else if (scores[i] == scores[j]) numer += 0.5;
        }
    }
    return numer / static_cast<double>(pairs);
}

// Independent gate-equation evaluation of the recurrent cell: plain scalar
// loops, no shared code with the library path.
inline std::vector<double> lstm_final_hidden(const ingra::Matrix& wx, const ingra::Matrix& wh,
                                             const ingra::Matrix& bias,
                                             const std::vector<double>& xs) {
    const int hn = static_cast<int>(wh.cols());
    std::vector<double> h(hn, 0.0), c(hn, 0.0), pre(4 * hn, 0.0);
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (double x : xs) {
        for (int k = 0; k < 4 * hn; ++k) {
            double acc = wx(k, 0) * x + bias(k, 0);
            for (int j = 0; j < hn; ++j) acc += wh(k, j) * h[j];
            pre[k] = acc;
        }
        for (int j = 0; j < hn; ++j) {
            const double gi = sig(pre[j]);
            const double gf = sig(pre[hn + j]);
            const double gg = std::tanh(pre[2 * hn + j]);
            const double go = sig(pre[3 * hn + j]);
            c[j] = gf * c[j] + gi * gg;
            h[j] = go * std::tanh(c[j]);
        }
    }
    return h;
}

} // namespace oracle
