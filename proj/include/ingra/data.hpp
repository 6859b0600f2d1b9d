#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ingra/matrix.hpp"
#include "ingra/rng.hpp"

namespace ingra {

// One individual: a multivariate series with its own (optional) causal
// ground truth. Generated samples put the target in row 0.
struct MtsSample {
    std::string id;
    std::vector<std::string> var_names; // size S
    Matrix values;                      // S×L
    Index target_index = 0;
    std::vector<int> ground_truth; // omega over exogenous rows in order, empty if unknown
    int structure_id = -1;         // common-structure label, -1 if unknown

    Index num_variables() const { return values.rows(); }
    Index length() const { return values.cols(); }
};

// A window view: columns [offset, offset+window) are the inputs, the target
// row at column offset+window is the label. No data is copied.
struct WindowedExample {
    const MtsSample* sample = nullptr;
    Index offset = 0;
    Index window = 0;

    double input(Index var, Index t) const { return sample->values(var, offset + t); }
    double target_next() const {
        return sample->values(sample->target_index, offset + window);
    }
};

std::vector<WindowedExample> window_series(const MtsSample& sample, Index window,
                                           Index stride = 1);

// Nonlinear autoregressive moving-average generator. The same noise sequence
// feeds the additive term, the lagged product term, and the first `order`
// values of the series.
struct NarmaParams {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    Index order = 3;
    double noise_std = 0.1; // variance 0.01
};

// Fixed coefficients; throws DataError if the series leaves [-1e3, 1e3].
Vector narma_generate(const NarmaParams& params, Index length, Rng& rng);

// Coefficients drawn from N(0, 0.1 variance); diverging draws are rejected
// and redrawn, up to 20 attempts. The accepted parameters are reported
// through out_params when non-null.
Vector narma_generate_random(Index order, double noise_std, Index length, Rng& rng,
                             NarmaParams* out_params = nullptr);

// Target synthesis: y_t = Σ_s omega_s · eta_s · tanh(x_s over the lag window)
// plus fresh noise; the first `lag` values are pure noise.
struct TargetGenParams {
    std::vector<int> omega; // 0/1 per exogenous variable, at least one 1
    Matrix eta;             // S_exo×lag entries in {-1,+1}
    Index lag = 3;
    double noise_std = 0.1;
};

Vector target_generate(const Matrix& exogenous, const TargetGenParams& params, Rng& rng);

// Full synthetic benchmark: C common structures, per_structure individuals
// each, fresh NARMA dynamics and causal strengths per individual, stratified
// 80/20 train/unseen split.
struct BenchmarkSpec {
    Index structures = 3;
    Index per_structure = 100;
    Index exo_vars = 10;
    Index length = 1000;
    Index lag = 3;
    Index narma_order = 3;
    double noise_std = 0.1;
    std::uint64_t seed = 42;
};

struct Benchmark {
    BenchmarkSpec spec;
    std::vector<MtsSample> samples;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> unseen_indices;
    std::vector<std::vector<int>> structures; // the C omega vectors
};

Benchmark make_benchmark(const BenchmarkSpec& spec);

// CSV layout: header row of variable names, then one row per time step, one
// column per variable. Values are written in shortest round-trip form, so a
// reload reproduces the exact doubles.
void save_csv(const MtsSample& sample, const std::string& path);

// target designation: a variable name from the header, or empty to use the
// column literally named "target".
MtsSample load_csv(const std::string& path, const std::string& target_name = "");

} // namespace ingra
