#include "ingra/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "ingra/error.hpp"

namespace ingra {

std::vector<WindowedExample> window_series(const MtsSample& sample, Index window,
                                           Index stride) {
    if (window < 1) throw ConfigError("window length must be at least 1");
    if (stride < 1) throw ConfigError("window stride must be at least 1");
    if (sample.length() < window + 1)
        throw DataError("series '" + sample.id + "' is shorter than one window (" +
                        std::to_string(sample.length()) + " < " + std::to_string(window + 1) +
                        ")");
    std::vector<WindowedExample> out;
    for (Index off = 0; off + window + 1 <= sample.length(); off += stride)
        out.push_back(WindowedExample{&sample, off, window});
    return out;
}

Vector narma_generate(const NarmaParams& params, Index length, Rng& rng) {
    if (params.order < 1) throw ConfigError("narma order must be at least 1");
    if (!(params.noise_std > 0.0)) throw ConfigError("noise std must be positive");
    if (length <= params.order)
        throw ConfigError("series length must exceed the narma order");

    const Index d = params.order;
    Vector eps(length), x(length);
    for (Index t = 0; t < length; ++t) eps(t) = rng.normal(0.0, params.noise_std);
    for (Index t = 0; t < length; ++t) {
        if (t < d) {
            x(t) = eps(t);
            continue;
        }
        double lag_sum = 0.0;
        for (Index j = 1; j <= d; ++j) lag_sum += x(t - j);
        x(t) = params.alpha * x(t - 1) + params.beta * x(t - 1) * lag_sum +
               params.gamma * eps(t - d) * eps(t - 1) + eps(t);
        if (!(std::fabs(x(t)) <= 1e3))
            throw DataError("narma series diverged at step " + std::to_string(t));
    }
    return x;
}

Vector narma_generate_random(Index order, double noise_std, Index length, Rng& rng,
                             NarmaParams* out_params) {
    const double coeff_std = std::sqrt(0.1);
    for (int attempt = 0; attempt < 20; ++attempt) {
        NarmaParams p;
        p.order = order;
        p.noise_std = noise_std;
        p.alpha = rng.normal(0.0, coeff_std);
        p.beta = rng.normal(0.0, coeff_std);
        p.gamma = rng.normal(0.0, coeff_std);
        try {
            Vector x = narma_generate(p, length, rng);
            if (out_params) *out_params = p;
            return x;
        } catch (const DataError&) {
            continue; // diverged: draw fresh coefficients
        }
    }
    throw DataError("narma generation diverged for 20 consecutive coefficient draws");
}

Vector target_generate(const Matrix& exogenous, const TargetGenParams& params, Rng& rng) {
    const Index s_exo = exogenous.rows();
    const Index length = exogenous.cols();
    const Index p = params.lag;
    if (p < 1) throw ConfigError("target lag must be at least 1");
    if (p >= length) throw ConfigError("target lag must be smaller than the series length");
    if (static_cast<Index>(params.omega.size()) != s_exo)
        throw ConfigError("omega length does not match the exogenous variable count");
    if (params.eta.rows() != s_exo || params.eta.cols() != p)
        throw ConfigError("eta must be S_exo×lag");
    if (std::none_of(params.omega.begin(), params.omega.end(), [](int v) { return v == 1; }))
        throw ConfigError("omega must mark at least one causal variable");

    Vector y(length);
    for (Index t = 0; t < length; ++t) {
        double v = rng.normal(0.0, params.noise_std);
        if (t >= p) {
            for (Index s = 0; s < s_exo; ++s) {
                if (params.omega[static_cast<std::size_t>(s)] != 1) continue;
                double acc = 0.0;
                for (Index j = 0; j < p; ++j)
                    acc += params.eta(s, j) * std::tanh(exogenous(s, t - p + j));
                v += acc;
            }
        }
        y(t) = v;
    }
    return y;
}

namespace {

std::vector<int> draw_structure(Index s_exo, Rng& rng) {
    // Between 2 and S_exo-1 causal parents keeps the ranking task nontrivial.
    const Index low = 2;
    const Index high = s_exo - 1;
    const Index ones = low + static_cast<Index>(rng.uniform_below(
                                 static_cast<std::uint64_t>(high - low + 1)));
    std::vector<Index> idx(static_cast<std::size_t>(s_exo));
    for (Index i = 0; i < s_exo; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    std::vector<int> omega(static_cast<std::size_t>(s_exo), 0);
    for (Index i = 0; i < ones; ++i) omega[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
    return omega;
}

} // namespace

Benchmark make_benchmark(const BenchmarkSpec& spec) {
    if (spec.structures < 1) throw ConfigError("at least one structure is required");
    if (spec.per_structure < 1) throw ConfigError("per_structure must be at least 1");
    if (spec.exo_vars < 3)
        throw ConfigError("at least 3 exogenous variables are needed for 2..S_exo-1 parents");
    if (spec.length < spec.lag + 2) throw ConfigError("series length too small for the lag");

    Benchmark bench;
    bench.spec = spec;

    Rng struct_rng(Rng::derive(spec.seed, "structures"));
    for (Index c = 0; c < spec.structures; ++c) {
        std::vector<int> omega;
        bool fresh = false;
        for (int attempt = 0; attempt < 1000 && !fresh; ++attempt) {
            omega = draw_structure(spec.exo_vars, struct_rng);
            fresh = std::none_of(bench.structures.begin(), bench.structures.end(),
                                 [&](const std::vector<int>& o) { return o == omega; });
        }
        if (!fresh)
            throw ConfigError("could not draw " + std::to_string(spec.structures) +
                              " distinct causal structures over " +
                              std::to_string(spec.exo_vars) + " variables");
        bench.structures.push_back(omega);
    }

    for (Index c = 0; c < spec.structures; ++c) {
        for (Index i = 0; i < spec.per_structure; ++i) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof idbuf, "s%02d_i%03d", static_cast<int>(c),
                          static_cast<int>(i));
            MtsSample sample;
            sample.id = idbuf;
            sample.structure_id = static_cast<int>(c);
            sample.ground_truth = bench.structures[static_cast<std::size_t>(c)];
            sample.target_index = 0;

            Rng rng(Rng::derive(spec.seed, sample.id));
            Matrix exo(spec.exo_vars, spec.length);
            for (Index s = 0; s < spec.exo_vars; ++s)
                exo.row(s) =
                    narma_generate_random(spec.narma_order, spec.noise_std, spec.length, rng)
                        .transpose();

            TargetGenParams tg;
            tg.omega = sample.ground_truth;
            tg.lag = spec.lag;
            tg.noise_std = spec.noise_std;
            tg.eta.resize(spec.exo_vars, spec.lag);
            for (Index s = 0; s < spec.exo_vars; ++s)
                for (Index j = 0; j < spec.lag; ++j)
                    tg.eta(s, j) = rng.uniform01() < 0.5 ? -1.0 : 1.0;

            sample.values.resize(spec.exo_vars + 1, spec.length);
            sample.values.row(0) = target_generate(exo, tg, rng).transpose();
            sample.values.bottomRows(spec.exo_vars) = exo;

            sample.var_names.push_back("target");
            for (Index s = 1; s <= spec.exo_vars; ++s) {
                char nb[16];
                std::snprintf(nb, sizeof nb, "x%02d", static_cast<int>(s));
                sample.var_names.push_back(nb);
            }
            bench.samples.push_back(std::move(sample));
        }
    }

    // Stratified split: the last ~20% of each structure's individuals are
    // held out as unseen.
    const Index train_per = static_cast<Index>(
        std::llround(0.8 * static_cast<double>(spec.per_structure)));
    for (Index c = 0; c < spec.structures; ++c) {
        for (Index i = 0; i < spec.per_structure; ++i) {
            const std::size_t flat =
                static_cast<std::size_t>(c * spec.per_structure + i);
            if (i < train_per)
                bench.train_indices.push_back(flat);
            else
                bench.unseen_indices.push_back(flat);
        }
    }
    return bench;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

} // namespace

void save_csv(const MtsSample& sample, const std::string& path) {
    ensure_finite(sample.values, "sample '" + sample.id + "'");
    std::string out;
    out.reserve(static_cast<std::size_t>(sample.values.size()) * 20);
    for (Index s = 0; s < sample.num_variables(); ++s) {
        if (s) out.push_back(',');
        out += sample.var_names.empty() ? ("v" + std::to_string(s))
                                        : sample.var_names[static_cast<std::size_t>(s)];
    }
    out.push_back('\n');
    for (Index t = 0; t < sample.length(); ++t) {
        for (Index s = 0; s < sample.num_variables(); ++s) {
            if (s) out.push_back(',');
            append_double(out, sample.values(s, t));
        }
        out.push_back('\n');
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("failed writing '" + path + "'");
}

MtsSample load_csv(const std::string& path, const std::string& target_name) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");

    MtsSample sample;
    std::string line;
    if (!std::getline(f, line)) throw DataError("'" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) sample.var_names.push_back(cell);
    }
    const std::size_t cols = sample.var_names.size();
    if (cols < 2) throw DataError("'" + path + "' must have at least two columns");

    std::vector<double> data;
    std::size_t rows = 0;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t col = 0;
        const char* p = line.data();
        const char* end = p + line.size();
        while (true) {
            const char* comma = std::find(p, end, ',');
            double v = 0.0;
            auto res = std::from_chars(p, comma, v);
            if (res.ec != std::errc() || res.ptr != comma)
                throw DataError(path + ":" + std::to_string(lineno) + ": column " +
                                std::to_string(col + 1) + " is not numeric");
            if (!std::isfinite(v))
                throw DataError(path + ":" + std::to_string(lineno) + ": column " +
                                std::to_string(col + 1) + " is non-finite");
            data.push_back(v);
            ++col;
            if (comma == end) break;
            p = comma + 1;
        }
        if (col != cols)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(cols) + " columns, found " + std::to_string(col));
        ++rows;
    }
    if (rows == 0) throw DataError("'" + path + "' has no data rows");

    const std::string wanted = target_name.empty() ? "target" : target_name;
    auto it = std::find(sample.var_names.begin(), sample.var_names.end(), wanted);
    if (it == sample.var_names.end())
        throw DataError("'" + path + "' has no column named '" + wanted + "'");
    sample.target_index = static_cast<Index>(it - sample.var_names.begin());

    sample.values.resize(static_cast<Index>(cols), static_cast<Index>(rows));
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t s = 0; s < cols; ++s)
            sample.values(static_cast<Index>(s), static_cast<Index>(t)) =
                data[t * cols + s];

    std::size_t slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    if (base.size() > 4 && base.substr(base.size() - 4) == ".csv")
        base = base.substr(0, base.size() - 4);
    sample.id = base;
    return sample;
}

} // namespace ingra
