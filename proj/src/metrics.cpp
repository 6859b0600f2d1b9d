#include "ingra/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "config_json.hpp"
#include "ingra/checkpoint.hpp"
#include "ingra/error.hpp"
#include "json.hpp"

namespace ingra {
namespace {

void validate_metric_inputs(const Vector& scores, const std::vector<int>& labels,
                            const char* name) {
    if (scores.size() == 0)
        throw ConfigError(std::string(name) + ": empty input");
    if (scores.size() != static_cast<Index>(labels.size()))
        throw ConfigError(std::string(name) + ": " + std::to_string(scores.size()) +
                          " scores vs " + std::to_string(labels.size()) + " labels");
    if (!scores.allFinite())
        throw DataError(std::string(name) + ": non-finite score");
    for (int v : labels)
        if (v != 0 && v != 1)
            throw DataError(std::string(name) + ": labels must be 0 or 1, got " +
                            std::to_string(v));
}

// Indices ordered by descending score; stable sort keeps ties in ascending
// index order, which pins the ranking for repeated scores.
std::vector<Index> ranking(const Vector& scores) {
    std::vector<Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return scores(a) > scores(b); });
    return order;
}

void append_double(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

double population_std(const std::vector<double>& xs, double mean) {
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

} // namespace

double average_precision(const Vector& scores, const std::vector<int>& labels) {
    validate_metric_inputs(scores, labels, "average_precision");
    Index positives = 0;
    for (int v : labels) positives += v;
    if (positives == 0)
        throw DataError("average_precision: undefined without a positive label");

    auto order = ranking(scores);
    double sum = 0.0;
    Index hits = 0;
    for (std::size_t rank = 1; rank <= order.size(); ++rank) {
        if (labels[static_cast<std::size_t>(order[rank - 1])] == 1) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank);
        }
    }
    return sum / static_cast<double>(positives);
}

double roc_auc(const Vector& scores, const std::vector<int>& labels) {
    validate_metric_inputs(scores, labels, "roc_auc");
    Index positives = 0;
    for (int v : labels) positives += v;
    Index negatives = static_cast<Index>(labels.size()) - positives;
    if (positives == 0 || negatives == 0)
        throw DataError("roc_auc: undefined with a single class");

    // Rank-sum form: tied scores share their average rank, which counts each
    // tied positive/negative pair as half a concordance.
    std::vector<Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return scores(a) < scores(b); });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores(order[j]) == scores(order[i])) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[static_cast<std::size_t>(order[k])] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    double p = static_cast<double>(positives);
    double u = rank_sum_pos - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

std::string to_string(ScoreSource source) {
    return source == ScoreSource::mixed ? "mixed" : "direct";
}

void finalize_aggregates(EvalReport& report) {
    if (report.rows.empty())
        throw ConfigError("finalize_aggregates: no scored individuals");
    std::vector<double> aps, aucs;
    aps.reserve(report.rows.size());
    aucs.reserve(report.rows.size());
    for (const IndividualEval& row : report.rows) {
        aps.push_back(row.ap);
        aucs.push_back(row.auc);
    }
    report.ap_mean = std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
    report.auc_mean =
        std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
    report.ap_std = population_std(aps, report.ap_mean);
    report.auc_std = population_std(aucs, report.auc_mean);
}

EvalReport score_structures(const std::vector<const MtsSample*>& samples,
                            const std::vector<AttentionRecord>& records,
                            Index target_index, ScoreSource source,
                            const ModelConfig& config, const std::string& split) {
    if (samples.empty())
        throw ConfigError("score_structures: no individuals");
    if (samples.size() != records.size())
        throw ConfigError("score_structures: " + std::to_string(samples.size()) +
                          " samples vs " + std::to_string(records.size()) + " records");

    EvalReport report;
    report.split = split;
    report.score_source = to_string(source);
    report.config = config;
    report.rows.reserve(samples.size());

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const MtsSample* sample = samples[i];
        if (sample == nullptr)
            throw ContractError("score_structures: null sample");
        const AttentionRecord& rec = records[i];
        Index s_count = sample->num_variables();
        if (target_index < 0 || target_index >= s_count)
            throw ConfigError("score_structures: target index " +
                              std::to_string(target_index) + " out of range for " +
                              sample->id);
        if (rec.a.size() != s_count || rec.q.size() != s_count)
            throw ContractError("score_structures: attention width mismatch for " +
                                sample->id);
        if (sample->ground_truth.empty())
            throw DataError("score_structures: " + sample->id +
                            " has no causal ground truth");
        if (static_cast<Index>(sample->ground_truth.size()) != s_count - 1)
            throw DataError("score_structures: ground truth for " + sample->id + " has " +
                            std::to_string(sample->ground_truth.size()) + " entries, expected " +
                            std::to_string(s_count - 1));

        const Vector& attention = source == ScoreSource::mixed ? rec.a : rec.q;
        IndividualEval row;
        row.id = sample->id;
        row.labels = sample->ground_truth;
        row.prototype_index = rec.prototype_index;
        row.scores.resize(s_count - 1);
        Index out = 0;
        for (Index s = 0; s < s_count; ++s)
            if (s != target_index) row.scores(out++) = attention(s);

        row.ap = average_precision(row.scores, row.labels);
        row.auc = roc_auc(row.scores, row.labels);
        report.rows.push_back(std::move(row));
    }

    finalize_aggregates(report);
    return report;
}

std::string eval_report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["split"] = report.split;
    j["score_source"] = report.score_source;
    j["config"] = config_to_json(report.config);
    j["aggregate"] = {
        {"individuals", report.rows.size()},
        {"ap_mean", report.ap_mean},
        {"ap_std", report.ap_std},
        {"auc_mean", report.auc_mean},
        {"auc_std", report.auc_std},
    };
    j["skipped"] = report.skipped;
    nlohmann::json rows = nlohmann::json::array();
    for (const IndividualEval& row : report.rows) {
        nlohmann::json r;
        r["id"] = row.id;
        r["prototype"] = row.prototype_index;
        r["ap"] = row.ap;
        r["auc"] = row.auc;
        r["scores"] = std::vector<double>(row.scores.data(), row.scores.data() + row.scores.size());
        r["labels"] = row.labels;
        rows.push_back(std::move(r));
    }
    j["individuals"] = std::move(rows);
    return j.dump(2) + "\n";
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
    if (report.rows.empty())
        throw ConfigError("write_eval_csv: empty report");
    Index width = report.rows.front().scores.size();
    std::string out = "id,split,prototype,ap,auc";
    for (Index s = 0; s < width; ++s) out += ",score_" + std::to_string(s);
    for (Index s = 0; s < width; ++s) out += ",label_" + std::to_string(s);
    out += "\n";
    for (const IndividualEval& row : report.rows) {
        if (row.scores.size() != width)
            throw ContractError("write_eval_csv: ragged score widths");
        out += row.id + "," + report.split + "," + std::to_string(row.prototype_index) + ",";
        append_double(out, row.ap);
        out += ",";
        append_double(out, row.auc);
        for (Index s = 0; s < width; ++s) {
            out += ",";
            append_double(out, row.scores(s));
        }
        for (int v : row.labels) out += "," + std::to_string(v);
        out += "\n";
    }
    atomic_write_file(path, out);
}

std::string aggregate_line(const EvalReport& report) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "AP %.4f±%.4f  AUC %.4f±%.4f", report.ap_mean,
                  report.ap_std, report.auc_mean, report.auc_std);
    return buf;
}

namespace {

// Modified Lentz continued fraction for the incomplete beta; converges in a
// few dozen iterations for the degrees of freedom seen here.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 3e-15;
    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw NumericError("incomplete beta continued fraction did not converge (a=" +
                       std::to_string(a) + ", b=" + std::to_string(b) + ", x=" +
                       std::to_string(x) + ")");
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0))
        throw ConfigError("regularized_incomplete_beta: parameters must be positive");
    if (!(x >= 0.0) || !(x <= 1.0))
        throw ConfigError("regularized_incomplete_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_distribution_cdf(double f, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0))
        throw ConfigError("f_distribution_cdf: degrees of freedom must be positive");
    if (!std::isfinite(f))
        throw ConfigError("f_distribution_cdf: non-finite statistic");
    if (f <= 0.0) return 0.0;
    double x = d1 * f / (d1 * f + d2);
    return regularized_incomplete_beta(0.5 * d1, 0.5 * d2, x);
}

namespace {

struct OlsFit {
    double rss = 0.0;
    Index m = 0; // parameter count including intercept
    Index n = 0;
    Vector beta;
};

// Least squares of the target on an intercept plus lags 1..k of every
// variable passing the filter. Rows start at t0 so candidate orders can
// share a common sample.
template <typename KeepVar>
OlsFit fit_var_equation(const MtsSample& sample, Index k, Index t0, KeepVar keep) {
    Index s_count = sample.num_variables();
    Index n = sample.length() - t0;
    Index kept = 0;
    for (Index s = 0; s < s_count; ++s) kept += keep(s) ? 1 : 0;
    Index m = kept * k + 1;
    Matrix design(n, m);
    Vector y(n);
    for (Index row = 0; row < n; ++row) {
        Index t = t0 + row;
        y(row) = sample.values(sample.target_index, t);
        design(row, 0) = 1.0;
        Index col = 1;
        for (Index s = 0; s < s_count; ++s) {
            if (!keep(s)) continue;
            for (Index lag = 1; lag <= k; ++lag) design(row, col++) = sample.values(s, t - lag);
        }
    }

    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    if (qr.rank() < m) {
        Vector diag = qr.matrixR().diagonal().cwiseAbs();
        std::ostringstream msg;
        msg << "granger design matrix is rank deficient: rank " << qr.rank() << " of " << m
            << " columns (|R| diagonal spans " << diag.minCoeff() << " to " << diag.maxCoeff()
            << ")";
        throw NumericError(msg.str());
    }
    OlsFit fit;
    fit.beta = qr.solve(y);
    fit.rss = (y - design * fit.beta).squaredNorm();
    fit.m = m;
    fit.n = n;
    return fit;
}

} // namespace

GrangerResult linear_granger(const MtsSample& sample, Index maxlag, double significance) {
    Index s_count = sample.num_variables();
    Index length = sample.length();
    if (maxlag < 1)
        throw ConfigError("linear_granger: maxlag must be at least 1");
    if (!(significance > 0.0) || !(significance < 1.0))
        throw ConfigError("linear_granger: significance must lie in (0, 1)");
    if (s_count < 2)
        throw DataError("linear_granger: no exogenous variables in " + sample.id);
    if (sample.target_index < 0 || sample.target_index >= s_count)
        throw DataError("linear_granger: target index out of range in " + sample.id);
    Index required = s_count * maxlag + maxlag + 10;
    if (length <= required)
        throw DataError("linear_granger: series length " + std::to_string(length) +
                        " too short for maxlag " + std::to_string(maxlag) + ", need more than " +
                        std::to_string(required));
    if (!sample.values.allFinite())
        throw DataError("linear_granger: non-finite values in " + sample.id);

    // Order selection by Gaussian AIC over the target's own autoregression on
    // the sample shared by all candidates. Selecting on a model free of the
    // candidate causes keeps the later F-tests at their nominal size; picking
    // the order from the unrestricted fit re-tests the very lags AIC favored
    // and inflates the false positive rate well past the significance level.
    Index target = sample.target_index;
    auto own_only = [&](Index s) { return s == target; };
    auto all_vars = [](Index) { return true; };
    Index best_k = 1;
    double best_aic = std::numeric_limits<double>::infinity();
    for (Index k = 1; k <= maxlag; ++k) {
        OlsFit fit = fit_var_equation(sample, k, maxlag, own_only);
        double n = static_cast<double>(fit.n);
        double aic = n * std::log(std::max(fit.rss, 1e-300) / n) + 2.0 * static_cast<double>(fit.m);
        if (aic < best_aic) {
            best_aic = aic;
            best_k = k;
        }
    }

    Index k = best_k;
    OlsFit full = fit_var_equation(sample, k, k, all_vars);
    double dof = static_cast<double>(full.n - full.m);
    if (!(full.rss > 0.0))
        throw NumericError("linear_granger: zero residual variance at lag " + std::to_string(k));

    GrangerResult result;
    result.lag = k;
    result.coefficients = full.beta;
    result.rss_unrestricted = full.rss;
    Index exo = s_count - 1;
    result.rss_restricted.resize(exo);
    result.f_stat.resize(exo);
    result.p_value.resize(exo);
    result.score.resize(exo);
    result.decision.resize(static_cast<std::size_t>(exo));
    result.var_names.reserve(static_cast<std::size_t>(exo));

    Index out = 0;
    for (Index s = 0; s < s_count; ++s) {
        if (s == sample.target_index) continue;
        if (static_cast<Index>(sample.var_names.size()) == s_count)
            result.var_names.push_back(sample.var_names[static_cast<std::size_t>(s)]);
        else
            result.var_names.push_back("v" + std::to_string(s));

        OlsFit restricted = fit_var_equation(sample, k, k, [&](Index v) { return v != s; });
        result.rss_restricted(out) = restricted.rss;
        // Nested least squares keeps RSS_r >= RSS_u; clamp rounding residue.
        double numerator = std::max(restricted.rss - full.rss, 0.0) / static_cast<double>(k);
        double f = numerator / (full.rss / dof);
        double p = 1.0 - f_distribution_cdf(f, static_cast<double>(k), dof);
        result.f_stat(out) = f;
        result.p_value(out) = p;
        result.score(out) = 1.0 - p;
        result.decision[static_cast<std::size_t>(out)] = p < significance ? 1 : 0;
        ++out;
    }
    return result;
}

} // namespace ingra
