#pragma once

#include <string>
#include <vector>

#include "ingra/data.hpp"
#include "ingra/matrix.hpp"
#include "ingra/model.hpp"

namespace ingra {

// Ranking metrics over one individual's exogenous variables. Ties in the
// score-descending ranking break by ascending index, so results are
// deterministic functions of their inputs.
double average_precision(const Vector& scores, const std::vector<int>& labels);

// Mann-Whitney formulation; tied positive/negative pairs count half.
double roc_auc(const Vector& scores, const std::vector<int>& labels);

// Which attention vector ranks the variables.
enum class ScoreSource { mixed, direct }; // a, or q alone

std::string to_string(ScoreSource source);

struct IndividualEval {
    std::string id;
    Vector scores;           // per exogenous variable, sample order
    std::vector<int> labels; // causal ground truth
    Index prototype_index = -1;
    double ap = 0.0;
    double auc = 0.0;
};

struct EvalReport {
    std::string split;        // "train" or "unseen"
    std::string score_source; // "mixed", "direct", or "granger"
    ModelConfig config;
    std::vector<IndividualEval> rows;
    std::vector<std::string> skipped; // "id: reason" for individuals not scored
    double ap_mean = 0.0;
    double ap_std = 0.0; // population std over individuals
    double auc_mean = 0.0;
    double auc_std = 0.0;
};

// Recomputes the mean/std aggregates from the per-individual rows.
void finalize_aggregates(EvalReport& report);

// Scores every individual's attention against its ground truth. The target's
// own coordinate is dropped; the remaining entries line up with omega.
// samples and records run in parallel order.
EvalReport score_structures(const std::vector<const MtsSample*>& samples,
                            const std::vector<AttentionRecord>& records,
                            Index target_index, ScoreSource source,
                            const ModelConfig& config, const std::string& split);

std::string eval_report_to_json(const EvalReport& report);
void write_eval_csv(const EvalReport& report, const std::string& path);

// "AP 0.9123±0.0456  AUC 0.9321±0.0210" with fixed four-decimal formatting.
std::string aggregate_line(const EvalReport& report);

// Continued-fraction evaluation of I_x(a, b); also the F distribution's CDF,
// exposed for verification against tabulated quantiles.
double regularized_incomplete_beta(double a, double b, double x);
double f_distribution_cdf(double f, double d1, double d2);

struct GrangerResult {
    Index lag = 0;                      // AIC-selected order, <= maxlag
    Vector coefficients;                // unrestricted fit: intercept, then lag blocks
    double rss_unrestricted = 0.0;
    std::vector<std::string> var_names; // exogenous variables, sample order
    Vector rss_restricted;              // per excluded variable
    Vector f_stat;
    Vector p_value;
    Vector score;               // 1 - p, the ranking score
    std::vector<int> decision;  // 1 when p < significance
};

// Pairwise-conditional linear Granger test: ordinary least squares VAR of
// the target on lags 1..k of every variable, F-test per excluded variable.
GrangerResult linear_granger(const MtsSample& sample, Index maxlag, double significance);

} // namespace ingra
