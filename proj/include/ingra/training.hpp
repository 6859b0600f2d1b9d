#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ingra/data.hpp"
#include "ingra/matrix.hpp"
#include "ingra/model.hpp"

namespace ingra {

// Mean squared prediction error over a batch.
double loss_pred(const Vector& predictions, const Vector& targets);

// Mean over the batch of eps_all + Σ_s eps_without[s]; eps_without is S×B.
double loss_aux(const Vector& eps_all, const Matrix& eps_without);

struct EpochLog {
    Index epoch = 0;   // 1-based, counted across both phases
    std::string phase; // "pretrain" or "main"
    double pred = 0.0; // example-weighted means over the epoch
    double aux = 0.0;
    double div = 0.0;  // prototype-bank diversity after the epoch's last step
    double total = 0.0; // pred + lambda1·aux + lambda2·div
    double wall_ms = 0.0;
};

// Online tally of the attention invariants over everything the training run
// emits: delta_eps entrywise non-negative, q/r/a on the simplex within 1e-9.
struct InvariantCounters {
    std::uint64_t vectors_checked = 0;
    std::uint64_t violations = 0;
    double worst_simplex_gap = 0.0; // largest |sum - 1| seen
    double worst_negative = 0.0;    // most negative entry seen (<= 0)

    void observe(const Vector& delta_eps, const Vector& q, const Vector& r, const Vector& a);
};

struct TrainReport {
    std::vector<EpochLog> epochs;
    InvariantCounters invariants;
    bool aborted = false; // a non-finite value interrupted the run
    std::string abort_reason;
    Index best_epoch = -1; // main-phase epoch with the lowest total
    double best_total = 0.0;
};

// Orchestrates the optimization: pretraining with the prototype path
// bypassed, per-individual attention collection, k-means prototype
// initialization, then the main phase with the full loss. run() executes the
// phases in order; they are public so tests can observe the boundaries.
class Trainer {
public:
    Trainer(IngraModel& model, std::vector<const MtsSample*> train_samples);

    const TrainReport& run();

    void pretrain();
    // Aggregates each training individual's attention and re-seats the
    // prototype bank on the k-means centers of those vectors.
    void init_prototypes();
    void main_phase();

    const TrainReport& report() const { return report_; }
    // Attention vectors collected for prototype initialization, one row per
    // training individual (filled by init_prototypes).
    const Matrix& collected_attention() const { return collected_q_; }

    bool has_best() const { return !best_values_.empty(); }
    // Restores the main-phase best parameters into the model.
    void restore_best();

private:
    void run_epochs(Index count, bool pretrain_phase);
    double epoch_pass(bool pretrain_phase, EpochLog& log);
    void snapshot_best();
    void guard_prototypes(const Matrix& before);

    IngraModel& model_;
    std::vector<const MtsSample*> samples_;
    std::vector<WindowedExample> windows_;
    Rng shuffle_rng_;
    Rng gumbel_rng_;
    Rng kmeans_rng_;
    BatchWork work_;
    GradSink sink_;
    Matrix collected_q_;
    std::vector<Matrix> best_values_;
    TrainReport report_;
    Index epoch_counter_ = 0;
};

// Writes the per-epoch log as CSV: epoch,phase,pred,aux,div,total,wall_ms.
void write_training_log(const std::vector<EpochLog>& epochs, const std::string& path);

} // namespace ingra
