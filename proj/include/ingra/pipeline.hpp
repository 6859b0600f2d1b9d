#pragma once

#include <string>
#include <vector>

#include "ingra/data.hpp"
#include "ingra/metrics.hpp"
#include "ingra/model.hpp"

namespace ingra {

// Worker count for per-individual parallel sections: INGRA_THREADS when set
// (clamped to at least 1), hardware concurrency otherwise.
int thread_cap();

// Window-aggregated attention per sample, computed in parallel with one
// scratch buffer per worker. Output order matches input order exactly, so
// results are independent of the worker count.
std::vector<AttentionRecord> collect_attention(const IngraModel& model,
                                               const std::vector<const MtsSample*>& samples,
                                               int threads);

// Linear Granger baseline over many individuals in EvalReport form.
// Individuals the test cannot handle (series too short, degenerate design)
// are skipped and listed in the report rather than failing the batch.
EvalReport baseline_report(const std::vector<const MtsSample*>& samples, Index maxlag,
                           double significance, const std::string& split, int threads);

// Prototype rows projected the way the attention path reads them: ReLU then
// sum-normalization (uniform for a row with no positive mass).
Matrix exported_prototypes(const IngraModel& model);

// One row per individual: id, selected prototype, then q, r, a blocks named
// by variable.
void write_attention_csv(const std::vector<const MtsSample*>& samples,
                         const std::vector<AttentionRecord>& records,
                         const std::vector<std::string>& var_names, const std::string& path);

void write_prototype_csv(const IngraModel& model, const std::vector<std::string>& var_names,
                         const std::string& path);

} // namespace ingra
