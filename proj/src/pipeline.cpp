#include "ingra/pipeline.hpp"

#include <charconv>
#include <cstdlib>
#include <exception>
#include <thread>

#include "ingra/checkpoint.hpp"
#include "ingra/error.hpp"
#include "ingra/prototype.hpp"

namespace ingra {
namespace {

void append_double(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

// Strided parallel loop over [0, n): worker w takes indices w, w+T, ... Each
// index's result lands in a caller-owned slot, so output is identical for
// any worker count. The first worker's exception (by worker order) wins.
template <typename Fn>
void parallel_indices(std::size_t n, int threads, Fn&& fn) {
    int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = static_cast<std::size_t>(w); i < n;
                     i += static_cast<std::size_t>(workers))
                    fn(i, w);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace

int thread_cap() {
    if (const char* env = std::getenv("INGRA_THREADS")) {
        int v = 0;
        auto res = std::from_chars(env, env + std::string_view(env).size(), v);
        if (res.ec == std::errc{} && v >= 1) return v;
        return 1; // a set but unusable value means "do not parallelize"
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<AttentionRecord> collect_attention(const IngraModel& model,
                                               const std::vector<const MtsSample*>& samples,
                                               int threads) {
    if (samples.empty()) throw ConfigError("collect_attention: no samples");
    std::vector<AttentionRecord> records(samples.size());
    int workers = std::max(1, std::min<int>(threads, static_cast<int>(samples.size())));
    std::vector<BatchWork> work(static_cast<std::size_t>(workers));
    parallel_indices(samples.size(), workers, [&](std::size_t i, int w) {
        if (samples[i] == nullptr) throw ContractError("collect_attention: null sample");
        records[i] = model.aggregate_attention(*samples[i], work[static_cast<std::size_t>(w)]);
    });
    return records;
}

EvalReport baseline_report(const std::vector<const MtsSample*>& samples, Index maxlag,
                           double significance, const std::string& split, int threads) {
    if (samples.empty()) throw ConfigError("baseline_report: no samples");

    struct Slot {
        bool ok = false;
        IndividualEval row;
        std::string skip_reason;
    };
    std::vector<Slot> slots(samples.size());

    parallel_indices(samples.size(), threads, [&](std::size_t i, int) {
        const MtsSample* sample = samples[i];
        if (sample == nullptr) throw ContractError("baseline_report: null sample");
        if (sample->ground_truth.empty())
            throw DataError("baseline_report: " + sample->id + " has no causal ground truth");
        Slot& slot = slots[i];
        try {
            GrangerResult res = linear_granger(*sample, maxlag, significance);
            slot.row.id = sample->id;
            slot.row.scores = res.score;
            slot.row.labels = sample->ground_truth;
            slot.row.prototype_index = -1;
            slot.row.ap = average_precision(slot.row.scores, slot.row.labels);
            slot.row.auc = roc_auc(slot.row.scores, slot.row.labels);
            slot.ok = true;
        } catch (const DataError& e) {
            slot.skip_reason = sample->id + ": " + e.what();
        } catch (const NumericError& e) {
            slot.skip_reason = sample->id + ": " + e.what();
        }
    });

    EvalReport report;
    report.split = split;
    report.score_source = "granger";
    report.config.num_variables = samples.front()->num_variables();
    report.config.target_index = samples.front()->target_index;
    for (Slot& slot : slots) {
        if (slot.ok) report.rows.push_back(std::move(slot.row));
        else report.skipped.push_back(std::move(slot.skip_reason));
    }
    if (report.rows.empty())
        throw DataError("baseline_report: every individual was skipped");
    finalize_aggregates(report);
    return report;
}

Matrix exported_prototypes(const IngraModel& model) {
    const Matrix& raw = model.prototypes();
    Matrix out = raw.cwiseMax(0.0);
    for (Index k = 0; k < out.rows(); ++k) {
        double mass = out.row(k).sum();
        if (mass <= kMassFloor)
            out.row(k).setConstant(1.0 / static_cast<double>(out.cols()));
        else
            out.row(k) /= mass;
    }
    return out;
}

void write_attention_csv(const std::vector<const MtsSample*>& samples,
                         const std::vector<AttentionRecord>& records,
                         const std::vector<std::string>& var_names, const std::string& path) {
    if (samples.size() != records.size())
        throw ConfigError("write_attention_csv: sample/record count mismatch");
    std::string out = "id,prototype";
    for (const char* block : {"q", "r", "a"})
        for (const std::string& name : var_names) out += std::string(",") + block + "_" + name;
    out += "\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const AttentionRecord& rec = records[i];
        out += samples[i]->id + "," + std::to_string(rec.prototype_index);
        for (const Vector* vec : {&rec.q, &rec.r, &rec.a}) {
            if (vec->size() != static_cast<Index>(var_names.size()))
                throw ContractError("write_attention_csv: attention width mismatch for " +
                                    samples[i]->id);
            for (Index s = 0; s < vec->size(); ++s) {
                out += ",";
                append_double(out, (*vec)(s));
            }
        }
        out += "\n";
    }
    atomic_write_file(path, out);
}

void write_prototype_csv(const IngraModel& model, const std::vector<std::string>& var_names,
                         const std::string& path) {
    Matrix protos = exported_prototypes(model);
    if (protos.cols() != static_cast<Index>(var_names.size()))
        throw ConfigError("write_prototype_csv: variable name count mismatch");
    std::string out = "prototype";
    for (const std::string& name : var_names) out += "," + name;
    out += "\n";
    for (Index k = 0; k < protos.rows(); ++k) {
        out += std::to_string(k);
        for (Index s = 0; s < protos.cols(); ++s) {
            out += ",";
            append_double(out, protos(k, s));
        }
        out += "\n";
    }
    atomic_write_file(path, out);
}

} // namespace ingra
