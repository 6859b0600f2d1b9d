#include "ingra/training.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <span>
#include <system_error>

#include "ingra/checkpoint.hpp"
#include "ingra/error.hpp"

namespace ingra {

double loss_pred(const Vector& predictions, const Vector& targets) {
    if (predictions.size() == 0) throw ConfigError("empty batch");
    if (predictions.size() != targets.size())
        throw ConfigError("prediction and target batches differ in length");
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

double loss_aux(const Vector& eps_all, const Matrix& eps_without) {
    if (eps_all.size() == 0) throw ConfigError("empty batch");
    if (eps_without.cols() != eps_all.size())
        throw ConfigError("per-variable error batch does not match eps_all");
    return (eps_all.sum() + eps_without.sum()) / static_cast<double>(eps_all.size());
}

void InvariantCounters::observe(const Vector& delta_eps, const Vector& q, const Vector& r,
                                const Vector& a) {
    bool ok = true;
    const double neg_delta = delta_eps.size() ? delta_eps.minCoeff() : 0.0;
    if (neg_delta < 0.0) {
        ok = false;
        worst_negative = std::min(worst_negative, neg_delta);
    }
    for (const Vector* v : {&q, &r, &a}) {
        const double neg = v->minCoeff();
        if (neg < 0.0) {
            ok = false;
            worst_negative = std::min(worst_negative, neg);
        }
        const double gap = std::fabs(v->sum() - 1.0);
        worst_simplex_gap = std::max(worst_simplex_gap, gap);
        if (gap > 1e-9) ok = false;
    }
    ++vectors_checked;
    if (!ok) ++violations;
}

Trainer::Trainer(IngraModel& model, std::vector<const MtsSample*> train_samples)
    : model_(model),
      samples_(std::move(train_samples)),
      shuffle_rng_(Rng::derive(model.config().seed, "shuffle")),
      gumbel_rng_(Rng::derive(model.config().seed, "gumbel")),
      kmeans_rng_(Rng::derive(model.config().seed, "kmeans")),
      sink_(model.params()) {
    if (samples_.empty()) throw ConfigError("training needs at least one individual");
    for (const MtsSample* s : samples_) {
        const auto ws = window_series(*s, model_.config().window_length);
        windows_.insert(windows_.end(), ws.begin(), ws.end());
    }
}

const TrainReport& Trainer::run() {
    pretrain();
    if (!report_.aborted) init_prototypes();
    if (!report_.aborted) main_phase();
    return report_;
}

void Trainer::pretrain() {
    const double configured = model_.config().alpha;
    model_.set_alpha(1.0);
    run_epochs(model_.config().pretrain_epochs, true);
    model_.set_alpha(configured);
}

void Trainer::init_prototypes() {
    const Index s_count = model_.config().num_variables;
    collected_q_.resize(static_cast<Index>(samples_.size()), s_count);
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const AttentionRecord rec = model_.aggregate_attention(*samples_[i], work_);
        report_.invariants.observe(rec.delta_eps, rec.q, rec.r, rec.a);
        collected_q_.row(static_cast<Index>(i)) = rec.q.transpose();
    }
    const Index k = model_.config().num_prototypes;
    if (static_cast<Index>(samples_.size()) >= k)
        model_.prototypes() = kmeans_init(collected_q_, k, kmeans_rng_);
    // fewer individuals than prototypes: keep the random bank rather than
    // fabricate duplicate centers
}

void Trainer::main_phase() {
    run_epochs(model_.config().train_epochs, false);
    if (report_.aborted && has_best()) restore_best();
}

void Trainer::run_epochs(Index count, bool pretrain_phase) {
    for (Index e = 0; e < count && !report_.aborted; ++e) {
        EpochLog log;
        log.epoch = ++epoch_counter_;
        log.phase = pretrain_phase ? "pretrain" : "main";
        const auto start = std::chrono::steady_clock::now();
        try {
            epoch_pass(pretrain_phase, log);
        } catch (const NumericError& ex) {
            report_.aborted = true;
            report_.abort_reason = ex.what();
            break;
        }
        log.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
        report_.epochs.push_back(log);
        if (!pretrain_phase &&
            (report_.best_epoch < 0 || log.total < report_.best_total)) {
            report_.best_epoch = log.epoch;
            report_.best_total = log.total;
            snapshot_best();
        }
    }
}

double Trainer::epoch_pass(bool pretrain_phase, EpochLog& log) {
    const ModelConfig& cfg = model_.config();
    ParamStore& store = model_.params();
    const Index n = static_cast<Index>(windows_.size());

    std::vector<std::size_t> order(windows_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng_.shuffle(order);

    std::vector<const WindowedExample*> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));

    double pred_sum = 0.0;
    double aux_sum = 0.0;
    Matrix proto_before;

    for (Index start = 0; start < n; start += cfg.batch_size) {
        const Index b_count = std::min<Index>(cfg.batch_size, n - start);
        batch.clear();
        for (Index i = 0; i < b_count; ++i)
            batch.push_back(&windows_[order[static_cast<std::size_t>(start + i)]]);
        const auto span = std::span<const WindowedExample* const>(batch.data(), batch.size());

        Rng* noise = cfg.alpha >= 1.0 ? nullptr : &gumbel_rng_;
        model_.forward_batch(span, Mode::training, noise, work_);
        for (const ExampleState& st : work_.result.ex)
            report_.invariants.observe(st.delta_eps, st.q, st.r, st.a);
        pred_sum += work_.result.loss_pred * static_cast<double>(b_count);
        aux_sum += work_.result.loss_aux * static_cast<double>(b_count);

        sink_.zero();
        model_.backward_batch(span, work_, sink_);
        sink_.add_to_store(store, 1.0 / static_cast<double>(b_count));
        if (!pretrain_phase && cfg.lambda2 > 0.0)
            model_.add_diversity_gradient(cfg.lambda2);

        if (!pretrain_phase) proto_before = model_.prototypes();
        store.sgd_step(cfg.learning_rate);
        if (!pretrain_phase) guard_prototypes(proto_before);
    }

    log.pred = pred_sum / static_cast<double>(n);
    log.aux = aux_sum / static_cast<double>(n);
    log.div = model_.diversity().loss;
    log.total = log.pred + cfg.lambda1 * log.aux + cfg.lambda2 * log.div;
    return log.total;
}

void Trainer::guard_prototypes(const Matrix& before) {
    // a prototype that went fully non-positive would project to nothing and
    // stop matching anything; undo that row's step
    Matrix& p = model_.prototypes();
    for (Index k = 0; k < p.rows(); ++k)
        if (p.row(k).maxCoeff() <= 0.0) p.row(k) = before.row(k);
}

void Trainer::snapshot_best() {
    const ParamStore& store = model_.params();
    best_values_.resize(store.tensor_count());
    for (std::size_t i = 0; i < store.tensor_count(); ++i)
        best_values_[i] = store.tensor(i).value;
}

void Trainer::restore_best() {
    if (!has_best()) throw StateError("no best snapshot recorded yet");
    ParamStore& store = model_.params();
    for (std::size_t i = 0; i < store.tensor_count(); ++i)
        store.tensor(i).value = best_values_[i];
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

} // namespace

void write_training_log(const std::vector<EpochLog>& epochs, const std::string& path) {
    std::string out = "epoch,phase,pred,aux,div,total,wall_ms\n";
    for (const EpochLog& e : epochs) {
        out += std::to_string(e.epoch);
        out += ',';
        out += e.phase;
        out += ',';
        append_double(out, e.pred);
        out += ',';
        append_double(out, e.aux);
        out += ',';
        append_double(out, e.div);
        out += ',';
        append_double(out, e.total);
        out += ',';
        append_double(out, e.wall_ms);
        out += '\n';
    }
    atomic_write_file(path, out);
}

} // namespace ingra
