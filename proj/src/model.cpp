#include "ingra/model.hpp"

#include <algorithm>
#include <cmath>

#include "ingra/error.hpp"

namespace ingra {

void ModelConfig::validate() const {
    if (num_variables < 2) throw ConfigError("at least two variables are required");
    if (target_index < 0 || target_index >= num_variables)
        throw ConfigError("target index out of range");
    if (window_length < 1) throw ConfigError("window length must be positive");
    if (hidden_size < 1) throw ConfigError("hidden size must be positive");
    if (num_prototypes < 1) throw ConfigError("at least one prototype is required");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("loss weights must be non-negative");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (pretrain_epochs < 0 || train_epochs < 0) throw ConfigError("epoch counts must be non-negative");
}

Vector granger_attribution(double eps_all, const Vector& eps_without) {
    if (eps_all < 0.0 || (eps_without.array() < 0.0).any())
        throw ContractError("squared errors must be non-negative");
    return (eps_without.array() - eps_all).max(0.0).matrix();
}

Vector granger_attention(const Vector& delta_eps) {
    if ((delta_eps.array() < 0.0).any())
        throw ContractError("attributions must be non-negative");
    const double mass = delta_eps.sum();
    if (mass < kMassFloor)
        return Vector::Constant(delta_eps.size(),
                                1.0 / static_cast<double>(delta_eps.size()));
    return delta_eps / mass;
}

IngraModel::IngraModel(const ModelConfig& config) : cfg_(config) {
    cfg_.validate();
    Rng rng(Rng::derive(cfg_.seed, "model-init"));
    const Index s_count = cfg_.num_variables;
    const Index h = cfg_.hidden_size;

    enc_.reserve(static_cast<std::size_t>(s_count));
    for (Index s = 0; s < s_count; ++s)
        enc_.emplace_back(store_, "enc." + std::to_string(s), h, rng);
    f_.reserve(static_cast<std::size_t>(s_count));
    for (Index s = 0; s < s_count; ++s)
        f_.emplace_back(store_, "f." + std::to_string(s), h, h, rng);
    g_all_ = std::make_unique<ScalarMlp>(store_, "g_all", s_count * h, h, rng);
    g_wo_.reserve(static_cast<std::size_t>(s_count));
    for (Index s = 0; s < s_count; ++s)
        g_wo_.emplace_back(store_, "g_wo." + std::to_string(s), (s_count - 1) * h, h, rng);

    protos_ = &store_.add("prototypes", cfg_.num_prototypes, s_count);
    for (Index k = 0; k < cfg_.num_prototypes; ++k)
        for (Index s = 0; s < s_count; ++s) protos_->value(k, s) = rng.uniform01();
}

void IngraModel::set_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    cfg_.alpha = alpha;
}

void IngraModel::ensure_work(BatchWork& work, Index batch) const {
    const std::size_t s_count = static_cast<std::size_t>(cfg_.num_variables);
    work.inputs.resize(s_count);
    work.enc.resize(s_count);
    work.f_tr.resize(s_count);
    work.g_wo_tr.resize(s_count);
    work.e_wo.resize(s_count);
    work.result.ex.resize(static_cast<std::size_t>(batch));
}

void IngraModel::attention_chain(ExampleState& st, Mode mode, Rng* gumbel_rng) const {
    const Index s_count = cfg_.num_variables;
    const Index k_count = cfg_.num_prototypes;

    st.delta_eps = granger_attribution(st.eps_all, st.eps_wo);
    for (Index s = 0; s < s_count; ++s)
        st.kink_margin = std::min(st.kink_margin, std::fabs(st.eps_wo(s) - st.eps_all));
    st.mass = st.delta_eps.sum();
    st.q_uniform = st.mass < kMassFloor;
    st.q = granger_attention(st.delta_eps);
    if (!st.q_uniform)
        st.kink_margin = std::min(st.kink_margin, std::fabs(st.mass - kMassFloor));

    if (cfg_.alpha >= 1.0) {
        // Prototype path bypassed entirely; the record mirrors q.
        st.r = st.q;
        st.proto_argmax = -1;
        st.a = st.q;
        return;
    }

    const Matrix& p = protos_->value;
    st.d = prototype_similarity(p, st.q, &st.kink_margin);
    // ReLU kinks on prototype entries themselves
    st.kink_margin = std::min(st.kink_margin, p.cwiseAbs().minCoeff());

    st.proto_argmax = 0;
    for (Index k = 1; k < k_count; ++k)
        if (st.d(k) > st.d(st.proto_argmax)) st.proto_argmax = k;

    if (mode == Mode::training) {
        if (!gumbel_rng)
            throw ContractError("training-mode selection needs a noise source");
        GumbelSample gs = gumbel_softmax_select(st.d, cfg_.tau, *gumbel_rng);
        st.e = std::move(gs.e);
        st.noise = std::move(gs.noise);
    } else {
        st.e = Vector::Zero(k_count);
        st.e(st.proto_argmax) = 1.0;
        st.noise.resize(0);
    }

    st.r = prototypical_attention(p, st.e, &st.kink_margin);
    st.a = cfg_.alpha * st.q + (1.0 - cfg_.alpha) * st.r;
}

void IngraModel::forward_batch(std::span<const WindowedExample* const> batch, Mode mode,
                               Rng* gumbel_rng, BatchWork& work) const {
    const Index b_count = static_cast<Index>(batch.size());
    if (b_count < 1) throw ConfigError("empty batch");
    const Index s_count = cfg_.num_variables;
    const Index h = cfg_.hidden_size;
    const Index t_len = cfg_.window_length;

    for (Index b = 0; b < b_count; ++b) {
        const WindowedExample& ex = *batch[static_cast<std::size_t>(b)];
        if (ex.sample->num_variables() != s_count)
            throw DataError("example '" + ex.sample->id + "' has " +
                            std::to_string(ex.sample->num_variables()) +
                            " variables, model expects " + std::to_string(s_count));
        if (ex.window != t_len)
            throw DataError("window length mismatch: example " + std::to_string(ex.window) +
                            ", model " + std::to_string(t_len));
    }

    ensure_work(work, b_count);

    for (Index s = 0; s < s_count; ++s) {
        Matrix& in = work.inputs[static_cast<std::size_t>(s)];
        in.resize(t_len, b_count);
        for (Index b = 0; b < b_count; ++b) {
            const WindowedExample& ex = *batch[static_cast<std::size_t>(b)];
            for (Index t = 0; t < t_len; ++t) in(t, b) = ex.input(s, t);
        }
    }

    work.embeddings.resize(s_count * h, b_count);
    for (Index s = 0; s < s_count; ++s) {
        LstmWork& lw = work.enc[static_cast<std::size_t>(s)];
        enc_[static_cast<std::size_t>(s)].forward(work.inputs[static_cast<std::size_t>(s)], lw);
        work.embeddings.middleRows(s * h, h) = lw.steps[static_cast<std::size_t>(t_len - 1)].h;
    }
    ensure_finite(work.embeddings, "encoder embeddings");

    work.preds.resize(s_count, b_count);
    for (Index s = 0; s < s_count; ++s) {
        ScalarMlp::Trace& tr = work.f_tr[static_cast<std::size_t>(s)];
        f_[static_cast<std::size_t>(s)].forward(work.embeddings.middleRows(s * h, h), tr);
        work.preds.row(s) = tr.out;
    }
    ensure_finite(work.preds, "per-variable predictions");

    g_all_->forward(work.embeddings, work.g_all_tr);
    ensure_finite(work.g_all_tr.out, "all-information prediction");

    for (Index s = 0; s < s_count; ++s) {
        Matrix& ewo = work.e_wo[static_cast<std::size_t>(s)];
        ewo.resize((s_count - 1) * h, b_count);
        if (s > 0) ewo.topRows(s * h) = work.embeddings.topRows(s * h);
        if (s < s_count - 1)
            ewo.bottomRows((s_count - 1 - s) * h) = work.embeddings.bottomRows((s_count - 1 - s) * h);
        g_wo_[static_cast<std::size_t>(s)].forward(ewo, work.g_wo_tr[static_cast<std::size_t>(s)]);
        ensure_finite(work.g_wo_tr[static_cast<std::size_t>(s)].out, "leave-one-out prediction");
    }

    work.result.loss_pred = 0.0;
    work.result.loss_aux = 0.0;
    for (Index b = 0; b < b_count; ++b) {
        ExampleState& st = work.result.ex[static_cast<std::size_t>(b)];
        st.kink_margin = 1e300; // other fields are fully overwritten below
        st.y = batch[static_cast<std::size_t>(b)]->target_next();
        ensure_finite(st.y, "target value");
        st.eps_wo.resize(s_count);
        const double gall = work.g_all_tr.out(0, b);
        st.eps_all = (gall - st.y) * (gall - st.y);
        for (Index s = 0; s < s_count; ++s) {
            const double gwo = work.g_wo_tr[static_cast<std::size_t>(s)].out(0, b);
            st.eps_wo(s) = (gwo - st.y) * (gwo - st.y);
        }

        attention_chain(st, mode, gumbel_rng);

        st.yhat = st.a.dot(work.preds.col(b));
        ensure_finite(st.yhat, "prediction");
        work.result.loss_pred += (st.yhat - st.y) * (st.yhat - st.y);
        work.result.loss_aux += st.eps_all + st.eps_wo.sum();
    }
    work.result.loss_pred /= static_cast<double>(b_count);
    work.result.loss_aux /= static_cast<double>(b_count);
}

void IngraModel::backward_batch(std::span<const WindowedExample* const> batch,
                                BatchWork& work, GradSink& sink) const {
    const Index b_count = static_cast<Index>(batch.size());
    const Index s_count = cfg_.num_variables;
    const Index h = cfg_.hidden_size;
    const double l1 = cfg_.lambda1;
    const Matrix& p = protos_->value;
    Matrix& dprotos = sink.of(*protos_);

    work.d_preds.resize(s_count, b_count);
    work.d_gall_out.resize(1, b_count);
    work.d_gwo_out.resize(s_count, b_count);

    Vector da(s_count), dq(s_count), dr(s_count), ddelta(s_count), de, dd;
    for (Index b = 0; b < b_count; ++b) {
        const ExampleState& st = work.result.ex[static_cast<std::size_t>(b)];
        const double dyhat = 2.0 * (st.yhat - st.y);

        for (Index s = 0; s < s_count; ++s) work.d_preds(s, b) = dyhat * st.a(s);
        da = dyhat * work.preds.col(b);

        if (cfg_.alpha >= 1.0) {
            dq = da;
        } else {
            dq = cfg_.alpha * da;
            dr = (1.0 - cfg_.alpha) * da;
            de = Vector::Zero(cfg_.num_prototypes);
            dd = Vector::Zero(cfg_.num_prototypes);
            prototypical_attention_backward(p, st.e, dr, de, dprotos);
            gumbel_softmax_backward(st.d, st.e, cfg_.tau, de, dd);
            prototype_similarity_backward(p, st.q, st.d, dd, dprotos, dq);
        }

        if (st.q_uniform) {
            ddelta.setZero();
        } else {
            const double inner = dq.dot(st.q);
            ddelta = (dq.array() - inner).matrix() / st.mass;
        }

        double deps_all = l1;
        for (Index s = 0; s < s_count; ++s) {
            double deps_wo = l1;
            if (st.delta_eps(s) > 0.0) {
                deps_wo += ddelta(s);
                deps_all -= ddelta(s);
            }
            const double gwo = work.g_wo_tr[static_cast<std::size_t>(s)].out(0, b);
            work.d_gwo_out(s, b) = deps_wo * 2.0 * (gwo - st.y);
        }
        const double gall = work.g_all_tr.out(0, b);
        work.d_gall_out(0, b) = deps_all * 2.0 * (gall - st.y);
    }

    // Heads, then encoders. d_embeddings accumulates every path into the
    // shared embedding matrix.
    work.d_embeddings.resize(s_count * h, b_count);
    work.d_embeddings.setZero();

    for (Index s = 0; s < s_count; ++s) {
        work.dout_row = work.d_preds.row(s);
        f_[static_cast<std::size_t>(s)].backward(work.embeddings.middleRows(s * h, h),
                                                 work.f_tr[static_cast<std::size_t>(s)],
                                                 work.dout_row, work.dx_head, sink);
        work.d_embeddings.middleRows(s * h, h) += work.dx_head;
    }

    g_all_->backward(work.embeddings, work.g_all_tr, work.d_gall_out, work.dx_head, sink);
    work.d_embeddings += work.dx_head;

    for (Index s = 0; s < s_count; ++s) {
        work.dout_row = work.d_gwo_out.row(s);
        g_wo_[static_cast<std::size_t>(s)].backward(work.e_wo[static_cast<std::size_t>(s)],
                                                    work.g_wo_tr[static_cast<std::size_t>(s)],
                                                    work.dout_row, work.d_ewo, sink);
        if (s > 0) work.d_embeddings.topRows(s * h) += work.d_ewo.topRows(s * h);
        if (s < s_count - 1)
            work.d_embeddings.bottomRows((s_count - 1 - s) * h) +=
                work.d_ewo.bottomRows((s_count - 1 - s) * h);
    }

    for (Index s = 0; s < s_count; ++s) {
        enc_[static_cast<std::size_t>(s)].backward(
            work.inputs[static_cast<std::size_t>(s)],
            work.d_embeddings.middleRows(s * h, h), work.enc[static_cast<std::size_t>(s)],
            sink);
    }
}

DiversityResult IngraModel::diversity() const {
    return diversity_loss(protos_->value, cfg_.gamma);
}

void IngraModel::add_diversity_gradient(double coeff) {
    diversity_backward(protos_->value, cfg_.gamma, coeff, protos_->grad);
}

std::pair<double, AttentionRecord> IngraModel::infer(const WindowedExample& example,
                                                     Mode mode, Rng* gumbel_rng) const {
    BatchWork work;
    const WindowedExample* one[] = {&example};
    forward_batch(std::span<const WindowedExample* const>(one, 1), mode, gumbel_rng, work);
    const ExampleState& st = work.result.ex[0];
    return {st.yhat, record_from_state(st)};
}

AttentionRecord IngraModel::record_from_state(const ExampleState& st) {
    AttentionRecord rec;
    rec.delta_eps = st.delta_eps;
    rec.q = st.q;
    rec.r = st.r;
    rec.a = st.a;
    rec.prototype_index = st.proto_argmax;
    return rec;
}

AttentionRecord IngraModel::aggregate_attention(const MtsSample& sample,
                                                BatchWork& work) const {
    const auto windows = window_series(sample, cfg_.window_length, 1);
    const Index s_count = cfg_.num_variables;
    Vector delta_sum = Vector::Zero(s_count);

    constexpr std::size_t kChunk = 128;
    std::vector<const WindowedExample*> ptrs;
    for (std::size_t start = 0; start < windows.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, windows.size() - start);
        ptrs.resize(n);
        for (std::size_t i = 0; i < n; ++i) ptrs[i] = &windows[start + i];
        forward_batch(std::span<const WindowedExample* const>(ptrs.data(), n),
                      Mode::inference, nullptr, work);
        for (std::size_t i = 0; i < n; ++i)
            delta_sum += work.result.ex[i].delta_eps;
    }

    AttentionRecord rec;
    rec.delta_eps = delta_sum;
    const double mass = delta_sum.sum();
    if (mass < kMassFloor)
        rec.q = Vector::Constant(s_count, 1.0 / static_cast<double>(s_count));
    else
        rec.q = delta_sum / mass;

    if (cfg_.alpha >= 1.0) {
        rec.r = rec.q;
        rec.prototype_index = -1;
        rec.a = rec.q;
        return rec;
    }
    const Matrix& p = protos_->value;
    const Vector d = prototype_similarity(p, rec.q);
    Index best = 0;
    for (Index k = 1; k < cfg_.num_prototypes; ++k)
        if (d(k) > d(best)) best = k;
    Vector e = Vector::Zero(cfg_.num_prototypes);
    e(best) = 1.0;
    rec.r = prototypical_attention(p, e);
    rec.prototype_index = best;
    rec.a = cfg_.alpha * rec.q + (1.0 - cfg_.alpha) * rec.r;
    return rec;
}

} // namespace ingra
