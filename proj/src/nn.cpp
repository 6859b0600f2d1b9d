#include "ingra/nn.hpp"

#include <cmath>

#include "ingra/error.hpp"

namespace ingra {
namespace {

void uniform_fill(Matrix& m, double bound, Rng& rng) {
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

} // namespace

DenseLayer::DenseLayer(ParamStore& store, const std::string& prefix, Index in, Index out,
                       Activation act, Rng& rng)
    : act_(act) {
    w_ = &store.add(prefix + ".w", out, in);
    b_ = &store.add(prefix + ".b", out, 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    uniform_fill(w_->value, bound, rng);
    uniform_fill(b_->value, bound, rng);
}

void DenseLayer::forward(const Eigen::Ref<const Matrix>& x, Matrix& y) const {
    if (x.rows() != w_->cols())
        throw ConfigError("dense input width " + std::to_string(x.rows()) +
                          " does not match layer width " + std::to_string(w_->cols()));
    y.noalias() = w_->value * x;
    y.colwise() += b_->value.col(0);
    if (act_ == Activation::tanh_fn) y.array() = y.array().tanh();
}

void DenseLayer::backward(const Eigen::Ref<const Matrix>& x, const Matrix& y,
                          const Matrix& dy, Matrix& dx, GradSink& sink) const {
    Matrix& dw = sink.of(*w_);
    Matrix& db = sink.of(*b_);
    if (act_ == Activation::tanh_fn) {
        Matrix dpre = (dy.array() * (1.0 - y.array().square())).matrix();
        dw.noalias() += dpre * x.transpose();
        db.col(0) += dpre.rowwise().sum();
        dx.noalias() = w_->value.transpose() * dpre;
    } else {
        dw.noalias() += dy * x.transpose();
        db.col(0) += dy.rowwise().sum();
        dx.noalias() = w_->value.transpose() * dy;
    }
}

ScalarMlp::ScalarMlp(ParamStore& store, const std::string& prefix, Index in, Index hidden,
                     Rng& rng)
    : hidden_(store, prefix + ".hidden", in, hidden, Activation::tanh_fn, rng),
      out_(store, prefix + ".out", hidden, 1, Activation::identity, rng) {}

const Matrix& ScalarMlp::forward(const Eigen::Ref<const Matrix>& x, Trace& trace) const {
    hidden_.forward(x, trace.hidden);
    out_.forward(trace.hidden, trace.out);
    return trace.out;
}

void ScalarMlp::backward(const Eigen::Ref<const Matrix>& x, Trace& trace,
                         const Matrix& dout, Matrix& dx, GradSink& sink) const {
    out_.backward(trace.hidden, trace.out, dout, trace.dhidden, sink);
    hidden_.backward(x, trace.hidden, trace.dhidden, dx, sink);
}

void LstmWork::ensure(Index hidden, Index batch, Index max_steps) {
    pre.resize(4 * hidden, batch);
    dh.resize(hidden, batch);
    dc.resize(hidden, batch);
    dpre.resize(4 * hidden, batch);
    dh_prev.resize(hidden, batch);
    if (static_cast<Index>(steps.size()) < max_steps) steps.resize(max_steps);
    for (auto& s : steps) {
        s.gates.resize(4 * hidden, batch);
        s.c.resize(hidden, batch);
        s.tanh_c.resize(hidden, batch);
        s.h.resize(hidden, batch);
    }
}

LstmCell::LstmCell(ParamStore& store, const std::string& prefix, Index hidden, Rng& rng) {
    wx_ = &store.add(prefix + ".wx", 4 * hidden, 1);
    wh_ = &store.add(prefix + ".wh", 4 * hidden, hidden);
    b_ = &store.add(prefix + ".b", 4 * hidden, 1);
    // Recurrent fan-in governs the scale of every cell parameter.
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    uniform_fill(wx_->value, bound, rng);
    uniform_fill(wh_->value, bound, rng);
    uniform_fill(b_->value, bound, rng);
    // Forget gates start open so early-window content survives to the
    // end-of-window summary instead of halving at every step.
    b_->value.col(0).segment(hidden, hidden).array() += 1.0;
}

void LstmCell::step(const Eigen::Ref<const Matrix>& x_row, const Matrix* h_prev,
                    const Matrix* c_prev, LstmStepTrace& out, LstmWork& work) const {
    const Index hn = hidden_size();
    Matrix& pre = work.pre;
    pre.noalias() = wx_->value * x_row; // (4H×1)(1×B)
    if (h_prev) pre.noalias() += wh_->value * *h_prev;
    pre.colwise() += b_->value.col(0);

    auto gi = out.gates.topRows(hn).array();
    auto gf = out.gates.middleRows(hn, hn).array();
    auto gg = out.gates.middleRows(2 * hn, hn).array();
    auto go = out.gates.bottomRows(hn).array();
    gi = (1.0 + (-pre.topRows(hn).array()).exp()).inverse();
    gf = (1.0 + (-pre.middleRows(hn, hn).array()).exp()).inverse();
    gg = pre.middleRows(2 * hn, hn).array().tanh();
    go = (1.0 + (-pre.bottomRows(hn).array()).exp()).inverse();

    if (c_prev)
        out.c.array() = gf * c_prev->array() + gi * gg;
    else
        out.c.array() = gi * gg;
    out.tanh_c.array() = out.c.array().tanh();
    out.h.array() = go * out.tanh_c.array();
}

void LstmCell::forward(const Eigen::Ref<const Matrix>& inputs, LstmWork& work) const {
    const Index steps = inputs.rows();
    const Index batch = inputs.cols();
    if (steps < 1) throw DataError("recurrent input must have at least one step");
    work.ensure(hidden_size(), batch, steps);
    for (Index t = 0; t < steps; ++t) {
        const Matrix* hp = t > 0 ? &work.steps[t - 1].h : nullptr;
        const Matrix* cp = t > 0 ? &work.steps[t - 1].c : nullptr;
        step(inputs.row(t), hp, cp, work.steps[t], work);
    }
}

void LstmCell::infer(const Eigen::Ref<const Matrix>& inputs, Matrix& h_out,
                     LstmWork& work) const {
    // Reuses the traced forward; the trace buffers live in 'work' and are
    // recycled across calls, so tracing costs nothing extra here.
    forward(inputs, work);
    h_out = work.steps[inputs.rows() - 1].h;
}

void LstmCell::backward(const Eigen::Ref<const Matrix>& inputs, const Matrix& dh_last,
                        LstmWork& work, GradSink& sink) const {
    const Index steps = inputs.rows();
    const Index hn = hidden_size();
    Matrix& dwx = sink.of(*wx_);
    Matrix& dwh = sink.of(*wh_);
    Matrix& db = sink.of(*b_);

    work.dh = dh_last;
    work.dc.setZero();
    for (Index t = steps - 1; t >= 0; --t) {
        const LstmStepTrace& s = work.steps[t];
        const Matrix* c_prev = t > 0 ? &work.steps[t - 1].c : nullptr;
        const Matrix* h_prev = t > 0 ? &work.steps[t - 1].h : nullptr;

        auto gi = s.gates.topRows(hn).array();
        auto gf = s.gates.middleRows(hn, hn).array();
        auto gg = s.gates.middleRows(2 * hn, hn).array();
        auto go = s.gates.bottomRows(hn).array();

        work.dc.array() += work.dh.array() * go * (1.0 - s.tanh_c.array().square());

        auto dpi = work.dpre.topRows(hn).array();
        auto dpf = work.dpre.middleRows(hn, hn).array();
        auto dpg = work.dpre.middleRows(2 * hn, hn).array();
        auto dpo = work.dpre.bottomRows(hn).array();
        dpi = work.dc.array() * gg * gi * (1.0 - gi);
        if (c_prev)
            dpf = work.dc.array() * c_prev->array() * gf * (1.0 - gf);
        else
            dpf.setZero();
        dpg = work.dc.array() * gi * (1.0 - gg.square());
        dpo = work.dh.array() * s.tanh_c.array() * go * (1.0 - go);

        dwx.noalias() += work.dpre * inputs.row(t).transpose();
        if (h_prev) dwh.noalias() += work.dpre * h_prev->transpose();
        db.col(0) += work.dpre.rowwise().sum();

        if (t > 0) {
            work.dh_prev.noalias() = wh_->value.transpose() * work.dpre;
            work.dh.swap(work.dh_prev);
            work.dc.array() *= gf; // becomes dc_prev for step t-1
        }
    }
}

} // namespace ingra
