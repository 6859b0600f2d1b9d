#pragma once

#include <string>
#include <vector>

#include "ingra/matrix.hpp"
#include "ingra/param_store.hpp"
#include "ingra/rng.hpp"

namespace ingra {

// Every layer here is column-batched: inputs and outputs are matrices whose
// columns are independent examples. Inference and gradient checking use
// single-column batches; training uses wide ones so the hot path is GEMM.

enum class Activation { identity, tanh_fn };

// y = act(W x + b), b broadcast across columns.
class DenseLayer {
public:
    DenseLayer(ParamStore& store, const std::string& prefix, Index in, Index out,
               Activation act, Rng& rng);

    Index in_width() const { return w_->cols(); }
    Index out_width() const { return w_->rows(); }

    void forward(const Eigen::Ref<const Matrix>& x, Matrix& y) const;

    // dW, db into sink; dx overwritten with W^T dpre. 'x' and 'y' must be the
    // matrices from the forward pass being differentiated.
    void backward(const Eigen::Ref<const Matrix>& x, const Matrix& y, const Matrix& dy,
                  Matrix& dx, GradSink& sink) const;

    const Tensor& weight() const { return *w_; }
    const Tensor& bias() const { return *b_; }

private:
    Tensor* w_; // out×in
    Tensor* b_; // out×1
    Activation act_;
};

// Scalar regression head: tanh hidden layer, linear output row.
class ScalarMlp {
public:
    struct Trace {
        Matrix hidden; // hidden×B
        Matrix out;    // 1×B
        Matrix dhidden; // backward scratch
    };

    ScalarMlp(ParamStore& store, const std::string& prefix, Index in, Index hidden,
              Rng& rng);

    Index in_width() const { return hidden_.in_width(); }

    const Matrix& forward(const Eigen::Ref<const Matrix>& x, Trace& trace) const;
    void backward(const Eigen::Ref<const Matrix>& x, Trace& trace,
                  const Matrix& dout, Matrix& dx, GradSink& sink) const;

private:
    DenseLayer hidden_;
    DenseLayer out_;
};

// Per-step record kept during a traced forward pass. h_prev/c_prev of step t
// live in the record of step t-1 (zeros at t=0), so nothing is stored twice.
struct LstmStepTrace {
    Matrix gates;  // 4H×B, post-activation, rows [i; f; g; o]
    Matrix c;      // H×B
    Matrix tanh_c; // H×B
    Matrix h;      // H×B
};

// Scratch owned by the caller so repeated sequences never allocate.
struct LstmWork {
    Matrix pre;     // 4H×B
    Matrix dh;      // H×B
    Matrix dc;      // H×B
    Matrix dpre;    // 4H×B
    Matrix dh_prev; // H×B
    std::vector<LstmStepTrace> steps;

    void ensure(Index hidden, Index batch, Index max_steps);
};

// Gated recurrent cell over a scalar input sequence. Weights follow the
// fused layout Wx:4H×1, Wh:4H×H, b:4H×1 with gate rows ordered [i; f; g; o].
class LstmCell {
public:
    LstmCell(ParamStore& store, const std::string& prefix, Index hidden, Rng& rng);

    Index hidden_size() const { return wh_->rows() / 4; }

    // inputs is T×B (row t = step-t scalar per example); h_out gets the final
    // hidden state. Zero initial state. No trace kept.
    void infer(const Eigen::Ref<const Matrix>& inputs, Matrix& h_out, LstmWork& work) const;

    // Traced forward for training; work.steps[0..T-1] filled, final hidden is
    // work.steps[T-1].h.
    void forward(const Eigen::Ref<const Matrix>& inputs, LstmWork& work) const;

    // Reverse pass through the trace in 'work'. dh_last is the loss gradient
    // on the final hidden state (earlier states receive gradient only through
    // the recurrence; the cell output is read at the last step alone).
    void backward(const Eigen::Ref<const Matrix>& inputs, const Matrix& dh_last,
                  LstmWork& work, GradSink& sink) const;

private:
    void step(const Eigen::Ref<const Matrix>& x_row, const Matrix* h_prev,
              const Matrix* c_prev, LstmStepTrace& out, LstmWork& work) const;

    Tensor* wx_; // 4H×1
    Tensor* wh_; // 4H×H
    Tensor* b_;  // 4H×1
};

} // namespace ingra
