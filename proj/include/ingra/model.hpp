#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "ingra/data.hpp"
#include "ingra/matrix.hpp"
#include "ingra/nn.hpp"
#include "ingra/param_store.hpp"
#include "ingra/prototype.hpp"
#include "ingra/rng.hpp"

namespace ingra {

struct ModelConfig {
    Index num_variables = 0; // S, the target variable included
    Index target_index = 0;
    Index window_length = 19; // T
    Index hidden_size = 16;
    Index num_prototypes = 3; // K
    double alpha = 0.5;       // share of direct attention in the mix
    double tau = 0.5;         // selection softmax temperature
    double lambda1 = 1.0;     // auxiliary-error loss weight
    double lambda2 = 0.1;     // diversity loss weight
    double gamma = 0.5;       // diversity floor
    Index batch_size = 32;
    double learning_rate = 0.01;
    Index pretrain_epochs = 5;
    Index train_epochs = 50;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Mode { training, inference };

// delta_eps_s = max(0, eps_without_s - eps_all): the error increase from
// withholding variable s, clamped so noncausal variables score exactly zero.
Vector granger_attribution(double eps_all, const Vector& eps_without);

// Normalizes attributions onto the simplex; an all-zero (or vanishing)
// attribution falls back to uniform attention so learning can proceed.
Vector granger_attention(const Vector& delta_eps);

struct AttentionRecord {
    Vector delta_eps; // per-variable error attributions, non-negative
    Vector q;         // normalized attributions
    Vector r;         // prototype-derived attention
    Vector a;         // alpha·q + (1-alpha)·r
    Index prototype_index = -1; // argmax-similarity prototype; -1 when bypassed
};

// Intermediates of one example kept for the backward pass.
struct ExampleState {
    double y = 0.0;
    double yhat = 0.0;
    double eps_all = 0.0;
    Vector eps_wo;   // S
    Vector delta_eps; // S
    double mass = 0.0; // sum of delta_eps before normalization
    Vector q;        // S
    bool q_uniform = false;
    Vector d;        // K (alpha < 1 only)
    Vector e;        // K
    Vector noise;    // K, Gumbel draws (training mode)
    Vector r;        // S
    Vector a;        // S
    Index proto_argmax = -1;
    // Distance to the nearest branch boundary (ReLU, clamp, fallback)
    // crossed in this example's forward; gradient checks skip tiny margins.
    double kink_margin = 1e300;
};

struct BatchResult {
    double loss_pred = 0.0; // batch means
    double loss_aux = 0.0;
    std::vector<ExampleState> ex;
};

// Scratch for batched passes; owned by the caller, reused across batches.
struct BatchWork {
    std::vector<Matrix> inputs; // per variable, T×B
    std::vector<LstmWork> enc;
    Matrix embeddings; // (S·H)×B, variable s in rows [s·H, (s+1)·H)
    std::vector<ScalarMlp::Trace> f_tr;
    ScalarMlp::Trace g_all_tr;
    std::vector<ScalarMlp::Trace> g_wo_tr;
    std::vector<Matrix> e_wo; // per variable, ((S-1)·H)×B
    Matrix preds;             // S×B
    // backward scratch
    Matrix d_embeddings;
    Matrix d_ewo;
    Matrix d_preds; // S×B
    Matrix d_gall_out;
    Matrix d_gwo_out; // S×B
    Matrix dout_row;  // 1×B
    Matrix dx_head;
    BatchResult result;
};

class IngraModel {
public:
    explicit IngraModel(const ModelConfig& config);

    const ModelConfig& config() const { return cfg_; }
    // The pretraining phase forces alpha to 1 (prototype path inactive) and
    // restores the configured value afterwards.
    void set_alpha(double alpha);
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    Matrix& prototypes() { return protos_->value; }
    const Matrix& prototypes() const { return protos_->value; }
    const Tensor& prototype_tensor() const { return *protos_; }

    // Runs the full pipeline over a batch of windows. In training mode with
    // alpha < 1, gumbel_rng supplies the selection noise (one K-vector per
    // example, drawn in batch order). Inference mode selects by argmax.
    void forward_batch(std::span<const WindowedExample* const> batch, Mode mode,
                       Rng* gumbel_rng, BatchWork& work) const;

    // Accumulates into sink the gradient of the summed per-example loss
    // (prediction + lambda1·auxiliary) of the batch in 'work'. The diversity
    // term is batch-independent; see add_diversity_gradient.
    void backward_batch(std::span<const WindowedExample* const> batch, BatchWork& work,
                        GradSink& sink) const;

    DiversityResult diversity() const;
    // grad += coeff · d(diversity)/d(prototypes), straight into the store.
    void add_diversity_gradient(double coeff);

    std::pair<double, AttentionRecord> infer(const WindowedExample& example, Mode mode,
                                             Rng* gumbel_rng = nullptr) const;

    // Attention for a whole series: delta_eps is accumulated over every
    // stride-1 window, then normalized once; the prototype is the argmax
    // match of the aggregate q.
    AttentionRecord aggregate_attention(const MtsSample& sample, BatchWork& work) const;

    static AttentionRecord record_from_state(const ExampleState& st);

private:
    void ensure_work(BatchWork& work, Index batch) const;
    void attention_chain(ExampleState& st, Mode mode, Rng* gumbel_rng) const;

    ModelConfig cfg_;
    ParamStore store_;
    std::vector<LstmCell> enc_;
    std::vector<ScalarMlp> f_;
    std::unique_ptr<ScalarMlp> g_all_;
    std::vector<ScalarMlp> g_wo_;
    Tensor* protos_ = nullptr; // K×S
};

} // namespace ingra
