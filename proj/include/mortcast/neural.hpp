#pragma once

#include "mortcast/types.hpp"

#include <filesystem>

namespace mortcast {

enum class Activation { Identity, Relu, Sigmoid, Tanh };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

VectorXd apply_activation(Activation act, const VectorXd& z);
// Derivative as a function of the pre-activation z.
VectorXd activation_derivative(Activation act, const VectorXd& z);

enum class Loss { MeanSquared, MeanAbsolute };

// ---------------------------------------------------------------------------
// Dense stack

struct DenseLayer {
    MatrixXd W;  // out x in
    VectorXd b;
    Activation act = Activation::Tanh;
};

struct DenseStack {
    std::vector<DenseLayer> layers;

    int input_size() const;
    int output_size() const;
    VectorXd forward(const VectorXd& x) const;
    VectorXd predict(const MatrixXd& X) const;  // one output unit per row

    Eigen::Index n_params() const;
    VectorXd flatten() const;
    void set_from_flat(const VectorXd& flat);
};

// Affine chain in -> widths... -> out with `hidden` on interior layers and
// `head` on the last; weights start at U(+-1/sqrt(fan_in)), biases at 0.
DenseStack make_dense_stack(int in, const std::vector<int>& widths, int out, Activation hidden,
                            Activation head, Rng& rng);

// Mean loss over the batch and its exact reverse-accumulation gradient in
// flatten() order. Scaling the loss by `loss_scale` scales the gradient
// linearly (the mean-absolute subgradient at zero residual is 0).
VectorXd fnn_gradient(const DenseStack& net, const MatrixXd& X, const VectorXd& y, Loss loss,
                      double loss_scale = 1.0, double* loss_out = nullptr);

// ---------------------------------------------------------------------------
// LSTM

struct LSTMParams {
    int input_size = 1;
    int hidden_size = 16;
    MatrixXd Wi, Wf, Wo, Wg;  // hidden x (input + hidden)
    VectorXd bi, bf, bo, bg;

    Eigen::Index n_params() const;
    VectorXd flatten() const;
    void set_from_flat(const VectorXd& flat);
};

LSTMParams make_lstm(int input_size, int hidden_size, Rng& rng);

struct LSTMCache {
    std::vector<VectorXd> z;       // [x_t ; h_{t-1}]
    std::vector<VectorXd> i, f, o, g, c, tanh_c, h;
    VectorXd c0, h0;
};

// Runs the gated recurrence over seq (rows are time steps) and returns the
// final hidden state. h0/c0 default to zero.
VectorXd lstm_forward(const LSTMParams& p, const MatrixXd& seq, LSTMCache* cache = nullptr,
                      const VectorXd* h0 = nullptr, const VectorXd* c0 = nullptr);

// BPTT from a gradient on the final hidden state. Returns parameter gradients
// in flatten() order; optionally the gradient on the input sequence.
VectorXd lstm_backward(const LSTMParams& p, const MatrixXd& seq, const LSTMCache& cache,
                       const VectorXd& dh_final, MatrixXd* dseq = nullptr);

// ---------------------------------------------------------------------------
// Multi-head attention

struct AttentionParams {
    int d = 16;     // model width, divisible by heads
    int heads = 2;  // d_k = d / heads
    int input_size = 1;
    MatrixXd embed_W;  // d x input_size
    VectorXd embed_b;
    std::vector<MatrixXd> Wq, Wk, Wv;  // per head, d_k x d
    MatrixXd Wo;                       // d x d

    int head_dim() const { return d / heads; }
    Eigen::Index n_params() const;
    VectorXd flatten() const;
    void set_from_flat(const VectorXd& flat);
};

AttentionParams make_attention(int input_size, int d, int heads, Rng& rng);

struct MHACache {
    MatrixXd X;                      // embedded tokens, L x d
    std::vector<MatrixXd> Q, K, V;   // per head, L x d_k
    std::vector<MatrixXd> A;         // per head attention weights, L x L rows sum to 1
    MatrixXd concat;                 // L x d
};

// Scaled dot-product attention per head over embedded tokens; heads are
// concatenated and projected. Core works on an explicit token matrix so the
// hand-evaluated examples stay independent of the embedding.
MatrixXd mha_core(const AttentionParams& p, const MatrixXd& tokens, MHACache* cache = nullptr);

// Embeds a raw sequence (rows are steps of width input_size) and pools the
// core output at the final position.
VectorXd mha_forward(const AttentionParams& p, const MatrixXd& seq, MHACache* cache = nullptr);

// Gradient of the pooled output against all parameters, in flatten() order.
VectorXd mha_backward(const AttentionParams& p, const MatrixXd& seq, const MHACache& cache,
                      const VectorXd& dpooled, MatrixXd* dseq = nullptr);

namespace detail {
// Row-wise softmax with max subtraction; a uniform logit shift leaves the
// result unchanged up to rounding of the shifted inputs.
MatrixXd row_softmax(const MatrixXd& S);
}  // namespace detail

// ---------------------------------------------------------------------------
// Hybrid model (sequence branch in parallel with a static dense branch)

enum class SeqBranch { Lstm, Attention };

struct HybridModel {
    SeqBranch branch = SeqBranch::Lstm;
    LSTMParams lstm;
    AttentionParams attn;
    DenseStack static_stack;  // statics -> last hidden layer activations
    DenseStack head;          // single sigmoid layer over [seq_out ; static_out]
    Loss loss = Loss::MeanAbsolute;

    int seq_output_size() const;
    double predict_one(const RowVectorXd& statics, const RowVectorXd& seq) const;
    VectorXd predict(const MatrixXd& statics, const MatrixXd& seq) const;

    Eigen::Index n_params() const;
    VectorXd flatten() const;
    void set_from_flat(const VectorXd& flat);
};

struct HybridOptions {
    SeqBranch branch = SeqBranch::Lstm;
    int static_inputs = 3;
    std::vector<int> static_widths = {32, 32, 32, 32};
    Activation static_act = Activation::Tanh;
    int lstm_hidden = 16;
    int attn_d = 16;
    int attn_heads = 2;
    Loss loss = Loss::MeanAbsolute;
};

HybridModel make_hybrid(const HybridOptions& opts, Rng& rng);

VectorXd hybrid_gradient(const HybridModel& model, const MatrixXd& statics, const MatrixXd& seqs,
                         const VectorXd& y, double loss_scale = 1.0, double* loss_out = nullptr);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double step = 1e-3;
    std::uint64_t seed = 1;
    int patience = 0;          // 0 disables early stopping
    double val_fraction = 0.0; // held-out share used when patience > 0

    void validate() const;
};

struct TrainResult {
    std::vector<double> train_loss;  // full-data loss after each epoch
    std::vector<double> val_loss;    // empty without a validation split
    int best_epoch = -1;             // epoch whose parameters were kept
};

// (epoch, train_loss, val_loss) rows; val_loss is nan when no validation
// split was used.
void save_history(const TrainResult& history, const std::filesystem::path& path);

struct FnnOptions {
    std::vector<int> widths = {32, 32, 32, 32};
    Activation hidden = Activation::Tanh;
};

struct FnnFit {
    DenseStack model;
    TrainResult history;
};

struct HybridFit {
    HybridModel model;
    TrainResult history;
};

// Inputs and targets are expected in scaled [0, 1] space; the sigmoid head
// keeps scaled predictions in (0, 1). Non-finite training loss raises
// ModelError advising a smaller step size.
FnnFit fit_fnn(const MatrixXd& X, const VectorXd& y, const FnnOptions& opts,
               const TrainConfig& cfg);

HybridFit fit_hybrid(const MatrixXd& statics, const MatrixXd& seqs, const VectorXd& y,
                     const HybridOptions& opts, const TrainConfig& cfg);

}  // namespace mortcast
