#include "mortcast/neural.hpp"

#include "mortcast/io.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>

namespace mortcast {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void append_flat(VectorXd& out, Eigen::Index& pos, const MatrixXd& M) {
    out.segment(pos, M.size()) = Eigen::Map<const VectorXd>(M.data(), M.size());
    pos += M.size();
}

void read_flat(const VectorXd& flat, Eigen::Index& pos, MatrixXd& M) {
    Eigen::Map<VectorXd>(M.data(), M.size()) = flat.segment(pos, M.size());
    pos += M.size();
}

void append_flat(VectorXd& out, Eigen::Index& pos, const VectorXd& v) {
    out.segment(pos, v.size()) = v;
    pos += v.size();
}

void read_flat(const VectorXd& flat, Eigen::Index& pos, VectorXd& v) {
    v = flat.segment(pos, v.size());
    pos += v.size();
}

MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatrixXd M(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = dist(rng);
    return M;
}

}  // namespace

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
    }
    return "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "tanh") return Activation::Tanh;
    throw ModelError("unknown activation '" + name + "'");
}

VectorXd apply_activation(Activation act, const VectorXd& z) {
    switch (act) {
        case Activation::Identity: return z;
        case Activation::Relu: return z.cwiseMax(0.0);
        case Activation::Sigmoid: return z.unaryExpr([](double v) { return sigmoid(v); });
        case Activation::Tanh: return z.array().tanh().matrix();
    }
    return z;
}

VectorXd activation_derivative(Activation act, const VectorXd& z) {
    switch (act) {
        case Activation::Identity: return VectorXd::Ones(z.size());
        case Activation::Relu:
            return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
        case Activation::Sigmoid:
            return z.unaryExpr([](double v) {
                const double s = sigmoid(v);
                return s * (1.0 - s);
            });
        case Activation::Tanh:
            return z.unaryExpr([](double v) {
                const double t = std::tanh(v);
                return 1.0 - t * t;
            });
    }
    return VectorXd::Ones(z.size());
}

// ---------------------------------------------------------------------------
// Dense stack

int DenseStack::input_size() const {
    if (layers.empty()) throw ModelError("empty dense stack");
    return static_cast<int>(layers.front().W.cols());
}

int DenseStack::output_size() const {
    if (layers.empty()) throw ModelError("empty dense stack");
    return static_cast<int>(layers.back().W.rows());
}

VectorXd DenseStack::forward(const VectorXd& x) const {
    if (layers.empty()) throw ModelError("empty dense stack");
    if (x.size() != layers.front().W.cols())
        throw ModelError("dense input size " + std::to_string(x.size()) + " does not match " +
                         std::to_string(layers.front().W.cols()));
    VectorXd a = x;
    for (const auto& layer : layers) a = apply_activation(layer.act, layer.W * a + layer.b);
    return a;
}

VectorXd DenseStack::predict(const MatrixXd& X) const {
    if (output_size() != 1) throw ModelError("predict expects a single output unit");
    VectorXd out(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = forward(X.row(r).transpose())(0);
    return out;
}

Eigen::Index DenseStack::n_params() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.W.size() + l.b.size();
    return n;
}

VectorXd DenseStack::flatten() const {
    VectorXd out(n_params());
    Eigen::Index pos = 0;
    for (const auto& l : layers) {
        append_flat(out, pos, l.W);
        append_flat(out, pos, l.b);
    }
    return out;
}

void DenseStack::set_from_flat(const VectorXd& flat) {
    if (flat.size() != n_params()) throw ModelError("flat parameter size mismatch");
    Eigen::Index pos = 0;
    for (auto& l : layers) {
        read_flat(flat, pos, l.W);
        read_flat(flat, pos, l.b);
    }
}

DenseStack make_dense_stack(int in, const std::vector<int>& widths, int out, Activation hidden,
                            Activation head, Rng& rng) {
    if (in < 1 || out < 1) throw ModelError("dense stack needs positive input/output sizes");
    DenseStack net;
    int prev = in;
    for (int w : widths) {
        if (w < 1) throw ModelError("hidden width must be positive");
        DenseLayer layer;
        layer.W = uniform_matrix(w, prev, 1.0 / std::sqrt(static_cast<double>(prev)), rng);
        layer.b = VectorXd::Zero(w);
        layer.act = hidden;
        net.layers.push_back(std::move(layer));
        prev = w;
    }
    DenseLayer last;
    last.W = uniform_matrix(out, prev, 1.0 / std::sqrt(static_cast<double>(prev)), rng);
    last.b = VectorXd::Zero(out);
    last.act = head;
    net.layers.push_back(std::move(last));
    return net;
}

namespace {

struct DenseCache {
    std::vector<VectorXd> z;  // pre-activations per layer
    std::vector<VectorXd> a;  // a[0] = input, a[l] = activation of layer l
};

VectorXd dense_forward_cached(const DenseStack& net, const VectorXd& x, DenseCache& cache) {
    cache.z.clear();
    cache.a.clear();
    cache.a.push_back(x);
    for (const auto& layer : net.layers) {
        cache.z.push_back(layer.W * cache.a.back() + layer.b);
        cache.a.push_back(apply_activation(layer.act, cache.z.back()));
    }
    return cache.a.back();
}

// Accumulates into grads (same shapes as net.layers); returns dL/dinput.
VectorXd dense_backward(const DenseStack& net, const DenseCache& cache, const VectorXd& dout,
                        std::vector<DenseLayer>& grads) {
    VectorXd delta = dout;
    for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
        delta = delta.cwiseProduct(activation_derivative(net.layers[l].act, cache.z[l]));
        grads[l].W += delta * cache.a[l].transpose();
        grads[l].b += delta;
        delta = net.layers[l].W.transpose() * delta;
    }
    return delta;
}

std::vector<DenseLayer> zero_grads(const DenseStack& net) {
    std::vector<DenseLayer> g;
    g.reserve(net.layers.size());
    for (const auto& l : net.layers)
        g.push_back({MatrixXd::Zero(l.W.rows(), l.W.cols()), VectorXd::Zero(l.b.size()), l.act});
    return g;
}

VectorXd flatten_grads(const std::vector<DenseLayer>& grads) {
    DenseStack tmp;
    tmp.layers = grads;
    return tmp.flatten();
}

// dL/dprediction for the mean-over-batch loss; MAE subgradient at 0 is 0.
double loss_derivative(Loss loss, double pred, double target, Eigen::Index n) {
    const double r = pred - target;
    if (loss == Loss::MeanSquared) return 2.0 * r / static_cast<double>(n);
    return (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / static_cast<double>(n);
}

double loss_value(Loss loss, double pred, double target) {
    const double r = pred - target;
    return loss == Loss::MeanSquared ? r * r : std::abs(r);
}

}  // namespace

VectorXd fnn_gradient(const DenseStack& net, const MatrixXd& X, const VectorXd& y, Loss loss,
                      double loss_scale, double* loss_out) {
    if (X.rows() == 0) throw ModelError("gradient over an empty batch");
    if (X.rows() != y.size()) throw ModelError("feature/target row count mismatch");
    auto grads = zero_grads(net);
    double total = 0.0;
    DenseCache cache;
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const VectorXd out = dense_forward_cached(net, X.row(r).transpose(), cache);
        if (!out.allFinite())
            throw ModelError("non-finite activation in dense forward pass; reduce step size");
        const double pred = out(0);
        total += loss_value(loss, pred, y(r));
        VectorXd dout = VectorXd::Zero(1);
        dout(0) = loss_scale * loss_derivative(loss, pred, y(r), X.rows());
        dense_backward(net, cache, dout, grads);
    }
    if (loss_out) *loss_out = loss_scale * total / static_cast<double>(X.rows());
    return flatten_grads(grads);
}

// ---------------------------------------------------------------------------
// LSTM

Eigen::Index LSTMParams::n_params() const {
    return 4 * (Wi.size() + bi.size());
}

VectorXd LSTMParams::flatten() const {
    VectorXd out(n_params());
    Eigen::Index pos = 0;
    append_flat(out, pos, Wi);
    append_flat(out, pos, bi);
    append_flat(out, pos, Wf);
    append_flat(out, pos, bf);
    append_flat(out, pos, Wo);
    append_flat(out, pos, bo);
    append_flat(out, pos, Wg);
    append_flat(out, pos, bg);
    return out;
}

void LSTMParams::set_from_flat(const VectorXd& flat) {
    if (flat.size() != n_params()) throw ModelError("flat parameter size mismatch");
    Eigen::Index pos = 0;
    read_flat(flat, pos, Wi);
    read_flat(flat, pos, bi);
    read_flat(flat, pos, Wf);
    read_flat(flat, pos, bf);
    read_flat(flat, pos, Wo);
    read_flat(flat, pos, bo);
    read_flat(flat, pos, Wg);
    read_flat(flat, pos, bg);
}

LSTMParams make_lstm(int input_size, int hidden_size, Rng& rng) {
    if (input_size < 1 || hidden_size < 1) throw ModelError("LSTM sizes must be positive");
    LSTMParams p;
    p.input_size = input_size;
    p.hidden_size = hidden_size;
    const int cols = input_size + hidden_size;
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    p.Wi = uniform_matrix(hidden_size, cols, bound, rng);
    p.Wf = uniform_matrix(hidden_size, cols, bound, rng);
    p.Wo = uniform_matrix(hidden_size, cols, bound, rng);
    p.Wg = uniform_matrix(hidden_size, cols, bound, rng);
    p.bi = VectorXd::Zero(hidden_size);
    p.bf = VectorXd::Zero(hidden_size);
    p.bo = VectorXd::Zero(hidden_size);
    p.bg = VectorXd::Zero(hidden_size);
    return p;
}

VectorXd lstm_forward(const LSTMParams& p, const MatrixXd& seq, LSTMCache* cache,
                      const VectorXd* h0, const VectorXd* c0) {
    if (seq.rows() == 0) throw ModelError("LSTM forward over an empty sequence");
    if (seq.cols() != p.input_size) throw ModelError("LSTM input width mismatch");
    const int H = p.hidden_size;
    VectorXd h = h0 ? *h0 : VectorXd::Zero(H);
    VectorXd c = c0 ? *c0 : VectorXd::Zero(H);
    if (h.size() != H || c.size() != H) throw ModelError("LSTM initial state size mismatch");
    if (cache) {
        *cache = LSTMCache{};
        cache->h0 = h;
        cache->c0 = c;
    }
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
        VectorXd z(p.input_size + H);
        z << seq.row(t).transpose(), h;
        const VectorXd i = apply_activation(Activation::Sigmoid, p.Wi * z + p.bi);
        const VectorXd f = apply_activation(Activation::Sigmoid, p.Wf * z + p.bf);
        const VectorXd o = apply_activation(Activation::Sigmoid, p.Wo * z + p.bo);
        const VectorXd g = apply_activation(Activation::Tanh, p.Wg * z + p.bg);
        c = f.cwiseProduct(c) + i.cwiseProduct(g);
        const VectorXd tc = c.array().tanh().matrix();
        h = o.cwiseProduct(tc);
        if (!h.allFinite())
            throw ModelError("non-finite LSTM state at step " + std::to_string(t));
        if (cache) {
            cache->z.push_back(std::move(z));
            cache->i.push_back(i);
            cache->f.push_back(f);
            cache->o.push_back(o);
            cache->g.push_back(g);
            cache->c.push_back(c);
            cache->tanh_c.push_back(tc);
            cache->h.push_back(h);
        }
    }
    return h;
}

VectorXd lstm_backward(const LSTMParams& p, const MatrixXd& seq, const LSTMCache& cache,
                       const VectorXd& dh_final, MatrixXd* dseq) {
    const int H = p.hidden_size;
    const int D = p.input_size;
    const int L = static_cast<int>(seq.rows());
    if (static_cast<int>(cache.h.size()) != L) throw ModelError("LSTM cache length mismatch");

    MatrixXd dWi = MatrixXd::Zero(H, D + H), dWf = dWi, dWo = dWi, dWg = dWi;
    VectorXd dbi = VectorXd::Zero(H), dbf = dbi, dbo = dbi, dbg = dbi;
    if (dseq) *dseq = MatrixXd::Zero(L, D);

    VectorXd dh = dh_final;
    VectorXd dc = VectorXd::Zero(H);
    for (int t = L - 1; t >= 0; --t) {
        const VectorXd& i = cache.i[t];
        const VectorXd& f = cache.f[t];
        const VectorXd& o = cache.o[t];
        const VectorXd& g = cache.g[t];
        const VectorXd& tc = cache.tanh_c[t];
        const VectorXd& cprev = t > 0 ? cache.c[t - 1] : cache.c0;

        const VectorXd do_ = dh.cwiseProduct(tc);
        dc += dh.cwiseProduct(o).cwiseProduct(
            (1.0 - tc.array().square()).matrix());
        const VectorXd di = dc.cwiseProduct(g);
        const VectorXd dg = dc.cwiseProduct(i);
        const VectorXd df = dc.cwiseProduct(cprev);

        const VectorXd dpre_i = di.cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
        const VectorXd dpre_f = df.cwiseProduct(f).cwiseProduct((1.0 - f.array()).matrix());
        const VectorXd dpre_o = do_.cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());
        const VectorXd dpre_g = dg.cwiseProduct((1.0 - g.array().square()).matrix());

        const VectorXd& z = cache.z[t];
        dWi += dpre_i * z.transpose();
        dWf += dpre_f * z.transpose();
        dWo += dpre_o * z.transpose();
        dWg += dpre_g * z.transpose();
        dbi += dpre_i;
        dbf += dpre_f;
        dbo += dpre_o;
        dbg += dpre_g;

        const VectorXd dz = p.Wi.transpose() * dpre_i + p.Wf.transpose() * dpre_f +
                            p.Wo.transpose() * dpre_o + p.Wg.transpose() * dpre_g;
        if (dseq) dseq->row(t) = dz.head(D).transpose();
        dh = dz.tail(H);
        dc = dc.cwiseProduct(f);
    }

    LSTMParams grads = p;
    grads.Wi = dWi;
    grads.Wf = dWf;
    grads.Wo = dWo;
    grads.Wg = dWg;
    grads.bi = dbi;
    grads.bf = dbf;
    grads.bo = dbo;
    grads.bg = dbg;
    return grads.flatten();
}

// ---------------------------------------------------------------------------
// Multi-head attention

Eigen::Index AttentionParams::n_params() const {
    Eigen::Index n = embed_W.size() + embed_b.size() + Wo.size();
    for (std::size_t h = 0; h < Wq.size(); ++h) n += Wq[h].size() + Wk[h].size() + Wv[h].size();
    return n;
}

VectorXd AttentionParams::flatten() const {
    VectorXd out(n_params());
    Eigen::Index pos = 0;
    append_flat(out, pos, embed_W);
    append_flat(out, pos, embed_b);
    for (std::size_t h = 0; h < Wq.size(); ++h) {
        append_flat(out, pos, Wq[h]);
        append_flat(out, pos, Wk[h]);
        append_flat(out, pos, Wv[h]);
    }
    append_flat(out, pos, Wo);
    return out;
}

void AttentionParams::set_from_flat(const VectorXd& flat) {
    if (flat.size() != n_params()) throw ModelError("flat parameter size mismatch");
    Eigen::Index pos = 0;
    read_flat(flat, pos, embed_W);
    read_flat(flat, pos, embed_b);
    for (std::size_t h = 0; h < Wq.size(); ++h) {
        read_flat(flat, pos, Wq[h]);
        read_flat(flat, pos, Wk[h]);
        read_flat(flat, pos, Wv[h]);
    }
    read_flat(flat, pos, Wo);
}

AttentionParams make_attention(int input_size, int d, int heads, Rng& rng) {
    if (d < 1 || heads < 1 || d % heads != 0)
        throw ModelError("attention width must be a positive multiple of the head count");
    AttentionParams p;
    p.d = d;
    p.heads = heads;
    p.input_size = input_size;
    const int dk = d / heads;
    p.embed_W = uniform_matrix(d, input_size, 1.0 / std::sqrt(static_cast<double>(input_size)), rng);
    p.embed_b = VectorXd::Zero(d);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (int h = 0; h < heads; ++h) {
        p.Wq.push_back(uniform_matrix(dk, d, bound, rng));
        p.Wk.push_back(uniform_matrix(dk, d, bound, rng));
        p.Wv.push_back(uniform_matrix(dk, d, bound, rng));
    }
    p.Wo = uniform_matrix(d, d, bound, rng);
    return p;
}

namespace detail {

MatrixXd row_softmax(const MatrixXd& S) {
    MatrixXd A(S.rows(), S.cols());
    for (Eigen::Index r = 0; r < S.rows(); ++r) {
        const double mx = S.row(r).maxCoeff();
        Eigen::ArrayXd e = (S.row(r).array() - mx).exp();
        A.row(r) = (e / e.sum()).matrix();
    }
    return A;
}

}  // namespace detail

using detail::row_softmax;

MatrixXd mha_core(const AttentionParams& p, const MatrixXd& tokens, MHACache* cache) {
    if (tokens.cols() != p.d) throw ModelError("token width does not match attention width");
    if (tokens.rows() == 0) throw ModelError("attention over an empty sequence");
    const int dk = p.head_dim();
    const Eigen::Index L = tokens.rows();
    MatrixXd concat(L, p.d);
    if (cache) {
        *cache = MHACache{};
        cache->X = tokens;
    }
    for (int h = 0; h < p.heads; ++h) {
        const MatrixXd Q = tokens * p.Wq[h].transpose();
        const MatrixXd K = tokens * p.Wk[h].transpose();
        const MatrixXd V = tokens * p.Wv[h].transpose();
        const MatrixXd S = Q * K.transpose() / std::sqrt(static_cast<double>(dk));
        const MatrixXd A = row_softmax(S);
        concat.middleCols(static_cast<Eigen::Index>(h) * dk, dk) = A * V;
        if (cache) {
            cache->Q.push_back(Q);
            cache->K.push_back(K);
            cache->V.push_back(V);
            cache->A.push_back(A);
        }
    }
    if (cache) cache->concat = concat;
    MatrixXd out = concat * p.Wo.transpose();
    if (!out.allFinite()) throw ModelError("non-finite attention output");
    return out;
}

VectorXd mha_forward(const AttentionParams& p, const MatrixXd& seq, MHACache* cache) {
    if (seq.cols() != p.input_size) throw ModelError("attention input width mismatch");
    const MatrixXd tokens =
        seq * p.embed_W.transpose() + VectorXd::Ones(seq.rows()) * p.embed_b.transpose();
    const MatrixXd out = mha_core(p, tokens, cache);
    return out.row(out.rows() - 1).transpose();
}

VectorXd mha_backward(const AttentionParams& p, const MatrixXd& seq, const MHACache& cache,
                      const VectorXd& dpooled, MatrixXd* dseq) {
    const int dk = p.head_dim();
    const Eigen::Index L = seq.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    MatrixXd dY = MatrixXd::Zero(L, p.d);
    dY.row(L - 1) = dpooled.transpose();

    const MatrixXd dWo = dY.transpose() * cache.concat;
    const MatrixXd dconcat = dY * p.Wo;

    MatrixXd dX = MatrixXd::Zero(L, p.d);
    std::vector<MatrixXd> dWq(p.heads), dWk(p.heads), dWv(p.heads);
    for (int h = 0; h < p.heads; ++h) {
        const MatrixXd dOh = dconcat.middleCols(static_cast<Eigen::Index>(h) * dk, dk);
        const MatrixXd& A = cache.A[h];
        const MatrixXd& Q = cache.Q[h];
        const MatrixXd& K = cache.K[h];
        const MatrixXd& V = cache.V[h];

        const MatrixXd dA = dOh * V.transpose();
        MatrixXd dV = A.transpose() * dOh;
        MatrixXd dS(L, L);
        for (Eigen::Index r = 0; r < L; ++r) {
            const double dot = dA.row(r).dot(A.row(r));
            dS.row(r) = A.row(r).cwiseProduct((dA.row(r).array() - dot).matrix());
        }
        const MatrixXd dQ = dS * K * scale;
        const MatrixXd dK = dS.transpose() * Q * scale;

        dWq[h] = dQ.transpose() * cache.X;
        dWk[h] = dK.transpose() * cache.X;
        dWv[h] = dV.transpose() * cache.X;
        dX += dQ * p.Wq[h] + dK * p.Wk[h] + dV * p.Wv[h];
    }

    const MatrixXd dembed_W = dX.transpose() * seq;
    const VectorXd dembed_b = dX.colwise().sum().transpose();
    if (dseq) *dseq = dX * p.embed_W;

    AttentionParams grads = p;
    grads.embed_W = dembed_W;
    grads.embed_b = dembed_b;
    grads.Wq = dWq;
    grads.Wk = dWk;
    grads.Wv = dWv;
    grads.Wo = dWo;
    return grads.flatten();
}

// ---------------------------------------------------------------------------
// Hybrid model

int HybridModel::seq_output_size() const {
    return branch == SeqBranch::Lstm ? lstm.hidden_size : attn.d;
}

double HybridModel::predict_one(const RowVectorXd& statics, const RowVectorXd& seq) const {
    MatrixXd seqm(seq.size(), 1);
    seqm.col(0) = seq.transpose();
    const VectorXd seq_out = branch == SeqBranch::Lstm ? lstm_forward(lstm, seqm)
                                                       : mha_forward(attn, seqm);
    const VectorXd static_out = static_stack.forward(statics.transpose());
    VectorXd merged(seq_out.size() + static_out.size());
    merged << seq_out, static_out;
    return head.forward(merged)(0);
}

VectorXd HybridModel::predict(const MatrixXd& statics, const MatrixXd& seq) const {
    if (statics.rows() != seq.rows()) throw ModelError("static/sequence row count mismatch");
    VectorXd out(statics.rows());
    for (Eigen::Index r = 0; r < statics.rows(); ++r)
        out(r) = predict_one(statics.row(r), seq.row(r));
    return out;
}

Eigen::Index HybridModel::n_params() const {
    const Eigen::Index branch_n =
        branch == SeqBranch::Lstm ? lstm.n_params() : attn.n_params();
    return branch_n + static_stack.n_params() + head.n_params();
}

VectorXd HybridModel::flatten() const {
    VectorXd out(n_params());
    Eigen::Index pos = 0;
    const VectorXd b = branch == SeqBranch::Lstm ? lstm.flatten() : attn.flatten();
    append_flat(out, pos, b);
    append_flat(out, pos, static_stack.flatten());
    append_flat(out, pos, head.flatten());
    return out;
}

void HybridModel::set_from_flat(const VectorXd& flat) {
    if (flat.size() != n_params()) throw ModelError("flat parameter size mismatch");
    Eigen::Index pos = 0;
    if (branch == SeqBranch::Lstm) {
        lstm.set_from_flat(flat.segment(pos, lstm.n_params()));
        pos += lstm.n_params();
    } else {
        attn.set_from_flat(flat.segment(pos, attn.n_params()));
        pos += attn.n_params();
    }
    static_stack.set_from_flat(flat.segment(pos, static_stack.n_params()));
    pos += static_stack.n_params();
    head.set_from_flat(flat.segment(pos, head.n_params()));
}

HybridModel make_hybrid(const HybridOptions& opts, Rng& rng) {
    HybridModel m;
    m.branch = opts.branch;
    m.loss = opts.loss;
    if (opts.branch == SeqBranch::Lstm) {
        m.lstm = make_lstm(1, opts.lstm_hidden, rng);
    } else {
        m.attn = make_attention(1, opts.attn_d, opts.attn_heads, rng);
    }
    if (opts.static_widths.empty())
        throw ModelError("static branch needs at least one hidden layer");
    // Static branch: hidden layers only; its output is the last hidden
    // activation vector.
    std::vector<int> interior(opts.static_widths.begin(), opts.static_widths.end() - 1);
    m.static_stack = make_dense_stack(opts.static_inputs, interior, opts.static_widths.back(),
                                      opts.static_act, opts.static_act, rng);
    const int merged = m.seq_output_size() + opts.static_widths.back();
    m.head = make_dense_stack(merged, {}, 1, opts.static_act, Activation::Sigmoid, rng);
    return m;
}

VectorXd hybrid_gradient(const HybridModel& model, const MatrixXd& statics, const MatrixXd& seqs,
                         const VectorXd& y, double loss_scale, double* loss_out) {
    if (statics.rows() == 0) throw ModelError("gradient over an empty batch");
    if (statics.rows() != seqs.rows() || statics.rows() != y.size())
        throw ModelError("batch row count mismatch");
    const Eigen::Index n = statics.rows();
    const int seq_out_n = model.seq_output_size();

    VectorXd branch_grad = VectorXd::Zero(model.branch == SeqBranch::Lstm
                                              ? model.lstm.n_params()
                                              : model.attn.n_params());
    auto static_grads = zero_grads(model.static_stack);
    auto head_grads = zero_grads(model.head);
    double total = 0.0;

    DenseCache static_cache, head_cache;
    LSTMCache lstm_cache;
    MHACache mha_cache;
    for (Eigen::Index r = 0; r < n; ++r) {
        MatrixXd seqm(seqs.cols(), 1);
        seqm.col(0) = seqs.row(r).transpose();
        const VectorXd seq_out = model.branch == SeqBranch::Lstm
                                     ? lstm_forward(model.lstm, seqm, &lstm_cache)
                                     : mha_forward(model.attn, seqm, &mha_cache);
        const VectorXd static_out =
            dense_forward_cached(model.static_stack, statics.row(r).transpose(), static_cache);
        VectorXd merged(seq_out.size() + static_out.size());
        merged << seq_out, static_out;
        const double pred = dense_forward_cached(model.head, merged, head_cache)(0);
        if (!std::isfinite(pred))
            throw ModelError("non-finite activation in hybrid forward pass; reduce step size");
        total += loss_value(model.loss, pred, y(r));

        VectorXd dout = VectorXd::Zero(1);
        dout(0) = loss_scale * loss_derivative(model.loss, pred, y(r), n);
        const VectorXd dmerged = dense_backward(model.head, head_cache, dout, head_grads);
        dense_backward(model.static_stack, static_cache, dmerged.tail(static_out.size()),
                       static_grads);
        const VectorXd dseq_out = dmerged.head(seq_out_n);
        branch_grad += model.branch == SeqBranch::Lstm
                           ? lstm_backward(model.lstm, seqm, lstm_cache, dseq_out)
                           : mha_backward(model.attn, seqm, mha_cache, dseq_out);
    }
    if (loss_out) *loss_out = loss_scale * total / static_cast<double>(n);

    VectorXd flat(model.n_params());
    Eigen::Index pos = 0;
    append_flat(flat, pos, branch_grad);
    append_flat(flat, pos, flatten_grads(static_grads));
    append_flat(flat, pos, flatten_grads(head_grads));
    return flat;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (epochs < 1) throw ModelError("epochs must be positive");
    if (batch_size < 1) throw ModelError("batch size must be positive");
    if (step <= 0.0) throw ModelError("step size must be positive");
    if (patience < 0) throw ModelError("patience must be nonnegative");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ModelError("validation fraction must lie in [0, 1)");
    if (patience > 0 && val_fraction <= 0.0)
        throw ModelError("early stopping needs a positive validation fraction");
}

namespace {

struct TrainOps {
    // Gradient of the batch loss at the current parameters.
    std::function<VectorXd(std::span<const int>, double*)> grad;
    // Full loss over the given rows at the current parameters.
    std::function<double(std::span<const int>)> loss;
    std::function<VectorXd()> get_flat;
    std::function<void(const VectorXd&)> set_flat;
};

TrainResult run_adam(Eigen::Index n_rows, const TrainConfig& cfg, const TrainOps& ops) {
    cfg.validate();
    if (n_rows < 1) throw ModelError("training needs at least one sample");

    std::vector<int> order(n_rows);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);

    std::vector<int> train_rows = order, val_rows;
    if (cfg.patience > 0) {
        std::shuffle(order.begin(), order.end(), rng);
        Eigen::Index n_val = std::max<Eigen::Index>(
            1, static_cast<Eigen::Index>(std::llround(cfg.val_fraction * n_rows)));
        if (n_val >= n_rows) n_val = n_rows - 1;
        if (n_val < 1) throw ModelError("too few samples for a validation split");
        val_rows.assign(order.end() - n_val, order.end());
        train_rows.assign(order.begin(), order.end() - n_val);
    }

    VectorXd theta = ops.get_flat();
    VectorXd m = VectorXd::Zero(theta.size());
    VectorXd v = VectorXd::Zero(theta.size());
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step_count = 0;

    TrainResult result;
    VectorXd best_theta = theta;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(train_rows.begin(), train_rows.end(), rng);
        for (std::size_t start = 0; start < train_rows.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(train_rows.size(), start + static_cast<std::size_t>(cfg.batch_size));
            double batch_loss = 0.0;
            const VectorXd g = ops.grad(
                std::span<const int>(train_rows.data() + start, stop - start), &batch_loss);
            if (!std::isfinite(batch_loss) || !g.allFinite())
                throw ModelError("training diverged (non-finite loss); reduce step size");
            ++step_count;
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
            const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
            const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
            theta -= (cfg.step / corr1) *
                     (m.array() / ((v.array() / corr2).sqrt() + eps)).matrix();
            ops.set_flat(theta);
        }
        const double train_loss = ops.loss(train_rows);
        if (!std::isfinite(train_loss))
            throw ModelError("training diverged (non-finite loss); reduce step size");
        result.train_loss.push_back(train_loss);
        if (!val_rows.empty()) {
            const double val_loss = ops.loss(val_rows);
            result.val_loss.push_back(val_loss);
            if (val_loss < best_val) {
                best_val = val_loss;
                best_theta = theta;
                best_epoch = epoch;
            } else if (epoch - best_epoch > cfg.patience) {
                break;
            }
        }
    }

    if (!val_rows.empty()) {
        ops.set_flat(best_theta);
        result.best_epoch = best_epoch;
    } else {
        result.best_epoch = static_cast<int>(result.train_loss.size()) - 1;
    }
    return result;
}

MatrixXd gather_rows(const MatrixXd& X, std::span<const int> rows) {
    MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    return out;
}

VectorXd gather_rows(const VectorXd& y, std::span<const int> rows) {
    VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(rows[i]);
    return out;
}

double mean_loss(Loss loss, const VectorXd& pred, const VectorXd& y) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) total += loss_value(loss, pred(i), y(i));
    return total / static_cast<double>(pred.size());
}

}  // namespace

FnnFit fit_fnn(const MatrixXd& X, const VectorXd& y, const FnnOptions& opts,
               const TrainConfig& cfg) {
    if (X.rows() != y.size()) throw ModelError("feature/target row count mismatch");
    Rng init_rng(cfg.seed);
    FnnFit fit;
    fit.model = make_dense_stack(static_cast<int>(X.cols()), opts.widths, 1, opts.hidden,
                                 Activation::Sigmoid, init_rng);

    TrainOps ops;
    ops.grad = [&](std::span<const int> rows, double* loss) {
        return fnn_gradient(fit.model, gather_rows(X, rows), gather_rows(y, rows),
                            Loss::MeanSquared, 1.0, loss);
    };
    ops.loss = [&](std::span<const int> rows) {
        const MatrixXd Xb = gather_rows(X, rows);
        return mean_loss(Loss::MeanSquared, fit.model.predict(Xb), gather_rows(y, rows));
    };
    ops.get_flat = [&] { return fit.model.flatten(); };
    ops.set_flat = [&](const VectorXd& flat) { fit.model.set_from_flat(flat); };
    fit.history = run_adam(X.rows(), cfg, ops);
    return fit;
}

HybridFit fit_hybrid(const MatrixXd& statics, const MatrixXd& seqs, const VectorXd& y,
                     const HybridOptions& opts, const TrainConfig& cfg) {
    if (statics.rows() != seqs.rows() || statics.rows() != y.size())
        throw ModelError("batch row count mismatch");
    if (statics.cols() != opts.static_inputs)
        throw ModelError("static feature width does not match options");
    Rng init_rng(cfg.seed);
    HybridFit fit;
    fit.model = make_hybrid(opts, init_rng);

    TrainOps ops;
    ops.grad = [&](std::span<const int> rows, double* loss) {
        return hybrid_gradient(fit.model, gather_rows(statics, rows), gather_rows(seqs, rows),
                               gather_rows(y, rows), 1.0, loss);
    };
    ops.loss = [&](std::span<const int> rows) {
        const VectorXd pred =
            fit.model.predict(gather_rows(statics, rows), gather_rows(seqs, rows));
        return mean_loss(fit.model.loss, pred, gather_rows(y, rows));
    };
    ops.get_flat = [&] { return fit.model.flatten(); };
    ops.set_flat = [&](const VectorXd& flat) { fit.model.set_from_flat(flat); };
    fit.history = run_adam(statics.rows(), cfg, ops);
    return fit;
}

void save_history(const TrainResult& history, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
        const double val = e < history.val_loss.size()
                               ? history.val_loss[e]
                               : std::numeric_limits<double>::quiet_NaN();
        rows.push_back({std::to_string(e), format_double(history.train_loss[e]),
                        format_double(val)});
    }
    write_delimited(path, {"epoch", "train_loss", "val_loss"}, rows);
}

}  // namespace mortcast
