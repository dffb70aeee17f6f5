#include "frida/numcore.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "frida/errors.hpp"

namespace frida {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Tensor2& t) {
    return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}

MutMap view(Tensor2& t) {
    return MutMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged rows in Tensor2::from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor2(r, c, std::move(data));
}

bool Tensor2::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_str(const Tensor2& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    require(a.cols() == b.rows(), "matmul " + shape_str(a) + " * " + shape_str(b));
    Tensor2 out(a.rows(), b.cols());
    if (a.cols() == 0) return out;
    view(out).noalias() = view(a) * view(b);
    return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
    require(a.rows() == b.rows(), "matmul_tn " + shape_str(a) + "^T * " + shape_str(b));
    Tensor2 out(a.cols(), b.cols());
    if (a.rows() == 0) return out;
    view(out).noalias() = view(a).transpose() * view(b);
    return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
    require(a.cols() == b.cols(), "matmul_nt " + shape_str(a) + " * " + shape_str(b) + "^T");
    Tensor2 out(a.rows(), b.rows());
    if (a.cols() == 0) return out;
    view(out).noalias() = view(a) * view(b).transpose();
    return out;
}

Tensor2 hconcat(const Tensor2& left, const Tensor2& right) {
    require(left.rows() == right.rows(), "hconcat " + shape_str(left) + " | " + shape_str(right));
    Tensor2 out(left.rows(), left.cols() + right.cols());
    for (std::size_t r = 0; r < left.rows(); ++r) {
        auto dst = out.row(r);
        std::copy(left.row(r).begin(), left.row(r).end(), dst.begin());
        std::copy(right.row(r).begin(), right.row(r).end(), dst.begin() + left.cols());
    }
    return out;
}

Tensor2 slice_cols(const Tensor2& t, std::size_t begin, std::size_t end) {
    require(begin <= end && end <= t.cols(), "slice_cols out of range");
    Tensor2 out(t.rows(), end - begin);
    for (std::size_t r = 0; r < t.rows(); ++r) {
        auto src = t.row(r);
        std::copy(src.begin() + begin, src.begin() + end, out.row(r).begin());
    }
    return out;
}

Tensor2 take_rows(const Tensor2& t, std::span<const std::size_t> indices) {
    Tensor2 out(indices.size(), t.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= t.rows()) throw IndexError("take_rows index out of range");
        std::copy(t.row(indices[i]).begin(), t.row(indices[i]).end(), out.row(i).begin());
    }
    return out;
}

Tensor2 vconcat(const std::vector<const Tensor2*>& parts) {
    std::size_t rows = 0;
    std::size_t cols = parts.empty() ? 0 : parts.front()->cols();
    for (const auto* p : parts) {
        require(p->cols() == cols, "vconcat column mismatch");
        rows += p->rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const auto* p : parts) data.insert(data.end(), p->storage().begin(), p->storage().end());
    return Tensor2(rows, cols, std::move(data));
}

Tensor2 column_sums(const Tensor2& t) {
    Tensor2 out(1, t.cols());
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out(0, c) += t(r, c);
    return out;
}

void add_inplace(Tensor2& dst, const Tensor2& src, double scale) {
    require(dst.rows() == src.rows() && dst.cols() == src.cols(),
            "add_inplace " + shape_str(dst) + " += " + shape_str(src));
    auto d = dst.values();
    auto s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

// --- Dense networks -------------------------------------------------------

double activate(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::leaky_relu: return x > 0.0 ? x : kLeakySlope * x;
        case Activation::tanh: return std::tanh(x);
        case Activation::identity: return x;
    }
    return x;
}

double activate_grad(Activation a, double pre) {
    switch (a) {
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::leaky_relu: return pre > 0.0 ? 1.0 : kLeakySlope;
        case Activation::tanh: {
            double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

std::size_t DenseNet::in_width() const { return layers.empty() ? 0 : layers.front().in_width(); }
std::size_t DenseNet::out_width() const { return layers.empty() ? 0 : layers.back().out_width(); }

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

namespace {

DenseNet build(std::size_t in_width, const std::vector<std::size_t>& widths,
               const std::vector<Activation>& activations, RngStream* rng) {
    if (widths.empty() || widths.size() != activations.size())
        throw ShapeError("DenseNet needs one activation per layer width");
    DenseNet net;
    std::size_t fan_in = in_width;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        DenseLayer layer{Tensor2(fan_in, widths[i]), Tensor2(1, widths[i]), activations[i]};
        if (rng) {
            double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& w : layer.weight.values()) w = (2.0 * rng->uniform() - 1.0) * limit;
        }
        net.layers.push_back(std::move(layer));
        fan_in = widths[i];
    }
    validate(net);
    return net;
}

}  // namespace

DenseNet DenseNet::create(std::size_t in_width, const std::vector<std::size_t>& widths,
                          const std::vector<Activation>& activations, RngStream& rng) {
    return build(in_width, widths, activations, &rng);
}

DenseNet DenseNet::zeros(std::size_t in_width, const std::vector<std::size_t>& widths,
                         const std::vector<Activation>& activations) {
    return build(in_width, widths, activations, nullptr);
}

std::vector<Tensor2*> DenseNet::parameters() {
    std::vector<Tensor2*> out;
    for (auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<const Tensor2*> DenseNet::parameters() const {
    std::vector<const Tensor2*> out;
    for (const auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

void validate(const DenseNet& net) {
    if (net.layers.empty() || net.parameter_count() == 0) throw ShapeError("empty network");
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols())
            throw ShapeError("layer " + std::to_string(i) + " bias shape " + shape_str(l.bias));
        if (i > 0 && net.layers[i - 1].out_width() != l.in_width())
            throw ShapeError("layer " + std::to_string(i) + " does not chain");
    }
}

namespace {

Tensor2 affine(const DenseLayer& layer, const Tensor2& x) {
    Tensor2 pre = matmul(x, layer.weight);
    for (std::size_t r = 0; r < pre.rows(); ++r) {
        auto row = pre.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias(0, c);
    }
    return pre;
}

Tensor2 apply(Activation a, Tensor2 t) {
    if (a == Activation::identity) return t;
    for (auto& v : t.values()) v = activate(a, v);
    return t;
}

}  // namespace

Tensor2 forward(const DenseNet& net, const Tensor2& x) {
    if (x.cols() != net.in_width())
        throw ShapeError("forward: input " + shape_str(x) + " vs net width " +
                         std::to_string(net.in_width()));
    Tensor2 h = x;
    for (const auto& layer : net.layers) h = apply(layer.activation, affine(layer, h));
    return h;
}

ForwardTrace forward_trace(const DenseNet& net, const Tensor2& x) {
    if (x.cols() != net.in_width())
        throw ShapeError("forward: input " + shape_str(x) + " vs net width " +
                         std::to_string(net.in_width()));
    ForwardTrace trace;
    Tensor2 h = x;
    for (const auto& layer : net.layers) {
        trace.inputs.push_back(h);
        Tensor2 pre = affine(layer, h);
        h = apply(layer.activation, pre);
        trace.pre.push_back(std::move(pre));
    }
    trace.output = std::move(h);
    return trace;
}

GradList zero_grads(const DenseNet& net) {
    GradList g;
    for (const auto& l : net.layers) {
        g.emplace_back(l.weight.rows(), l.weight.cols());
        g.emplace_back(l.bias.rows(), l.bias.cols());
    }
    return g;
}

Tensor2 backward(const DenseNet& net, const ForwardTrace& trace, const Tensor2& grad_out,
                 GradList& grads) {
    if (grads.size() != 2 * net.layers.size()) throw ShapeError("backward: gradient list size");
    if (grad_out.rows() != trace.output.rows() || grad_out.cols() != trace.output.cols())
        throw ShapeError("backward: grad_out " + shape_str(grad_out) + " vs output " +
                         shape_str(trace.output));
    Tensor2 delta = grad_out;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const auto& layer = net.layers[i];
        if (layer.activation != Activation::identity) {
            auto d = delta.values();
            auto p = trace.pre[i].values();
            for (std::size_t k = 0; k < d.size(); ++k) d[k] *= activate_grad(layer.activation, p[k]);
        }
        add_inplace(grads[2 * i], matmul_tn(trace.inputs[i], delta));
        add_inplace(grads[2 * i + 1], column_sums(delta));
        delta = matmul_nt(delta, layer.weight);
    }
    return delta;
}

// --- Losses ---------------------------------------------------------------

Tensor2 softmax(const Tensor2& logits) {
    Tensor2 out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto in = logits.row(r);
        auto o = out.row(r);
        double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (auto& v : o) v /= sum;
    }
    return out;
}

LossGrad softmax_xent(const Tensor2& logits, std::span<const int> targets) {
    if (targets.size() != logits.rows()) throw ShapeError("softmax_xent: target count");
    if (!logits.all_finite()) throw NumericError("softmax_xent: non-finite logits");
    if (logits.rows() == 0) return {0.0, Tensor2(0, logits.cols())};
    const double n = static_cast<double>(logits.rows());
    LossGrad out{0.0, softmax(logits)};
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        int t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= logits.cols())
            throw IndexError("softmax_xent: target " + std::to_string(t) + " out of range");
        auto in = logits.row(r);
        double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (double v : in) sum += std::exp(v - mx);
        out.loss += -(in[t] - mx - std::log(sum));
        auto g = out.grad.row(r);
        g[t] -= 1.0;
        for (auto& v : g) v /= n;
    }
    out.loss /= n;
    return out;
}

double log_sigmoid(double x) {
    // log(1 / (1 + e^-x)) evaluated without overflow.
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

LossGrad binary_xent(const Tensor2& logits, std::span<const int> targets) {
    if (logits.cols() != 1 || targets.size() != logits.rows())
        throw ShapeError("binary_xent: expects n x 1 logits and n targets");
    if (!logits.all_finite()) throw NumericError("binary_xent: non-finite logits");
    if (logits.rows() == 0) return {0.0, Tensor2(0, 1)};
    const double n = static_cast<double>(logits.rows());
    LossGrad out{0.0, Tensor2(logits.rows(), 1)};
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        double x = logits(r, 0);
        double p = 1.0 / (1.0 + std::exp(-x));
        if (targets[r]) {
            out.loss -= log_sigmoid(x);
            out.grad(r, 0) = (p - 1.0) / n;
        } else {
            out.loss -= log_sigmoid(-x);
            out.grad(r, 0) = p / n;
        }
    }
    out.loss /= n;
    return out;
}

// --- Randomness -----------------------------------------------------------

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t RngStream::next_u64() {
    std::uint64_t key = mix64(seed_) ^ 0xD1B54A32D192ED03ULL;
    return mix64(key + counter_++ * 0x9E3779B97F4A7C15ULL);
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t RngStream::uniform_index(std::size_t n) {
    if (n == 0) throw ContractError("uniform_index: empty range");
    auto wide = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::size_t>(wide >> 64);
}

double RngStream::normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::substream(std::uint64_t key) const {
    return RngStream(mix64(seed_ ^ mix64(key ^ 0x632BE59BD9B4E019ULL)), 0);
}

RngStream RngStream::split() { return RngStream(next_u64(), 0); }

Tensor2 gauss_sample(RngStream& rng, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw ShapeError("gauss_sample: empty shape");
    Tensor2 out(rows, cols);
    for (auto& v : out.values()) v = rng.normal();
    return out;
}

// --- Adam -----------------------------------------------------------------

AdamState::AdamState(const AdamConfig& cfg, const std::vector<const Tensor2*>& params) : config(cfg) {
    if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0))
        throw ContractError("Adam betas must lie in (0, 1)");
    for (const auto* p : params) {
        first_moment.emplace_back(p->rows(), p->cols());
        second_moment.emplace_back(p->rows(), p->cols());
    }
}

void adam_step(const std::vector<Tensor2*>& params, const std::vector<Tensor2>& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
            state.first_moment[i].rows() != grads[i].rows() ||
            state.first_moment[i].cols() != grads[i].cols())
            throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double corr1 = 1.0 - std::pow(c.beta1, t);
    const double corr2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->values();
        auto g = grads[i].values();
        auto m = state.first_moment[i].values();
        auto v = state.second_moment[i].values();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            double mhat = m[k] / corr1;
            double vhat = v[k] / corr2;
            p[k] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    }
}

}  // namespace frida
