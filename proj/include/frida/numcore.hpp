#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace frida {

// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool all_finite() const;
    void fill(double v);

    bool operator==(const Tensor2&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_str(const Tensor2& t);

// a * b
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
// a^T * b
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
// a * b^T
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);

Tensor2 hconcat(const Tensor2& left, const Tensor2& right);
Tensor2 slice_cols(const Tensor2& t, std::size_t begin, std::size_t end);
Tensor2 take_rows(const Tensor2& t, std::span<const std::size_t> indices);
Tensor2 vconcat(const std::vector<const Tensor2*>& parts);

// Column sums as a 1 x cols tensor.
Tensor2 column_sums(const Tensor2& t);

void add_inplace(Tensor2& dst, const Tensor2& src, double scale = 1.0);

// --- Dense networks -------------------------------------------------------

enum class Activation { relu, leaky_relu, tanh, identity };

inline constexpr double kLeakySlope = 0.2;

double activate(Activation a, double x);
// Derivative expressed through the pre-activation value.
double activate_grad(Activation a, double pre);

struct DenseLayer {
    Tensor2 weight;  // in x out
    Tensor2 bias;    // 1 x out
    Activation activation = Activation::identity;

    std::size_t in_width() const { return weight.rows(); }
    std::size_t out_width() const { return weight.cols(); }
};

class RngStream;

struct DenseNet {
    std::vector<DenseLayer> layers;

    std::size_t in_width() const;
    std::size_t out_width() const;
    std::size_t parameter_count() const;

    // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
    static DenseNet create(std::size_t in_width, const std::vector<std::size_t>& widths,
                           const std::vector<Activation>& activations, RngStream& rng);
    static DenseNet zeros(std::size_t in_width, const std::vector<std::size_t>& widths,
                          const std::vector<Activation>& activations);

    std::vector<Tensor2*> parameters();
    std::vector<const Tensor2*> parameters() const;
};

// Validates chaining and parameter count, throws ShapeError otherwise.
void validate(const DenseNet& net);

Tensor2 forward(const DenseNet& net, const Tensor2& x);

struct ForwardTrace {
    std::vector<Tensor2> inputs;  // input to each layer
    std::vector<Tensor2> pre;     // pre-activation of each layer
    Tensor2 output;
};

ForwardTrace forward_trace(const DenseNet& net, const Tensor2& x);

// Gradients in DenseNet::parameters() order: w0, b0, w1, b1, ...
using GradList = std::vector<Tensor2>;

GradList zero_grads(const DenseNet& net);

// Backpropagates grad_out through the traced pass, accumulating parameter
// gradients into `grads`. Returns the gradient with respect to the input.
Tensor2 backward(const DenseNet& net, const ForwardTrace& trace, const Tensor2& grad_out,
                 GradList& grads);

// --- Losses ---------------------------------------------------------------

struct LossGrad {
    double loss = 0.0;
    Tensor2 grad;
};

Tensor2 softmax(const Tensor2& logits);

// Mean over rows of -log softmax(logits)[target].
LossGrad softmax_xent(const Tensor2& logits, std::span<const int> targets);

// Mean over rows of -log sigmoid(logit) (target 1) or -log(1 - sigmoid(logit)).
// logits is n x 1.
LossGrad binary_xent(const Tensor2& logits, std::span<const int> targets);

double log_sigmoid(double x);

// --- Randomness -----------------------------------------------------------

// Counter-based generator: draw i is a pure function of (seed, counter + i).
class RngStream {
public:
    RngStream() = default;
    explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();
    // Uniform on [0, 1).
    double uniform();
    // Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n);
    double normal();

    // Independent stream keyed by (seed, key); does not advance this stream.
    RngStream substream(std::uint64_t key) const;
    // Derives a fresh stream and advances this one by one draw.
    RngStream split();

    bool operator==(const RngStream&) const = default;

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

Tensor2 gauss_sample(RngStream& rng, std::size_t rows, std::size_t cols);

template <class T>
void shuffle(std::vector<T>& v, RngStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng.uniform_index(i);
        std::swap(v[i - 1], v[j]);
    }
}

// --- Adam -----------------------------------------------------------------

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor2> first_moment;
    std::vector<Tensor2> second_moment;

    AdamState() = default;
    AdamState(const AdamConfig& cfg, const std::vector<const Tensor2*>& params);
};

void adam_step(const std::vector<Tensor2*>& params, const std::vector<Tensor2>& grads, AdamState& state);

}  // namespace frida
