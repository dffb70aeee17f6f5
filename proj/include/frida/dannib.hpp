#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "frida/datamodel.hpp"
#include "frida/numcore.hpp"

namespace frida {

// dann_binary: source-vs-target domain head, deterministic encoder.
// dann_multiclass: (C+1)-way domain head, deterministic encoder.
// dann_ib: (C+1)-way domain head, stochastic encoder with KL bottleneck.
enum class DannMode { dann_binary, dann_multiclass, dann_ib };

std::string to_string(DannMode mode);
DannMode parse_dann_mode(const std::string& s);

struct DannArchitecture {
    std::vector<std::size_t> encoder_hidden{512, 512};
    std::size_t latent_dim = 256;
};

struct DannIbModel {
    DannMode mode = DannMode::dann_ib;
    std::size_t latent_dim = 0;
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    DenseNet encoder;    // d -> 2 * latent (mean, log-variance)
    DenseNet head_task;  // latent -> C
    DenseNet head_dom;   // latent -> C + 1, or 2 in binary mode

    static DannIbModel create(const DannArchitecture& arch, DannMode mode, std::size_t num_classes,
                              std::size_t feature_dim, RngStream& rng);
    static DannIbModel zeros(const DannArchitecture& arch, DannMode mode, std::size_t num_classes,
                             std::size_t feature_dim);

    std::size_t domain_classes() const { return mode == DannMode::dann_binary ? 2 : num_classes + 1; }
    bool stochastic() const { return mode == DannMode::dann_ib; }

    // encoder, head_task, head_dom
    std::vector<Tensor2*> parameters();
    std::vector<const Tensor2*> parameters() const;

    bool operator==(const DannIbModel&) const;
};

void validate(const DannIbModel& model);

struct Encoding {
    Tensor2 mu;
    Tensor2 logvar;
    Tensor2 sample;
};

// sample = mu + exp(logvar / 2) * eps when stochastic, mu otherwise.
Encoding encode(const DannIbModel& model, const Tensor2& x, RngStream& rng, bool stochastic);
// Reparameterized encoding with caller-supplied noise.
Encoding encode_with_noise(const DannIbModel& model, const Tensor2& x, const Tensor2& eps);

// Mean over rows of 0.5 * sum_j (exp(logvar_j) + mu_j^2 - 1 - logvar_j).
double kl_regularizer(const Tensor2& mu, const Tensor2& logvar);

// 2 / (1 + exp(-10 p)) - 1
double lambda_schedule(double progress);

struct DannLossReport {
    double l_task = 0.0;
    double l_dom = 0.0;
    double r_ib = 0.0;
    double lambda = 0.0;
    double beta = 0.0;
    double total = 0.0;  // l_task - lambda * l_dom + beta * r_ib
};

// Reparameterization noise for one source and one target batch.
struct DannNoise {
    Tensor2 source;
    Tensor2 target;
};

DannNoise draw_noise(const DannIbModel& model, std::size_t n_source, std::size_t n_target, RngStream& rng);

struct DannGradients {
    DannLossReport report;
    // In parameters() order. Encoder entries hold d(l_task - lambda l_dom +
    // beta r_ib); head_task entries d(l_task); head_dom entries d(l_dom).
    std::vector<Tensor2> grads;
};

// `target` may be empty (0 rows), in which case only source terms enter l_dom
// and r_ib. beta is ignored outside dann_ib mode.
DannGradients dannib_loss(const DannIbModel& model, const Tensor2& source, std::span<const int> source_labels,
                          const Tensor2& target, double lambda, double beta, const DannNoise& noise);
DannGradients dannib_loss(const DannIbModel& model, const Tensor2& source, std::span<const int> source_labels,
                          const Tensor2& target, double lambda, double beta, RngStream& rng);

struct DannTrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    AdamConfig adam;
    double beta = 0.01;
    double lambda_max = 1.0;  // ceiling applied to the schedule, in [0, 1]
};

using DannHistory = std::vector<DannLossReport>;

// Per epoch, lambda = lambda_max * lambda_schedule(epoch / epochs). A missing target trains
// the task and domain heads on source alone with lambda = 0.
DannHistory train_dannib(DannIbModel& model, const FeatureDataset& source, const FeatureDataset* target,
                         const DannTrainConfig& config, RngStream& rng);

struct Classification {
    std::vector<int> classes;
    Tensor2 posteriors;
};

// Deterministic (mean) encoding; ties go to the lower class index.
// Rows are processed in parallel when `threads` > 1.
Classification classify(const DannIbModel& model, const Tensor2& x, std::size_t threads = 1);

struct PseudoLabelReport {
    FeatureDataset selected;
    std::vector<std::size_t> selected_indices;  // rows of the input dataset
    std::vector<std::size_t> per_class;
    std::size_t rejected = 0;
    double threshold = 0.0;
    std::vector<int> fallback_classes;  // classes filled by the fallback rule
};

inline constexpr double kDefaultThreshold = 0.95;

// Keeps samples whose max posterior >= threshold, labeled by argmax. With
// fallback, any class left empty receives its highest-posterior unselected
// sample.
PseudoLabelReport pseudo_label(const DannIbModel& model, const FeatureDataset& data, double threshold,
                               bool fallback = true, std::size_t threads = 1);

}  // namespace frida
