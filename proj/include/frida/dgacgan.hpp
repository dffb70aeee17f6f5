#pragma once

#include <cstddef>
#include <vector>

#include "frida/datamodel.hpp"
#include "frida/numcore.hpp"

namespace frida {

struct GanArchitecture {
    std::size_t z_dim = 2000;
    std::vector<std::size_t> generator_hidden{1024, 1024};
    std::vector<std::size_t> trunk_widths{512, 256, 128};
};

// Class- and domain-conditioned feature GAN with a shared discriminator trunk
// feeding a real/fake head and an auxiliary class head.
struct GanModel {
    std::size_t z_dim = 0;
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    std::size_t code_width = 0;
    DenseNet generator;  // [z | one_hot(y) | code(tau)] -> d
    DenseNet trunk;      // [x | code(tau)] -> h
    DenseNet head_rf;    // h -> 1
    DenseNet head_cls;   // h -> C
    // Highest domain index the generator has been trained on; -1 if untrained.
    long trained_through = -1;

    static GanModel create(const GanArchitecture& arch, std::size_t num_classes, std::size_t feature_dim,
                           std::size_t code_width, RngStream& rng);
    static GanModel zeros(const GanArchitecture& arch, std::size_t num_classes, std::size_t feature_dim,
                          std::size_t code_width);

    std::vector<Tensor2*> generator_parameters();
    std::vector<const Tensor2*> generator_parameters() const;
    // trunk, head_rf, head_cls
    std::vector<Tensor2*> discriminator_parameters();
    std::vector<const Tensor2*> discriminator_parameters() const;

    bool operator==(const GanModel&) const;
};

void validate(const GanModel& model);

// Generator input rows [z | one_hot(y) | code(tau)].
Tensor2 generator_input(const GanModel& model, const Tensor2& z, std::span<const int> labels,
                        std::span<const std::size_t> taus);

Tensor2 gen_forward(const GanModel& model, const Tensor2& z, std::span<const int> labels,
                    std::span<const std::size_t> taus);
Tensor2 gen_forward(const GanModel& model, const Tensor2& z, std::span<const int> labels, std::size_t tau);

struct DiscOutput {
    Tensor2 rf_logit;    // n x 1
    Tensor2 cls_logits;  // n x C
};

DiscOutput disc_forward(const GanModel& model, const Tensor2& x, std::span<const std::size_t> taus);
DiscOutput disc_forward(const GanModel& model, const Tensor2& x, std::size_t tau);

// Log-likelihood terms of the DGAC-GAN objective on one batch. l_source and
// l_class are sums of the real-half and fake-half mean log-likelihoods (so
// both are <= 0; a uniform class posterior gives l_class = -2 ln C). r_gan is
// the mean squared distance between each paired fake and its real partner.
struct GanBatchLoss {
    double l_source = 0.0;
    double l_class = 0.0;
    double r_gan = 0.0;
    std::size_t unpaired = 0;  // fakes with no same-(tau, y) real sample
};

enum class PairingMode { random_sample, class_mean };
enum class GeneratorLoss { non_saturating, literal };

// For each fake sample, the index of a real sample with the same (tau, y)
// drawn uniformly, or -1 when none exists in the batch.
std::vector<long> draw_pairing(const ConditionedSet& real, std::span<const int> y_fake,
                               std::span<const std::size_t> tau_fake, RngStream& rng);

// Partner features for the overlap regularizer. Rows of unpaired fakes are
// left zero and flagged false in `paired`.
struct PairTargets {
    Tensor2 targets;
    std::vector<bool> paired;
    std::size_t unpaired = 0;
};

PairTargets pair_targets(const ConditionedSet& real, std::span<const int> y_fake,
                         std::span<const std::size_t> tau_fake, std::span<const long> pairing, PairingMode mode);

GanBatchLoss gan_losses(const GanModel& model, const ConditionedSet& real, const Tensor2& z,
                        std::span<const int> y_fake, std::span<const std::size_t> tau_fake,
                        const PairTargets& pairs);

struct GanObjective {
    GanBatchLoss loss;
    double value = 0.0;       // scalar being minimized
    std::vector<Tensor2> grads;
};

// Discriminator minimizes -(l_source + l_class) over trunk and heads.
GanObjective discriminator_objective(const GanModel& model, const ConditionedSet& real, const Tensor2& z,
                                     std::span<const int> y_fake, std::span<const std::size_t> tau_fake);

// Generator minimizes, over generator parameters,
//   non_saturating: -mean log D_rf(x') - mean log P(y | x') + r_weight * r_gan
//   literal:        -(l_class - l_source - r_weight * r_gan)
GanObjective generator_objective(const GanModel& model, const ConditionedSet& real, const Tensor2& z,
                                 std::span<const int> y_fake, std::span<const std::size_t> tau_fake,
                                 const PairTargets& pairs, GeneratorLoss form, double r_weight);

struct GanTrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    AdamConfig adam;
    GeneratorLoss generator_loss = GeneratorLoss::non_saturating;
    PairingMode pairing = PairingMode::random_sample;
    double r_weight = 1.0;
};

struct GanEpochStats {
    GanBatchLoss loss;                 // batch means before the discriminator update
    double discriminator_value = 0.0;  // mean discriminator objective
    double generator_value = 0.0;      // mean generator objective
    std::size_t unpaired = 0;          // total over the epoch
};

using GanHistory = std::vector<GanEpochStats>;

// Alternating updates: one discriminator step then one generator step per
// real batch. Fakes are conditioned on the (y, tau) of the real batch.
GanHistory train_gan(GanModel& model, const ConditionedSet& real, const GanTrainConfig& config, RngStream& rng);

// per_class synthetic samples for every class of domain tau.
FeatureDataset sample_features(const GanModel& model, std::size_t tau, std::size_t per_class, RngStream& rng);

}  // namespace frida
