#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "frida/datamodel.hpp"

namespace frida {

// Orthonormal pair (u, v) spanning the rotation plane.
struct RotationPlane {
    std::vector<double> u;
    std::vector<double> v;
};

// Affine shift applied to class prototypes: scale * rotate(p) + translation,
// followed by isotropic Gaussian noise.
struct ShiftSpec {
    double rotation_angle = 0.0;
    std::vector<double> translation;  // empty means zero
    double scale = 1.0;
    double noise_sigma = 0.0;
    std::optional<RotationPlane> plane;  // drawn at random when absent
};

void validate(const ShiftSpec& shift, std::size_t dim);

RotationPlane random_plane(std::size_t dim, RngStream& rng);

// Applies scale, rotation and translation (no noise) to one point.
std::vector<double> apply_shift(const ShiftSpec& shift, const RotationPlane& plane, std::span<const double> x);

inline constexpr double kPrototypeRadius = 4.0;
inline constexpr double kPrototypeMinDistance = 2.0;
inline constexpr std::size_t kPrototypeMaxTries = 10000;

// C points on the sphere of radius 4 with pairwise distance >= 2.
// Throws SpecError when rejection sampling exhausts its budget.
std::vector<std::vector<double>> make_prototypes(std::size_t num_classes, std::size_t dim, RngStream& rng);

FeatureDataset make_domain(const std::vector<std::vector<double>>& prototypes, const ShiftSpec& shift,
                           std::size_t n_per_class, std::size_t tau, RngStream& rng);

struct BenchmarkSpec {
    std::size_t num_classes = 4;
    std::size_t dim = 16;
    std::size_t n_per_class = 150;
    std::size_t targets = 2;
    std::vector<ShiftSpec> shifts;  // one per domain, source first
    std::uint64_t seed = 0;
    std::size_t code_width = kDefaultCodeWidth;
};

void validate(const BenchmarkSpec& spec);

// Default desk-scale benchmark: domain tau is rotated by 0.3 * tau radians in
// a shared plane and translated by 9 * tau along a shared unit direction,
// with noise sigma 0.5.
BenchmarkSpec default_benchmark(std::uint64_t seed, std::size_t targets = 2);

// A domain as emitted by the generator. Target labels ride along for
// evaluation only; training code must go through training_view().
class BenchmarkDomain {
public:
    BenchmarkDomain(FeatureDataset data, bool labels_hidden)
        : data_(std::move(data)), labels_hidden_(labels_hidden) {}

    bool labels_hidden() const { return labels_hidden_; }
    std::size_t tau() const { return data_.domain; }

    // Labels stripped when hidden.
    FeatureDataset training_view() const { return labels_hidden_ ? data_.unlabeled() : data_; }
    const FeatureDataset& evaluation_view() const { return data_; }

private:
    FeatureDataset data_;
    bool labels_hidden_;
};

std::vector<BenchmarkDomain> make_benchmark(const BenchmarkSpec& spec);

// Key=value benchmark description used by `frida gen` and run configs.
// Keys: C, d, n_per_class, T, seed, width, noise, rotation_step,
// translation_step, scale_step, and per-domain overrides domain.<k>.rotation,
// domain.<k>.translation_norm, domain.<k>.scale, domain.<k>.noise.
BenchmarkSpec benchmark_from_keys(const std::vector<std::pair<std::string, std::string>>& kv);

}  // namespace frida
