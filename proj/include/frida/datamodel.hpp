#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "frida/numcore.hpp"

namespace frida {

inline constexpr std::size_t kDefaultCodeWidth = 3;

struct DomainId {
    std::size_t tau = 0;
    std::vector<double> code;

    static DomainId make(std::size_t tau, std::size_t width);
    bool operator==(const DomainId&) const = default;
};

// Little-endian binary code of tau as 0/1 doubles. Throws CapacityError when
// tau >= 2^width.
std::vector<double> encode_domain(std::size_t tau, std::size_t width);

std::vector<double> one_hot(int y, std::size_t num_classes);

// Feature vectors of a single domain, optionally labeled.
struct FeatureDataset {
    Tensor2 features;  // n x d
    std::optional<std::vector<int>> labels;
    std::size_t domain = 0;
    std::size_t num_classes = 0;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    bool labeled() const { return labels.has_value(); }

    // Same samples with labels removed.
    FeatureDataset unlabeled() const;
    FeatureDataset subset(std::span<const std::size_t> indices) const;

    bool operator==(const FeatureDataset&) const = default;
};

// Throws ContractError if the dataset violates its invariants.
void validate(const FeatureDataset& ds);

std::vector<std::size_t> class_histogram(const FeatureDataset& ds);

struct Split {
    FeatureDataset train;
    FeatureDataset test;
    std::vector<std::string> warnings;
};

// Stratified by class when labels are present. Each class contributes
// round(n_c * test_fraction) samples to test, keeping at least one in train.
Split split(const FeatureDataset& ds, double test_fraction, RngStream& rng);

// Text format:
//   FRIDA-DS v1 n=<n> d=<d> C=<C> domain=<tau>
//   <d floats> <label or -1>
void write_dataset(const FeatureDataset& ds, const std::filesystem::path& path);
void write_dataset(const FeatureDataset& ds, std::ostream& out);
FeatureDataset read_dataset(const std::filesystem::path& path);
FeatureDataset read_dataset(std::istream& in);

// Labeled samples pooled from several domains, each sample tagged with its
// domain index. This is what the replay GAN treats as real data.
struct ConditionedSet {
    Tensor2 features;
    std::vector<int> labels;
    std::vector<std::size_t> taus;

    std::size_t size() const { return features.rows(); }
    ConditionedSet subset(std::span<const std::size_t> indices) const;
};

ConditionedSet pool(const std::vector<const FeatureDataset*>& parts);

// Concatenates labeled datasets into one labeled dataset (domain taken from
// the first part).
FeatureDataset concat_labeled(const std::vector<const FeatureDataset*>& parts);

}  // namespace frida
