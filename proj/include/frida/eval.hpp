#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "frida/dannib.hpp"
#include "frida/datamodel.hpp"

namespace frida {

// A[k][tau]: accuracy of the model at time k on the test set of domain tau,
// defined for k >= tau. Optionally also holds the accuracy of the model at
// time tau-1 on domain tau before it arrives, which only the literal
// forgetting formula uses.
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t final_time);

    std::size_t final_time() const { return final_time_; }

    void set(std::size_t time, std::size_t tau, double accuracy);
    std::optional<double> get(std::size_t time, std::size_t tau) const;
    double at(std::size_t time, std::size_t tau) const;  // throws when undefined

    void set_pre_arrival(std::size_t tau, double accuracy);
    std::optional<double> pre_arrival(std::size_t tau) const;

    // Every cell with k >= tau defined.
    bool complete() const;
    // Grows the matrix so that `time` becomes the final time stamp.
    void extend_to(std::size_t time);

    bool operator==(const AccuracyMatrix&) const = default;

private:
    std::size_t final_time_ = 0;
    std::vector<std::vector<std::optional<double>>> cells_;  // [time][tau]
    std::vector<std::optional<double>> pre_arrival_;
};

double accuracy(const DannIbModel& model, const FeatureDataset& test, std::size_t threads = 1);

// One matrix row: accuracy on each test set, in order. Domain identity never
// reaches the model.
std::vector<double> evaluate(const DannIbModel& model, const std::vector<const FeatureDataset*>& tests,
                             std::size_t threads = 1);

enum class ForgettingMode { first_seen, paper_literal };

// first_seen: (A[T][tau] - A[tau][tau]) / (T - tau), 0 when T = tau.
// paper_literal: (A[T][tau] - A_pre[tau]) / (T - tau + 1); throws ContractError
// when the pre-arrival entry is missing.
double forgetting(const AccuracyMatrix& m, std::size_t tau, ForgettingMode mode = ForgettingMode::first_seen);

struct DomainMetrics {
    std::size_t tau = 0;
    double average = 0.0;     // mean of A[k][tau] over k = tau..T
    double forgetting = 0.0;  // first_seen
    std::optional<double> forgetting_literal;
};

struct MetricsReport {
    std::vector<DomainMetrics> domains;
    double source_average = 0.0;
    double source_forgetting = 0.0;
    std::optional<double> target_average;  // absent when T = 0
    std::optional<double> target_forgetting;
    double overall_average = 0.0;
    double overall_forgetting = 0.0;
};

MetricsReport report(const AccuracyMatrix& m);

// metrics.csv: "domain,time,accuracy", one row per defined cell.
std::string metrics_csv(const AccuracyMatrix& m);
AccuracyMatrix parse_metrics_csv(const std::string& text);
std::string report_json(const AccuracyMatrix& m, const MetricsReport& r);

struct Projection {
    Tensor2 coords;                   // n x 2
    std::vector<double> eigenvalues;  // covariance spectrum, descending
    std::vector<std::vector<double>> axes;  // the two principal directions
    std::vector<std::string> warnings;
};

// Top-2 principal components of the covariance. Each axis is signed so its
// largest-magnitude loading is positive. Rank < 2 pads the second axis with
// zeros and warns.
Projection project2d(const Tensor2& features);

struct ProjectionRow {
    int label = -1;
    std::size_t domain = 0;
    bool synthetic = false;
};

// proj_<tag>.csv: "x,y,label,domain,real_or_synth".
std::string projection_csv(const Projection& p, const std::vector<ProjectionRow>& rows);

}  // namespace frida
