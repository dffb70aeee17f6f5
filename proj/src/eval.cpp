#include "frida/eval.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include "json.hpp"
#include <sstream>

#include "frida/errors.hpp"

namespace frida {

AccuracyMatrix::AccuracyMatrix(std::size_t final_time)
    : final_time_(final_time), cells_(final_time + 1), pre_arrival_(final_time + 1) {
    for (std::size_t k = 0; k <= final_time; ++k) cells_[k].resize(final_time + 1);
}

void AccuracyMatrix::extend_to(std::size_t time) {
    if (cells_.empty()) *this = AccuracyMatrix(0);
    if (time <= final_time_) return;
    final_time_ = time;
    cells_.resize(time + 1);
    for (auto& row : cells_) row.resize(time + 1);
    pre_arrival_.resize(time + 1);
}

void AccuracyMatrix::set(std::size_t time, std::size_t tau, double acc) {
    if (time < tau) throw ContractError("accuracy A[k][tau] is undefined for k < tau");
    if (!(acc >= 0.0 && acc <= 1.0)) throw ContractError("accuracy must lie in [0, 1]");
    extend_to(time);
    cells_[time][tau] = acc;
}

std::optional<double> AccuracyMatrix::get(std::size_t time, std::size_t tau) const {
    if (time >= cells_.size() || tau >= cells_.size() || time < tau) return std::nullopt;
    return cells_[time][tau];
}

double AccuracyMatrix::at(std::size_t time, std::size_t tau) const {
    auto v = get(time, tau);
    if (!v) throw ContractError("accuracy A[" + std::to_string(time) + "][" + std::to_string(tau) + "] is undefined");
    return *v;
}

void AccuracyMatrix::set_pre_arrival(std::size_t tau, double acc) {
    if (tau == 0) throw ContractError("the source domain has no pre-arrival time stamp");
    if (!(acc >= 0.0 && acc <= 1.0)) throw ContractError("accuracy must lie in [0, 1]");
    extend_to(tau);
    pre_arrival_[tau] = acc;
}

std::optional<double> AccuracyMatrix::pre_arrival(std::size_t tau) const {
    return tau < pre_arrival_.size() ? pre_arrival_[tau] : std::nullopt;
}

bool AccuracyMatrix::complete() const {
    if (cells_.empty()) return false;
    for (std::size_t k = 0; k <= final_time_; ++k)
        for (std::size_t t = 0; t <= k; ++t)
            if (!cells_[k][t]) return false;
    return true;
}

double accuracy(const DannIbModel& model, const FeatureDataset& test, std::size_t threads) {
    if (!test.labeled()) throw ContractError("test set must carry labels");
    if (test.size() == 0) throw ContractError("test set is empty");
    auto cls = classify(model, test.features, threads);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) hits += cls.classes[i] == (*test.labels)[i];
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

std::vector<double> evaluate(const DannIbModel& model, const std::vector<const FeatureDataset*>& tests,
                             std::size_t threads) {
    std::vector<double> row;
    row.reserve(tests.size());
    for (std::size_t i = 0; i < tests.size(); ++i) {
        if (!tests[i]) throw ContractError("missing test set for domain " + std::to_string(i));
        row.push_back(accuracy(model, *tests[i], threads));
    }
    return row;
}

double forgetting(const AccuracyMatrix& m, std::size_t tau, ForgettingMode mode) {
    const std::size_t T = m.final_time();
    if (tau > T) throw ContractError("domain " + std::to_string(tau) + " arrives after the final time stamp");
    double last = m.at(T, tau);
    if (mode == ForgettingMode::first_seen) {
        if (T == tau) return 0.0;
        return (last - m.at(tau, tau)) / static_cast<double>(T - tau);
    }
    auto before = m.pre_arrival(tau);
    if (!before)
        throw ContractError("literal forgetting for domain " + std::to_string(tau) + " needs A[" +
                            std::to_string(static_cast<long>(tau) - 1) + "][" + std::to_string(tau) +
                            "], which is undefined");
    return (last - *before) / static_cast<double>(T - tau + 1);
}

MetricsReport report(const AccuracyMatrix& m) {
    if (!m.complete()) throw ContractError("report needs a complete accuracy matrix");
    const std::size_t T = m.final_time();
    MetricsReport r;
    double tgt_a = 0.0, tgt_f = 0.0;
    for (std::size_t tau = 0; tau <= T; ++tau) {
        DomainMetrics d;
        d.tau = tau;
        for (std::size_t k = tau; k <= T; ++k) d.average += m.at(k, tau);
        d.average /= static_cast<double>(T - tau + 1);
        d.forgetting = forgetting(m, tau);
        if (m.pre_arrival(tau)) d.forgetting_literal = forgetting(m, tau, ForgettingMode::paper_literal);
        r.overall_average += d.average;
        r.overall_forgetting += d.forgetting;
        if (tau == 0) {
            r.source_average = d.average;
            r.source_forgetting = d.forgetting;
        } else {
            tgt_a += d.average;
            tgt_f += d.forgetting;
        }
        r.domains.push_back(d);
    }
    r.overall_average /= static_cast<double>(T + 1);
    r.overall_forgetting /= static_cast<double>(T + 1);
    if (T > 0) {
        r.target_average = tgt_a / static_cast<double>(T);
        r.target_forgetting = tgt_f / static_cast<double>(T);
    }
    return r;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string metrics_csv(const AccuracyMatrix& m) {
    std::ostringstream o;
    o << "domain,time,accuracy\n";
    for (std::size_t tau = 0; tau <= m.final_time(); ++tau)
        for (std::size_t k = tau; k <= m.final_time(); ++k)
            if (auto v = m.get(k, tau)) o << tau << ',' << k << ',' << fmt(*v) << '\n';
    return o.str();
}

AccuracyMatrix parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || line.rfind("domain,time,accuracy", 0) != 0)
        throw ParseError("expected header domain,time,accuracy", 1);
    AccuracyMatrix m(0);
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
            throw ParseError("expected three fields", lineno);
        try {
            m.set(std::stoull(b), std::stoull(a), std::stod(c));
        } catch (const std::exception& e) {
            throw ParseError(std::string("bad metrics row: ") + e.what(), lineno);
        }
    }
    return m;
}

std::string report_json(const AccuracyMatrix& m, const MetricsReport& r) {
    using nlohmann::json;
    json j;
    j["final_time"] = m.final_time();
    json acc = json::array();
    for (std::size_t tau = 0; tau <= m.final_time(); ++tau)
        for (std::size_t k = tau; k <= m.final_time(); ++k)
            if (auto v = m.get(k, tau)) acc.push_back({{"domain", tau}, {"time", k}, {"accuracy", *v}});
    j["accuracies"] = acc;
    json doms = json::array();
    for (const auto& d : r.domains) {
        json e{{"domain", d.tau}, {"average_accuracy", d.average}, {"forgetting", d.forgetting}};
        if (d.forgetting_literal) e["forgetting_literal"] = *d.forgetting_literal;
        doms.push_back(e);
    }
    j["domains"] = doms;
    j["source"] = {{"average_accuracy", r.source_average}, {"forgetting", r.source_forgetting}};
    if (r.target_average)
        j["targets"] = {{"average_accuracy", *r.target_average}, {"forgetting", *r.target_forgetting}};
    j["overall"] = {{"average_accuracy", r.overall_average}, {"forgetting", r.overall_forgetting}};
    return j.dump(2) + "\n";
}

Projection project2d(const Tensor2& features) {
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    if (n < 3) throw ContractError("project2d needs at least 3 samples");
    if (d == 0) throw ContractError("project2d needs at least one feature");

    Eigen::MatrixXd x(n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = features(r, c);
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");

    Projection p;
    const auto& evals = solver.eigenvalues();  // ascending
    const auto& evecs = solver.eigenvectors();
    for (Eigen::Index i = evals.size(); i-- > 0;) p.eigenvalues.push_back(std::max(0.0, evals(i)));

    const double top = p.eigenvalues.front();
    const double tol = 1e-12 * std::max(top, 1.0);
    std::size_t rank = 0;
    for (double e : p.eigenvalues) rank += e > tol;

    p.coords = Tensor2(n, 2);
    for (std::size_t axis = 0; axis < 2; ++axis) {
        std::vector<double> dir(d, 0.0);
        bool usable = axis < rank && axis < d;
        if (usable) {
            Eigen::Index col = evals.size() - 1 - static_cast<Eigen::Index>(axis);
            std::size_t arg = 0;
            for (std::size_t c = 0; c < d; ++c) {
                dir[c] = evecs(static_cast<Eigen::Index>(c), col);
                if (std::abs(dir[c]) > std::abs(dir[arg])) arg = c;
            }
            if (dir[arg] < 0)
                for (auto& v : dir) v = -v;
            for (std::size_t r = 0; r < n; ++r) {
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * dir[c];
                p.coords(r, axis) = s;
            }
        } else {
            p.warnings.push_back("data rank < 2; projection axis " + std::to_string(axis + 1) + " padded with zeros");
        }
        p.axes.push_back(std::move(dir));
    }
    return p;
}

std::string projection_csv(const Projection& p, const std::vector<ProjectionRow>& rows) {
    if (rows.size() != p.coords.rows()) throw ShapeError("projection_csv: one row descriptor per point required");
    std::ostringstream o;
    o << "x,y,label,domain,real_or_synth\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
        o << fmt(p.coords(i, 0)) << ',' << fmt(p.coords(i, 1)) << ',' << rows[i].label << ',' << rows[i].domain << ','
          << (rows[i].synthetic ? "synth" : "real") << '\n';
    return o.str();
}

}  // namespace frida
