#include "frida/synthgen.hpp"

#include <cmath>
#include <map>

#include "frida/errors.hpp"

namespace frida {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> random_unit(std::size_t dim, RngStream& rng) {
    for (;;) {
        std::vector<double> v(dim);
        for (auto& x : v) x = rng.normal();
        double n = std::sqrt(dot(v, v));
        if (n > 1e-12) {
            for (auto& x : v) x /= n;
            return v;
        }
    }
}

}  // namespace

void validate(const ShiftSpec& shift, std::size_t dim) {
    if (!(shift.scale > 0.0)) throw SpecError("shift scale must be positive");
    if (!(shift.noise_sigma >= 0.0)) throw SpecError("shift noise sigma must be non-negative");
    if (!shift.translation.empty() && shift.translation.size() != dim)
        throw SpecError("shift translation has length " + std::to_string(shift.translation.size()) +
                        ", expected " + std::to_string(dim));
    if (shift.plane && (shift.plane->u.size() != dim || shift.plane->v.size() != dim))
        throw SpecError("rotation plane vectors must have the feature dimension");
}

RotationPlane random_plane(std::size_t dim, RngStream& rng) {
    if (dim < 2) throw SpecError("rotation plane needs at least two dimensions");
    RotationPlane p;
    p.u = random_unit(dim, rng);
    for (;;) {
        auto w = random_unit(dim, rng);
        double proj = dot(w, p.u);
        for (std::size_t i = 0; i < dim; ++i) w[i] -= proj * p.u[i];
        double n = std::sqrt(dot(w, w));
        if (n > 1e-6) {
            for (auto& x : w) x /= n;
            p.v = std::move(w);
            return p;
        }
    }
}

std::vector<double> apply_shift(const ShiftSpec& shift, const RotationPlane& plane, std::span<const double> x) {
    std::vector<double> out(x.begin(), x.end());
    if (shift.rotation_angle != 0.0) {
        double a = dot(x, plane.u);
        double b = dot(x, plane.v);
        double c = std::cos(shift.rotation_angle);
        double s = std::sin(shift.rotation_angle);
        // In-plane coordinates (a, b) -> (c a - s b, s a + c b).
        double da = (c * a - s * b) - a;
        double db = (s * a + c * b) - b;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += da * plane.u[i] + db * plane.v[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= shift.scale;
        if (!shift.translation.empty()) out[i] += shift.translation[i];
    }
    return out;
}

std::vector<std::vector<double>> make_prototypes(std::size_t num_classes, std::size_t dim, RngStream& rng) {
    if (num_classes < 2 || dim < 2) throw SpecError("prototypes need C >= 2 and d >= 2");
    std::vector<std::vector<double>> protos;
    std::size_t tries = 0;
    while (protos.size() < num_classes) {
        if (++tries > kPrototypeMaxTries)
            throw SpecError("could not place " + std::to_string(num_classes) + " prototypes in dimension " +
                            std::to_string(dim) + " (C too large for d)");
        auto p = random_unit(dim, rng);
        for (auto& x : p) x *= kPrototypeRadius;
        bool ok = true;
        for (const auto& q : protos) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < dim; ++i) d2 += (p[i] - q[i]) * (p[i] - q[i]);
            if (d2 < kPrototypeMinDistance * kPrototypeMinDistance) {
                ok = false;
                break;
            }
        }
        if (ok) protos.push_back(std::move(p));
    }
    return protos;
}

FeatureDataset make_domain(const std::vector<std::vector<double>>& prototypes, const ShiftSpec& shift,
                           std::size_t n_per_class, std::size_t tau, RngStream& rng) {
    if (prototypes.empty() || n_per_class == 0) throw SpecError("make_domain needs prototypes and n_per_class > 0");
    const std::size_t dim = prototypes.front().size();
    validate(shift, dim);
    RotationPlane plane = shift.plane ? *shift.plane : random_plane(dim, rng);

    FeatureDataset ds;
    ds.features = Tensor2(prototypes.size() * n_per_class, dim);
    ds.labels = std::vector<int>();
    ds.labels->reserve(ds.features.rows());
    ds.domain = tau;
    ds.num_classes = prototypes.size();
    std::size_t r = 0;
    for (std::size_t c = 0; c < prototypes.size(); ++c) {
        auto center = apply_shift(shift, plane, prototypes[c]);
        for (std::size_t i = 0; i < n_per_class; ++i, ++r) {
            auto row = ds.features.row(r);
            for (std::size_t j = 0; j < dim; ++j)
                row[j] = center[j] + (shift.noise_sigma > 0.0 ? shift.noise_sigma * rng.normal() : 0.0);
            ds.labels->push_back(static_cast<int>(c));
        }
    }
    return ds;
}

void validate(const BenchmarkSpec& spec) {
    if (spec.num_classes < 2 || spec.dim < 2) throw SpecError("benchmark needs C >= 2 and d >= 2");
    if (spec.n_per_class == 0) throw SpecError("benchmark needs n_per_class > 0");
    if (spec.shifts.size() != spec.targets + 1)
        throw SpecError("benchmark needs one shift per domain (" + std::to_string(spec.targets + 1) + ")");
    if (spec.code_width < 64 && spec.targets + 1 > (std::size_t{1} << spec.code_width))
        throw SpecError("T + 1 = " + std::to_string(spec.targets + 1) + " domains exceed the " +
                        std::to_string(spec.code_width) + "-bit domain code");
    for (const auto& s : spec.shifts) validate(s, spec.dim);
}

namespace {

constexpr double kDefaultNoise = 0.5;
constexpr double kDefaultRotationStep = 0.3;
constexpr double kDefaultTranslationStep = 9.0;

BenchmarkSpec stepped_benchmark(std::size_t num_classes, std::size_t dim, std::size_t n_per_class,
                                std::size_t targets, std::uint64_t seed, std::size_t width, double noise,
                                double rotation_step, double translation_step, double scale_step) {
    BenchmarkSpec spec;
    spec.num_classes = num_classes;
    spec.dim = dim;
    spec.n_per_class = n_per_class;
    spec.targets = targets;
    spec.seed = seed;
    spec.code_width = width;
    RngStream root(seed);
    RngStream plane_rng = root.substream(2);
    RngStream dir_rng = root.substream(3);
    RotationPlane plane = random_plane(dim, plane_rng);
    auto direction = random_unit(dim, dir_rng);
    for (std::size_t k = 0; k <= targets; ++k) {
        ShiftSpec s;
        double kk = static_cast<double>(k);
        s.rotation_angle = rotation_step * kk;
        s.translation.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) s.translation[i] = translation_step * kk * direction[i];
        s.scale = 1.0 + scale_step * kk;
        s.noise_sigma = noise;
        s.plane = plane;
        spec.shifts.push_back(std::move(s));
    }
    return spec;
}

}  // namespace

BenchmarkSpec default_benchmark(std::uint64_t seed, std::size_t targets) {
    return stepped_benchmark(4, 16, 150, targets, seed, kDefaultCodeWidth, kDefaultNoise, kDefaultRotationStep,
                             kDefaultTranslationStep, 0.0);
}

std::vector<BenchmarkDomain> make_benchmark(const BenchmarkSpec& spec) {
    validate(spec);
    RngStream root(spec.seed);
    RngStream proto_rng = root.substream(1);
    auto prototypes = make_prototypes(spec.num_classes, spec.dim, proto_rng);
    std::vector<BenchmarkDomain> out;
    for (std::size_t k = 0; k <= spec.targets; ++k) {
        RngStream domain_rng = root.substream(100 + k);
        out.emplace_back(make_domain(prototypes, spec.shifts[k], spec.n_per_class, k, domain_rng), k > 0);
    }
    return out;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw SpecError("benchmark key " + key + ": not a number: " + v);
    }
}

std::size_t to_count(const std::string& key, const std::string& v) {
    double d = to_double(key, v);
    if (d < 0 || d != std::floor(d)) throw SpecError("benchmark key " + key + ": not a count: " + v);
    return static_cast<std::size_t>(d);
}

}  // namespace

BenchmarkSpec benchmark_from_keys(const std::vector<std::pair<std::string, std::string>>& kv) {
    std::size_t num_classes = 4, dim = 16, n_per_class = 150, targets = 2, width = kDefaultCodeWidth;
    std::uint64_t seed = 0;
    double noise = kDefaultNoise, rot = kDefaultRotationStep, trans = kDefaultTranslationStep, scale = 0.0;
    std::map<std::size_t, std::map<std::string, double>> overrides;
    for (const auto& [key, value] : kv) {
        if (key == "C") num_classes = to_count(key, value);
        else if (key == "d") dim = to_count(key, value);
        else if (key == "n_per_class") n_per_class = to_count(key, value);
        else if (key == "T") targets = to_count(key, value);
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "width") width = to_count(key, value);
        else if (key == "noise") noise = to_double(key, value);
        else if (key == "rotation_step") rot = to_double(key, value);
        else if (key == "translation_step") trans = to_double(key, value);
        else if (key == "scale_step") scale = to_double(key, value);
        else if (key.rfind("domain.", 0) == 0) {
            auto dot_pos = key.find('.', 7);
            if (dot_pos == std::string::npos) throw SpecError("unknown benchmark key " + key);
            std::size_t k = to_count(key, key.substr(7, dot_pos - 7));
            std::string field = key.substr(dot_pos + 1);
            if (field != "rotation" && field != "translation_norm" && field != "scale" && field != "noise")
                throw SpecError("unknown benchmark key " + key);
            overrides[k][field] = to_double(key, value);
        } else {
            throw SpecError("unknown benchmark key " + key);
        }
    }
    BenchmarkSpec spec = stepped_benchmark(num_classes, dim, n_per_class, targets, seed, width, noise, rot, trans, scale);
    for (const auto& [k, fields] : overrides) {
        if (k > targets) throw SpecError("override for domain " + std::to_string(k) + " beyond T");
        auto& s = spec.shifts[k];
        for (const auto& [field, v] : fields) {
            if (field == "rotation") s.rotation_angle = v;
            else if (field == "scale") s.scale = v;
            else if (field == "noise") s.noise_sigma = v;
            else if (field == "translation_norm") {
                double cur = 0.0;
                for (double t : s.translation) cur += t * t;
                cur = std::sqrt(cur);
                if (cur == 0.0) {
                    RngStream dir_rng = RngStream(seed).substream(3);
                    s.translation = random_unit(dim, dir_rng);
                    cur = 1.0;
                }
                for (auto& t : s.translation) t *= v / cur;
            }
        }
    }
    validate(spec);
    return spec;
}

}  // namespace frida
