#include "frida/dgacgan.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "frida/errors.hpp"

namespace frida {

namespace {

std::vector<Activation> hidden_then_identity(std::size_t hidden, Activation a) {
    std::vector<Activation> acts(hidden, a);
    acts.push_back(Activation::identity);
    return acts;
}

template <class Build>
GanModel assemble(const GanArchitecture& arch, std::size_t num_classes, std::size_t feature_dim,
                  std::size_t code_width, Build build) {
    if (arch.z_dim == 0 || num_classes < 1 || feature_dim == 0 || arch.trunk_widths.empty())
        throw ContractError("GanModel: z_dim, C, d and trunk widths must be positive");
    GanModel m;
    m.z_dim = arch.z_dim;
    m.num_classes = num_classes;
    m.feature_dim = feature_dim;
    m.code_width = code_width;
    auto gen_widths = arch.generator_hidden;
    gen_widths.push_back(feature_dim);
    m.generator = build(arch.z_dim + num_classes + code_width, gen_widths,
                        hidden_then_identity(arch.generator_hidden.size(), Activation::relu));
    m.trunk = build(feature_dim + code_width, arch.trunk_widths,
                    std::vector<Activation>(arch.trunk_widths.size(), Activation::leaky_relu));
    std::size_t h = arch.trunk_widths.back();
    m.head_rf = build(h, {1}, {Activation::identity});
    m.head_cls = build(h, {num_classes}, {Activation::identity});
    return m;
}

void append(std::vector<Tensor2*>& dst, std::vector<Tensor2*> src) { dst.insert(dst.end(), src.begin(), src.end()); }
void append(std::vector<const Tensor2*>& dst, std::vector<const Tensor2*> src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

Tensor2 code_rows(const GanModel& model, std::span<const std::size_t> taus) {
    Tensor2 codes(taus.size(), model.code_width);
    for (std::size_t i = 0; i < taus.size(); ++i) {
        auto c = encode_domain(taus[i], model.code_width);
        std::copy(c.begin(), c.end(), codes.row(i).begin());
    }
    return codes;
}

struct DiscTrace {
    ForwardTrace trunk;
    ForwardTrace rf;
    ForwardTrace cls;
};

DiscTrace disc_trace(const GanModel& model, const Tensor2& x, std::span<const std::size_t> taus) {
    if (x.cols() != model.feature_dim)
        throw ShapeError("discriminator input " + shape_str(x) + ", expected d=" + std::to_string(model.feature_dim));
    if (taus.size() != x.rows()) throw ShapeError("discriminator: one domain index per row required");
    DiscTrace t;
    t.trunk = forward_trace(model.trunk, hconcat(x, code_rows(model, taus)));
    t.rf = forward_trace(model.head_rf, t.trunk.output);
    t.cls = forward_trace(model.head_cls, t.trunk.output);
    return t;
}

// Backpropagates head gradients into the trunk. Returns d(objective)/d(x).
Tensor2 disc_backward(const GanModel& model, const DiscTrace& t, const Tensor2& g_rf, const Tensor2& g_cls,
                      GradList& trunk_g, GradList& rf_g, GradList& cls_g) {
    Tensor2 gh = backward(model.head_rf, t.rf, g_rf, rf_g);
    add_inplace(gh, backward(model.head_cls, t.cls, g_cls, cls_g));
    Tensor2 gin = backward(model.trunk, t.trunk, gh, trunk_g);
    return slice_cols(gin, 0, model.feature_dim);
}

void scale(Tensor2& t, double s) {
    for (auto& v : t.values()) v *= s;
}

std::vector<int> filled(std::size_t n, int v) { return std::vector<int>(n, v); }

}  // namespace

GanModel GanModel::create(const GanArchitecture& arch, std::size_t num_classes, std::size_t feature_dim,
                          std::size_t code_width, RngStream& rng) {
    return assemble(arch, num_classes, feature_dim, code_width,
                    [&](std::size_t in, const std::vector<std::size_t>& w, const std::vector<Activation>& a) {
                        return DenseNet::create(in, w, a, rng);
                    });
}

GanModel GanModel::zeros(const GanArchitecture& arch, std::size_t num_classes, std::size_t feature_dim,
                         std::size_t code_width) {
    return assemble(arch, num_classes, feature_dim, code_width,
                    [](std::size_t in, const std::vector<std::size_t>& w, const std::vector<Activation>& a) {
                        return DenseNet::zeros(in, w, a);
                    });
}

std::vector<Tensor2*> GanModel::generator_parameters() { return generator.parameters(); }
std::vector<const Tensor2*> GanModel::generator_parameters() const { return generator.parameters(); }

std::vector<Tensor2*> GanModel::discriminator_parameters() {
    std::vector<Tensor2*> p = trunk.parameters();
    append(p, head_rf.parameters());
    append(p, head_cls.parameters());
    return p;
}

std::vector<const Tensor2*> GanModel::discriminator_parameters() const {
    std::vector<const Tensor2*> p = trunk.parameters();
    append(p, head_rf.parameters());
    append(p, head_cls.parameters());
    return p;
}

bool GanModel::operator==(const GanModel& o) const {
    auto same_net = [](const DenseNet& a, const DenseNet& b) {
        if (a.layers.size() != b.layers.size()) return false;
        for (std::size_t i = 0; i < a.layers.size(); ++i) {
            if (a.layers[i].weight != b.layers[i].weight || a.layers[i].bias != b.layers[i].bias ||
                a.layers[i].activation != b.layers[i].activation)
                return false;
        }
        return true;
    };
    return z_dim == o.z_dim && num_classes == o.num_classes && feature_dim == o.feature_dim &&
           code_width == o.code_width && trained_through == o.trained_through && same_net(generator, o.generator) &&
           same_net(trunk, o.trunk) && same_net(head_rf, o.head_rf) && same_net(head_cls, o.head_cls);
}

void validate(const GanModel& m) {
    validate(m.generator);
    validate(m.trunk);
    validate(m.head_rf);
    validate(m.head_cls);
    if (m.generator.in_width() != m.z_dim + m.num_classes + m.code_width || m.generator.out_width() != m.feature_dim)
        throw ShapeError("generator widths do not match (z_dim, C, W, d)");
    if (m.trunk.in_width() != m.feature_dim + m.code_width) throw ShapeError("trunk input width != d + W");
    if (m.head_rf.in_width() != m.trunk.out_width() || m.head_rf.out_width() != 1 || m.head_rf.layers.size() != 1)
        throw ShapeError("real/fake head must be one dense layer to a single logit");
    if (m.head_cls.in_width() != m.trunk.out_width() || m.head_cls.out_width() != m.num_classes ||
        m.head_cls.layers.size() != 1)
        throw ShapeError("class head must be one dense layer to C logits");
}

Tensor2 generator_input(const GanModel& model, const Tensor2& z, std::span<const int> labels,
                        std::span<const std::size_t> taus) {
    if (z.cols() != model.z_dim)
        throw ShapeError("noise " + shape_str(z) + ", expected z_dim=" + std::to_string(model.z_dim));
    if (labels.size() != z.rows() || taus.size() != z.rows())
        throw ShapeError("generator: one label and domain index per noise row required");
    Tensor2 cond(z.rows(), model.num_classes + model.code_width);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        auto oh = one_hot(labels[i], model.num_classes);
        auto code = encode_domain(taus[i], model.code_width);
        auto row = cond.row(i);
        std::copy(oh.begin(), oh.end(), row.begin());
        std::copy(code.begin(), code.end(), row.begin() + static_cast<std::ptrdiff_t>(model.num_classes));
    }
    return hconcat(z, cond);
}

Tensor2 gen_forward(const GanModel& model, const Tensor2& z, std::span<const int> labels,
                    std::span<const std::size_t> taus) {
    return forward(model.generator, generator_input(model, z, labels, taus));
}

Tensor2 gen_forward(const GanModel& model, const Tensor2& z, std::span<const int> labels, std::size_t tau) {
    std::vector<std::size_t> taus(z.rows(), tau);
    return gen_forward(model, z, labels, taus);
}

DiscOutput disc_forward(const GanModel& model, const Tensor2& x, std::span<const std::size_t> taus) {
    auto t = disc_trace(model, x, taus);
    return {std::move(t.rf.output), std::move(t.cls.output)};
}

DiscOutput disc_forward(const GanModel& model, const Tensor2& x, std::size_t tau) {
    std::vector<std::size_t> taus(x.rows(), tau);
    return disc_forward(model, x, taus);
}

std::vector<long> draw_pairing(const ConditionedSet& real, std::span<const int> y_fake,
                               std::span<const std::size_t> tau_fake, RngStream& rng) {
    std::map<std::pair<std::size_t, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < real.size(); ++i) groups[{real.taus[i], real.labels[i]}].push_back(i);
    std::vector<long> out(y_fake.size(), -1);
    for (std::size_t i = 0; i < y_fake.size(); ++i) {
        auto it = groups.find({tau_fake[i], y_fake[i]});
        if (it == groups.end()) continue;
        out[i] = static_cast<long>(it->second[rng.uniform_index(it->second.size())]);
    }
    return out;
}

PairTargets pair_targets(const ConditionedSet& real, std::span<const int> y_fake,
                         std::span<const std::size_t> tau_fake, std::span<const long> pairing, PairingMode mode) {
    const std::size_t d = real.features.cols();
    PairTargets out{Tensor2(y_fake.size(), d), std::vector<bool>(y_fake.size(), false), 0};
    std::map<std::pair<std::size_t, int>, std::vector<double>> means;
    if (mode == PairingMode::class_mean) {
        std::map<std::pair<std::size_t, int>, std::size_t> counts;
        for (std::size_t i = 0; i < real.size(); ++i) {
            auto& m = means[{real.taus[i], real.labels[i]}];
            m.resize(d, 0.0);
            for (std::size_t j = 0; j < d; ++j) m[j] += real.features(i, j);
            ++counts[{real.taus[i], real.labels[i]}];
        }
        for (auto& [key, m] : means)
            for (auto& v : m) v /= static_cast<double>(counts[key]);
    }
    for (std::size_t i = 0; i < y_fake.size(); ++i) {
        if (mode == PairingMode::random_sample) {
            if (pairing.size() != y_fake.size()) throw ShapeError("pairing must have one entry per fake sample");
            if (pairing[i] < 0) continue;
            auto src = real.features.row(static_cast<std::size_t>(pairing[i]));
            std::copy(src.begin(), src.end(), out.targets.row(i).begin());
        } else {
            auto it = means.find({tau_fake[i], y_fake[i]});
            if (it == means.end()) continue;
            std::copy(it->second.begin(), it->second.end(), out.targets.row(i).begin());
        }
        out.paired[i] = true;
    }
    out.unpaired = static_cast<std::size_t>(std::count(out.paired.begin(), out.paired.end(), false));
    return out;
}

namespace {

// r_gan value and its gradient with respect to the fake features.
std::pair<double, Tensor2> overlap_term(const Tensor2& fake, const PairTargets& pairs) {
    Tensor2 grad(fake.rows(), fake.cols());
    std::size_t m = fake.rows() - pairs.unpaired;
    if (m == 0) return {0.0, grad};
    double value = 0.0;
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < fake.rows(); ++i) {
        if (!pairs.paired[i]) continue;
        for (std::size_t j = 0; j < fake.cols(); ++j) {
            double diff = fake(i, j) - pairs.targets(i, j);
            value += diff * diff;
            grad(i, j) = 2.0 * diff * inv;
        }
    }
    return {value * inv, grad};
}

void check_batches(const ConditionedSet& real, const Tensor2& z) {
    if (real.size() == 0 || z.rows() == 0) throw ContractError("GAN losses need non-empty real and fake batches");
}

}  // namespace

GanBatchLoss gan_losses(const GanModel& model, const ConditionedSet& real, const Tensor2& z,
                        std::span<const int> y_fake, std::span<const std::size_t> tau_fake,
                        const PairTargets& pairs) {
    check_batches(real, z);
    Tensor2 fake = gen_forward(model, z, y_fake, tau_fake);
    auto dr = disc_forward(model, real.features, real.taus);
    auto df = disc_forward(model, fake, tau_fake);
    GanBatchLoss out;
    out.l_source = -binary_xent(dr.rf_logit, filled(real.size(), 1)).loss -
                   binary_xent(df.rf_logit, filled(fake.rows(), 0)).loss;
    out.l_class = -softmax_xent(dr.cls_logits, real.labels).loss - softmax_xent(df.cls_logits, y_fake).loss;
    out.r_gan = overlap_term(fake, pairs).first;
    out.unpaired = pairs.unpaired;
    return out;
}

GanObjective discriminator_objective(const GanModel& model, const ConditionedSet& real, const Tensor2& z,
                                     std::span<const int> y_fake, std::span<const std::size_t> tau_fake) {
    check_batches(real, z);
    Tensor2 fake = gen_forward(model, z, y_fake, tau_fake);
    auto tr = disc_trace(model, real.features, real.taus);
    auto tf = disc_trace(model, fake, tau_fake);

    auto rf_real = binary_xent(tr.rf.output, filled(real.size(), 1));
    auto rf_fake = binary_xent(tf.rf.output, filled(fake.rows(), 0));
    auto cls_real = softmax_xent(tr.cls.output, real.labels);
    auto cls_fake = softmax_xent(tf.cls.output, y_fake);

    GanObjective out;
    out.loss.l_source = -rf_real.loss - rf_fake.loss;
    out.loss.l_class = -cls_real.loss - cls_fake.loss;
    out.value = -(out.loss.l_source + out.loss.l_class);

    GradList trunk_g = zero_grads(model.trunk);
    GradList rf_g = zero_grads(model.head_rf);
    GradList cls_g = zero_grads(model.head_cls);
    disc_backward(model, tr, rf_real.grad, cls_real.grad, trunk_g, rf_g, cls_g);
    disc_backward(model, tf, rf_fake.grad, cls_fake.grad, trunk_g, rf_g, cls_g);
    out.grads = std::move(trunk_g);
    for (auto& g : rf_g) out.grads.push_back(std::move(g));
    for (auto& g : cls_g) out.grads.push_back(std::move(g));
    return out;
}

GanObjective generator_objective(const GanModel& model, const ConditionedSet& real, const Tensor2& z,
                                 std::span<const int> y_fake, std::span<const std::size_t> tau_fake,
                                 const PairTargets& pairs, GeneratorLoss form, double r_weight) {
    check_batches(real, z);
    auto gtrace = forward_trace(model.generator, generator_input(model, z, y_fake, tau_fake));
    const Tensor2& fake = gtrace.output;
    auto tr = disc_trace(model, real.features, real.taus);
    auto tf = disc_trace(model, fake, tau_fake);

    auto rf_real = binary_xent(tr.rf.output, filled(real.size(), 1));
    auto rf_fake_as_fake = binary_xent(tf.rf.output, filled(fake.rows(), 0));
    auto cls_real = softmax_xent(tr.cls.output, real.labels);
    auto cls_fake = softmax_xent(tf.cls.output, y_fake);
    auto [r_value, r_grad] = overlap_term(fake, pairs);

    GanObjective out;
    out.loss.l_source = -rf_real.loss - rf_fake_as_fake.loss;
    out.loss.l_class = -cls_real.loss - cls_fake.loss;
    out.loss.r_gan = r_value;
    out.loss.unpaired = pairs.unpaired;

    Tensor2 g_rf;
    if (form == GeneratorLoss::non_saturating) {
        auto rf_fake_as_real = binary_xent(tf.rf.output, filled(fake.rows(), 1));
        out.value = rf_fake_as_real.loss + cls_fake.loss + r_weight * r_value;
        g_rf = std::move(rf_fake_as_real.grad);
    } else {
        out.value = -(out.loss.l_class - out.loss.l_source - r_weight * r_value);
        g_rf = std::move(rf_fake_as_fake.grad);
        scale(g_rf, -1.0);
    }

    GradList trunk_g = zero_grads(model.trunk);
    GradList rf_g = zero_grads(model.head_rf);
    GradList cls_g = zero_grads(model.head_cls);
    Tensor2 gx = disc_backward(model, tf, g_rf, cls_fake.grad, trunk_g, rf_g, cls_g);
    add_inplace(gx, r_grad, r_weight);

    out.grads = zero_grads(model.generator);
    backward(model.generator, gtrace, gx, out.grads);
    return out;
}

GanHistory train_gan(GanModel& model, const ConditionedSet& real, const GanTrainConfig& config, RngStream& rng) {
    if (real.size() == 0) throw ContractError("train_gan: no real data");
    if (real.features.cols() != model.feature_dim) throw ShapeError("train_gan: feature dimension mismatch");
    if (config.batch_size == 0) throw ContractError("train_gan: batch size must be positive");
    for (std::size_t i = 0; i < real.size(); ++i) {
        if (real.labels[i] < 0 || static_cast<std::size_t>(real.labels[i]) >= model.num_classes)
            throw ContractError("train_gan: label out of range");
        encode_domain(real.taus[i], model.code_width);
    }

    AdamState d_state(config.adam, std::as_const(model).discriminator_parameters());
    AdamState g_state(config.adam, std::as_const(model).generator_parameters());
    GanHistory history;
    std::vector<std::size_t> order(real.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(order, rng);
        GanEpochStats stats;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            ConditionedSet batch = real.subset(idx);
            Tensor2 z = gauss_sample(rng, batch.size(), model.z_dim);
            const auto& y_fake = batch.labels;
            const auto& tau_fake = batch.taus;

            auto d = discriminator_objective(model, batch, z, y_fake, tau_fake);
            if (!std::isfinite(d.value)) throw DivergenceError("discriminator loss is not finite", epoch);
            adam_step(model.discriminator_parameters(), d.grads, d_state);

            auto pairing = draw_pairing(batch, y_fake, tau_fake, rng);
            auto pairs = pair_targets(batch, y_fake, tau_fake, pairing, config.pairing);
            auto g = generator_objective(model, batch, z, y_fake, tau_fake, pairs, config.generator_loss,
                                         config.r_weight);
            if (!std::isfinite(g.value)) throw DivergenceError("generator loss is not finite", epoch);
            adam_step(model.generator_parameters(), g.grads, g_state);

            stats.loss.l_source += d.loss.l_source;
            stats.loss.l_class += d.loss.l_class;
            stats.loss.r_gan += g.loss.r_gan;
            stats.discriminator_value += d.value;
            stats.generator_value += g.value;
            stats.unpaired += pairs.unpaired;
            ++batches;
        }
        const double nb = static_cast<double>(batches);
        stats.loss.l_source /= nb;
        stats.loss.l_class /= nb;
        stats.loss.r_gan /= nb;
        stats.loss.unpaired = stats.unpaired;
        stats.discriminator_value /= nb;
        stats.generator_value /= nb;
        history.push_back(stats);
    }
    long max_tau = static_cast<long>(*std::max_element(real.taus.begin(), real.taus.end()));
    model.trained_through = std::max(model.trained_through, max_tau);
    return history;
}

FeatureDataset sample_features(const GanModel& model, std::size_t tau, std::size_t per_class, RngStream& rng) {
    if (per_class == 0) throw ContractError("sample_features: per_class = 0 would produce an empty dataset");
    if (model.trained_through < 0 || static_cast<long>(tau) > model.trained_through)
        throw ContractError("sample_features: domain " + std::to_string(tau) +
                            " is beyond the domains this generator was trained on");
    const std::size_t n = per_class * model.num_classes;
    std::vector<int> labels;
    labels.reserve(n);
    for (std::size_t c = 0; c < model.num_classes; ++c) labels.insert(labels.end(), per_class, static_cast<int>(c));
    Tensor2 z = gauss_sample(rng, n, model.z_dim);
    FeatureDataset ds;
    ds.features = gen_forward(model, z, labels, tau);
    ds.labels = std::move(labels);
    ds.domain = tau;
    ds.num_classes = model.num_classes;
    return ds;
}

}  // namespace frida
