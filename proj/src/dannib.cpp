#include "frida/dannib.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "frida/errors.hpp"

namespace frida {

std::string to_string(DannMode mode) {
    switch (mode) {
        case DannMode::dann_binary: return "dann_binary";
        case DannMode::dann_multiclass: return "dann_multiclass";
        case DannMode::dann_ib: return "dann_ib";
    }
    return "dann_ib";
}

DannMode parse_dann_mode(const std::string& s) {
    if (s == "dann_binary") return DannMode::dann_binary;
    if (s == "dann_multiclass") return DannMode::dann_multiclass;
    if (s == "dann_ib") return DannMode::dann_ib;
    throw SpecError("unknown mode '" + s + "' (expected dann_binary, dann_multiclass or dann_ib)");
}

namespace {

template <class Build>
DannIbModel assemble(const DannArchitecture& arch, DannMode mode, std::size_t num_classes, std::size_t feature_dim,
                     Build build) {
    if (arch.latent_dim == 0 || num_classes < 1 || feature_dim == 0)
        throw ContractError("DannIbModel: latent_dim, C and d must be positive");
    DannIbModel m;
    m.mode = mode;
    m.latent_dim = arch.latent_dim;
    m.num_classes = num_classes;
    m.feature_dim = feature_dim;
    auto widths = arch.encoder_hidden;
    widths.push_back(2 * arch.latent_dim);
    std::vector<Activation> acts(arch.encoder_hidden.size(), Activation::relu);
    acts.push_back(Activation::identity);
    m.encoder = build(feature_dim, widths, acts);
    m.head_task = build(arch.latent_dim, {num_classes}, {Activation::identity});
    m.head_dom = build(arch.latent_dim, {m.domain_classes()}, {Activation::identity});
    return m;
}

std::pair<Tensor2, Tensor2> split_moments(const DannIbModel& model, const Tensor2& out) {
    return {slice_cols(out, 0, model.latent_dim), slice_cols(out, model.latent_dim, 2 * model.latent_dim)};
}

Tensor2 reparameterize(const Tensor2& mu, const Tensor2& logvar, const Tensor2& eps) {
    if (eps.rows() != mu.rows() || eps.cols() != mu.cols())
        throw ShapeError("noise " + shape_str(eps) + " vs latent " + shape_str(mu));
    Tensor2 z = mu;
    auto zv = z.values();
    auto lv = logvar.values();
    auto ev = eps.values();
    for (std::size_t i = 0; i < zv.size(); ++i) zv[i] += std::exp(0.5 * lv[i]) * ev[i];
    return z;
}

void check_input(const DannIbModel& model, const Tensor2& x) {
    if (x.cols() != model.feature_dim)
        throw ShapeError("input " + shape_str(x) + ", expected d=" + std::to_string(model.feature_dim));
}

struct BranchTrace {
    ForwardTrace encoder;
    Tensor2 mu;
    Tensor2 logvar;
    Tensor2 z;
};

BranchTrace encode_branch(const DannIbModel& model, const Tensor2& x, const Tensor2* eps) {
    BranchTrace b;
    b.encoder = forward_trace(model.encoder, x);
    if (!b.encoder.output.all_finite()) throw NumericError("encoder produced non-finite output");
    std::tie(b.mu, b.logvar) = split_moments(model, b.encoder.output);
    b.z = (model.stochastic() && eps) ? reparameterize(b.mu, b.logvar, *eps) : b.mu;
    return b;
}

// Gradient w.r.t. the encoder output given d/dz, plus the KL term scaled by beta.
Tensor2 encoder_output_grad(const DannIbModel& model, const BranchTrace& b, const Tensor2& dz, const Tensor2* eps,
                            double beta) {
    const std::size_t n = b.mu.rows();
    const std::size_t L = model.latent_dim;
    Tensor2 g(n, 2 * L);
    const bool stochastic = model.stochastic() && eps;
    const double kl_scale = stochastic && n > 0 ? beta / static_cast<double>(n) : 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < L; ++j) {
            double dzj = dz(r, j);
            g(r, j) = dzj;
            if (stochastic) {
                double lv = b.logvar(r, j);
                double s = std::exp(0.5 * lv);
                g(r, j) += kl_scale * b.mu(r, j);
                g(r, L + j) = dzj * (*eps)(r, j) * 0.5 * s + kl_scale * 0.5 * (std::exp(lv) - 1.0);
            }
        }
    }
    return g;
}

void append(std::vector<Tensor2>& dst, GradList&& src) {
    for (auto& t : src) dst.push_back(std::move(t));
}

}  // namespace

DannIbModel DannIbModel::create(const DannArchitecture& arch, DannMode mode, std::size_t num_classes,
                                std::size_t feature_dim, RngStream& rng) {
    return assemble(arch, mode, num_classes, feature_dim,
                    [&](std::size_t in, const std::vector<std::size_t>& w, const std::vector<Activation>& a) {
                        return DenseNet::create(in, w, a, rng);
                    });
}

DannIbModel DannIbModel::zeros(const DannArchitecture& arch, DannMode mode, std::size_t num_classes,
                               std::size_t feature_dim) {
    return assemble(arch, mode, num_classes, feature_dim,
                    [](std::size_t in, const std::vector<std::size_t>& w, const std::vector<Activation>& a) {
                        return DenseNet::zeros(in, w, a);
                    });
}

std::vector<Tensor2*> DannIbModel::parameters() {
    auto p = encoder.parameters();
    for (auto* t : head_task.parameters()) p.push_back(t);
    for (auto* t : head_dom.parameters()) p.push_back(t);
    return p;
}

std::vector<const Tensor2*> DannIbModel::parameters() const {
    auto p = encoder.parameters();
    for (const auto* t : head_task.parameters()) p.push_back(t);
    for (const auto* t : head_dom.parameters()) p.push_back(t);
    return p;
}

bool DannIbModel::operator==(const DannIbModel& o) const {
    if (mode != o.mode || latent_dim != o.latent_dim || num_classes != o.num_classes || feature_dim != o.feature_dim)
        return false;
    auto a = parameters();
    auto b = o.parameters();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (*a[i] != *b[i]) return false;
    return true;
}

void validate(const DannIbModel& m) {
    validate(m.encoder);
    validate(m.head_task);
    validate(m.head_dom);
    if (m.latent_dim == 0) throw ShapeError("latent dimension must be positive");
    if (m.encoder.in_width() != m.feature_dim || m.encoder.out_width() != 2 * m.latent_dim)
        throw ShapeError("encoder must map d -> 2 * latent_dim");
    if (m.head_task.layers.size() != 1 || m.head_task.in_width() != m.latent_dim ||
        m.head_task.out_width() != m.num_classes)
        throw ShapeError("task head must be one dense layer latent -> C");
    if (m.head_dom.layers.size() != 1 || m.head_dom.in_width() != m.latent_dim ||
        m.head_dom.out_width() != m.domain_classes())
        throw ShapeError("domain head width must be C+1 (or 2 in binary mode)");
}

Encoding encode(const DannIbModel& model, const Tensor2& x, RngStream& rng, bool stochastic) {
    check_input(model, x);
    auto out = forward(model.encoder, x);
    if (!out.all_finite()) throw NumericError("encoder produced non-finite output");
    Encoding e;
    std::tie(e.mu, e.logvar) = split_moments(model, out);
    e.sample = stochastic ? reparameterize(e.mu, e.logvar, gauss_sample(rng, x.rows(), model.latent_dim)) : e.mu;
    return e;
}

Encoding encode_with_noise(const DannIbModel& model, const Tensor2& x, const Tensor2& eps) {
    check_input(model, x);
    auto out = forward(model.encoder, x);
    if (!out.all_finite()) throw NumericError("encoder produced non-finite output");
    Encoding e;
    std::tie(e.mu, e.logvar) = split_moments(model, out);
    e.sample = reparameterize(e.mu, e.logvar, eps);
    return e;
}

double kl_regularizer(const Tensor2& mu, const Tensor2& logvar) {
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols())
        throw ShapeError("kl_regularizer: mu " + shape_str(mu) + " vs logvar " + shape_str(logvar));
    if (mu.rows() == 0) return 0.0;
    double total = 0.0;
    auto m = mu.values();
    auto lv = logvar.values();
    for (std::size_t i = 0; i < m.size(); ++i) total += std::exp(lv[i]) + m[i] * m[i] - 1.0 - lv[i];
    return 0.5 * total / static_cast<double>(mu.rows());
}

double lambda_schedule(double progress) {
    if (!(progress >= 0.0 && progress <= 1.0)) throw ContractError("lambda_schedule: progress outside [0, 1]");
    return 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
}

DannNoise draw_noise(const DannIbModel& model, std::size_t n_source, std::size_t n_target, RngStream& rng) {
    DannNoise n;
    n.source = n_source ? gauss_sample(rng, n_source, model.latent_dim) : Tensor2(0, model.latent_dim);
    n.target = n_target ? gauss_sample(rng, n_target, model.latent_dim) : Tensor2(0, model.latent_dim);
    return n;
}

DannGradients dannib_loss(const DannIbModel& model, const Tensor2& source, std::span<const int> source_labels,
                          const Tensor2& target, double lambda, double beta, const DannNoise& noise) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("dannib_loss: lambda outside [0, 1]");
    if (source.rows() == 0) throw ContractError("dannib_loss: empty source batch");
    if (source_labels.size() != source.rows()) throw ShapeError("dannib_loss: one label per source row");
    check_input(model, source);
    if (target.rows()) check_input(model, target);
    const bool stochastic = model.stochastic();
    if (!stochastic) beta = 0.0;
    const Tensor2* eps_s = stochastic ? &noise.source : nullptr;
    const Tensor2* eps_t = stochastic ? &noise.target : nullptr;

    DannGradients out;
    auto& rep = out.report;
    rep.lambda = lambda;
    rep.beta = beta;

    auto src = encode_branch(model, source, eps_s);
    auto task_trace = forward_trace(model.head_task, src.z);
    auto task = softmax_xent(task_trace.output, source_labels);
    rep.l_task = task.loss;

    std::vector<int> dom_src_labels(source.rows(), 0);
    if (model.mode != DannMode::dann_binary)
        dom_src_labels.assign(source_labels.begin(), source_labels.end());
    auto dom_src_trace = forward_trace(model.head_dom, src.z);
    auto dom_src = softmax_xent(dom_src_trace.output, dom_src_labels);
    rep.l_dom = dom_src.loss;
    if (stochastic) rep.r_ib = kl_regularizer(src.mu, src.logvar);

    GradList enc_g = zero_grads(model.encoder);
    GradList task_g = zero_grads(model.head_task);
    GradList dom_g = zero_grads(model.head_dom);

    Tensor2 dz_s = backward(model.head_task, task_trace, task.grad, task_g);
    add_inplace(dz_s, backward(model.head_dom, dom_src_trace, dom_src.grad, dom_g), -lambda);
    backward(model.encoder, src.encoder, encoder_output_grad(model, src, dz_s, eps_s, beta), enc_g);

    if (target.rows()) {
        auto tgt = encode_branch(model, target, eps_t);
        int tgt_label = model.mode == DannMode::dann_binary ? 1 : static_cast<int>(model.num_classes);
        std::vector<int> dom_tgt_labels(target.rows(), tgt_label);
        auto dom_tgt_trace = forward_trace(model.head_dom, tgt.z);
        auto dom_tgt = softmax_xent(dom_tgt_trace.output, dom_tgt_labels);
        rep.l_dom += dom_tgt.loss;
        if (stochastic) rep.r_ib += kl_regularizer(tgt.mu, tgt.logvar);
        Tensor2 dz_t = backward(model.head_dom, dom_tgt_trace, dom_tgt.grad, dom_g);
        for (auto& v : dz_t.values()) v *= -lambda;
        backward(model.encoder, tgt.encoder, encoder_output_grad(model, tgt, dz_t, eps_t, beta), enc_g);
    }

    rep.total = rep.l_task - lambda * rep.l_dom + beta * rep.r_ib;
    append(out.grads, std::move(enc_g));
    append(out.grads, std::move(task_g));
    append(out.grads, std::move(dom_g));
    return out;
}

DannGradients dannib_loss(const DannIbModel& model, const Tensor2& source, std::span<const int> source_labels,
                          const Tensor2& target, double lambda, double beta, RngStream& rng) {
    auto noise = model.stochastic() ? draw_noise(model, source.rows(), target.rows(), rng) : DannNoise{};
    return dannib_loss(model, source, source_labels, target, lambda, beta, noise);
}

DannHistory train_dannib(DannIbModel& model, const FeatureDataset& source, const FeatureDataset* target,
                         const DannTrainConfig& config, RngStream& rng) {
    validate(source);
    if (!source.labeled()) throw ContractError("train_dannib: source must be labeled");
    if (source.dim() != model.feature_dim || source.num_classes != model.num_classes)
        throw ContractError("train_dannib: source shape does not match the model");
    if (target) {
        validate(*target);
        if (target->labeled()) throw ContractError("train_dannib: target must be unlabeled");
        if (target->dim() != model.feature_dim || target->num_classes != model.num_classes)
            throw ContractError("train_dannib: target shape does not match the model");
    }
    if (config.batch_size == 0) throw ContractError("train_dannib: batch size must be positive");

    AdamState adam(config.adam, std::as_const(model).parameters());
    const std::size_t ns = source.size();
    const std::size_t nt = target ? target->size() : 0;
    const std::size_t steps = (std::max(ns, nt) + config.batch_size - 1) / config.batch_size;
    std::vector<std::size_t> src_order(ns), tgt_order(nt);
    std::iota(src_order.begin(), src_order.end(), 0);
    std::iota(tgt_order.begin(), tgt_order.end(), 0);

    auto next_batch = [&](std::vector<std::size_t>& order, std::size_t& cursor) {
        std::vector<std::size_t> idx;
        idx.reserve(config.batch_size);
        for (std::size_t k = 0; k < config.batch_size && k < order.size(); ++k) {
            if (cursor == order.size()) {
                shuffle(order, rng);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        return idx;
    };

    DannHistory history;
    std::size_t src_cursor = ns, tgt_cursor = nt;  // forces a shuffle on first use
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lambda =
            target ? config.lambda_max * lambda_schedule(static_cast<double>(epoch) / static_cast<double>(config.epochs)) : 0.0;
        DannLossReport mean;
        for (std::size_t s = 0; s < steps; ++s) {
            auto si = next_batch(src_order, src_cursor);
            Tensor2 xs = take_rows(source.features, si);
            std::vector<int> ys;
            ys.reserve(si.size());
            for (auto i : si) ys.push_back((*source.labels)[i]);
            Tensor2 xt(0, model.feature_dim);
            if (target) {
                auto ti = next_batch(tgt_order, tgt_cursor);
                xt = take_rows(target->features, ti);
            }
            auto g = dannib_loss(model, xs, ys, xt, lambda, config.beta, rng);
            if (!std::isfinite(g.report.total)) throw DivergenceError("adaptation loss is not finite", epoch);
            adam_step(model.parameters(), g.grads, adam);
            mean.l_task += g.report.l_task;
            mean.l_dom += g.report.l_dom;
            mean.r_ib += g.report.r_ib;
            mean.total += g.report.total;
            mean.beta = g.report.beta;
        }
        const double n = static_cast<double>(steps);
        mean.l_task /= n;
        mean.l_dom /= n;
        mean.r_ib /= n;
        mean.total /= n;
        mean.lambda = lambda;
        history.push_back(mean);
    }
    return history;
}

Classification classify(const DannIbModel& model, const Tensor2& x, std::size_t threads) {
    check_input(model, x);
    Classification out;
    out.classes.resize(x.rows());
    out.posteriors = Tensor2(x.rows(), model.num_classes);

    auto run = [&](std::size_t begin, std::size_t end) {
        if (begin >= end) return;
        std::vector<std::size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        Tensor2 part = take_rows(x, idx);
        auto enc = forward(model.encoder, part);
        auto mu = slice_cols(enc, 0, model.latent_dim);
        auto post = softmax(forward(model.head_task, mu));
        for (std::size_t r = 0; r < post.rows(); ++r) {
            auto row = post.row(r);
            std::copy(row.begin(), row.end(), out.posteriors.row(begin + r).begin());
            // max_element returns the first maximum: ties resolve to the lower index.
            out.classes[begin + r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        }
    };

    threads = std::max<std::size_t>(1, std::min(threads, x.rows()));
    if (threads == 1) {
        run(0, x.rows());
        return out;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (x.rows() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back(run, t * chunk, std::min(x.rows(), (t + 1) * chunk));
    for (auto& th : pool) th.join();
    return out;
}

PseudoLabelReport pseudo_label(const DannIbModel& model, const FeatureDataset& data, double threshold, bool fallback,
                               std::size_t threads) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ContractError("pseudo_label: threshold must lie in (0, 1]");
    auto cls = classify(model, data.features, threads);
    const std::size_t n = data.size();
    std::vector<int> assigned(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        int c = cls.classes[i];
        if (cls.posteriors(i, static_cast<std::size_t>(c)) >= threshold) assigned[i] = c;
    }

    PseudoLabelReport rep;
    rep.threshold = threshold;
    rep.per_class.assign(model.num_classes, 0);
    for (int a : assigned)
        if (a >= 0) ++rep.per_class[static_cast<std::size_t>(a)];

    if (fallback) {
        for (std::size_t c = 0; c < model.num_classes; ++c) {
            if (rep.per_class[c] > 0) continue;
            long best = -1;
            for (std::size_t i = 0; i < n; ++i) {
                if (assigned[i] >= 0) continue;
                if (best < 0 || cls.posteriors(i, c) > cls.posteriors(static_cast<std::size_t>(best), c))
                    best = static_cast<long>(i);
            }
            if (best < 0) continue;
            assigned[static_cast<std::size_t>(best)] = static_cast<int>(c);
            rep.per_class[c] = 1;
            rep.fallback_classes.push_back(static_cast<int>(c));
        }
    }

    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
        if (assigned[i] < 0) continue;
        rep.selected_indices.push_back(i);
        labels.push_back(assigned[i]);
    }
    rep.rejected = n - rep.selected_indices.size();
    rep.selected = data.subset(rep.selected_indices);
    rep.selected.labels = std::move(labels);
    return rep;
}

}  // namespace frida
