#include "frida/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "frida/checkpoint.hpp"
#include "frida/errors.hpp"

namespace frida {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double as_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw SpecError("config key " + key + ": expected a number, got '" + v + "'");
    }
}

std::size_t as_count(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        auto n = std::stoull(v, &pos);
        if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw SpecError("config key " + key + ": expected a non-negative integer, got '" + v + "'");
    }
}

bool as_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw SpecError("config key " + key + ": expected true/false, got '" + v + "'");
}

std::vector<std::size_t> as_widths(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        auto w = as_count(key, item);
        if (w == 0) throw SpecError("config key " + key + ": widths must be positive");
        out.push_back(w);
    }
    return out;
}

std::string widths_str(const std::vector<std::size_t>& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
    return s;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError("empty key", lineno);
        kv.emplace_back(key, value);
    }
    return kv;
}

void apply_key(RunConfig& c, const std::string& key, const std::string& v) {
    if (key == "seed") c.seed = as_count(key, v);
    else if (key == "test_fraction") c.test_fraction = as_double(key, v);
    else if (key == "domain.width") c.code_width = as_count(key, v);
    else if (key == "data.manifest") c.manifest = v;
    else if (key.rfind("bench.", 0) == 0) c.benchmark.emplace_back(key.substr(6), v);
    else if (key == "gan.z_dim") c.gan_arch.z_dim = as_count(key, v);
    else if (key == "gan.hidden") c.gan_arch.generator_hidden = as_widths(key, v);
    else if (key == "gan.trunk") c.gan_arch.trunk_widths = as_widths(key, v);
    else if (key == "gan.epochs") c.gan_train.epochs = as_count(key, v);
    else if (key == "gan.batch") c.gan_train.batch_size = as_count(key, v);
    else if (key == "gan.lr") c.gan_train.adam.lr = as_double(key, v);
    else if (key == "gan.beta1") c.gan_train.adam.beta1 = as_double(key, v);
    else if (key == "gan.beta2") c.gan_train.adam.beta2 = as_double(key, v);
    else if (key == "gan.epsilon") c.gan_train.adam.epsilon = as_double(key, v);
    else if (key == "gan.r_weight") c.gan_train.r_weight = as_double(key, v);
    else if (key == "gan.loss") {
        if (v == "non_saturating") c.gan_train.generator_loss = GeneratorLoss::non_saturating;
        else if (v == "literal") c.gan_train.generator_loss = GeneratorLoss::literal;
        else throw SpecError("config key gan.loss: expected non_saturating or literal");
    } else if (key == "gan.pairing") {
        if (v == "random") c.gan_train.pairing = PairingMode::random_sample;
        else if (v == "class_mean") c.gan_train.pairing = PairingMode::class_mean;
        else throw SpecError("config key gan.pairing: expected random or class_mean");
    } else if (key == "gan.warm_start") c.gan_warm_start = as_bool(key, v);
    else if (key == "da.mode") c.da_mode = parse_dann_mode(v);
    else if (key == "da.hidden") c.da_arch.encoder_hidden = as_widths(key, v);
    else if (key == "da.latent") c.da_arch.latent_dim = as_count(key, v);
    else if (key == "da.epochs") c.da_train.epochs = as_count(key, v);
    else if (key == "da.batch") c.da_train.batch_size = as_count(key, v);
    else if (key == "da.lr") c.da_train.adam.lr = as_double(key, v);
    else if (key == "da.beta1") c.da_train.adam.beta1 = as_double(key, v);
    else if (key == "da.beta2") c.da_train.adam.beta2 = as_double(key, v);
    else if (key == "da.epsilon") c.da_train.adam.epsilon = as_double(key, v);
    else if (key == "da.beta") c.da_train.beta = as_double(key, v);
    else if (key == "da.lambda_max") c.da_train.lambda_max = as_double(key, v);
    else if (key == "da.warm_start") c.da_warm_start = as_bool(key, v);
    else if (key == "da.th") c.threshold = as_double(key, v);
    else if (key == "da.fallback") c.pseudo_fallback = as_bool(key, v);
    else if (key == "replay.per_class") c.replay_per_class = as_count(key, v);
    else if (key == "replay.enabled") c.replay_enabled = as_bool(key, v);
    else if (key == "preset") {
        if (v == "desk") apply_desk_preset(c);
        else if (v != "paper") throw SpecError("config key preset: expected desk or paper");
    } else throw SpecError("unknown config key '" + key + "'");
}

void apply_desk_preset(RunConfig& c) {
    c.gan_arch.z_dim = 32;
    c.gan_arch.generator_hidden = {128, 128};
    c.gan_arch.trunk_widths = {128, 64, 32};
    c.gan_train.epochs = 200;
    c.da_arch.encoder_hidden = {128, 128};
    c.da_arch.latent_dim = 32;
    c.da_train.epochs = 100;
    c.da_train.adam.epsilon = 0.01;
    c.da_train.lambda_max = 0.1;
    c.gan_train.r_weight = 0.05;
}

void apply_paper_literal(RunConfig& c) {
    c.da_train.beta = 1.0;
    c.gan_train.generator_loss = GeneratorLoss::literal;
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    auto kv = parse_key_values(text);
    for (const auto& [k, v] : kv)
        if (k == "preset") apply_key(cfg, k, v);
    for (const auto& [k, v] : kv)
        if (k != "preset") apply_key(cfg, k, v);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw SpecError("config file not found: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    RunConfig cfg = parse_run_config(ss.str());
    if (cfg.manifest && cfg.manifest->is_relative()) cfg.manifest = path.parent_path() / *cfg.manifest;
    return cfg;
}

void validate(const RunConfig& c) {
    if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw SpecError("test_fraction must lie in (0, 1)");
    if (!(c.threshold > 0.0 && c.threshold <= 1.0)) throw SpecError("da.th must lie in (0, 1]");
    if (c.replay_per_class == 0) throw SpecError("replay.per_class must be positive");
    if (c.gan_arch.z_dim == 0 || c.da_arch.latent_dim == 0) throw SpecError("gan.z_dim and da.latent must be positive");
    if (c.gan_train.batch_size == 0 || c.da_train.batch_size == 0) throw SpecError("batch sizes must be positive");
    if (c.gan_train.epochs == 0 || c.da_train.epochs == 0) throw SpecError("epoch counts must be positive");
    if (c.gan_arch.trunk_widths.empty()) throw SpecError("gan.trunk needs at least one width");
    if (c.code_width == 0 || c.code_width > 32) throw SpecError("domain.width must lie in [1, 32]");
    if (!(c.da_train.lambda_max >= 0.0 && c.da_train.lambda_max <= 1.0)) throw SpecError("da.lambda_max must lie in [0, 1]");
    if (c.da_train.beta < 0.0) throw SpecError("da.beta must be non-negative");
    if (!(c.gan_train.adam.epsilon > 0.0 && c.da_train.adam.epsilon > 0.0)) throw SpecError("Adam epsilon must be positive");
    if (c.gan_train.adam.lr < 0.0 || c.da_train.adam.lr < 0.0) throw SpecError("learning rates must be non-negative");
    if (c.manifest && !c.benchmark.empty()) throw SpecError("use either data.manifest or bench.* keys, not both");
    if (c.manifest && !std::filesystem::exists(*c.manifest))
        throw SpecError("data.manifest file not found: " + c.manifest->string());
}

std::string RunConfig::canonical() const {
    std::ostringstream o;
    o << "seed=" << seed << '\n';
    o << "test_fraction=" << fmt_double(test_fraction) << '\n';
    o << "domain.width=" << code_width << '\n';
    if (manifest) o << "data.manifest=" << manifest->string() << '\n';
    for (const auto& [k, v] : benchmark) o << "bench." << k << '=' << v << '\n';
    o << "gan.z_dim=" << gan_arch.z_dim << '\n';
    o << "gan.hidden=" << widths_str(gan_arch.generator_hidden) << '\n';
    o << "gan.trunk=" << widths_str(gan_arch.trunk_widths) << '\n';
    o << "gan.epochs=" << gan_train.epochs << '\n';
    o << "gan.batch=" << gan_train.batch_size << '\n';
    o << "gan.lr=" << fmt_double(gan_train.adam.lr) << '\n';
    o << "gan.beta1=" << fmt_double(gan_train.adam.beta1) << '\n';
    o << "gan.beta2=" << fmt_double(gan_train.adam.beta2) << '\n';
    o << "gan.epsilon=" << fmt_double(gan_train.adam.epsilon) << '\n';
    o << "gan.r_weight=" << fmt_double(gan_train.r_weight) << '\n';
    o << "gan.loss=" << (gan_train.generator_loss == GeneratorLoss::literal ? "literal" : "non_saturating") << '\n';
    o << "gan.pairing=" << (gan_train.pairing == PairingMode::class_mean ? "class_mean" : "random") << '\n';
    o << "gan.warm_start=" << (gan_warm_start ? "true" : "false") << '\n';
    o << "da.mode=" << to_string(da_mode) << '\n';
    o << "da.hidden=" << widths_str(da_arch.encoder_hidden) << '\n';
    o << "da.latent=" << da_arch.latent_dim << '\n';
    o << "da.epochs=" << da_train.epochs << '\n';
    o << "da.batch=" << da_train.batch_size << '\n';
    o << "da.lr=" << fmt_double(da_train.adam.lr) << '\n';
    o << "da.beta1=" << fmt_double(da_train.adam.beta1) << '\n';
    o << "da.beta2=" << fmt_double(da_train.adam.beta2) << '\n';
    o << "da.epsilon=" << fmt_double(da_train.adam.epsilon) << '\n';
    o << "da.beta=" << fmt_double(da_train.beta) << '\n';
    o << "da.lambda_max=" << fmt_double(da_train.lambda_max) << '\n';
    o << "da.warm_start=" << (da_warm_start ? "true" : "false") << '\n';
    o << "da.th=" << fmt_double(threshold) << '\n';
    o << "da.fallback=" << (pseudo_fallback ? "true" : "false") << '\n';
    o << "replay.per_class=" << replay_per_class << '\n';
    o << "replay.enabled=" << (replay_enabled ? "true" : "false") << '\n';
    return o.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

}  // namespace frida
