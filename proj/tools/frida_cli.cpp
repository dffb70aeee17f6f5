#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "frida/checkpoint.hpp"
#include "frida/config.hpp"
#include "frida/errors.hpp"
#include "frida/eval.hpp"
#include "frida/orchestrator.hpp"
#include "frida/synthgen.hpp"

namespace fs = std::filesystem;
using namespace frida;

namespace {

std::size_t threads_from_env() {
    const char* v = std::getenv("FRIDA_THREADS");
    if (!v || !*v) return 1;
    try {
        std::size_t pos = 0;
        long n = std::stol(v, &pos);
        if (pos != std::string(v).size() || n < 1) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw SpecError(std::string("FRIDA_THREADS must be a positive integer, got '") + v + "'");
    }
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw SpecError("file not found: " + p.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw SpecError("cannot write " + p.string());
    f << text;
}

void require_file(const fs::path& p, const std::string& flag) {
    if (!fs::exists(p)) throw SpecError(flag + ": file not found: " + p.string());
}

void print_report(const MetricsReport& r, std::ostream& out) {
    out << std::fixed << std::setprecision(4);
    out << "domain  avg_acc  forgetting\n";
    for (const auto& d : r.domains) out << d.tau << "       " << d.average << "   " << d.forgetting << '\n';
    out << "source  " << r.source_average << "   " << r.source_forgetting << '\n';
    if (r.target_average) out << "targets " << *r.target_average << "   " << *r.target_forgetting << '\n';
    out << "overall " << r.overall_average << "   " << r.overall_forgetting << '\n';
}

int cmd_gen(const fs::path& spec_file, const fs::path& out) {
    require_file(spec_file, "--spec");
    BenchmarkSpec spec = benchmark_from_keys(parse_key_values(read_file(spec_file)));
    auto domains = make_benchmark(spec);
    fs::create_directories(out);
    std::vector<fs::path> names;
    for (const auto& d : domains) {
        fs::path name = "domain_" + std::to_string(d.tau()) + ".ds";
        write_dataset(d.evaluation_view(), out / name);
        names.push_back(name);
    }
    write_data_manifest(names, out / "manifest.txt");
    std::cout << "wrote " << domains.size() << " domains to " << out.string() << '\n';
    return 0;
}

RunConfig load_config(const fs::path& file, bool paper_literal, const std::optional<std::string>& mode) {
    require_file(file, "--config");
    RunConfig cfg = load_run_config(file);
    if (paper_literal) apply_paper_literal(cfg);
    if (mode) cfg.da_mode = parse_dann_mode(*mode);
    validate(cfg);
    return cfg;
}

int cmd_run(const RunConfig& cfg, const fs::path& out, std::optional<std::size_t> until) {
    RunOptions opts;
    opts.out_dir = out;
    opts.until_tau = until;
    opts.threads = threads_from_env();
    RunResult r = run_all(cfg, opts);
    if (r.matrix.complete() && (!until || r.final_state.tau == r.matrix.final_time()))
        print_report(report(r.matrix), std::cout);
    std::cout << "state " << state_path(out, r.final_state.tau).string() << '\n';
    return 0;
}

int cmd_resume(const fs::path& state, const std::optional<fs::path>& data, const std::optional<fs::path>& out) {
    require_file(state, "--state");
    const std::size_t threads = threads_from_env();
    if (data) {
        require_file(*data, "--data");
        std::ifstream f(*data);
        std::string head;
        std::getline(f, head);
        if (head.rfind("FRIDA-DS", 0) == 0) {
            // A single next-domain dataset: one episode, no evaluation.
            EpisodeState st = load_state(state);
            RunConfig cfg = parse_run_config(st.config_text);
            EpisodeResult ep = run_episode(st, read_dataset(*data), cfg, threads);
            fs::path dir = out ? *out : state.parent_path();
            fs::create_directories(dir);
            save_state(ep.state, state_path(dir, ep.state.tau));
            std::cout << "state " << state_path(dir, ep.state.tau).string() << '\n';
            return 0;
        }
        if (head.rfind("FRIDA-MANIFEST", 0) != 0)
            throw SpecError("--data: expected a FRIDA-DS dataset or FRIDA-MANIFEST file: " + data->string());
    }
    std::optional<PreparedData> prepared;
    if (data) {
        RunConfig cfg = parse_run_config(load_state(state).config_text);
        cfg.manifest = *data;
        cfg.benchmark.clear();
        prepared = prepare_data(cfg);
    }
    RunOptions opts;
    opts.out_dir = out;
    opts.threads = threads;
    RunResult r = resume_run(state, opts, prepared);
    if (r.matrix.complete()) print_report(report(r.matrix), std::cout);
    return 0;
}

int cmd_eval(const fs::path& state, const fs::path& testdir, const std::optional<fs::path>& out) {
    require_file(state, "--state");
    if (!fs::is_directory(testdir)) throw SpecError("--testdir: not a directory: " + testdir.string());
    EpisodeState st = load_state(state);
    std::vector<FeatureDataset> tests;
    for (std::size_t k = 0;; ++k) {
        fs::path p = testdir / ("test_" + std::to_string(k) + ".ds");
        if (!fs::exists(p)) break;
        tests.push_back(read_dataset(p));
    }
    if (tests.size() <= st.tau)
        throw SpecError("--testdir: missing test_" + std::to_string(tests.size()) + ".ds for domain " +
                        std::to_string(tests.size()));
    AccuracyMatrix m = evaluate_states(state.parent_path(), st.tau, tests, threads_from_env());
    fs::path dir = out ? *out : state.parent_path();
    fs::create_directories(dir);
    write_file(dir / "metrics.csv", metrics_csv(m));
    MetricsReport r = report(m);
    write_file(dir / "report.json", report_json(m, r));
    print_report(r, std::cout);
    return 0;
}

int cmd_ablate(const RunConfig& base, const std::optional<fs::path>& out) {
    std::ostringstream table;
    table << std::fixed << std::setprecision(4);
    table << "mode,source_avg,target_avg,overall_avg,overall_forgetting\n";
    const std::size_t threads = threads_from_env();
    for (DannMode mode : {DannMode::dann_binary, DannMode::dann_multiclass, DannMode::dann_ib}) {
        RunConfig cfg = base;
        cfg.da_mode = mode;
        RunOptions opts;
        opts.threads = threads;
        if (out) opts.out_dir = *out / to_string(mode);
        RunResult r = run_all(cfg, opts);
        MetricsReport rep = report(r.matrix);
        table << to_string(mode) << ',' << rep.source_average << ',' << rep.target_average.value_or(0.0) << ','
              << rep.overall_average << ',' << rep.overall_forgetting << '\n';
    }
    std::cout << table.str();
    if (out) write_file(*out / "ablation.csv", table.str());
    return 0;
}

int cmd_sample(const fs::path& state, std::size_t tau, std::size_t per_class, const std::optional<fs::path>& out,
               std::uint64_t seed) {
    require_file(state, "--state");
    EpisodeState st = load_state(state);
    RngStream rng(seed);
    FeatureDataset ds = sample_features(st.gan, tau, per_class, rng);
    if (out) write_dataset(ds, *out);
    else write_dataset(ds, std::cout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frida: incremental unsupervised domain adaptation with generative feature replay"};
    app.require_subcommand(1);
    app.footer(
        "Config defaults: gan.lr=0.001 da.lr=0.001 gan.batch=64 da.batch=64 da.th=0.95\n"
        "replay.per_class=100 gan.z_dim=2000 da.latent=256 domain.width=3 da.beta=0.01\n"
        "preset=desk shrinks widths and epochs. FRIDA_THREADS sets evaluation threads (default 1).");

    fs::path spec, out, config, state, data, testdir;
    std::optional<std::string> mode;
    bool paper_literal = false;
    std::optional<std::size_t> until;
    std::size_t tau = 0, per_class = 100;
    std::uint64_t sample_seed = 0;
    std::optional<fs::path> opt_out, opt_data;

    auto* gen = app.add_subcommand("gen", "Generate the synthetic benchmark");
    gen->add_option("--spec", spec, "Benchmark key=value file (C, d, n_per_class, T, seed, ...)")->required();
    gen->add_option("--out", out, "Output directory")->required();

    auto* run = app.add_subcommand("run", "Run every episode and evaluate");
    run->add_option("--config", config, "Run config (key=value)")->required();
    run->add_option("--out", out, "Output directory")->required();
    run->add_flag("--paper-literal", paper_literal, "Use beta=1 and the saturating generator objective");
    run->add_option("--mode", mode, "dann_binary | dann_multiclass | dann_ib (default dann_ib)")
        ->check(CLI::IsMember({"dann_binary", "dann_multiclass", "dann_ib"}));
    run->add_option("--until-tau", until, "Stop after this episode (resume later)");

    auto* resume = app.add_subcommand("resume", "Continue a run from a saved state");
    resume->add_option("--state", state, "State checkpoint")->required();
    resume->add_option("--data", opt_data, "Data manifest, or one dataset for the next episode (default: from config)");
    resume->add_option("--out", opt_out, "Output directory (default: the state's directory)");

    auto* ev = app.add_subcommand("eval", "Evaluate saved states on held-out test sets");
    ev->add_option("--state", state, "Final state checkpoint; earlier state_<k>.ckpt files sit next to it")->required();
    ev->add_option("--testdir", testdir, "Directory with test_<k>.ds files")->required();
    ev->add_option("--out", opt_out, "Output directory (default: the state's directory)");

    auto* ab = app.add_subcommand("ablate", "Run dann_binary, dann_multiclass and dann_ib and compare");
    ab->add_option("--config", config, "Run config (key=value)")->required();
    ab->add_option("--out", opt_out, "Output directory for per-mode runs and ablation.csv");

    auto* sm = app.add_subcommand("sample", "Draw synthetic features from a saved generator");
    sm->add_option("--state", state, "State checkpoint")->required();
    sm->add_option("--tau", tau, "Domain index")->required();
    sm->add_option("--per-class", per_class, "Samples per class")->capture_default_str();
    sm->add_option("--seed", sample_seed, "Sampling seed")->capture_default_str();
    sm->add_option("--out", opt_out, "Output dataset file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) return cmd_gen(spec, out);
        if (*run) return cmd_run(load_config(config, paper_literal, mode), out, until);
        if (*resume) return cmd_resume(state, opt_data, opt_out);
        if (*ev) return cmd_eval(state, testdir, opt_out);
        if (*ab) return cmd_ablate(load_config(config, false, std::nullopt), opt_out);
        if (*sm) return cmd_sample(state, tau, per_class, opt_out, sample_seed);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& c : msg)
            if (c == '\n') c = ' ';
        std::cerr << "frida: " << msg << '\n';
        return 1;
    }
    return 1;
}
