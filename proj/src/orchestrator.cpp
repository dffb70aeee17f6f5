#include "frida/orchestrator.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "frida/checkpoint.hpp"
#include "frida/errors.hpp"
#include "frida/synthgen.hpp"

namespace frida {

namespace {

// Substream keys within one episode.
constexpr std::uint64_t kInitGan = 1;
constexpr std::uint64_t kInitDa = 2;
constexpr std::uint64_t kTrainDa = 3;
constexpr std::uint64_t kTrainGan = 4;
constexpr std::uint64_t kReplayBase = 100;

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SpecError("cannot write " + path.string());
    f << text;
    if (!f) throw SpecError("failed writing " + path.string());
}

void check_compatible(const GanModel& gan, const FeatureDataset& data) {
    if (data.dim() != gan.feature_dim)
        throw ShapeError("dataset has dimension " + std::to_string(data.dim()) + ", models expect " +
                         std::to_string(gan.feature_dim));
    if (data.num_classes != gan.num_classes)
        throw ContractError("dataset declares " + std::to_string(data.num_classes) + " classes, models expect " +
                            std::to_string(gan.num_classes));
}

}  // namespace

bool EpisodeState::operator==(const EpisodeState& o) const {
    return tau == o.tau && gan == o.gan && da == o.da && registry == o.registry && rng.seed() == o.rng.seed() &&
           rng.counter() == o.rng.counter() && config_hash == o.config_hash && config_text == o.config_text;
}

EpisodeResult run_episode_0(const RunConfig& cfg, const FeatureDataset& source, std::size_t threads) {
    (void)threads;
    if (!source.labeled()) throw ContractError("episode 0 needs a labeled source dataset");
    validate(source);
    if (source.size() == 0) throw ContractError("source dataset is empty");

    EpisodeResult res;
    EpisodeState& st = res.state;
    st.tau = 0;
    st.config_text = cfg.canonical();
    st.config_hash = fnv1a64(st.config_text);
    st.rng = RngStream(cfg.seed);
    st.registry.push_back(DomainId::make(0, cfg.code_width));
    RngStream ep = st.rng.split();

    FeatureDataset src = source;
    src.domain = 0;

    RngStream init_gan = ep.substream(kInitGan);
    st.gan = GanModel::create(cfg.gan_arch, src.num_classes, src.dim(), cfg.code_width, init_gan);
    RngStream gan_rng = ep.substream(kTrainGan);
    res.log.gan_history = train_gan(st.gan, pool({&src}), cfg.gan_train, gan_rng);

    RngStream init_da = ep.substream(kInitDa);
    DannIbModel da = DannIbModel::create(cfg.da_arch, cfg.da_mode, src.num_classes, src.dim(), init_da);
    RngStream da_rng = ep.substream(kTrainDa);
    res.log.da_history = train_dannib(da, src, nullptr, cfg.da_train, da_rng);
    st.da = std::move(da);
    return res;
}

EpisodeResult run_episode(const EpisodeState& prev, const FeatureDataset& target, const RunConfig& cfg,
                          std::size_t threads) {
    if (cfg.hash() != prev.config_hash) throw ContractError("config hash does not match the episode state");
    validate(prev.gan);
    check_compatible(prev.gan, target);

    const std::size_t tau = prev.tau + 1;
    EpisodeResult res;
    EpisodeState& st = res.state;
    st.tau = tau;
    st.config_text = prev.config_text;
    st.config_hash = prev.config_hash;
    st.registry = prev.registry;
    st.registry.push_back(DomainId::make(tau, cfg.code_width));
    st.rng = prev.rng;
    RngStream ep = st.rng.split();

    FeatureDataset tgt = target.unlabeled();
    tgt.domain = tau;

    if (!cfg.replay_enabled) {
        if (!prev.da) throw ContractError("no classifier available to pseudo-label domain " + std::to_string(tau));
        PseudoLabelReport pl = pseudo_label(*prev.da, tgt, cfg.threshold, cfg.pseudo_fallback, threads);
        if (pl.selected.size() == 0)
            throw ContractError("episode " + std::to_string(tau) + ": no target sample reached threshold " +
                                std::to_string(cfg.threshold) + "; lower da.th or enable da.fallback");
        DannIbModel da = *prev.da;
        if (!cfg.da_warm_start || tau == 1) {
            RngStream init = ep.substream(kInitDa);
            da = DannIbModel::create(cfg.da_arch, cfg.da_mode, prev.gan.num_classes, prev.gan.feature_dim, init);
        }
        RngStream da_rng = ep.substream(kTrainDa);
        res.log.da_history = train_dannib(da, pl.selected, nullptr, cfg.da_train, da_rng);
        res.log.pseudo = std::move(pl);
        st.da = std::move(da);
        st.gan = prev.gan;
        return res;
    }

    // Replay sets for every past domain, regenerated from GAN_{tau-1}.
    std::vector<FeatureDataset> replay;
    replay.reserve(tau);
    for (std::size_t k = 0; k < tau; ++k) {
        RngStream r = ep.substream(kReplayBase + k);
        replay.push_back(sample_features(prev.gan, k, cfg.replay_per_class, r));
        res.log.replay_size += replay.back().size();
    }
    std::vector<const FeatureDataset*> parts;
    for (const auto& r : replay) parts.push_back(&r);
    FeatureDataset aux = concat_labeled(parts);

    DannIbModel da;
    if (prev.da && cfg.da_warm_start && tau >= 2) {
        da = *prev.da;
    } else {
        RngStream init = ep.substream(kInitDa);
        da = DannIbModel::create(cfg.da_arch, cfg.da_mode, prev.gan.num_classes, prev.gan.feature_dim, init);
    }
    RngStream da_rng = ep.substream(kTrainDa);
    res.log.da_history = train_dannib(da, aux, &tgt, cfg.da_train, da_rng);

    PseudoLabelReport pl = pseudo_label(da, tgt, cfg.threshold, cfg.pseudo_fallback, threads);
    if (pl.selected.size() == 0)
        throw ContractError("episode " + std::to_string(tau) + ": no target sample reached threshold " +
                            std::to_string(cfg.threshold) + "; lower da.th or enable da.fallback");

    GanModel gan;
    if (cfg.gan_warm_start) {
        gan = prev.gan;
    } else {
        RngStream init = ep.substream(kInitGan);
        gan = GanModel::create(cfg.gan_arch, prev.gan.num_classes, prev.gan.feature_dim, cfg.code_width, init);
    }
    parts.push_back(&pl.selected);
    RngStream gan_rng = ep.substream(kTrainGan);
    res.log.gan_history = train_gan(gan, pool(parts), cfg.gan_train, gan_rng);

    res.log.pseudo = std::move(pl);
    st.gan = std::move(gan);
    st.da = std::move(da);
    return res;
}

Checkpoint state_checkpoint(const EpisodeState& state) {
    Checkpoint ck;
    ck.component = "state";
    ck.tau = state.tau;
    put_gan(ck, state.gan, "gan");
    if (state.da) put_dannib(ck, *state.da, "da");
    std::vector<std::uint64_t> taus;
    std::size_t width = state.registry.empty() ? 0 : state.registry.front().code.size();
    for (const auto& id : state.registry) taus.push_back(id.tau);
    ck.put("meta.registry", pack_u64(taus));
    ck.put("meta.width", pack_u64({width}));
    ck.put("meta.rng", pack_u64({state.rng.seed(), state.rng.counter()}));
    ck.put("meta.config", pack_text(state.config_text));
    ck.put("meta.hash", pack_u64({state.config_hash}));
    return ck;
}

EpisodeState state_from_checkpoint(const Checkpoint& ck) {
    if (ck.component != "state") throw CheckpointError("expected a state checkpoint, found '" + ck.component + "'");
    EpisodeState st;
    st.tau = ck.tau;
    st.gan = get_gan(ck, "gan");
    if (ck.contains("da.dims")) st.da = get_dannib(ck, "da");
    auto width = unpack_u64(ck.get("meta.width"));
    if (width.size() != 1) throw CheckpointError("malformed meta.width");
    for (auto t : unpack_u64(ck.get("meta.registry"))) st.registry.push_back(DomainId::make(t, width[0]));
    auto rng = unpack_u64(ck.get("meta.rng"));
    if (rng.size() != 2) throw CheckpointError("malformed meta.rng");
    st.rng = RngStream(rng[0], rng[1]);
    st.config_text = unpack_text(ck.get("meta.config"));
    auto hash = unpack_u64(ck.get("meta.hash"));
    if (hash.size() != 1) throw CheckpointError("malformed meta.hash");
    st.config_hash = hash[0];
    if (fnv1a64(st.config_text) != st.config_hash) throw CheckpointError("config hash mismatch in state checkpoint");
    if (st.registry.size() != st.tau + 1) throw CheckpointError("domain registry length does not match tau");
    return st;
}

void save_state(const EpisodeState& state, const std::filesystem::path& path) {
    write_checkpoint(state_checkpoint(state), path);
}

EpisodeState load_state(const std::filesystem::path& path) { return state_from_checkpoint(read_checkpoint(path)); }

std::vector<std::filesystem::path> read_data_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw SpecError("data manifest not found: " + path.string());
    std::string first;
    std::getline(f, first);
    if (first.rfind("FRIDA-MANIFEST v1", 0) != 0) throw ParseError("expected 'FRIDA-MANIFEST v1'", 1);
    std::stringstream rest;
    rest << f.rdbuf();
    std::optional<std::size_t> count;
    std::map<std::size_t, std::filesystem::path> files;
    for (const auto& [k, v] : parse_key_values(rest.str())) {
        if (k == "domains") count = std::stoull(v);
        else if (k.rfind("domain.", 0) == 0) files[std::stoull(k.substr(7))] = v;
        else throw SpecError("unknown manifest key '" + k + "'");
    }
    if (!count || *count == 0) throw SpecError("data manifest lacks a positive 'domains' count");
    std::vector<std::filesystem::path> out;
    for (std::size_t k = 0; k < *count; ++k) {
        auto it = files.find(k);
        if (it == files.end()) throw SpecError("data manifest lacks domain." + std::to_string(k));
        auto p = it->second;
        if (p.is_relative()) p = path.parent_path() / p;
        if (!std::filesystem::exists(p)) throw SpecError("dataset file not found: " + p.string());
        out.push_back(p);
    }
    return out;
}

void write_data_manifest(const std::vector<std::filesystem::path>& files, const std::filesystem::path& path) {
    std::ostringstream o;
    o << "FRIDA-MANIFEST v1\n";
    o << "domains=" << files.size() << '\n';
    for (std::size_t k = 0; k < files.size(); ++k) o << "domain." << k << '=' << files[k].string() << '\n';
    write_text(path, o.str());
}

PreparedData prepare_data(const RunConfig& cfg) {
    std::vector<FeatureDataset> domains;
    if (cfg.manifest) {
        for (const auto& p : read_data_manifest(*cfg.manifest)) domains.push_back(read_dataset(p));
    } else {
        KeyValues kv = cfg.benchmark;
        bool has_seed = false, has_width = false;
        for (const auto& [k, v] : kv) {
            has_seed |= k == "seed";
            has_width |= k == "width";
        }
        if (!has_seed) kv.emplace_back("seed", std::to_string(cfg.seed));
        if (!has_width) kv.emplace_back("width", std::to_string(cfg.code_width));
        for (const auto& d : make_benchmark(benchmark_from_keys(kv))) domains.push_back(d.evaluation_view());
    }
    if (domains.size() > (std::size_t{1} << cfg.code_width))
        throw CapacityError(std::to_string(domains.size()) + " domains exceed the " + std::to_string(cfg.code_width) +
                            "-bit domain code; raise domain.width");

    PreparedData out;
    const RngStream base(cfg.seed);
    for (std::size_t k = 0; k < domains.size(); ++k) {
        FeatureDataset& ds = domains[k];
        ds.domain = k;
        if (!ds.labeled())
            throw ContractError("domain " + std::to_string(k) + " carries no labels; held-out evaluation needs them");
        if (k > 0 && (ds.dim() != domains[0].dim() || ds.num_classes != domains[0].num_classes))
            throw ShapeError("domain " + std::to_string(k) + " does not share d and C with the source");
        RngStream r = base.substream(1000 + k);
        Split s = split(ds, cfg.test_fraction, r);
        for (auto& w : s.warnings) out.warnings.push_back("domain " + std::to_string(k) + ": " + w);
        out.train.push_back(k == 0 ? std::move(s.train) : s.train.unlabeled());
        out.test.push_back(std::move(s.test));
    }
    return out;
}

std::filesystem::path state_path(const std::filesystem::path& dir, std::size_t tau) {
    return dir / ("state_" + std::to_string(tau) + ".ckpt");
}

namespace {

void record_row(AccuracyMatrix& m, const DannIbModel& da, std::size_t k, const std::vector<FeatureDataset>& tests,
                std::size_t threads) {
    for (std::size_t t = 0; t <= k; ++t) m.set(k, t, accuracy(da, tests[t], threads));
    if (k + 1 < tests.size()) m.set_pre_arrival(k + 1, accuracy(da, tests[k + 1], threads));
}

std::string run_manifest(const RunConfig& cfg, std::size_t last_tau) {
    std::ostringstream o;
    o << "FRIDA-RUN v1\n";
    o << "config_hash=" << hex64(cfg.hash()) << '\n';
    o << "seed=" << cfg.seed << '\n';
    o << "episodes=" << last_tau + 1 << '\n';
    for (std::size_t k = 0; k <= last_tau; ++k) o << "state." << k << "=state_" << k << ".ckpt\n";
    return o.str();
}

void write_projection(const std::filesystem::path& dir, const RunConfig& cfg, const EpisodeState& st,
                      const std::vector<FeatureDataset>& tests) {
    std::vector<const Tensor2*> blocks;
    std::vector<ProjectionRow> rows;
    std::vector<FeatureDataset> synth;
    for (std::size_t k = 0; k < tests.size() && k <= st.tau; ++k) {
        blocks.push_back(&tests[k].features);
        for (int y : *tests[k].labels) rows.push_back({y, k, false});
    }
    const RngStream base(cfg.seed);
    for (std::size_t k = 0; static_cast<long>(k) <= st.gan.trained_through; ++k) {
        RngStream r = base.substream(5000 + k);
        synth.push_back(sample_features(st.gan, k, cfg.replay_per_class, r));
    }
    for (const auto& s : synth) {
        blocks.push_back(&s.features);
        for (int y : *s.labels) rows.push_back({y, s.domain, true});
    }
    Projection p = project2d(vconcat(blocks));
    write_text(dir / "proj_final.csv", projection_csv(p, rows));
}

void write_artifacts(const std::filesystem::path& dir, const RunConfig& cfg, const AccuracyMatrix& m,
                     std::size_t last_tau) {
    write_text(dir / "metrics.csv", metrics_csv(m));
    if (m.complete()) write_text(dir / "report.json", report_json(m, report(m)));
    write_text(dir / "run_manifest.txt", run_manifest(cfg, last_tau));
}

RunResult continue_run(const RunConfig& cfg, const PreparedData& data, EpisodeState state, AccuracyMatrix matrix,
                       const RunOptions& opts) {
    RunResult res;
    const std::size_t last = data.train.size() - 1;
    const std::size_t stop = opts.until_tau ? std::min(*opts.until_tau, last) : last;
    for (std::size_t tau = state.tau + 1; tau <= stop; ++tau) {
        EpisodeResult ep = run_episode(state, data.train[tau], cfg, opts.threads);
        state = std::move(ep.state);
        res.logs.push_back(std::move(ep.log));
        record_row(matrix, *state.da, tau, data.test, opts.threads);
        if (opts.out_dir) save_state(state, state_path(*opts.out_dir, tau));
    }
    if (opts.out_dir) {
        write_artifacts(*opts.out_dir, cfg, matrix, state.tau);
        if (state.tau == last) write_projection(*opts.out_dir, cfg, state, data.test);
    }
    res.matrix = std::move(matrix);
    res.final_state = std::move(state);
    return res;
}

}  // namespace

AccuracyMatrix evaluate_states(const std::filesystem::path& dir, std::size_t final_tau,
                               const std::vector<FeatureDataset>& tests, std::size_t threads) {
    if (final_tau >= tests.size()) throw ContractError("missing test set for domain " + std::to_string(final_tau));
    AccuracyMatrix m(0);
    for (std::size_t k = 0; k <= final_tau; ++k) {
        auto p = state_path(dir, k);
        if (!std::filesystem::exists(p)) throw SpecError("state file not found: " + p.string());
        EpisodeState st = load_state(p);
        if (st.tau != k) throw CheckpointError(p.string() + " holds tau=" + std::to_string(st.tau));
        if (!st.da) throw CheckpointError(p.string() + " holds no classifier");
        record_row(m, *st.da, k, tests, threads);
    }
    return m;
}

RunResult run_all(const RunConfig& cfg, const RunOptions& opts) {
    validate(cfg);
    PreparedData data = prepare_data(cfg);
    if (opts.out_dir) {
        std::filesystem::create_directories(*opts.out_dir);
        write_text(*opts.out_dir / "config.txt", cfg.canonical());
        for (std::size_t k = 0; k < data.test.size(); ++k)
            write_dataset(data.test[k], *opts.out_dir / ("test_" + std::to_string(k) + ".ds"));
    }
    EpisodeResult ep0 = run_episode_0(cfg, data.train[0], opts.threads);
    AccuracyMatrix m(0);
    record_row(m, *ep0.state.da, 0, data.test, opts.threads);
    if (opts.out_dir) save_state(ep0.state, state_path(*opts.out_dir, 0));
    RunResult res = continue_run(cfg, data, std::move(ep0.state), std::move(m), opts);
    res.logs.insert(res.logs.begin(), std::move(ep0.log));
    return res;
}

RunResult resume_run(const std::filesystem::path& state_file, const RunOptions& opts,
                     const std::optional<PreparedData>& data) {
    EpisodeState st = load_state(state_file);
    RunConfig cfg = parse_run_config(st.config_text);
    if (cfg.hash() != st.config_hash) throw CheckpointError("embedded config does not reproduce the state's hash");
    PreparedData prepared = data ? *data : prepare_data(cfg);
    if (st.tau >= prepared.train.size())
        throw ContractError("state is at tau=" + std::to_string(st.tau) + " but the data has only " +
                            std::to_string(prepared.train.size()) + " domains");
    auto dir = state_file.parent_path();
    AccuracyMatrix m = evaluate_states(dir, st.tau, prepared.test, opts.threads);
    RunOptions o = opts;
    if (!o.out_dir) o.out_dir = dir;
    std::filesystem::create_directories(*o.out_dir);
    return continue_run(cfg, prepared, std::move(st), std::move(m), o);
}

}  // namespace frida
