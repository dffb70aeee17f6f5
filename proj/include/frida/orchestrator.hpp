#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "frida/checkpoint.hpp"
#include "frida/config.hpp"
#include "frida/dannib.hpp"
#include "frida/datamodel.hpp"
#include "frida/dgacgan.hpp"
#include "frida/eval.hpp"

namespace frida {

// Everything carried from one episode to the next. `da` holds the evaluation
// classifier: at tau = 0 it is trained on the labeled source alone.
struct EpisodeState {
    std::size_t tau = 0;
    GanModel gan;
    std::optional<DannIbModel> da;
    std::vector<DomainId> registry;
    RngStream rng;
    std::uint64_t config_hash = 0;
    std::string config_text;

    bool operator==(const EpisodeState&) const;
};

struct EpisodeLog {
    GanHistory gan_history;
    DannHistory da_history;
    std::optional<PseudoLabelReport> pseudo;
    std::size_t replay_size = 0;  // synthetic samples before the union with pseudo-labels
};

struct EpisodeResult {
    EpisodeState state;
    EpisodeLog log;
};

// GAN_0 on the labeled source, plus the source-only classifier DA_0.
EpisodeResult run_episode_0(const RunConfig& cfg, const FeatureDataset& source, std::size_t threads = 1);

// One incremental step. Only `target` is read; its labels, if any, are dropped.
EpisodeResult run_episode(const EpisodeState& prev, const FeatureDataset& target, const RunConfig& cfg,
                          std::size_t threads = 1);

Checkpoint state_checkpoint(const EpisodeState& state);
EpisodeState state_from_checkpoint(const Checkpoint& ckpt);
void save_state(const EpisodeState& state, const std::filesystem::path& path);
EpisodeState load_state(const std::filesystem::path& path);

// Training and held-out test splits per domain. Target training splits are
// unlabeled.
struct PreparedData {
    std::vector<FeatureDataset> train;
    std::vector<FeatureDataset> test;
    std::vector<std::string> warnings;
};

PreparedData prepare_data(const RunConfig& cfg);

// Data manifest written by `frida gen`:
//   FRIDA-MANIFEST v1
//   domains=<n>
//   domain.<k>=<file>
std::vector<std::filesystem::path> read_data_manifest(const std::filesystem::path& path);
void write_data_manifest(const std::vector<std::filesystem::path>& files, const std::filesystem::path& path);

struct RunResult {
    AccuracyMatrix matrix;
    std::vector<EpisodeLog> logs;
    EpisodeState final_state;
};

struct RunOptions {
    std::optional<std::filesystem::path> out_dir;  // artifacts written when set
    std::optional<std::size_t> until_tau;         // stop after this episode
    std::size_t threads = 1;
};

RunResult run_all(const RunConfig& cfg, const RunOptions& opts = {});

// Continues a run from a saved state. Rows of the accuracy matrix for times
// before the state are recomputed from state_<k>.ckpt files next to it.
RunResult resume_run(const std::filesystem::path& state_path, const RunOptions& opts = {},
                     const std::optional<PreparedData>& data = std::nullopt);

// Accuracy rows 0..state.tau from the state files in `dir`.
AccuracyMatrix evaluate_states(const std::filesystem::path& dir, std::size_t final_tau,
                               const std::vector<FeatureDataset>& tests, std::size_t threads = 1);

std::filesystem::path state_path(const std::filesystem::path& dir, std::size_t tau);

}  // namespace frida
