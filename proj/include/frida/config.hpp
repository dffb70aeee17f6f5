#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "frida/dannib.hpp"
#include "frida/datamodel.hpp"
#include "frida/dgacgan.hpp"

namespace frida {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Parses "key = value" lines; '#' starts a comment. Throws ParseError.
KeyValues parse_key_values(const std::string& text);

// Everything a run needs besides the data itself. Defaults mirror the
// published protocol (lr 0.001, betas 0.5/0.9, batch 64, z 2000, latent 256,
// Th 0.95, 100 replay samples per class, 3-bit domain code).
struct RunConfig {
    std::uint64_t seed = 0;
    double test_fraction = 0.3;
    std::size_t code_width = kDefaultCodeWidth;

    // Data source: a manifest written by `frida gen`, or benchmark keys.
    std::optional<std::filesystem::path> manifest;
    KeyValues benchmark;

    GanArchitecture gan_arch;
    GanTrainConfig gan_train;
    bool gan_warm_start = true;

    DannArchitecture da_arch;
    DannMode da_mode = DannMode::dann_ib;
    DannTrainConfig da_train;
    bool da_warm_start = true;
    double threshold = kDefaultThreshold;
    bool pseudo_fallback = true;

    std::size_t replay_per_class = 100;
    bool replay_enabled = true;

    // Canonical key=value text covering every setting; hashed into states.
    std::string canonical() const;
    std::uint64_t hash() const;
};

// Applies one key. Throws SpecError naming unknown keys or bad values.
void apply_key(RunConfig& cfg, const std::string& key, const std::string& value);

// "preset=desk" (if present) is applied first, then the remaining keys in order.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// Small widths and epoch counts for laptop-scale experiments.
void apply_desk_preset(RunConfig& cfg);

// β = 1 and the saturating generator objective.
void apply_paper_literal(RunConfig& cfg);

// Throws SpecError on out-of-range values or missing files.
void validate(const RunConfig& cfg);

}  // namespace frida
