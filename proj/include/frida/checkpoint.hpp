#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "frida/dannib.hpp"
#include "frida/dgacgan.hpp"
#include "frida/numcore.hpp"

namespace frida {

// Binary checkpoint:
//   "FRIDA-CKPT v1 <component> tau=<tau>\n"
//   records: u32 name length, name bytes, u64 rows, u64 cols,
//            rows*cols little-endian IEEE-754 doubles
// The last record is "meta.checksum": FNV-1a 64 of every preceding byte,
// stored as two 32-bit halves.
struct CheckpointRecord {
    std::string name;
    Tensor2 value;
};

struct Checkpoint {
    std::string component;
    std::size_t tau = 0;
    std::vector<CheckpointRecord> records;

    void put(std::string name, Tensor2 value);
    bool contains(std::string_view name) const;
    // Throws CheckpointError when missing.
    const Tensor2& get(std::string_view name) const;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Integers and text carried as exact doubles.
Tensor2 pack_u64(const std::vector<std::uint64_t>& values);
std::vector<std::uint64_t> unpack_u64(const Tensor2& t);
Tensor2 pack_text(std::string_view text);
std::string unpack_text(const Tensor2& t);

void put_gan(Checkpoint& ckpt, const GanModel& model, const std::string& prefix = "gan");
GanModel get_gan(const Checkpoint& ckpt, const std::string& prefix = "gan");
void put_dannib(Checkpoint& ckpt, const DannIbModel& model, const std::string& prefix = "da");
DannIbModel get_dannib(const Checkpoint& ckpt, const std::string& prefix = "da");

}  // namespace frida
