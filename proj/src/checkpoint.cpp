#include "frida/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "frida/errors.hpp"

namespace frida {

namespace {

constexpr std::string_view kMagic = "FRIDA-CKPT";
constexpr std::string_view kVersion = "v1";
constexpr std::string_view kChecksumName = "meta.checksum";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::string& out, T v) {
    auto u = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <class U>
    U get_uint() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }
    double get_double() { return std::bit_cast<double>(get_uint<std::uint64_t>()); }
    std::string_view get_bytes(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void append_record(std::string& out, const std::string& name, const Tensor2& value) {
    put_le(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le(out, static_cast<std::uint64_t>(value.rows()));
    put_le(out, static_cast<std::uint64_t>(value.cols()));
    for (double v : value.values()) put_le(out, v);
}

}  // namespace

void Checkpoint::put(std::string name, Tensor2 value) {
    for (auto& r : records)
        if (r.name == name) {
            r.value = std::move(value);
            return;
        }
    records.push_back({std::move(name), std::move(value)});
}

bool Checkpoint::contains(std::string_view name) const {
    for (const auto& r : records)
        if (r.name == name) return true;
    return false;
}

const Tensor2& Checkpoint::get(std::string_view name) const {
    for (const auto& r : records)
        if (r.name == name) return r.value;
    throw CheckpointError("checkpoint has no record '" + std::string(name) + "'");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

Tensor2 pack_u64(const std::vector<std::uint64_t>& values) {
    Tensor2 t(1, 2 * values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        t(0, 2 * i) = static_cast<double>(values[i] >> 32);
        t(0, 2 * i + 1) = static_cast<double>(values[i] & 0xFFFFFFFFULL);
    }
    return t;
}

std::vector<std::uint64_t> unpack_u64(const Tensor2& t) {
    if (t.rows() != 1 || t.cols() % 2 != 0) throw CheckpointError("malformed integer record");
    std::vector<std::uint64_t> out(t.cols() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double hi = t(0, 2 * i), lo = t(0, 2 * i + 1);
        if (hi < 0 || lo < 0 || hi > 4294967295.0 || lo > 4294967295.0 || hi != std::floor(hi) ||
            lo != std::floor(lo))
            throw CheckpointError("malformed integer record");
        out[i] = (static_cast<std::uint64_t>(hi) << 32) | static_cast<std::uint64_t>(lo);
    }
    return out;
}

Tensor2 pack_text(std::string_view text) {
    Tensor2 t(1, text.size());
    for (std::size_t i = 0; i < text.size(); ++i) t(0, i) = static_cast<double>(static_cast<unsigned char>(text[i]));
    return t;
}

std::string unpack_text(const Tensor2& t) {
    std::string s;
    s.reserve(t.size());
    for (double v : t.values()) {
        if (v < 0 || v > 255 || v != std::floor(v)) throw CheckpointError("malformed text record");
        s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
    return s;
}

std::string serialize(const Checkpoint& ckpt) {
    std::string out;
    out += kMagic;
    out += ' ';
    out += kVersion;
    out += ' ' + ckpt.component + " tau=" + std::to_string(ckpt.tau) + '\n';
    for (const auto& r : ckpt.records) {
        if (r.name == kChecksumName) continue;
        append_record(out, r.name, r.value);
    }
    std::uint64_t h = fnv1a64(out);
    append_record(out, std::string(kChecksumName), pack_u64({h}));
    return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    auto nl = bytes.find('\n');
    if (nl == std::string_view::npos) throw CheckpointError("checkpoint header is missing or truncated");
    std::istringstream hs{std::string(bytes.substr(0, nl))};
    std::string magic, version, component, tau_field, extra;
    hs >> magic >> version >> component >> tau_field;
    if (magic != kMagic) throw CheckpointError("not a FRIDA checkpoint");
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version '" + version + "'");
    if (component.empty() || tau_field.rfind("tau=", 0) != 0 || (hs >> extra))
        throw CheckpointError("malformed checkpoint header");
    Checkpoint ckpt;
    ckpt.component = component;
    try {
        std::size_t pos = 0;
        ckpt.tau = std::stoull(tau_field.substr(4), &pos);
        if (pos != tau_field.size() - 4) throw std::invalid_argument(tau_field);
    } catch (const std::exception&) {
        throw CheckpointError("malformed tau in checkpoint header");
    }

    Reader rd(bytes.substr(nl + 1));
    bool checksum_seen = false;
    while (!rd.done()) {
        std::size_t record_start = nl + 1 + rd.pos();
        auto name_len = rd.get_uint<std::uint32_t>();
        std::string name(rd.get_bytes(name_len));
        auto rows = rd.get_uint<std::uint64_t>();
        auto cols = rd.get_uint<std::uint64_t>();
        if (cols != 0 && rows > rd.remaining() / 8 / cols) throw CheckpointError("checkpoint is truncated");
        std::vector<double> data(rows * cols);
        for (auto& v : data) v = rd.get_double();
        Tensor2 value(rows, cols, std::move(data));
        if (name == kChecksumName) {
            auto stored = unpack_u64(value);
            if (stored.size() != 1 || stored[0] != fnv1a64(bytes.substr(0, record_start)))
                throw CheckpointError("checkpoint checksum mismatch (file corrupted or tampered)");
            if (!rd.done()) throw CheckpointError("data after checkpoint checksum");
            checksum_seen = true;
            break;
        }
        ckpt.records.push_back({std::move(name), std::move(value)});
    }
    if (!checksum_seen) throw CheckpointError("checkpoint is truncated (no checksum record)");
    return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    auto bytes = serialize(ckpt);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

// --- Model records ----------------------------------------------------------

namespace {

void put_net(Checkpoint& ckpt, const std::string& prefix, const DenseNet& net) {
    Tensor2 acts(1, net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        acts(0, i) = static_cast<double>(static_cast<int>(net.layers[i].activation));
        ckpt.put(prefix + "." + std::to_string(i) + ".w", net.layers[i].weight);
        ckpt.put(prefix + "." + std::to_string(i) + ".b", net.layers[i].bias);
    }
    ckpt.put(prefix + ".acts", std::move(acts));
}

DenseNet get_net(const Checkpoint& ckpt, const std::string& prefix) {
    const Tensor2& acts = ckpt.get(prefix + ".acts");
    DenseNet net;
    for (std::size_t i = 0; i < acts.cols(); ++i) {
        int a = static_cast<int>(acts(0, i));
        if (a < 0 || a > static_cast<int>(Activation::identity))
            throw CheckpointError("unknown activation in " + prefix);
        net.layers.push_back({ckpt.get(prefix + "." + std::to_string(i) + ".w"),
                              ckpt.get(prefix + "." + std::to_string(i) + ".b"), static_cast<Activation>(a)});
    }
    try {
        validate(net);
    } catch (const ShapeError& e) {
        throw CheckpointError(prefix + ": " + e.what());
    }
    return net;
}

}  // namespace

void put_gan(Checkpoint& ckpt, const GanModel& model, const std::string& prefix) {
    ckpt.put(prefix + ".dims", pack_u64({model.z_dim, model.num_classes, model.feature_dim, model.code_width,
                                         static_cast<std::uint64_t>(model.trained_through + 1)}));
    put_net(ckpt, prefix + ".gen", model.generator);
    put_net(ckpt, prefix + ".trunk", model.trunk);
    put_net(ckpt, prefix + ".rf", model.head_rf);
    put_net(ckpt, prefix + ".cls", model.head_cls);
}

GanModel get_gan(const Checkpoint& ckpt, const std::string& prefix) {
    auto dims = unpack_u64(ckpt.get(prefix + ".dims"));
    if (dims.size() != 5) throw CheckpointError("malformed " + prefix + ".dims");
    GanModel m;
    m.z_dim = dims[0];
    m.num_classes = dims[1];
    m.feature_dim = dims[2];
    m.code_width = dims[3];
    m.trained_through = static_cast<long>(dims[4]) - 1;
    m.generator = get_net(ckpt, prefix + ".gen");
    m.trunk = get_net(ckpt, prefix + ".trunk");
    m.head_rf = get_net(ckpt, prefix + ".rf");
    m.head_cls = get_net(ckpt, prefix + ".cls");
    try {
        validate(m);
    } catch (const ShapeError& e) {
        throw CheckpointError(std::string("GAN record: ") + e.what());
    }
    return m;
}

void put_dannib(Checkpoint& ckpt, const DannIbModel& model, const std::string& prefix) {
    ckpt.put(prefix + ".dims", pack_u64({static_cast<std::uint64_t>(model.mode), model.latent_dim,
                                         model.num_classes, model.feature_dim}));
    put_net(ckpt, prefix + ".enc", model.encoder);
    put_net(ckpt, prefix + ".task", model.head_task);
    put_net(ckpt, prefix + ".dom", model.head_dom);
}

DannIbModel get_dannib(const Checkpoint& ckpt, const std::string& prefix) {
    auto dims = unpack_u64(ckpt.get(prefix + ".dims"));
    if (dims.size() != 4 || dims[0] > static_cast<std::uint64_t>(DannMode::dann_ib))
        throw CheckpointError("malformed " + prefix + ".dims");
    DannIbModel m;
    m.mode = static_cast<DannMode>(dims[0]);
    m.latent_dim = dims[1];
    m.num_classes = dims[2];
    m.feature_dim = dims[3];
    m.encoder = get_net(ckpt, prefix + ".enc");
    m.head_task = get_net(ckpt, prefix + ".task");
    m.head_dom = get_net(ckpt, prefix + ".dom");
    try {
        validate(m);
    } catch (const ShapeError& e) {
        throw CheckpointError(std::string("adaptation model record: ") + e.what());
    }
    return m;
}

}  // namespace frida
