#include "frida/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "frida/errors.hpp"

namespace frida {

std::vector<double> encode_domain(std::size_t tau, std::size_t width) {
    if (width < 64 && tau >= (std::size_t{1} << width))
        throw CapacityError("domain " + std::to_string(tau) + " does not fit in a " + std::to_string(width) +
                            "-bit domain code; configure a larger domain width");
    std::vector<double> code(width, 0.0);
    for (std::size_t b = 0; b < width && b < 64; ++b) code[b] = static_cast<double>((tau >> b) & 1U);
    return code;
}

DomainId DomainId::make(std::size_t tau, std::size_t width) { return {tau, encode_domain(tau, width)}; }

std::vector<double> one_hot(int y, std::size_t num_classes) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
        throw IndexError("class " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    std::vector<double> v(num_classes, 0.0);
    v[static_cast<std::size_t>(y)] = 1.0;
    return v;
}

FeatureDataset FeatureDataset::unlabeled() const {
    FeatureDataset out = *this;
    out.labels.reset();
    return out;
}

FeatureDataset FeatureDataset::subset(std::span<const std::size_t> indices) const {
    FeatureDataset out;
    out.features = take_rows(features, indices);
    out.domain = domain;
    out.num_classes = num_classes;
    if (labels) {
        std::vector<int> l;
        l.reserve(indices.size());
        for (auto i : indices) l.push_back((*labels)[i]);
        out.labels = std::move(l);
    }
    return out;
}

void validate(const FeatureDataset& ds) {
    if (ds.size() == 0) throw ContractError("dataset is empty");
    if (!ds.features.all_finite()) throw ContractError("dataset contains non-finite features");
    if (ds.labels) {
        if (ds.labels->size() != ds.size()) throw ContractError("label count does not match sample count");
        for (int y : *ds.labels)
            if (y < 0 || static_cast<std::size_t>(y) >= ds.num_classes)
                throw ContractError("label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(ds.num_classes) + ")");
    }
}

std::vector<std::size_t> class_histogram(const FeatureDataset& ds) {
    std::vector<std::size_t> h(ds.num_classes, 0);
    if (ds.labels)
        for (int y : *ds.labels) ++h.at(static_cast<std::size_t>(y));
    return h;
}

namespace {

std::size_t test_count(std::size_t n, double fraction) {
    auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
    return std::min(k, n - 1);
}

}  // namespace

Split split(const FeatureDataset& ds, double test_fraction, RngStream& rng) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ContractError("test fraction must lie in (0, 1)");
    if (ds.size() < 2) throw ContractError("split needs at least two samples");

    std::vector<std::vector<std::size_t>> groups;
    if (ds.labels) {
        groups.resize(ds.num_classes);
        for (std::size_t i = 0; i < ds.size(); ++i) groups[static_cast<std::size_t>((*ds.labels)[i])].push_back(i);
    } else {
        groups.emplace_back(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) groups[0][i] = i;
    }

    Split out;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& members = groups[g];
        if (members.empty()) continue;
        if (members.size() == 1) {
            out.warnings.push_back("class " + std::to_string(g) + " has a single sample; kept in train");
            train_idx.push_back(members[0]);
            continue;
        }
        shuffle(members, rng);
        std::size_t k = test_count(members.size(), test_fraction);
        test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
        train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    out.train = ds.subset(train_idx);
    out.test = ds.subset(test_idx);
    return out;
}

// --- Text format ----------------------------------------------------------

void write_dataset(const FeatureDataset& ds, std::ostream& out) {
    out << "FRIDA-DS v1 n=" << ds.size() << " d=" << ds.dim() << " C=" << ds.num_classes
        << " domain=" << ds.domain << '\n';
    char buf[64];
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (double v : ds.features.row(r)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ' ';
        }
        out << (ds.labels ? (*ds.labels)[r] : -1) << '\n';
    }
}

void write_dataset(const FeatureDataset& ds, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_dataset(ds, f);
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

namespace {

template <class T>
T parse_number(std::string_view token, std::size_t line, const char* what) {
    T value{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw ParseError(std::string("bad ") + what + " '" + std::string(token) + "'", line);
    return value;
}

std::size_t header_field(const std::string& token, const std::string& key, std::size_t line) {
    if (token.rfind(key + "=", 0) != 0) throw ParseError("malformed header, expected " + key + "=", line);
    return parse_number<std::size_t>(std::string_view(token).substr(key.size() + 1), line, key.c_str());
}

}  // namespace

FeatureDataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    std::istringstream hs(line);
    std::string magic, version, tn, td, tc, tdom, extra;
    hs >> magic >> version >> tn >> td >> tc >> tdom;
    if (magic != "FRIDA-DS" || version != "v1" || tdom.empty() || (hs >> extra))
        throw ParseError("malformed header", 1);
    std::size_t n = header_field(tn, "n", 1);
    std::size_t d = header_field(td, "d", 1);
    std::size_t num_classes = header_field(tc, "C", 1);
    std::size_t domain = header_field(tdom, "domain", 1);
    if (n == 0 || d == 0) throw ParseError("header declares an empty dataset", 1);

    std::vector<double> data;
    data.reserve(n * d);
    std::vector<int> labels;
    labels.reserve(n);
    std::size_t lineno = 1;
    while (labels.size() < n && std::getline(in, line)) {
        ++lineno;
        std::vector<std::string_view> tokens;
        std::string_view rest(line);
        while (!rest.empty()) {
            auto start = rest.find_first_not_of(" \t\r");
            if (start == std::string_view::npos) break;
            rest.remove_prefix(start);
            auto end = rest.find_first_of(" \t\r");
            tokens.push_back(rest.substr(0, end));
            if (end == std::string_view::npos) break;
            rest.remove_prefix(end);
        }
        if (tokens.empty()) continue;
        if (tokens.size() != d + 1)
            throw ParseError("expected " + std::to_string(d) + " values and a label, got " +
                                 std::to_string(tokens.size()) + " fields",
                             lineno);
        for (std::size_t j = 0; j < d; ++j) data.push_back(parse_number<double>(tokens[j], lineno, "float"));
        int y = parse_number<int>(tokens[d], lineno, "label");
        if (y < -1 || (y >= 0 && static_cast<std::size_t>(y) >= num_classes))
            throw ParseError("label " + std::to_string(y) + " out of range", lineno);
        labels.push_back(y);
    }
    if (labels.size() != n)
        throw ParseError("expected " + std::to_string(n) + " rows, found " + std::to_string(labels.size()),
                         lineno);
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") != std::string::npos) throw ParseError("trailing data", lineno);
    }

    FeatureDataset ds;
    ds.features = Tensor2(n, d, std::move(data));
    ds.domain = domain;
    ds.num_classes = num_classes;
    std::size_t missing = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), -1));
    if (missing == 0) {
        ds.labels = std::move(labels);
    } else if (missing != n) {
        throw ParseError("mix of labeled and unlabeled rows", lineno);
    }
    return ds;
}

FeatureDataset read_dataset(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    return read_dataset(f);
}

// --- Pooling --------------------------------------------------------------

ConditionedSet ConditionedSet::subset(std::span<const std::size_t> indices) const {
    ConditionedSet out;
    out.features = take_rows(features, indices);
    out.labels.reserve(indices.size());
    out.taus.reserve(indices.size());
    for (auto i : indices) {
        out.labels.push_back(labels[i]);
        out.taus.push_back(taus[i]);
    }
    return out;
}

ConditionedSet pool(const std::vector<const FeatureDataset*>& parts) {
    ConditionedSet out;
    std::vector<const Tensor2*> feats;
    for (const auto* p : parts) {
        if (!p) throw ContractError("pool: null dataset");
        if (!p->labels) throw ContractError("pool: every part must be labeled");
        feats.push_back(&p->features);
        out.labels.insert(out.labels.end(), p->labels->begin(), p->labels->end());
        out.taus.insert(out.taus.end(), p->size(), p->domain);
    }
    out.features = vconcat(feats);
    return out;
}

FeatureDataset concat_labeled(const std::vector<const FeatureDataset*>& parts) {
    if (parts.empty()) throw ContractError("concat_labeled: nothing to concatenate");
    FeatureDataset out;
    std::vector<const Tensor2*> feats;
    std::vector<int> labels;
    for (const auto* p : parts) {
        if (!p) throw ContractError("concat_labeled: null dataset");
        if (!p->labels) throw ContractError("concat_labeled: every part must be labeled");
        feats.push_back(&p->features);
        labels.insert(labels.end(), p->labels->begin(), p->labels->end());
    }
    out.features = vconcat(feats);
    out.labels = std::move(labels);
    out.domain = parts.front()->domain;
    out.num_classes = parts.front()->num_classes;
    return out;
}

}  // namespace frida
