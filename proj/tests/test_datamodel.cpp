#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "frida/datamodel.hpp"
#include "frida/errors.hpp"

using namespace frida;

namespace {

FeatureDataset make_ds(std::size_t classes, std::size_t per_class, std::size_t d, std::uint64_t seed) {
    RngStream rng(seed);
    FeatureDataset ds;
    ds.num_classes = classes;
    ds.features = gauss_sample(rng, classes * per_class, d);
    std::vector<int> labels;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) labels.push_back(static_cast<int>(c));
    ds.labels = labels;
    return ds;
}

// Rows as sortable tuples, for multiset comparisons.
std::multiset<std::vector<double>> row_set(const FeatureDataset& ds) {
    std::multiset<std::vector<double>> s;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        auto row = ds.features.row(r);
        std::vector<double> v(row.begin(), row.end());
        v.push_back(ds.labels ? (*ds.labels)[r] : -1);
        s.insert(v);
    }
    return s;
}

}  // namespace

TEST_CASE("encode_domain is little-endian binary") {
    CHECK(encode_domain(0, 3) == std::vector<double>{0, 0, 0});
    CHECK(encode_domain(5, 3) == std::vector<double>{1, 0, 1});
    CHECK(encode_domain(6, 3) == std::vector<double>{0, 1, 1});
    CHECK_THROWS_AS(encode_domain(8, 3), CapacityError);
    CHECK_NOTHROW(encode_domain(8, 4));
}

TEST_CASE("encode_domain is injective below capacity") {
    std::set<std::vector<double>> seen;
    for (std::size_t t = 0; t < 16; ++t) seen.insert(encode_domain(t, 4));
    CHECK(seen.size() == 16);
    CHECK(DomainId::make(3, 3).code == encode_domain(3, 3));
}

TEST_CASE("one_hot") {
    CHECK(one_hot(0, 3) == std::vector<double>{1, 0, 0});
    CHECK(one_hot(2, 3) == std::vector<double>{0, 0, 1});
    CHECK_THROWS_AS(one_hot(3, 3), IndexError);
    CHECK_THROWS_AS(one_hot(-1, 3), IndexError);
}

TEST_CASE("split of 10 samples with fraction 0.3") {
    FeatureDataset ds = make_ds(1, 10, 2, 1);
    RngStream rng(3);
    Split s = split(ds, 0.3, rng);
    CHECK(s.test.size() == 3);
    CHECK(s.train.size() == 7);
    auto all = row_set(ds);
    auto tr = row_set(s.train), te = row_set(s.test);
    std::multiset<std::vector<double>> joined = tr;
    joined.insert(te.begin(), te.end());
    CHECK(joined == all);
    for (const auto& r : te) CHECK(tr.count(r) == 0);
}

TEST_CASE("split is deterministic and stratified") {
    FeatureDataset ds = make_ds(4, 10, 3, 2);
    RngStream a(9), b(9);
    Split s1 = split(ds, 0.3, a), s2 = split(ds, 0.3, b);
    CHECK(s1.train == s2.train);
    CHECK(s1.test == s2.test);
    std::map<int, int> per_class;
    for (int y : *s1.test.labels) ++per_class[y];
    CHECK(per_class.size() == 4);
    for (auto [c, n] : per_class) CHECK(n == 3);
}

TEST_CASE("split keeps a singleton class in train and warns") {
    FeatureDataset ds = make_ds(2, 5, 2, 4);
    (*ds.labels)[0] = 2;
    ds.num_classes = 3;
    RngStream rng(1);
    Split s = split(ds, 0.3, rng);
    CHECK(!s.warnings.empty());
    CHECK(std::count(s.train.labels->begin(), s.train.labels->end(), 2) == 1);
    CHECK(std::count(s.test.labels->begin(), s.test.labels->end(), 2) == 0);
}

TEST_CASE("split rejects bad arguments") {
    FeatureDataset ds = make_ds(1, 10, 2, 1);
    RngStream rng(1);
    CHECK_THROWS(split(ds, 0.0, rng));
    CHECK_THROWS(split(ds, 1.0, rng));
    CHECK_THROWS(split(make_ds(1, 1, 2, 1), 0.3, rng));
}

TEST_CASE("dataset text round trip is exact") {
    FeatureDataset ds = make_ds(3, 4, 5, 7);
    ds.features(0, 0) = 1.0 / 3.0;
    ds.features(1, 1) = -1e-300;
    ds.domain = 2;
    std::stringstream io;
    write_dataset(ds, io);
    FeatureDataset back = read_dataset(io);
    CHECK(back == ds);

    FeatureDataset u = ds.unlabeled();
    std::stringstream io2;
    write_dataset(u, io2);
    CHECK(io2.str().find(" -1\n") != std::string::npos);
    FeatureDataset ub = read_dataset(io2);
    CHECK(!ub.labeled());
    CHECK(ub == u);
}

TEST_CASE("read_dataset reports the offending line") {
    auto parse_line = [](const std::string& text) -> std::size_t {
        std::istringstream in(text);
        try {
            read_dataset(in);
        } catch (const ParseError& e) {
            return e.line_number;
        }
        return 0;
    };
    CHECK(parse_line("FRIDA-DS v1 n=2 d=2 C=2 domain=0\n1 2 0\n3 1\n") == 3);
    CHECK(parse_line("FRIDA-DS v1 n=2 d=2 C=2 domain=0\n1 2 0\n3 4 5\n") == 3);
    CHECK(parse_line("FRIDA-XX v1 n=2 d=2 C=2 domain=0\n") == 1);
    CHECK(parse_line("FRIDA-DS v1 n=3 d=2 C=2 domain=0\n1 2 0\n3 4 1\n") != 0);
    CHECK(parse_line("FRIDA-DS v1 n=1 d=2 C=2 domain=0\n1 x 0\n") == 2);
    CHECK(parse_line("FRIDA-DS v1 n=2 d=2 C=2 domain=0\n1 2 0\n3 4 -1\n") == 3);
}

TEST_CASE("validate rejects broken datasets") {
    FeatureDataset ds = make_ds(2, 3, 2, 1);
    CHECK_NOTHROW(validate(ds));
    FeatureDataset bad = ds;
    (*bad.labels)[0] = 2;
    CHECK_THROWS_AS(validate(bad), ContractError);
    bad = ds;
    bad.labels->pop_back();
    CHECK_THROWS_AS(validate(bad), ContractError);
}

TEST_CASE("pool tags samples with their domain") {
    FeatureDataset a = make_ds(2, 2, 3, 1), b = make_ds(2, 3, 3, 2);
    b.domain = 4;
    ConditionedSet p = pool({&a, &b});
    CHECK(p.size() == 10);
    CHECK(std::count(p.taus.begin(), p.taus.end(), 4u) == 6);
    CHECK(p.features.row(4)[0] == b.features(0, 0));
    CHECK_THROWS(pool({&a, nullptr}));
    FeatureDataset u = a.unlabeled();
    CHECK_THROWS_AS(pool({&u}), ContractError);
    FeatureDataset cat = concat_labeled({&a, &b});
    CHECK(cat.size() == 10);
    CHECK(cat.domain == 0);
}
