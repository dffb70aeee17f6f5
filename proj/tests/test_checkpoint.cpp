#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "frida/checkpoint.hpp"
#include "frida/config.hpp"
#include "frida/errors.hpp"

using namespace frida;

namespace {

Checkpoint sample_checkpoint() {
    RngStream rng(1);
    Checkpoint c;
    c.component = "gan";
    c.tau = 2;
    c.put("a", gauss_sample(rng, 3, 4));
    c.put("b", Tensor2::from_rows({{1.0 / 3.0, -0.0, 5e-324}}));
    c.put("empty", Tensor2(0, 3));
    return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    Checkpoint c = sample_checkpoint();
    std::string bytes = serialize(c);
    Checkpoint back = parse_checkpoint(bytes);
    CHECK(back.component == "gan");
    CHECK(back.tau == 2);
    CHECK(back.get("a") == c.get("a"));
    CHECK(back.get("b") == c.get("b"));
    CHECK(std::signbit(back.get("b")(0, 1)));
    CHECK(serialize(back) == bytes);
    CHECK_THROWS_AS(back.get("missing"), CheckpointError);
    CHECK(bytes.rfind("FRIDA-CKPT v1 gan tau=2\n", 0) == 0);
}

TEST_CASE("every single-byte tamper is detected") {
    std::string bytes = serialize(sample_checkpoint());
    const std::size_t header = bytes.find('\n') + 1;
    for (std::size_t i = header; i < bytes.size(); i += 3) {
        std::string bad = bytes;
        bad[i] = static_cast<char>(bad[i] ^ 0x10);
        CHECK_THROWS_AS(parse_checkpoint(bad), CheckpointError);
    }
}

TEST_CASE("truncation, foreign files and other versions are rejected") {
    std::string bytes = serialize(sample_checkpoint());
    for (std::size_t n : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
        CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, n)), CheckpointError);
    std::string v2 = bytes;
    v2.replace(v2.find("v1"), 2, "v2");
    CHECK_THROWS_AS(parse_checkpoint(v2), CheckpointError);
    CHECK_THROWS_AS(parse_checkpoint("hello\n"), CheckpointError);
    CHECK_THROWS_AS(parse_checkpoint(bytes + "x"), CheckpointError);
}

TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("integers and text survive packing") {
    std::vector<std::uint64_t> v{0, 1, 0xffffffffffffffffULL, 0x123456789abcdefULL};
    CHECK(unpack_u64(pack_u64(v)) == v);
    CHECK(unpack_text(pack_text("seed=3\nbench.C=4\n")) == "seed=3\nbench.C=4\n");
}

TEST_CASE("models round trip through checkpoints and files") {
    RngStream rng(2);
    GanArchitecture ga;
    ga.z_dim = 3;
    ga.generator_hidden = {5};
    ga.trunk_widths = {4, 3};
    GanModel g = GanModel::create(ga, 3, 4, 3, rng);
    g.trained_through = 1;
    DannArchitecture da;
    da.encoder_hidden = {5};
    da.latent_dim = 2;
    DannIbModel d = DannIbModel::create(da, DannMode::dann_multiclass, 3, 4, rng);
    Checkpoint c;
    c.component = "state";
    put_gan(c, g);
    put_dannib(c, d);
    auto dir = std::filesystem::temp_directory_path() / "frida_ckpt_test";
    std::filesystem::create_directories(dir);
    write_checkpoint(c, dir / "m.ckpt");
    Checkpoint back = read_checkpoint(dir / "m.ckpt");
    CHECK(get_gan(back) == g);
    CHECK(get_dannib(back) == d);
    CHECK(get_dannib(back).mode == DannMode::dann_multiclass);
    CHECK_THROWS_AS(get_dannib(back, "nope"), CheckpointError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("config parsing") {
    RunConfig c = parse_run_config("# comment\nseed = 7\npreset=desk\nda.epochs=3\nbench.C=3\n");
    CHECK(c.seed == 7);
    CHECK(c.da_train.epochs == 3);  // preset applied first
    CHECK(c.gan_arch.z_dim == 32);
    CHECK(c.benchmark.size() == 1);
    CHECK_THROWS_AS(parse_run_config("bogus=1\n"), SpecError);
    CHECK_THROWS_AS(parse_run_config("da.epochs=x\n"), SpecError);
    try {
        parse_run_config("seed=1\n\nno equals sign\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 3);
    }
}

TEST_CASE("config defaults follow the published protocol") {
    RunConfig c;
    CHECK(c.gan_train.adam.lr == 0.001);
    CHECK(c.gan_train.adam.beta1 == 0.5);
    CHECK(c.gan_train.adam.beta2 == 0.9);
    CHECK(c.gan_train.batch_size == 64);
    CHECK(c.gan_arch.z_dim == 2000);
    CHECK(c.da_arch.latent_dim == 256);
    CHECK(c.threshold == 0.95);
    CHECK(c.replay_per_class == 100);
    CHECK(c.code_width == 3);
    CHECK(c.test_fraction == 0.3);
    CHECK(c.da_train.lambda_max == 1.0);
}

TEST_CASE("canonical text reparses to the same config") {
    RunConfig c = parse_run_config("preset=desk\nseed=9\nda.mode=dann_binary\ngan.loss=literal\nbench.T=1\n");
    RunConfig back = parse_run_config(c.canonical());
    CHECK(back.canonical() == c.canonical());
    CHECK(back.hash() == c.hash());
    RunConfig other = c;
    other.seed = 10;
    CHECK(other.hash() != c.hash());
    apply_paper_literal(other);
    CHECK(other.da_train.beta == 1.0);
    CHECK(other.gan_train.generator_loss == GeneratorLoss::literal);
}

TEST_CASE("config validation") {
    RunConfig c;
    CHECK_NOTHROW(validate(c));
    c.threshold = 0;
    CHECK_THROWS_AS(validate(c), SpecError);
    c = RunConfig{};
    c.da_train.lambda_max = 2;
    CHECK_THROWS_AS(validate(c), SpecError);
    c = RunConfig{};
    c.manifest = "/nonexistent/manifest.txt";
    CHECK_THROWS_AS(validate(c), SpecError);
}
