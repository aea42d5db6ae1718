#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ddl/config.hpp"
#include "ddl/errors.hpp"

using namespace ddl;

TEST_CASE("config parses key=value text with comments and defaults") {
    auto cfg = ExperimentConfig::parse_text(R"(
# an experiment
task.family = mlp
runtime.learners = 4
runtime.quorum = 2
runtime.sync_interval = 8
runtime.fragments = 8
runtime.rounds = 64
merge.compression = int4
chaos.enabled = true
chaos.n_chip = 1200000
chaos.speeds = 1.0, 1.18, 1.0, 1.18
seed = 42
)");
    CHECK(cfg.learners == 4);
    CHECK(cfg.quorum == 2);
    CHECK(cfg.merge.compression == agg::Compression::kInt4);
    CHECK(cfg.chaos_enabled);
    CHECK(cfg.chaos.learner_speed == std::vector<double>{1.0, 1.18, 1.0, 1.18});
    CHECK(cfg.seed == 42);
    CHECK(cfg.alpha == 0.0);            // Appendix-style default
    CHECK(cfg.outer.lr == 0.7);
    CHECK(cfg.outer.momentum == 0.9);
}

TEST_CASE("config rejects unknown keys and bad values with field names") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("runtime.quietness = 3\n"),
                         doctest::Contains("runtime.quietness"), ConfigError);
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("runtime.rounds = soon\n"),
                         doctest::Contains("runtime.rounds"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse_text("bad line\n"), ConfigError);
}

TEST_CASE("cross-module validation: P <= H, quorum bounds, chip consistency") {
    CHECK_THROWS_AS(
        ExperimentConfig::parse_text("runtime.fragments = 9\nruntime.sync_interval = 8\n"),
        ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse_text("runtime.quorum = 9\nruntime.learners = 4\n"),
                    ConfigError);
    CHECK_THROWS_AS(
        ExperimentConfig::parse_text("chaos.enabled = true\nchaos.n_chip = 100\n"),
        ConfigError);
}

TEST_CASE("hash is stable, order independent, and sensitive to every field") {
    auto a = ExperimentConfig::parse_text("seed = 7\nruntime.learners = 2\n");
    auto b = ExperimentConfig::parse_text("runtime.learners = 2\nseed = 7\n");
    CHECK(a.hash() == b.hash());
    auto c = ExperimentConfig::parse_text("runtime.learners = 2\nseed = 8\n");
    CHECK(a.hash() != c.hash());
    auto d = ExperimentConfig::parse_text("runtime.learners = 2\nseed = 7\ninner.lr = 0.002\n");
    CHECK(a.hash() != d.hash());
}

TEST_CASE("engine config carries the plan, header, and chaos calibration") {
    auto cfg = ExperimentConfig::parse_text(R"(
runtime.learners = 2
runtime.fragments = 4
runtime.sync_interval = 4
chaos.repair_median_s = 600
)");
    auto ec = cfg.engine_config();
    CHECK(ec.plan.fragment_count() == 4);
    CHECK(ec.plan.offset_of(3) == 3);
    CHECK(ec.tape_header.config_hash == cfg.hash());
    CHECK(ec.task.shards == 2);
    // exponentiated-Weibull scale reproducing the 10-minute median
    CHECK(ec.chaos.repair_scale_s == doctest::Approx(523.17).epsilon(1e-3));
}

TEST_CASE("scavenging schedules parse learner@seconds lists") {
    auto cfg = ExperimentConfig::parse_text(
        "runtime.learners = 6\nruntime.joins = 4@12.5; 5@30\nruntime.leaves = 5@60\n");
    auto ec = cfg.engine_config();
    REQUIRE(ec.joins.size() == 2);
    CHECK(ec.joins[0] == std::pair<std::uint32_t, double>{4, 12.5});
    CHECK(ec.joins[1] == std::pair<std::uint32_t, double>{5, 30.0});
    REQUIRE(ec.leaves.size() == 1);
    CHECK(ec.leaves[0].first == 5);
}
