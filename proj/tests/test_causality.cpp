#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "ddl/causality/rng.hpp"
#include "ddl/causality/tape.hpp"
#include "ddl/causality/vclock.hpp"
#include "ddl/errors.hpp"

using namespace ddl;
using causality::VectorClock;

TEST_CASE("vclock merge: identity, componentwise max, commutative, idempotent") {
    VectorClock x;
    x.advance(0, 10);
    x.advance(2, 8);
    VectorClock empty;
    CHECK(VectorClock::merged(x, empty) == x);

    VectorClock y;
    y.advance(0, 9);
    y.advance(2, 9);
    auto merged = VectorClock::merged(x, y);
    CHECK(merged.get(0) == 10);
    CHECK(merged.get(2) == 9);

    rng::Stream s(3, "vclock");
    for (int trial = 0; trial < 50; ++trial) {
        VectorClock a, b;
        for (int w = 0; w < 4; ++w) {
            a.advance(static_cast<causality::WorkerId>(w), s.next_below(20));
            b.advance(static_cast<causality::WorkerId>(w), s.next_below(20));
        }
        auto ab = VectorClock::merged(a, b);
        auto ba = VectorClock::merged(b, a);
        CHECK(ab == ba);
        CHECK(VectorClock::merged(ab, a) == ab);
        for (int w = 0; w < 4; ++w)
            CHECK(ab.get(w) == std::max(a.get(w), b.get(w)));
        CHECK(a.leq(ab));
        CHECK(b.leq(ab));
    }
}

TEST_CASE("advance never lowers an entry") {
    VectorClock vc;
    vc.advance(1, 5);
    vc.advance(1, 3);
    CHECK(vc.get(1) == 5);
}

TEST_CASE("tape records, saves and loads losslessly") {
    causality::TapeHeader header;
    header.config_hash = 0xDEADBEEF;
    header.seed = 17;
    header.learners = 2;
    header.quorum = 1;
    header.sync_interval = 4;
    header.fragments = 4;
    header.overlap = 2;

    std::string path = "/tmp/ddl_test_tape.jsonl";
    {
        causality::TapeRecorder rec(header, path);
        causality::TapeEvent step;
        step.kind = causality::EventKind::kStep;
        step.worker = 0;
        step.local_step = 1;
        step.tokens = 64;
        step.vclock.advance(0, 1);
        rec.record(step);

        causality::TapeEvent close;
        close.kind = causality::EventKind::kQuorumClose;
        close.worker = 2;
        close.local_step = 1;
        close.round = 1;
        close.fragment = 0;
        close.admitted = {0, 1};
        rec.record(close);
        CHECK(rec.tape().events.size() == 2);
        CHECK(rec.tape().events[0].seq == 0);
        CHECK(rec.tape().events[1].seq == 1);
    }

    auto loaded = causality::Tape::load(path);
    CHECK(loaded.header.config_hash == header.config_hash);
    CHECK(loaded.header.learners == 2);
    REQUIRE(loaded.events.size() == 2);
    CHECK(loaded.events[0].kind == causality::EventKind::kStep);
    CHECK(loaded.events[0].tokens == 64);
    CHECK(loaded.events[0].vclock.get(0) == 1);
    CHECK(loaded.events[1].admitted == std::vector<causality::WorkerId>{0, 1});
    std::remove(path.c_str());
}

TEST_CASE("unknown event kinds are a replay integrity error") {
    CHECK_THROWS_AS(causality::event_kind_from_name("quantum_leap"), ReplayIntegrityError);
    CHECK(causality::event_kind_from_name("fragment_apply") ==
          causality::EventKind::kFragmentApply);
}

TEST_CASE("named rng streams are independent and counter-stable") {
    rng::Stream a1(7, "alpha", 0);
    rng::Stream a2(7, "alpha", 0);
    rng::Stream b(7, "beta", 0);
    rng::Stream a_other_worker(7, "alpha", 1);
    std::vector<double> va, vb;
    for (int i = 0; i < 8; ++i) {
        va.push_back(a1.next_unit());
        vb.push_back(b.next_unit());
    }
    for (int i = 0; i < 8; ++i) CHECK(a2.next_unit() == va[i]);
    CHECK(va != vb);
    CHECK(a_other_worker.next_unit() != va[0]);
}

TEST_CASE("distribution sanity: poisson mean and exp-weibull median") {
    rng::Stream s(21, "dist");
    double lambda = 0.7;
    std::uint64_t total = 0;
    int n = 20000;
    for (int i = 0; i < n; ++i) total += s.next_poisson(lambda);
    CHECK(static_cast<double>(total) / n == doctest::Approx(lambda).epsilon(0.03));

    // median of the exponentiated Weibull at the configured scale
    std::vector<double> draws(20001);
    for (auto& d : draws) d = s.next_exp_weibull(2.0, 1.5, 523.17);
    std::nth_element(draws.begin(), draws.begin() + draws.size() / 2, draws.end());
    CHECK(draws[draws.size() / 2] == doctest::Approx(600.0).epsilon(0.05));
}
