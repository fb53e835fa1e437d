#include <doctest.h>

#include <cmath>

#include "cuniform/dynamics.hpp"
#include "cuniform/rng.hpp"

using namespace cuniform;

namespace {
VehicleParams default_params() { return VehicleParams{1.0, 0.33, 0.2, kPi / 6.0}; }
}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(kPi + 0.1) == doctest::Approx(-kPi + 0.1));
    CHECK(wrap_angle(3.0 * kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(0.0) == 0.0);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform(-50.0, 50.0);
        const double w = wrap_angle(a);
        CHECK(w > -kPi);
        CHECK(w <= kPi);
        CHECK(std::abs(std::remainder(w - a, 2.0 * kPi)) < 1e-9);
    }
}

TEST_CASE("step: zero steering drives straight") {
    const auto p = default_params();
    const State s1 = step(State{0, 0, 0}, ControlInput{0.0}, p);
    CHECK(s1.x == doctest::Approx(0.2));
    CHECK(s1.y == doctest::Approx(0.0));
    CHECK(s1.psi == 0.0);

    const State s2 = step(State{0, 0, kPi / 2}, ControlInput{0.0}, p);
    CHECK(s2.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s2.y == doctest::Approx(0.2));
    CHECK(s2.psi == doctest::Approx(kPi / 2));
}

TEST_CASE("step: heading update matches the scalar oracle") {
    const auto p = default_params();
    const State s = step(State{0, 0, 0}, ControlInput{0.3}, p);
    // hand evaluation of the forward-Euler update
    const double psi_oracle = 1.0 / 0.33 * std::tan(0.3) * 0.2;
    CHECK(s.x == doctest::Approx(0.2));
    CHECK(s.y == doctest::Approx(0.0));
    CHECK(s.psi == doctest::Approx(psi_oracle).epsilon(1e-12));
    CHECK(s.psi == doctest::Approx(0.18748).epsilon(1e-4));
}

TEST_CASE("step: translation equivariance in position") {
    const auto p = default_params();
    Rng rng(11);
    for (int i = 0; i < 50; ++i) {
        const State a{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-3, 3)};
        const State b{a.x + 0.625, a.y - 0.25, a.psi};
        const ControlInput u{rng.uniform(-p.delta_max, p.delta_max)};
        const State sa = step(a, u, p);
        const State sb = step(b, u, p);
        CHECK(sb.x - sa.x == doctest::Approx(0.625).epsilon(1e-12));
        CHECK(sb.y - sa.y == doctest::Approx(-0.25).epsilon(1e-12));
        CHECK(sb.psi == sa.psi);
    }
}

TEST_CASE("step: repeated max steering never leaves (-pi, pi]") {
    const auto p = default_params();
    State s{0, 0, 0};
    for (int i = 0; i < 200; ++i) {
        s = step(s, ControlInput{p.delta_max}, p);
        CHECK(s.psi > -kPi);
        CHECK(s.psi <= kPi);
    }
}

TEST_CASE("rollout: single zero input from origin") {
    const auto p = default_params();
    const Trajectory traj = rollout(State{}, ControlSequence{ControlInput{0.0}}, p);
    REQUIRE(traj.size() == 2);
    CHECK(traj[0].x == 0.0);
    CHECK(traj[1].x == doctest::Approx(0.2));
    CHECK(traj[1].y == doctest::Approx(0.0));
}

TEST_CASE("rollout equals folding step over the sequence") {
    const auto p = default_params();
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        ControlSequence seq(1 + rng.uniform_int(12));
        for (auto& u : seq) u.delta = rng.uniform(-p.delta_max, p.delta_max);
        const State s0{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3)};
        const Trajectory traj = rollout(s0, seq, p);
        REQUIRE(traj.size() == seq.size() + 1);
        State s = s0;
        for (std::size_t t = 0; t < seq.size(); ++t) {
            s = step(s, seq[t], p);
            CHECK(traj[t + 1].x == s.x);
            CHECK(traj[t + 1].y == s.y);
            CHECK(traj[t + 1].psi == s.psi);
        }
    }
}

TEST_CASE("rollout: max-steer out and back returns to the initial heading") {
    const auto p = default_params();
    const int k = 7;
    ControlSequence seq;
    for (int i = 0; i < k; ++i) seq.push_back(ControlInput{p.delta_max});
    for (int i = 0; i < k; ++i) seq.push_back(ControlInput{-p.delta_max});
    const Trajectory traj = rollout(State{}, seq, p);
    CHECK(traj.back().psi == doctest::Approx(0.0).epsilon(1e-12));
    // heading peaks at the midpoint
    CHECK(traj[k].psi == doctest::Approx(k * (1.0 / 0.33) * std::tan(p.delta_max) * 0.2));
}

TEST_CASE("rollout_batch equals map(rollout) and preserves order") {
    const auto p = default_params();
    Rng rng(23);
    std::vector<ControlSequence> batch(8, ControlSequence(5));
    for (auto& seq : batch)
        for (auto& u : seq) u.delta = rng.uniform(-p.delta_max, p.delta_max);
    const auto out = rollout_batch(State{}, batch, p);
    REQUIRE(out.size() == batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Trajectory single = rollout(State{}, batch[i], p);
        REQUIRE(out[i].size() == single.size());
        for (std::size_t t = 0; t < single.size(); ++t) {
            CHECK(out[i][t].x == single[t].x);
            CHECK(out[i][t].psi == single[t].psi);
        }
    }

    std::vector<ControlSequence> permuted{batch[3], batch[0], batch[7]};
    const auto out_perm = rollout_batch(State{}, permuted, p);
    CHECK(out_perm[0].back().x == out[3].back().x);
    CHECK(out_perm[1].back().x == out[0].back().x);
    CHECK(out_perm[2].back().x == out[7].back().x);
}

TEST_CASE("rollout_batch rejects mismatched lengths") {
    const auto p = default_params();
    std::vector<ControlSequence> batch{ControlSequence(3), ControlSequence(4)};
    CHECK_THROWS_AS(rollout_batch(State{}, batch, p), std::invalid_argument);
}

TEST_CASE("frame transforms invert each other") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const State frame{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3)};
        const State s{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3)};
        const State rel = world_to_frame(frame, s);
        const State back = frame_to_world(frame, rel);
        CHECK(back.x == doctest::Approx(s.x).epsilon(1e-12));
        CHECK(back.y == doctest::Approx(s.y).epsilon(1e-12));
        CHECK(wrap_angle(back.psi - s.psi) == doctest::Approx(0.0).epsilon(1e-12));
    }
}
