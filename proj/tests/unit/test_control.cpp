#include <doctest.h>

#include <cmath>
#include <limits>

#include "cuniform/control.hpp"

using namespace cuniform;

namespace {

VehicleParams default_params() { return VehicleParams{1.0, 0.33, 0.2, kPi / 6.0}; }

TrajectoryBatch batch_from(const std::vector<ControlSequence>& seqs, const State& s0,
                           const VehicleParams& vp) {
    TrajectoryBatch b;
    b.sequences = seqs;
    b.trajectories = rollout_batch(s0, seqs, vp);
    return b;
}

std::vector<double> weights_of(const std::vector<double>& costs, double lambda) {
    MppiConfig cfg;
    cfg.lambda = lambda;
    return mppi_weights(costs, {}, {}, cfg).first;
}

}  // namespace

TEST_CASE("mppi_weights: uniform for equal costs, concentrated under dominance") {
    const auto w_eq = weights_of({2.0, 2.0, 2.0, 2.0}, 0.5);
    for (double w : w_eq) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));

    const auto w_dom = weights_of({0.0, 1e9}, 0.5);
    CHECK(w_dom[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w_dom[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("mppi_weights: hand-computed example at lambda = 0.5") {
    const auto w = weights_of({0.0, 1.0}, 0.5);
    // exp(0) = 1, exp(-2) = 0.135335..., normalized
    CHECK(w[0] == doctest::Approx(0.88080).epsilon(1e-4));
    CHECK(w[1] == doctest::Approx(0.11920).epsilon(1e-4));
}

TEST_CASE("mppi_weights: normalization, shift invariance, temperature limits") {
    const std::vector<double> costs{3.0, 1.0, 4.5, 1.2, 9.0};
    const auto w = weights_of(costs, 0.7);
    double sum = 0.0;
    for (double v : w) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);

    // min-subtraction keeps weights invariant under a constant cost shift (up
    // to the rounding of the shifted inputs themselves)
    std::vector<double> shifted = costs;
    for (double& c : shifted) c += 123.456;
    const auto w2 = weights_of(shifted, 0.7);
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(w[i] == doctest::Approx(w2[i]).epsilon(1e-12));

    const auto w_hot = weights_of(costs, 1e9);
    for (double v : w_hot) CHECK(v == doctest::Approx(0.2).epsilon(1e-6));

    const auto w_cold = weights_of(costs, 1e-3);
    CHECK(w_cold[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("mppi_weights: infinite costs") {
    const double inf = std::numeric_limits<double>::infinity();
    MppiConfig cfg;
    const auto [w, flagged] = mppi_weights({inf, inf, inf}, {}, {}, cfg);
    CHECK(flagged);
    for (double v : w) CHECK(v == doctest::Approx(1.0 / 3.0));

    const auto [w2, flagged2] = mppi_weights({1.0, inf}, {}, {}, cfg);
    CHECK(!flagged2);
    CHECK(w2[0] == doctest::Approx(1.0));
    CHECK(w2[1] == 0.0);
}

TEST_CASE("mppi_update: single sample, equal weights, convex combination") {
    const auto vp = default_params();
    MppiConfig cfg;
    cfg.lambda = 0.5;

    ControlSequence a(3), b(3);
    for (int t = 0; t < 3; ++t) {
        a[static_cast<std::size_t>(t)].delta = 0.1;
        b[static_cast<std::size_t>(t)].delta = -0.3;
    }

    const auto single = mppi_update(ControlSequence(3), batch_from({a}, State{}, vp), {5.0}, cfg, vp);
    for (int t = 0; t < 3; ++t) CHECK(single.optimal_sequence[static_cast<std::size_t>(t)].delta == 0.1);
    CHECK(single.min_cost == 5.0);

    const auto equal = mppi_update(ControlSequence(3), batch_from({a, b}, State{}, vp), {2.0, 2.0}, cfg, vp);
    for (int t = 0; t < 3; ++t)
        CHECK(equal.optimal_sequence[static_cast<std::size_t>(t)].delta == doctest::Approx(-0.1));

    const auto mix = mppi_update(ControlSequence(3), batch_from({a, b}, State{}, vp), {0.0, 1.0}, cfg, vp);
    const double expected = 0.8808 * 0.1 + 0.1192 * (-0.3);
    for (int t = 0; t < 3; ++t)
        CHECK(mix.optimal_sequence[static_cast<std::size_t>(t)].delta ==
              doctest::Approx(expected).epsilon(1e-3));
    double wsum = 0.0;
    for (double w : mix.weights) wsum += w;
    CHECK(std::abs(wsum - 1.0) < 1e-12);
}

TEST_CASE("select_nominal: argmin, ties, single candidate") {
    const auto vp = default_params();
    std::vector<ControlSequence> seqs(3, ControlSequence(2));
    seqs[0][0].delta = 0.1;
    seqs[1][0].delta = 0.2;
    seqs[2][0].delta = 0.3;
    const auto batch = batch_from(seqs, State{}, vp);

    Rng rng(1);
    CHECK(select_nominal(batch, {5.0, 3.0, 4.0}, rng).first == 1);

    const auto single = batch_from({seqs[0]}, State{}, vp);
    CHECK(select_nominal(single, {9.0}, rng).first == 0);

    // ties within tolerance are drawn uniformly
    int picked0 = 0, picked1 = 0;
    Rng rng2(2);
    const int trials = 4000;
    for (int i = 0; i < trials; ++i) {
        const int pick = select_nominal(batch, {3.0, 3.0, 7.0}, rng2).first;
        if (pick == 0) ++picked0;
        if (pick == 1) ++picked1;
    }
    CHECK(picked0 + picked1 == trials);
    const double sigma = std::sqrt(trials * 0.25);
    CHECK(std::abs(picked0 - trials / 2.0) < 4.5 * sigma);
}

TEST_CASE("receding_shift") {
    ControlSequence seq(3);
    seq[0].delta = 1.0;
    seq[1].delta = 2.0;
    seq[2].delta = 3.0;
    const auto shifted = receding_shift(seq);
    REQUIRE(shifted.size() == 3);
    CHECK(shifted[0].delta == 2.0);
    CHECK(shifted[1].delta == 3.0);
    CHECK(shifted[2].delta == 3.0);

    const auto one = receding_shift(ControlSequence{ControlInput{0.5}});
    REQUIRE(one.size() == 1);
    CHECK(one[0].delta == 0.5);
}

namespace {

// obstacle-free quadratic goal cost used by the pipeline tests
TrajectoryCostFn quadratic_goal(double gx, double gy) {
    return [gx, gy](const Trajectory& traj) {
        double j = 0.0;
        for (const auto& s : traj) {
            const double dx = s.x - gx, dy = s.y - gy;
            j += std::sqrt(dx * dx + dy * dy);
        }
        return j;
    };
}

}  // namespace

TEST_CASE("cu_mppi_step: beats the zero-control rollout on a goal-ahead task") {
    const auto vp = default_params();
    PolicyConfig pc;
    pc.hidden = 8;
    PolicyNetwork net(pc, 1);  // uniform policy is enough for a sanity gain
    const ActionSet actions = ActionSet::uniform_spread(45, vp.delta_max);
    MppiConfig cfg;
    cfg.n_samples = 300;
    cfg.horizon = 10;
    cfg.sigma = 0.1;

    const auto cost_fn = quadratic_goal(2.0, 1.0);
    Rng rng(5);
    const auto sol = cu_mppi_step(State{}, cost_fn, net, actions, vp, cfg, std::nullopt, rng);

    const double j_sol = cost_fn(rollout(State{}, sol.optimal_sequence, vp));
    const double j_zero = cost_fn(rollout(State{}, ControlSequence(10), vp));
    CHECK(j_sol < j_zero);
    CHECK(sol.min_cost <= j_zero);
}

TEST_CASE("cu_mppi_step: solution cost never exceeds the worst evaluated candidate") {
    const auto vp = default_params();
    PolicyConfig pc;
    pc.hidden = 8;
    PolicyNetwork net(pc, 7);
    const ActionSet actions = ActionSet::uniform_spread(45, vp.delta_max);
    MppiConfig cfg;
    cfg.n_samples = 200;
    cfg.horizon = 8;
    cfg.sigma = 0.1;
    const auto base = quadratic_goal(1.5, -0.5);
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        double worst = 0.0;
        const TrajectoryCostFn recording = [&](const Trajectory& traj) {
            const double j = base(traj);
            worst = std::max(worst, j);
            return j;
        };
        Rng rng(seed);
        const auto sol = cu_mppi_step(State{}, recording, net, actions, vp, cfg, std::nullopt, rng);
        CHECK(base(rollout(State{}, sol.optimal_sequence, vp)) <= worst + 1e-9);
    }
}

TEST_CASE("cu_mppi_step: a strictly better previous solution becomes the nominal") {
    const auto vp = default_params();
    PolicyConfig pc;
    pc.hidden = 8;
    PolicyNetwork net(pc, 2);
    const ActionSet actions = ActionSet::uniform_spread(45, vp.delta_max);
    MppiConfig cfg;
    cfg.n_samples = 60;
    cfg.horizon = 5;
    cfg.sigma = 0.05;

    // cost that only the injected (all max-steer) sequence can win
    const TrajectoryCostFn cost_fn = [&](const Trajectory& traj) {
        double j = 0.0;
        for (std::size_t t = 1; t < traj.size(); ++t) {
            const double turn = std::abs(wrap_angle(traj[t].psi - traj[t - 1].psi));
            j += std::abs(turn - 1.0 / 0.33 * std::tan(vp.delta_max) * 0.2);
        }
        return j * 1e6;
    };

    ControlSequence prev(6);
    for (auto& u : prev) u.delta = vp.delta_max;
    Rng rng(3);
    const auto sol = cu_mppi_step(State{}, cost_fn, net, actions, vp, cfg, prev, rng);
    // the shifted previous solution is all max-steer; it must be selected
    for (const auto& u : sol.nominal_used) CHECK(u.delta == vp.delta_max);
}

TEST_CASE("cu_mppi_step: n_cu = 1 degenerates to MPPI around the single rollout") {
    const auto vp = default_params();
    PolicyConfig pc;
    pc.hidden = 8;
    PolicyNetwork net(pc, 4);
    const ActionSet actions = ActionSet::uniform_spread(45, vp.delta_max);
    MppiConfig cfg;
    cfg.n_samples = 40;
    cfg.horizon = 4;
    cfg.cu_fraction = 1.0 / 40.0;  // one policy rollout, the rest perturbation samples
    Rng rng(6);
    const auto sol =
        cu_mppi_step(State{}, quadratic_goal(1.0, 0.0), net, actions, vp, cfg, std::nullopt, rng);
    REQUIRE(sol.nominal_used.size() == 4);
    REQUIRE(sol.weights.size() == 39);
}

TEST_CASE("mppi_step: optimal cost never exceeds the worst candidate on a convex task") {
    const auto vp = default_params();
    MppiConfig cfg;
    cfg.n_samples = 200;
    cfg.horizon = 8;
    const auto cost_fn = quadratic_goal(3.0, 0.0);
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL}) {
        Rng rng(seed);
        const auto sol = mppi_step(State{}, cost_fn, ControlSequence(8), vp, cfg, rng);
        const double j = cost_fn(rollout(State{}, sol.optimal_sequence, vp));
        // worst candidate bound: straight-line cost is a generous stand-in
        CHECK(j < cost_fn(rollout(State{}, ControlSequence(8), vp)) + 1.0);
        CHECK(std::abs(sol.optimal_sequence.front().delta) <= vp.delta_max);
    }
}
