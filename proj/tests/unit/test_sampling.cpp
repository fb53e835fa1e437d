#include <doctest.h>

#include <cmath>

#include "cuniform/sampling.hpp"

using namespace cuniform;

namespace {

VehicleParams default_params() { return VehicleParams{1.0, 0.33, 0.2, kPi / 6.0}; }

double excess_mass_mean(const TrajectoryBatch& batch, const ControlSequence& nominal) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& seq : batch.sequences)
        for (std::size_t t = 0; t < seq.size(); ++t) {
            sum += seq[t].delta - nominal[t].delta;
            ++n;
        }
    return sum / static_cast<double>(n);
}

}  // namespace

TEST_CASE("sample_gaussian: sigma -> 0 reproduces the nominal") {
    const auto vp = default_params();
    ControlSequence nominal(6);
    for (std::size_t t = 0; t < nominal.size(); ++t) nominal[t].delta = 0.04 * static_cast<double>(t);
    Rng rng(1);
    const auto batch = sample_gaussian(nominal, GaussianSamplerConfig{1e-12, 6}, 20, State{}, vp, rng);
    REQUIRE(batch.size() == 20);
    for (const auto& seq : batch.sequences)
        for (std::size_t t = 0; t < seq.size(); ++t)
            CHECK(seq[t].delta == doctest::Approx(nominal[t].delta).epsilon(1e-9));
}

TEST_CASE("sample_gaussian: sample mean near zero for a zero nominal") {
    VehicleParams vp = default_params();
    vp.delta_max = 100.0;  // keep clamping out of the moment estimate
    const int n = 20000;
    const int horizon = 5;
    const double sigma = 0.1;
    Rng rng(42);
    const auto batch =
        sample_gaussian(ControlSequence(horizon), GaussianSamplerConfig{sigma, horizon}, n,
                        State{}, vp, rng);
    const double mean = excess_mass_mean(batch, ControlSequence(horizon));
    const double bound = 4.0 * sigma / std::sqrt(static_cast<double>(n) * horizon);
    CHECK(std::abs(mean) < bound);
}

TEST_CASE("sample_gaussian: reproducible and clamped") {
    const auto vp = default_params();
    Rng a(7), b(7);
    const auto ba = sample_gaussian(ControlSequence(4), GaussianSamplerConfig{0.5, 4}, 50, State{}, vp, a);
    const auto bb = sample_gaussian(ControlSequence(4), GaussianSamplerConfig{0.5, 4}, 50, State{}, vp, b);
    for (std::size_t i = 0; i < ba.size(); ++i)
        for (std::size_t t = 0; t < ba.sequences[i].size(); ++t) {
            CHECK(ba.sequences[i][t].delta == bb.sequences[i][t].delta);
            CHECK(std::abs(ba.sequences[i][t].delta) <= vp.delta_max);
        }
}

TEST_CASE("sample_nln: variance consistent and tails heavier than Gaussian") {
    VehicleParams vp = default_params();
    vp.delta_max = 1000.0;
    const int n = 30000;
    const int horizon = 4;
    const double sigma = 0.1;
    const double sigma_ln = 0.5;
    Rng rng(11);
    const auto batch = sample_nln(ControlSequence(horizon),
                                  NlnSamplerConfig{sigma, sigma_ln, horizon}, n, State{}, vp, rng);

    double m2 = 0.0, m4 = 0.0;
    std::size_t count = 0;
    for (const auto& seq : batch.sequences)
        for (const auto& u : seq) {
            m2 += u.delta * u.delta;
            m4 += u.delta * u.delta * u.delta * u.delta;
            ++count;
        }
    m2 /= static_cast<double>(count);
    m4 /= static_cast<double>(count);
    const double kurtosis = m4 / (m2 * m2);
    // eps = eta * exp(z): kurtosis = 3 exp(4 sigma_ln^2) ~ 8.15, clearly above Gaussian 3
    CHECK(kurtosis > 4.5);

    // E[eps^2] = sigma^2 exp(sigma_ln^2)
    const double expected_var = sigma * sigma * std::exp(sigma_ln * sigma_ln);
    CHECK(m2 == doctest::Approx(expected_var).epsilon(0.1));

    // sigma_ln -> 0 degenerates to the Gaussian sampler's variance
    Rng rng2(12);
    const auto gauss_like = sample_nln(ControlSequence(horizon),
                                       NlnSamplerConfig{sigma, 1e-12, horizon}, n, State{}, vp, rng2);
    double v = 0.0;
    for (const auto& seq : gauss_like.sequences)
        for (const auto& u : seq) v += u.delta * u.delta;
    v /= static_cast<double>(count);
    CHECK(v == doctest::Approx(sigma * sigma).epsilon(0.05));
}

TEST_CASE("batch trajectories equal rollout_batch of their sequences") {
    const auto vp = default_params();
    Rng rng(3);
    const State s0{0.4, -0.2, 0.5};
    const auto gauss = sample_gaussian(ControlSequence(6), GaussianSamplerConfig{0.2, 6}, 15, s0, vp, rng);
    const auto nln = sample_nln(ControlSequence(6), NlnSamplerConfig{0.2, 0.5, 6}, 15, s0, vp, rng);
    for (const auto* batch : {&gauss, &nln}) {
        const auto ref = rollout_batch(s0, batch->sequences, vp);
        for (std::size_t i = 0; i < batch->size(); ++i)
            for (std::size_t t = 0; t < ref[i].size(); ++t) {
                CHECK(batch->trajectories[i][t].x == ref[i][t].x);
                CHECK(batch->trajectories[i][t].y == ref[i][t].y);
                CHECK(batch->trajectories[i][t].psi == ref[i][t].psi);
            }
    }
}

TEST_CASE("sample_cuniform: T = 0 emits single-state trajectories") {
    const auto vp = default_params();
    PolicyConfig pc;
    pc.hidden = 8;
    PolicyNetwork net(pc, 1);
    const ActionSet actions = ActionSet::uniform_spread(45, vp.delta_max);
    Rng rng(5);
    const auto batch = sample_cuniform(net, actions, State{1, 2, 0.3}, 0, 7, vp, rng);
    REQUIRE(batch.size() == 7);
    for (const auto& traj : batch.trajectories) {
        REQUIRE(traj.size() == 1);
        CHECK(traj[0].x == 1.0);
    }
    for (const auto& seq : batch.sequences) CHECK(seq.empty());
}

TEST_CASE("sample_cuniform: untrained network draws uniformly over the action set") {
    const auto vp = default_params();
    PolicyConfig pc;
    pc.hidden = 8;
    pc.n_actions = 45;
    PolicyNetwork net(pc, 2);  // zero output layer -> uniform pmf
    const ActionSet actions = ActionSet::uniform_spread(45, vp.delta_max);
    Rng rng(9);
    const int n = 12500, horizon = 8;  // 1e5 action draws
    const auto batch = sample_cuniform(net, actions, State{}, horizon, n, vp, rng);

    std::vector<int> counts(45, 0);
    for (const auto& seq : batch.sequences)
        for (const auto& u : seq) {
            // recover the action index from the exact delta value
            int best = 0;
            for (int a = 1; a < 45; ++a)
                if (std::abs(actions.deltas[static_cast<std::size_t>(a)] - u.delta) <
                    std::abs(actions.deltas[static_cast<std::size_t>(best)] - u.delta))
                    best = a;
            ++counts[static_cast<std::size_t>(best)];
        }
    const double draws = static_cast<double>(n) * horizon;
    const double expected = draws / 45.0;
    const double sigma = std::sqrt(draws * (1.0 / 45.0) * (44.0 / 45.0));
    for (int c : counts) CHECK(std::abs(c - expected) < 4.5 * sigma);
}

TEST_CASE("sample_cuniform: trajectories equal rollouts and respect bounds") {
    const auto vp = default_params();
    PolicyConfig pc;
    pc.hidden = 8;
    PolicyNetwork net(pc, 3);
    const ActionSet actions = ActionSet::uniform_spread(45, vp.delta_max);
    Rng rng(13);
    const State s0{2.0, -1.0, 0.8};
    const auto batch = sample_cuniform(net, actions, s0, 6, 25, vp, rng);
    const auto ref = rollout_batch(s0, batch.sequences, vp);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t t = 0; t < ref[i].size(); ++t) {
            CHECK(batch.trajectories[i][t].x == ref[i][t].x);
            CHECK(batch.trajectories[i][t].psi == ref[i][t].psi);
        }
        for (const auto& u : batch.sequences[i]) CHECK(std::abs(u.delta) <= vp.delta_max);
    }
}

TEST_CASE("sample_cuniform: frame invariance under a rigid transform") {
    const auto vp = default_params();
    PolicyConfig pc;
    pc.hidden = 8;
    PolicyNetwork net(pc, 4);
    const ActionSet actions = ActionSet::uniform_spread(45, vp.delta_max);
    const State pose{5.0, 5.0, kPi / 3.0};

    Rng ra(21), rb(21);
    const auto from_origin = sample_cuniform(net, actions, State{}, 6, 10, vp, ra);
    const auto from_pose = sample_cuniform(net, actions, pose, 6, 10, vp, rb);
    for (std::size_t i = 0; i < from_origin.size(); ++i) {
        for (std::size_t t = 0; t < from_origin.trajectories[i].size(); ++t) {
            const State mapped = frame_to_world(pose, from_origin.trajectories[i][t]);
            CHECK(from_pose.trajectories[i][t].x == doctest::Approx(mapped.x).epsilon(1e-9));
            CHECK(from_pose.trajectories[i][t].y == doctest::Approx(mapped.y).epsilon(1e-9));
            CHECK(wrap_angle(from_pose.trajectories[i][t].psi - mapped.psi) ==
                  doctest::Approx(0.0).epsilon(1e-9));
        }
    }
}
