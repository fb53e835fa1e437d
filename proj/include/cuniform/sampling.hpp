#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <stdexcept>
#include <vector>

#include "cuniform/dynamics.hpp"
#include "cuniform/policy.hpp"
#include "cuniform/rng.hpp"

namespace cuniform {

enum class SampleSource { gaussian, nln, cuniform, injected };

struct GaussianSamplerConfig {
    double sigma = 0.1;  // per-step steering perturbation stddev [rad]
    int horizon = 15;
};

struct NlnSamplerConfig {
    double sigma = 0.1;
    double sigma_ln = 0.5;  // log-normal shape of the unit-mean multiplier
    int horizon = 15;
};

struct TrajectoryBatch {
    std::vector<ControlSequence> sequences;
    std::vector<Trajectory> trajectories;
    SampleSource source = SampleSource::gaussian;
    // Set when the batch mixes sources (e.g. an injected previous solution);
    // aligned with sequences. Empty means every sample has `source`.
    std::vector<SampleSource> tags;

    std::size_t size() const { return sequences.size(); }
};

namespace detail {

inline ControlSequence padded_nominal(const ControlSequence& nominal, int horizon) {
    ControlSequence u = nominal;
    if (static_cast<int>(u.size()) > horizon) u.resize(static_cast<std::size_t>(horizon));
    while (static_cast<int>(u.size()) < horizon)
        u.push_back(u.empty() ? ControlInput{0.0} : u.back());
    return u;
}

}  // namespace detail

// v_t = clamp(u_t + eps_t), eps_t ~ N(0, sigma^2) i.i.d. per step.
inline TrajectoryBatch sample_gaussian(const ControlSequence& nominal,
                                       const GaussianSamplerConfig& cfg, int n, const State& s0,
                                       const VehicleParams& vp, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_gaussian: n must be >= 1");
    const ControlSequence base = detail::padded_nominal(nominal, cfg.horizon);
    TrajectoryBatch batch;
    batch.source = SampleSource::gaussian;
    batch.sequences.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ControlSequence seq(base.size());
        for (std::size_t t = 0; t < base.size(); ++t) {
            const double delta = base[t].delta + rng.normal(0.0, cfg.sigma);
            seq[t].delta = std::clamp(delta, -vp.delta_max, vp.delta_max);
        }
        batch.sequences.push_back(std::move(seq));
    }
    batch.trajectories = rollout_batch(s0, batch.sequences, vp);
    return batch;
}

// Normal-log-normal perturbations: eps = eta * exp(z) with eta ~ N(0, sigma^2)
// and z ~ N(-sigma_ln^2/2, sigma_ln^2), so the multiplier has unit mean and
// the tails are heavier than Gaussian.
inline TrajectoryBatch sample_nln(const ControlSequence& nominal, const NlnSamplerConfig& cfg,
                                  int n, const State& s0, const VehicleParams& vp, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_nln: n must be >= 1");
    const ControlSequence base = detail::padded_nominal(nominal, cfg.horizon);
    const double z_mean = -0.5 * cfg.sigma_ln * cfg.sigma_ln;
    TrajectoryBatch batch;
    batch.source = SampleSource::nln;
    batch.sequences.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ControlSequence seq(base.size());
        for (std::size_t t = 0; t < base.size(); ++t) {
            const double eta = rng.normal(0.0, cfg.sigma);
            const double z = rng.normal(z_mean, cfg.sigma_ln);
            const double delta = base[t].delta + eta * std::exp(z);
            seq[t].delta = std::clamp(delta, -vp.delta_max, vp.delta_max);
        }
        batch.sequences.push_back(std::move(seq));
    }
    batch.trajectories = rollout_batch(s0, batch.sequences, vp);
    return batch;
}

// Rolls n trajectories by repeatedly querying the policy and drawing actions.
// States are fed to the network in the frame of s0 (the training origin), so a
// network trained from the origin drives from any pose. Stepping is batched
// per time step; draws are ordered (step, trajectory) for reproducibility.
inline TrajectoryBatch sample_cuniform(const PolicyNetwork& net, const ActionSet& actions,
                                       const State& s0, int horizon, int n,
                                       const VehicleParams& vp, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_cuniform: n must be >= 1");
    if (net.config().n_actions != actions.size())
        throw std::invalid_argument("sample_cuniform: action set size mismatch");

    TrajectoryBatch batch;
    batch.source = SampleSource::cuniform;
    batch.sequences.assign(static_cast<std::size_t>(n), ControlSequence{});
    batch.trajectories.assign(static_cast<std::size_t>(n), Trajectory{s0});
    if (horizon == 0) return batch;

    for (auto& seq : batch.sequences) seq.reserve(static_cast<std::size_t>(horizon));
    for (auto& traj : batch.trajectories) traj.reserve(static_cast<std::size_t>(horizon) + 1);

    Eigen::MatrixXd X(n, 4);
    ActionPmf pmf(static_cast<std::size_t>(actions.size()));
    for (int t = 0; t < horizon; ++t) {
        for (int i = 0; i < n; ++i)
            X.row(i) =
                encode_state(world_to_frame(s0, batch.trajectories[static_cast<std::size_t>(i)].back()))
                    .transpose();
        const Eigen::MatrixXd P = net.forward_eval(X);
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < actions.size(); ++a)
                pmf[static_cast<std::size_t>(a)] = P(i, a);
            const int a = sample_action(pmf, rng);
            const ControlInput u{actions.deltas[static_cast<std::size_t>(a)]};
            auto& traj = batch.trajectories[static_cast<std::size_t>(i)];
            batch.sequences[static_cast<std::size_t>(i)].push_back(u);
            traj.push_back(step(traj.back(), u, vp));
        }
    }
    return batch;
}

}  // namespace cuniform
