#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cuniform/dynamics.hpp"
#include "cuniform/policy.hpp"
#include "cuniform/rng.hpp"
#include "cuniform/sampling.hpp"

namespace cuniform {

enum class SamplerKind { gaussian, nln };

struct MppiConfig {
    double lambda = 0.5;       // temperature
    int n_samples = 1000;      // total sample budget per control step
    int horizon = 15;
    SamplerKind kind = SamplerKind::gaussian;
    double sigma = 0.1;
    double sigma_ln = 0.5;
    double gamma = 0.0;        // importance-correction weight; 0 = pure cost softmax
    double cu_fraction = 0.5;  // share of n_samples spent on policy rollouts in cu_mppi_step
};

struct ControlSolution {
    ControlSequence optimal_sequence;
    std::vector<double> weights;
    ControlSequence nominal_used;
    double min_cost = std::numeric_limits<double>::infinity();
    bool all_infeasible = false;
};

using TrajectoryCostFn = std::function<double(const Trajectory&)>;

// Softmax weights over per-sample costs with min-subtraction; with gamma > 0
// the standard quadratic control-cost correction u' Sigma^-1 eps is applied.
// All-infinite costs degrade to uniform weights with all_infeasible set.
inline std::pair<std::vector<double>, bool> mppi_weights(
    const std::vector<double>& costs, const std::vector<std::vector<double>>& perturbations,
    const ControlSequence& nominal, const MppiConfig& cfg) {
    if (costs.empty()) throw std::invalid_argument("mppi_weights: no samples");
    const std::size_t n = costs.size();

    std::vector<double> exponent(n);
    double min_exp = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        double e = costs[i] / cfg.lambda;
        if (cfg.gamma != 0.0) {
            const double inv_var = 1.0 / (cfg.sigma * cfg.sigma);
            double corr = 0.0;
            for (std::size_t t = 0; t < perturbations[i].size(); ++t)
                corr += nominal[t].delta * inv_var * perturbations[i][t];
            e += cfg.gamma * corr;
        }
        exponent[i] = e;
        min_exp = std::min(min_exp, e);
    }

    if (!std::isfinite(min_exp)) {
        // every candidate collided with infinite cost
        return {std::vector<double>(n, 1.0 / static_cast<double>(n)), true};
    }

    std::vector<double> w(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = std::isfinite(exponent[i]) ? std::exp(-(exponent[i] - min_exp)) : 0.0;
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return {w, false};
}

// Optimal sequence as the weighted average of the sampled sequences (Williams
// style update), clamped to the steering bounds.
inline ControlSolution mppi_update(const ControlSequence& nominal, const TrajectoryBatch& batch,
                                   const std::vector<double>& costs, const MppiConfig& cfg,
                                   const VehicleParams& vp) {
    if (batch.size() == 0) throw std::invalid_argument("mppi_update: empty batch");
    if (batch.size() != costs.size())
        throw std::invalid_argument("mppi_update: costs/batch size mismatch");

    std::vector<std::vector<double>> perturbations;
    if (cfg.gamma != 0.0) {
        perturbations.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            perturbations[i].resize(batch.sequences[i].size());
            for (std::size_t t = 0; t < batch.sequences[i].size(); ++t)
                perturbations[i][t] =
                    batch.sequences[i][t].delta - (t < nominal.size() ? nominal[t].delta : 0.0);
        }
    }
    auto [weights, all_infeasible] = mppi_weights(costs, perturbations, nominal, cfg);

    const std::size_t horizon = batch.sequences.front().size();
    ControlSequence optimal(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i)
            acc += weights[i] * batch.sequences[i][t].delta;
        optimal[t].delta = std::clamp(acc, -vp.delta_max, vp.delta_max);
    }

    ControlSolution sol;
    sol.optimal_sequence = std::move(optimal);
    sol.weights = std::move(weights);
    sol.nominal_used = nominal;
    sol.min_cost = *std::min_element(costs.begin(), costs.end());
    sol.all_infeasible = all_infeasible;
    return sol;
}

// Index of the minimum-cost candidate; minima within an absolute tolerance of
// each other are tied and one is drawn uniformly at random.
inline std::pair<int, ControlSequence> select_nominal(const TrajectoryBatch& batch,
                                                      const std::vector<double>& costs, Rng& rng,
                                                      double tie_tolerance = 1e-9) {
    if (batch.size() == 0) throw std::invalid_argument("select_nominal: empty candidate set");
    const double min_cost = *std::min_element(costs.begin(), costs.end());
    std::vector<int> tied;
    for (std::size_t i = 0; i < costs.size(); ++i)
        if (costs[i] <= min_cost + tie_tolerance) tied.push_back(static_cast<int>(i));
    const int pick = tied[static_cast<std::size_t>(rng.uniform_int(tied.size()))];
    return {pick, batch.sequences[static_cast<std::size_t>(pick)]};
}

// Receding-horizon warm start: drop the executed input, repeat the last one.
inline ControlSequence receding_shift(const ControlSequence& seq) {
    if (seq.empty()) throw std::invalid_argument("receding_shift: empty sequence");
    ControlSequence out(seq.begin() + 1, seq.end());
    out.push_back(seq.back());
    return out;
}

namespace detail {

inline std::vector<double> evaluate_costs(const TrajectoryBatch& batch,
                                          const TrajectoryCostFn& cost_fn) {
    std::vector<double> costs(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) costs[i] = cost_fn(batch.trajectories[i]);
    return costs;
}

}  // namespace detail

// One CU-MPPI control step: sample policy rollouts, inject the shifted
// previous solution, pick the minimum-cost candidate as the nominal, then
// refine with the configured MPPI variant around it.
inline ControlSolution cu_mppi_step(const State& state, const TrajectoryCostFn& cost_fn,
                                    const PolicyNetwork& net, const ActionSet& actions,
                                    const VehicleParams& vp, const MppiConfig& cfg,
                                    const std::optional<ControlSequence>& prev_solution,
                                    Rng& rng) {
    const int n_cu = std::max(1, static_cast<int>(std::lround(cfg.n_samples * cfg.cu_fraction)));
    const int n_mppi = std::max(1, cfg.n_samples - n_cu);

    TrajectoryBatch candidates =
        sample_cuniform(net, actions, state, cfg.horizon, n_cu, vp, rng);
    if (prev_solution && !prev_solution->empty()) {
        ControlSequence shifted = receding_shift(*prev_solution);
        shifted = detail::padded_nominal(shifted, cfg.horizon);
        candidates.tags.assign(candidates.size(), SampleSource::cuniform);
        candidates.tags.push_back(SampleSource::injected);
        candidates.sequences.push_back(shifted);
        candidates.trajectories.push_back(rollout(state, shifted, vp));
    }

    const std::vector<double> candidate_costs = detail::evaluate_costs(candidates, cost_fn);
    auto [nominal_index, nominal] = select_nominal(candidates, candidate_costs, rng);
    (void)nominal_index;

    TrajectoryBatch refine;
    if (cfg.kind == SamplerKind::gaussian) {
        refine = sample_gaussian(nominal, GaussianSamplerConfig{cfg.sigma, cfg.horizon}, n_mppi,
                                 state, vp, rng);
    } else {
        refine = sample_nln(nominal, NlnSamplerConfig{cfg.sigma, cfg.sigma_ln, cfg.horizon},
                            n_mppi, state, vp, rng);
    }
    const std::vector<double> refine_costs = detail::evaluate_costs(refine, cost_fn);
    return mppi_update(nominal, refine, refine_costs, cfg, vp);
}

// Plain MPPI step (no policy): perturb around the given nominal and average.
inline ControlSolution mppi_step(const State& state, const TrajectoryCostFn& cost_fn,
                                 const ControlSequence& nominal, const VehicleParams& vp,
                                 const MppiConfig& cfg, Rng& rng) {
    TrajectoryBatch batch;
    if (cfg.kind == SamplerKind::gaussian) {
        batch = sample_gaussian(nominal, GaussianSamplerConfig{cfg.sigma, cfg.horizon},
                                cfg.n_samples, state, vp, rng);
    } else {
        batch = sample_nln(nominal, NlnSamplerConfig{cfg.sigma, cfg.sigma_ln, cfg.horizon},
                           cfg.n_samples, state, vp, rng);
    }
    const std::vector<double> costs = detail::evaluate_costs(batch, cost_fn);
    return mppi_update(detail::padded_nominal(nominal, cfg.horizon), batch, costs, cfg, vp);
}

}  // namespace cuniform
