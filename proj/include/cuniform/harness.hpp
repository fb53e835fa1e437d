#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuniform/control.hpp"
#include "cuniform/dynamics.hpp"
#include "cuniform/metrics.hpp"
#include "cuniform/policy.hpp"
#include "cuniform/rng.hpp"
#include "cuniform/world.hpp"

namespace cuniform {

enum class Method { mppi, log_mppi, cu_mppi, cu_logmppi };

inline Method method_from_string(const std::string& s) {
    if (s == "mppi") return Method::mppi;
    if (s == "log-mppi") return Method::log_mppi;
    if (s == "cu-mppi") return Method::cu_mppi;
    if (s == "cu-logmppi") return Method::cu_logmppi;
    throw std::invalid_argument("unknown method \"" + s +
                                "\" (expected mppi, log-mppi, cu-mppi or cu-logmppi)");
}

inline const char* method_name(Method m) {
    switch (m) {
        case Method::mppi: return "mppi";
        case Method::log_mppi: return "log-mppi";
        case Method::cu_mppi: return "cu-mppi";
        case Method::cu_logmppi: return "cu-logmppi";
    }
    return "?";
}

inline bool method_uses_policy(Method m) {
    return m == Method::cu_mppi || m == Method::cu_logmppi;
}

struct EpisodeStep {
    int step = 0;
    State true_state;
    State believed_state;
    double delta_cmd = 0.0;
    Outcome outcome = Outcome::running;
};

struct EpisodeResult {
    Outcome outcome = Outcome::running;
    double path_length = 0.0;
    int steps = 0;
    Trajectory executed;           // true states, including the start
    std::vector<EpisodeStep> log;  // filled when keep_log is set
};

// Runs one navigation episode with a receding-horizon controller. Each step
// plans from the believed state, executes the first input of the solution and
// warm-starts the next iteration from the shifted remainder.
inline EpisodeResult run_episode(const World& world, Method method, const VehicleParams& vp,
                                 MppiConfig cfg, const PolicyNetwork* net,
                                 const ActionSet* actions, std::uint64_t seed,
                                 bool keep_log = false) {
    if (method_uses_policy(method) && (net == nullptr || actions == nullptr))
        throw std::invalid_argument("run_episode: method requires a trained policy");
    cfg.kind = (method == Method::mppi || method == Method::cu_mppi) ? SamplerKind::gaussian
                                                                     : SamplerKind::nln;
    Rng rng(seed);
    SimState sim = make_sim(world);
    EpisodeResult result;
    result.executed.push_back(sim.true_state);

    std::optional<ControlSequence> prev;
    while (sim.outcome == Outcome::running) {
        const CostEvaluator evaluator(world, sim.revealed, sim.believed_state);
        const TrajectoryCostFn cost_fn = [&](const Trajectory& traj) {
            return evaluator.trajectory_cost(traj);
        };

        ControlSolution sol;
        if (method_uses_policy(method)) {
            sol = cu_mppi_step(sim.believed_state, cost_fn, *net, *actions, vp, cfg, prev, rng);
        } else {
            const ControlSequence nominal =
                prev ? receding_shift(*prev) : ControlSequence(static_cast<std::size_t>(cfg.horizon));
            sol = mppi_step(sim.believed_state, cost_fn, nominal, vp, cfg, rng);
        }
        prev = sol.optimal_sequence;

        const ControlInput u = sol.optimal_sequence.front();
        step_sim(sim, u, world, vp, rng);
        result.executed.push_back(sim.true_state);
        if (keep_log)
            result.log.push_back(
                EpisodeStep{sim.step, sim.true_state, sim.believed_state, u.delta, sim.outcome});
    }

    result.outcome = sim.outcome;
    result.steps = sim.step;
    result.path_length = path_length(result.executed);
    return result;
}

}  // namespace cuniform
