#pragma once

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cuniform/common.hpp"

namespace cuniform {

// Vehicle configuration (x east, y north, psi heading). psi stays in (-pi, pi].
struct State {
    double x = 0.0;
    double y = 0.0;
    double psi = 0.0;
};

struct ControlInput {
    double delta = 0.0;  // steering angle [rad]
};

struct VehicleParams {
    double v = 1.0;               // constant forward speed [m/s]
    double wheelbase = 0.33;      // [m]
    double dt = 0.2;              // time discretization [s]
    double delta_max = kPi / 6.0; // steering bound [rad]
};

using ControlSequence = std::vector<ControlInput>;
using Trajectory = std::vector<State>;

// Forward-Euler step of the kinematic bicycle model.
inline State step(const State& s, const ControlInput& u, const VehicleParams& p) {
    assert(std::abs(u.delta) <= p.delta_max + 1e-12);
    State next;
    next.x = s.x + p.v * std::cos(s.psi) * p.dt;
    next.y = s.y + p.v * std::sin(s.psi) * p.dt;
    next.psi = wrap_angle(s.psi + p.v / p.wheelbase * std::tan(u.delta) * p.dt);
    return next;
}

inline Trajectory rollout(const State& s0, const ControlSequence& controls,
                          const VehicleParams& p) {
    assert(!controls.empty());
    Trajectory traj;
    traj.reserve(controls.size() + 1);
    traj.push_back(s0);
    for (const auto& u : controls) traj.push_back(step(traj.back(), u, p));
    return traj;
}

inline std::vector<Trajectory> rollout_batch(const State& s0,
                                             const std::vector<ControlSequence>& batch,
                                             const VehicleParams& p) {
    std::vector<Trajectory> out;
    out.reserve(batch.size());
    for (const auto& seq : batch) {
        if (!batch.empty() && seq.size() != batch.front().size())
            throw std::invalid_argument("rollout_batch: control sequences differ in length");
        out.push_back(rollout(s0, seq, p));
    }
    return out;
}

// Expresses s in the coordinate frame anchored at `frame`.
inline State world_to_frame(const State& frame, const State& s) {
    const double dx = s.x - frame.x;
    const double dy = s.y - frame.y;
    const double c = std::cos(frame.psi);
    const double sn = std::sin(frame.psi);
    return State{c * dx + sn * dy, -sn * dx + c * dy, wrap_angle(s.psi - frame.psi)};
}

inline State frame_to_world(const State& frame, const State& s) {
    const double c = std::cos(frame.psi);
    const double sn = std::sin(frame.psi);
    return State{frame.x + c * s.x - sn * s.y, frame.y + sn * s.x + c * s.y,
                 wrap_angle(s.psi + frame.psi)};
}

}  // namespace cuniform
