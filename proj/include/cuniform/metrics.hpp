#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "cuniform/levelset.hpp"
#include "cuniform/world.hpp"

namespace cuniform {

struct UniformityReport {
    std::vector<double> ratios;  // per level, in [0, 1]
    std::size_t sample_count = 0;
};

struct CoverageReport {
    std::size_t visited = 0;
    std::size_t total = 0;
    double percent = 0.0;
    // planar projection: distinct (ix, iy) columns over the whole stack
    std::size_t visited_xy = 0;
    std::size_t total_xy = 0;
    double percent_xy = 0.0;
};

// Per-level entropy ratio between the nearest-cell occurrence distribution of
// the trajectories and the uniform distribution. A single-cell level has
// ratio 1 by definition.
inline UniformityReport uniformity_percent(const LevelSetStack& stack,
                                           const std::vector<Trajectory>& trajectories) {
    const std::size_t n_levels = stack.levels.size();
    for (const auto& traj : trajectories)
        if (traj.size() < n_levels)
            throw std::invalid_argument("uniformity_percent: trajectory shorter than the stack");

    UniformityReport report;
    report.sample_count = trajectories.size();
    report.ratios.resize(n_levels);
    for (std::size_t t = 0; t < n_levels; ++t) {
        const LevelSet& level = stack.levels[t];
        if (level.empty()) throw std::runtime_error("uniformity_percent: empty level");
        if (level.size() == 1) {
            report.ratios[t] = 1.0;
            continue;
        }
        std::vector<double> counts(level.size(), 0.0);
        for (const auto& traj : trajectories) {
            const auto nearest = nearest_cells(level, traj[t], 1);
            counts[static_cast<std::size_t>(nearest.front().index)] += 1.0;
        }
        const double m = static_cast<double>(trajectories.size());
        double entropy = 0.0;
        for (double c : counts) {
            if (c <= 0.0) continue;
            const double p = c / m;
            entropy -= p * std::log(p);
        }
        report.ratios[t] = entropy / std::log(static_cast<double>(level.size()));
    }
    return report;
}

// Fraction of all reachable cells hit by the batch. A state counts as a hit
// only when it lies within one cell diagonal of the nearest cell.
inline CoverageReport coverage_percent(const LevelSetStack& stack,
                                       const std::vector<Trajectory>& trajectories) {
    const std::size_t n_levels = stack.levels.size();
    const double hit_radius = stack.cell_diagonal();
    for (const auto& traj : trajectories)
        if (traj.size() < n_levels)
            throw std::invalid_argument("coverage_percent: trajectory shorter than the stack");

    CoverageReport report;
    std::set<std::pair<int, int>> total_xy, visited_xy;
    for (std::size_t t = 0; t < n_levels; ++t) {
        const LevelSet& level = stack.levels[t];
        report.total += level.size();
        for (const auto& c : level.cells()) total_xy.insert({c.key.ix, c.key.iy});
        std::vector<std::uint8_t> hit(level.size(), 0);
        for (const auto& traj : trajectories) {
            const auto nearest = nearest_cells(level, traj[t], 1);
            if (nearest.front().distance <= hit_radius)
                hit[static_cast<std::size_t>(nearest.front().index)] = 1;
        }
        for (std::size_t i = 0; i < hit.size(); ++i) {
            if (!hit[i]) continue;
            ++report.visited;
            visited_xy.insert({level.cell(i).key.ix, level.cell(i).key.iy});
        }
    }
    report.total_xy = total_xy.size();
    report.visited_xy = visited_xy.size();
    report.percent = report.total ? 100.0 * static_cast<double>(report.visited) / static_cast<double>(report.total) : 0.0;
    report.percent_xy = report.total_xy ? 100.0 * static_cast<double>(report.visited_xy) / static_cast<double>(report.total_xy) : 0.0;
    return report;
}

inline double success_rate(const std::vector<Outcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("success_rate: no episodes");
    std::size_t ok = 0;
    for (Outcome o : outcomes)
        if (o == Outcome::success) ++ok;
    return static_cast<double>(ok) / static_cast<double>(outcomes.size());
}

inline double path_length(const Trajectory& traj) {
    double len = 0.0;
    for (std::size_t t = 0; t + 1 < traj.size(); ++t)
        len += std::hypot(traj[t + 1].x - traj[t].x, traj[t + 1].y - traj[t].y);
    return len;
}

// Mean executed path length over successful episodes only; absent when there
// are none.
inline std::optional<double> avg_path_length(const std::vector<Outcome>& outcomes,
                                             const std::vector<double>& lengths) {
    if (outcomes.size() != lengths.size())
        throw std::invalid_argument("avg_path_length: size mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i] != Outcome::success) continue;
        sum += lengths[i];
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

}  // namespace cuniform
