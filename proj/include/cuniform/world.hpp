#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuniform/common.hpp"
#include "cuniform/dynamics.hpp"
#include "cuniform/rng.hpp"

namespace cuniform {

struct OccupancyGrid {
    int width = 0;
    int height = 0;
    double resolution = 0.05;  // meters per cell
    double origin_x = 0.0;     // world coordinates of the corner of cell (0, 0)
    double origin_y = 0.0;
    std::vector<std::uint8_t> occ;

    bool empty() const { return width == 0 || height == 0; }
    bool in_bounds(int ix, int iy) const { return ix >= 0 && ix < width && iy >= 0 && iy < height; }
    std::uint8_t at(int ix, int iy) const {
        return occ[static_cast<std::size_t>(iy) * static_cast<std::size_t>(width) +
                   static_cast<std::size_t>(ix)];
    }
    std::uint8_t& at(int ix, int iy) {
        return occ[static_cast<std::size_t>(iy) * static_cast<std::size_t>(width) +
                   static_cast<std::size_t>(ix)];
    }
    bool occupied_at_point(double x, double y) const {
        if (empty()) return false;
        const int ix = static_cast<int>(std::floor((x - origin_x) / resolution));
        const int iy = static_cast<int>(std::floor((y - origin_y) / resolution));
        return in_bounds(ix, iy) && at(ix, iy) != 0;
    }
};

struct Obstacle {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 1.0;
};

struct WorldConfig {
    State start{0.0, 0.0, 0.0};
    State goal{3.0, 0.0, 0.0};
    double goal_radius = 0.3;
    // heading-aware (configuration-to-configuration) goal costs
    bool heading_aware = false;
    double weight_x = 1.5;
    double weight_y = 1.5;
    double weight_heading = 1.0;
    double lambda_phi = 1.0;  // terminal (min goal cost) weight
    double goal_psi_tol = 0.35;

    double detection_half_extent = 1.5;  // egocentric costmap window half size [m]
    double reveal_distance = 1.5;        // obstacle-boundary distance at which it becomes visible
    double c_collision = 1000.0;
    double lambda_obs = 1.0;
    double lambda_goal = 1.0;
    double footprint_radius = 0.25;
    double noise_xy = 0.01;    // per-step localization noise [m]
    double noise_psi = 0.005;  // [rad]
    int step_budget = 300;
    double costmap_resolution = 0.05;  // used when no static grid provides one
};

struct World {
    OccupancyGrid grid;
    std::vector<Obstacle> obstacles;
    WorldConfig cfg;
};

// Distance to the goal: planar, or the weighted configuration distance with
// (cos psi, sin psi) heading coordinates when heading_aware is set.
inline double goal_distance(const State& s, const WorldConfig& cfg) {
    const double dx = s.x - cfg.goal.x;
    const double dy = s.y - cfg.goal.y;
    if (!cfg.heading_aware) return std::sqrt(dx * dx + dy * dy);
    const double dc = std::cos(s.psi) - std::cos(cfg.goal.psi);
    const double ds = std::sin(s.psi) - std::sin(cfg.goal.psi);
    return std::sqrt(cfg.weight_x * dx * dx + cfg.weight_y * dy * dy +
                     cfg.weight_heading * (dc * dc + ds * ds));
}

namespace detail {

inline bool disc_intersects_cell(double x, double y, double r, double cx0, double cy0,
                                 double cell) {
    const double px = std::clamp(x, cx0, cx0 + cell);
    const double py = std::clamp(y, cy0, cy0 + cell);
    const double dx = x - px;
    const double dy = y - py;
    return dx * dx + dy * dy <= r * r;
}

inline bool footprint_hits_grid(const OccupancyGrid& g, double x, double y, double r) {
    if (g.empty()) return false;
    const int ix0 = static_cast<int>(std::floor((x - r - g.origin_x) / g.resolution));
    const int ix1 = static_cast<int>(std::floor((x + r - g.origin_x) / g.resolution));
    const int iy0 = static_cast<int>(std::floor((y - r - g.origin_y) / g.resolution));
    const int iy1 = static_cast<int>(std::floor((y + r - g.origin_y) / g.resolution));
    for (int iy = std::max(0, iy0); iy <= std::min(g.height - 1, iy1); ++iy)
        for (int ix = std::max(0, ix0); ix <= std::min(g.width - 1, ix1); ++ix)
            if (g.at(ix, iy) != 0 &&
                disc_intersects_cell(x, y, r, g.origin_x + ix * g.resolution,
                                     g.origin_y + iy * g.resolution, g.resolution))
                return true;
    return false;
}

inline bool footprint_hits_obstacle(const Obstacle& o, double x, double y, double r) {
    const double dx = x - o.cx;
    const double dy = y - o.cy;
    const double reach = r + o.radius;
    return dx * dx + dy * dy <= reach * reach;
}

}  // namespace detail

// Ground-truth collision: the footprint against the static grid and every
// obstacle, revealed or not.
inline bool in_collision_physics(const World& world, const State& s) {
    if (detail::footprint_hits_grid(world.grid, s.x, s.y, world.cfg.footprint_radius)) return true;
    for (const auto& o : world.obstacles)
        if (detail::footprint_hits_obstacle(o, s.x, s.y, world.cfg.footprint_radius)) return true;
    return false;
}

// 3m x 3m egocentric window containing the static occupancy and the revealed
// obstacles, rasterized at grid resolution.
inline OccupancyGrid local_costmap(const World& world, const std::vector<std::uint8_t>& revealed,
                                   const State& believed) {
    const double half = world.cfg.detection_half_extent;
    const double res = world.grid.empty() ? world.cfg.costmap_resolution : world.grid.resolution;
    OccupancyGrid window;
    window.resolution = res;
    window.width = std::max(1, static_cast<int>(std::lround(2.0 * half / res)));
    window.height = window.width;
    window.origin_x = believed.x - half;
    window.origin_y = believed.y - half;
    window.occ.assign(static_cast<std::size_t>(window.width) * window.height, 0);
    for (int iy = 0; iy < window.height; ++iy) {
        for (int ix = 0; ix < window.width; ++ix) {
            const double cx = window.origin_x + (ix + 0.5) * res;
            const double cy = window.origin_y + (iy + 0.5) * res;
            bool occ = world.grid.occupied_at_point(cx, cy);
            for (std::size_t i = 0; !occ && i < world.obstacles.size(); ++i) {
                if (!revealed[i]) continue;
                const double dx = cx - world.obstacles[i].cx;
                const double dy = cy - world.obstacles[i].cy;
                occ = dx * dx + dy * dy <= world.obstacles[i].radius * world.obstacles[i].radius;
            }
            if (occ) window.at(ix, iy) = 1;
        }
    }
    return window;
}

// Cost view of one planning step: a frozen snapshot of the revealed set plus
// the local costmap around the believed pose. Read-only, safe to share across
// candidate evaluations.
class CostEvaluator {
public:
    CostEvaluator(const World& world, const std::vector<std::uint8_t>& revealed,
                  const State& believed)
        : world_(world), revealed_(revealed), costmap_(local_costmap(world, revealed, believed)) {}

    const OccupancyGrid& costmap() const { return costmap_; }

    // Collision as the planner can know it: static grid plus revealed obstacles.
    bool in_collision_known(const State& s) const {
        if (detail::footprint_hits_grid(world_.grid, s.x, s.y, world_.cfg.footprint_radius))
            return true;
        for (std::size_t i = 0; i < world_.obstacles.size(); ++i)
            if (revealed_[i] && detail::footprint_hits_obstacle(world_.obstacles[i], s.x, s.y,
                                                                world_.cfg.footprint_radius))
                return true;
        return false;
    }

    // Occupied fraction of the footprint disc in the costmap window, scaled to
    // [0, c_collision / 10].
    double local_cost(const State& s) const {
        const double r = world_.cfg.footprint_radius;
        const double res = costmap_.resolution;
        const int ix0 = static_cast<int>(std::floor((s.x - r - costmap_.origin_x) / res));
        const int ix1 = static_cast<int>(std::floor((s.x + r - costmap_.origin_x) / res));
        const int iy0 = static_cast<int>(std::floor((s.y - r - costmap_.origin_y) / res));
        const int iy1 = static_cast<int>(std::floor((s.y + r - costmap_.origin_y) / res));
        int total = 0, hit = 0;
        for (int iy = iy0; iy <= iy1; ++iy) {
            for (int ix = ix0; ix <= ix1; ++ix) {
                const double cx = costmap_.origin_x + (ix + 0.5) * res;
                const double cy = costmap_.origin_y + (iy + 0.5) * res;
                const double dx = cx - s.x;
                const double dy = cy - s.y;
                if (dx * dx + dy * dy > r * r) continue;
                if (!costmap_.in_bounds(ix, iy)) continue;
                ++total;
                if (costmap_.at(ix, iy) != 0) ++hit;
            }
        }
        if (total == 0) return 0.0;
        return (static_cast<double>(hit) / total) * world_.cfg.c_collision / 10.0;
    }

    // Per-state obstacle costs. Once any state up to t has collided, every
    // cost from that index on is c_collision.
    std::vector<double> obstacle_cost(const Trajectory& traj) const {
        std::vector<double> costs(traj.size());
        bool latched = false;
        for (std::size_t t = 0; t < traj.size(); ++t) {
            if (!latched && in_collision_known(traj[t])) latched = true;
            costs[t] = latched ? world_.cfg.c_collision : local_cost(traj[t]);
        }
        return costs;
    }

    // Per-state goal costs; frozen at the colliding state's distance from the
    // first collision onward.
    std::vector<double> goal_cost(const Trajectory& traj) const {
        std::vector<double> costs(traj.size());
        bool latched = false;
        double frozen = 0.0;
        for (std::size_t t = 0; t < traj.size(); ++t) {
            if (latched) {
                costs[t] = frozen;
                continue;
            }
            costs[t] = goal_distance(traj[t], world_.cfg);
            if (in_collision_known(traj[t])) {
                latched = true;
                frozen = costs[t];
            }
        }
        return costs;
    }

    // J = lambda_phi * min goal cost + running sum, accumulated up to and
    // including the first goal-reaching state.
    double trajectory_cost(const Trajectory& traj) const {
        const std::vector<double> g = goal_cost(traj);
        const std::vector<double> o = obstacle_cost(traj);
        std::size_t t_stop = traj.size();
        for (std::size_t t = 0; t < traj.size(); ++t) {
            if (g[t] <= world_.cfg.goal_radius) {
                t_stop = t + 1;
                break;
            }
        }
        double min_goal = std::numeric_limits<double>::infinity();
        double running = 0.0;
        for (std::size_t t = 0; t < t_stop; ++t) {
            min_goal = std::min(min_goal, g[t]);
            running += world_.cfg.lambda_obs * o[t] + world_.cfg.lambda_goal * g[t];
        }
        return world_.cfg.lambda_phi * min_goal + running;
    }

private:
    const World& world_;
    std::vector<std::uint8_t> revealed_;
    OccupancyGrid costmap_;
};

enum class Outcome { running, success, collision, timeout };

inline const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::running: return "running";
        case Outcome::success: return "success";
        case Outcome::collision: return "collision";
        case Outcome::timeout: return "timeout";
    }
    return "?";
}

struct SimState {
    State true_state;
    State believed_state;
    std::vector<std::uint8_t> revealed;
    int step = 0;
    Outcome outcome = Outcome::running;
    // Episodes that start inside the goal region (e.g. return-to-start tasks)
    // must leave it before a success can be declared.
    bool started_in_goal = false;
    bool left_goal = false;
};

namespace detail {

inline void reveal_pass(SimState& sim, const World& world) {
    for (std::size_t i = 0; i < world.obstacles.size(); ++i) {
        if (sim.revealed[i]) continue;
        const double dx = sim.true_state.x - world.obstacles[i].cx;
        const double dy = sim.true_state.y - world.obstacles[i].cy;
        const double boundary = std::sqrt(dx * dx + dy * dy) - world.obstacles[i].radius;
        if (boundary <= world.cfg.reveal_distance) sim.revealed[i] = 1;
    }
}

inline bool goal_reached(const State& s, const WorldConfig& cfg) {
    const double dx = s.x - cfg.goal.x;
    const double dy = s.y - cfg.goal.y;
    if (std::sqrt(dx * dx + dy * dy) > cfg.goal_radius) return false;
    if (!cfg.heading_aware) return true;
    return std::abs(wrap_angle(s.psi - cfg.goal.psi)) <= cfg.goal_psi_tol;
}

inline bool inside_goal_radius(const State& s, const WorldConfig& cfg) {
    const double dx = s.x - cfg.goal.x;
    const double dy = s.y - cfg.goal.y;
    return std::sqrt(dx * dx + dy * dy) <= cfg.goal_radius;
}

}  // namespace detail

inline SimState make_sim(const World& world) {
    SimState sim;
    sim.true_state = world.cfg.start;
    sim.believed_state = world.cfg.start;
    sim.revealed.assign(world.obstacles.size(), 0);
    detail::reveal_pass(sim, world);
    sim.started_in_goal = detail::inside_goal_radius(sim.true_state, world.cfg);
    return sim;
}

// Advances the episode one control step. Physics ignores belief: collisions
// are checked against every obstacle whether or not it has been revealed.
inline void step_sim(SimState& sim, const ControlInput& u, const World& world,
                     const VehicleParams& vp, Rng& rng) {
    if (sim.outcome != Outcome::running)
        throw std::logic_error("step_sim: episode already terminal");
    sim.true_state = step(sim.true_state, u, vp);
    sim.believed_state = sim.true_state;
    if (world.cfg.noise_xy > 0.0 || world.cfg.noise_psi > 0.0) {
        sim.believed_state.x += rng.normal(0.0, world.cfg.noise_xy);
        sim.believed_state.y += rng.normal(0.0, world.cfg.noise_xy);
        sim.believed_state.psi = wrap_angle(sim.believed_state.psi + rng.normal(0.0, world.cfg.noise_psi));
    }
    ++sim.step;
    detail::reveal_pass(sim, world);
    if (!detail::inside_goal_radius(sim.true_state, world.cfg)) sim.left_goal = true;

    if (in_collision_physics(world, sim.true_state)) {
        sim.outcome = Outcome::collision;
    } else if (detail::goal_reached(sim.true_state, world.cfg) &&
               (!sim.started_in_goal || sim.left_goal)) {
        sim.outcome = Outcome::success;
    } else if (sim.step >= world.cfg.step_budget) {
        sim.outcome = Outcome::timeout;
    }
}

// Rejection-sampled non-overlapping discs, keeping a clearance corridor around
// the start and goal points and a minimum boundary gap between obstacles so
// the vehicle can physically thread the field. Deterministic per seed.
inline World generate_cluttered_world(int n_obstacles, double extent_x, double extent_y,
                                      double min_clearance, std::uint64_t seed,
                                      const WorldConfig& cfg, double obstacle_radius = 1.0,
                                      double min_gap = 1.0) {
    World world;
    world.cfg = cfg;
    Rng rng(seed);
    const int max_attempts = 10000 * std::max(1, n_obstacles);
    const double min_center_dist = 2.0 * obstacle_radius + min_gap;
    int attempts = 0;
    while (static_cast<int>(world.obstacles.size()) < n_obstacles) {
        if (++attempts > max_attempts)
            throw std::runtime_error("generate_cluttered_world: packing failed after " +
                                     std::to_string(max_attempts) + " attempts");
        Obstacle o;
        o.radius = obstacle_radius;
        o.cx = rng.uniform(obstacle_radius, extent_x - obstacle_radius);
        o.cy = rng.uniform(obstacle_radius, extent_y - obstacle_radius);
        const double keep_out = obstacle_radius + min_clearance;
        const double dsx = o.cx - cfg.start.x, dsy = o.cy - cfg.start.y;
        const double dgx = o.cx - cfg.goal.x, dgy = o.cy - cfg.goal.y;
        if (dsx * dsx + dsy * dsy < keep_out * keep_out) continue;
        if (dgx * dgx + dgy * dgy < keep_out * keep_out) continue;
        bool overlaps = false;
        for (const auto& other : world.obstacles) {
            const double dx = o.cx - other.cx, dy = o.cy - other.cy;
            if (dx * dx + dy * dy < min_center_dist * min_center_dist) {
                overlaps = true;
                break;
            }
        }
        if (!overlaps) world.obstacles.push_back(o);
    }
    return world;
}

// ---------------------------------------------------------------------------
// Grid file format: line 1 "width height resolution", then `height` rows of
// `width` characters from {0, 1}. '#' starts a comment. Row r holds the cells
// with iy = r.

inline OccupancyGrid load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open grid file: " + path);
    OccupancyGrid g;
    std::string line;
    int line_no = 0;
    int rows_read = 0;
    bool header_done = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto pos = line.find('#'); pos != std::string::npos) line.resize(pos);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
            line.pop_back();
        if (line.empty()) continue;
        if (!header_done) {
            std::istringstream iss(line);
            if (!(iss >> g.width >> g.height >> g.resolution) || g.width <= 0 || g.height <= 0 ||
                g.resolution <= 0.0)
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": invalid header, expected \"width height resolution\"");
            g.occ.assign(static_cast<std::size_t>(g.width) * g.height, 0);
            header_done = true;
            continue;
        }
        if (rows_read >= g.height)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": extra grid row");
        if (static_cast<int>(line.size()) != g.width)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": row has " +
                                     std::to_string(line.size()) + " cells, expected " +
                                     std::to_string(g.width));
        for (int ix = 0; ix < g.width; ++ix) {
            const char c = line[static_cast<std::size_t>(ix)];
            if (c != '0' && c != '1')
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": invalid cell character '" + std::string(1, c) + "'");
            g.at(ix, rows_read) = c == '1' ? 1 : 0;
        }
        ++rows_read;
    }
    if (!header_done) throw std::runtime_error(path + ": empty grid file");
    if (rows_read != g.height)
        throw std::runtime_error(path + ": got " + std::to_string(rows_read) + " rows, expected " +
                                 std::to_string(g.height));
    return g;
}

inline void save_grid(const OccupancyGrid& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << g.width << ' ' << g.height << ' ' << g.resolution << '\n';
    for (int iy = 0; iy < g.height; ++iy) {
        for (int ix = 0; ix < g.width; ++ix) out << (g.at(ix, iy) ? '1' : '0');
        out << '\n';
    }
}

}  // namespace cuniform
