#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cuniform/binary_io.hpp"
#include "cuniform/common.hpp"
#include "cuniform/dynamics.hpp"

namespace cuniform {

// Uniformity cell extents. The psi axis is circular with round(2*pi/dpsi) bins.
struct Resolution {
    double dx = 0.05;
    double dy = 0.05;
    double dpsi = deg2rad(4.5);

    int psi_bins() const { return static_cast<int>(std::lround(2.0 * kPi / dpsi)); }
};

struct CellKey {
    std::int32_t ix = 0;
    std::int32_t iy = 0;
    std::int32_t ipsi = 0;

    friend bool operator==(const CellKey&, const CellKey&) = default;
    friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const {
        std::uint64_t h = static_cast<std::uint32_t>(k.ix);
        h = h * 0x9e3779b97f4a7c15ULL + static_cast<std::uint32_t>(k.iy);
        h = h * 0x9e3779b97f4a7c15ULL + static_cast<std::uint32_t>(k.ipsi);
        h ^= h >> 29;
        return static_cast<std::size_t>(h);
    }
};

struct Cell {
    CellKey key;
    State center;
    // Provenance of the breadth-first expansion; -1 for the root cell and for
    // cells restored from a file. `seed` is the continuous successor state
    // that first claimed the cell and `action` the input that produced it
    // from a state inside the parent cell.
    std::int32_t parent = -1;
    std::int32_t action = -1;
    State seed;
};

// Distance between states mixing position and heading, with heading weighted
// by w_psi meters per radian.
inline double state_distance(const State& a, const State& b, double w_psi) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    const double dpsi = w_psi * wrap_angle(a.psi - b.psi);
    return std::sqrt(dx * dx + dy * dy + dpsi * dpsi);
}

inline CellKey discretize(const State& s, const Resolution& r, const State& origin) {
    const int bins = r.psi_bins();
    const double rel_psi = wrap_angle_2pi(s.psi - origin.psi);
    int ipsi = static_cast<int>(std::floor(rel_psi / r.dpsi));
    ipsi = ((ipsi % bins) + bins) % bins;  // folds the partial last bin when dpsi does not divide 2*pi
    return CellKey{static_cast<std::int32_t>(std::floor((s.x - origin.x) / r.dx)),
                   static_cast<std::int32_t>(std::floor((s.y - origin.y) / r.dy)),
                   static_cast<std::int32_t>(ipsi)};
}

inline State cell_center(const CellKey& k, const Resolution& r, const State& origin) {
    return State{origin.x + (k.ix + 0.5) * r.dx, origin.y + (k.iy + 0.5) * r.dy,
                 wrap_angle(origin.psi + (k.ipsi + 0.5) * r.dpsi)};
}

// One reachable level: the set of cells first reached at step t. Cells are
// stored sorted by key; the hash index doubles as a spatial index for
// nearest-cell shell searches.
class LevelSet {
public:
    LevelSet() = default;
    LevelSet(int t, Resolution res, State origin, double w_psi)
        : t_(t), res_(res), origin_(origin), w_psi_(w_psi) {}

    int t() const { return t_; }
    const Resolution& resolution() const { return res_; }
    const State& origin() const { return origin_; }
    double w_psi() const { return w_psi_; }

    std::size_t size() const { return cells_.size(); }
    bool empty() const { return cells_.empty(); }
    const Cell& cell(std::size_t i) const { return cells_[i]; }
    const std::vector<Cell>& cells() const { return cells_; }

    int find(const CellKey& k) const {
        auto it = index_.find(k);
        return it == index_.end() ? -1 : it->second;
    }

    // Appends a cell; the caller guarantees the key is unused.
    void insert(const Cell& c) {
        index_.emplace(c.key, static_cast<int>(cells_.size()));
        cells_.push_back(c);
    }

    // Continuous states recorded inside each cell during construction (capped,
    // discovery order). Used to average the training assignment kernel over
    // the within-cell spread; empty for stacks restored from a file without
    // them.
    const std::vector<State>& members(std::size_t i) const {
        static const std::vector<State> none;
        return i < members_.size() ? members_[i] : none;
    }
    bool has_members() const { return !members_.empty(); }
    void set_members(std::vector<std::vector<State>> m) { members_ = std::move(m); }

    // Orders cells by ascending key and rebuilds the index. Fixed ordering
    // keeps builds and downstream iteration deterministic.
    void sort_by_key() {
        std::sort(cells_.begin(), cells_.end(),
                  [](const Cell& a, const Cell& b) { return a.key < b.key; });
        index_.clear();
        for (std::size_t i = 0; i < cells_.size(); ++i)
            index_.emplace(cells_[i].key, static_cast<int>(i));
    }

private:
    int t_ = 0;
    Resolution res_;
    State origin_;
    double w_psi_ = 1.0;
    std::vector<Cell> cells_;
    std::vector<std::vector<State>> members_;
    std::unordered_map<CellKey, int, CellKeyHash> index_;
};

struct NearestCell {
    int index = -1;
    double distance = std::numeric_limits<double>::infinity();
};

// k nearest cells of a level by state_distance, ties broken by ascending cell
// key. Searches index-space shells around the query and stops once no closer
// cell can exist; falls back to a full scan for far-away queries.
inline std::vector<NearestCell> nearest_cells(const LevelSet& level, const State& s, int k) {
    if (level.empty()) throw std::invalid_argument("nearest_cells: empty level set");
    if (k < 1) throw std::invalid_argument("nearest_cells: k must be >= 1");
    const Resolution& r = level.resolution();
    const double w_psi = level.w_psi();
    const int bins = r.psi_bins();
    const int want = std::min<int>(k, static_cast<int>(level.size()));

    struct Entry {
        double distance;
        CellKey key;
        int index;
        bool operator<(const Entry& o) const {
            if (distance != o.distance) return distance < o.distance;
            return key < o.key;
        }
    };
    // max-heap of the current best `want` candidates
    std::priority_queue<Entry> best;
    auto consider = [&](int idx) {
        const Cell& c = level.cell(static_cast<std::size_t>(idx));
        Entry e{state_distance(s, c.center, w_psi), c.key, idx};
        if (static_cast<int>(best.size()) < want) {
            best.push(e);
        } else if (e < best.top()) {
            best.pop();
            best.push(e);
        }
    };

    const CellKey q = discretize(s, r, level.origin());
    const double min_axis = std::min({r.dx, r.dy, w_psi * r.dpsi});
    const int psi_reach = bins / 2;
    const std::size_t scan_threshold = 4 * level.size();
    std::size_t probed = 0;
    bool fell_back = false;

    for (int shell = 0;; ++shell) {
        if (static_cast<int>(best.size()) == want &&
            (shell - 0.5) * min_axis > best.top().distance)
            break;
        bool shell_in_range = false;
        const int pr = std::min(shell, psi_reach);
        for (int di = -shell; di <= shell; ++di) {
            for (int dj = -shell; dj <= shell; ++dj) {
                for (int dp = -pr; dp <= pr; ++dp) {
                    if (std::max({std::abs(di), std::abs(dj), std::abs(dp)}) != shell) continue;
                    shell_in_range = true;
                    ++probed;
                    CellKey cand{q.ix + di, q.iy + dj,
                                 static_cast<std::int32_t>((((q.ipsi + dp) % bins) + bins) % bins)};
                    if (int idx = level.find(cand); idx >= 0) consider(idx);
                }
            }
        }
        if (probed > scan_threshold) { fell_back = true; break; }
        if (!shell_in_range && static_cast<int>(best.size()) == want) break;
    }
    if (fell_back) {
        while (!best.empty()) best.pop();
        for (std::size_t i = 0; i < level.size(); ++i) consider(static_cast<int>(i));
    }

    std::vector<NearestCell> out(best.size());
    for (auto i = out.size(); i-- > 0;) {
        out[i] = NearestCell{best.top().index, best.top().distance};
        best.pop();
    }
    return out;
}

inline double uniform_cell_probability(const LevelSet& level) {
    if (level.empty()) throw std::invalid_argument("uniform_cell_probability: empty level set");
    return 1.0 / static_cast<double>(level.size());
}

// Disjoint discretized reachable sets L_0..L_n built from one initial state.
// `origin` anchors the discretization grid; it is chosen so that the root
// state sits exactly at the center of its cell, which keeps the cell tree
// aligned with rollouts that start at the root.
struct LevelSetStack {
    Resolution res;
    State origin;  // grid anchor (cell corner reference for discretize)
    State root;    // the initial state the sets were grown from
    double w_psi = 1.0;
    std::vector<LevelSet> levels;

    int steps() const { return static_cast<int>(levels.size()) - 1; }

    double cell_diagonal() const {
        const double dp = w_psi * res.dpsi;
        return std::sqrt(res.dx * res.dx + res.dy * res.dy + dp * dp);
    }

    // First n_steps+1 levels, e.g. for training on a shorter horizon than the
    // stack was built for.
    LevelSetStack truncated(int n_steps) const {
        if (n_steps + 1 > static_cast<int>(levels.size()))
            throw std::invalid_argument("truncated: stack has fewer levels");
        LevelSetStack out{res, origin, root, w_psi, {}};
        out.levels.assign(levels.begin(), levels.begin() + n_steps + 1);
        return out;
    }
};

// Breadth-first expansion of discretized level sets. Every cell tracks up to
// states_per_cell member states (the continuous successors that landed in it,
// in discovery order); each member is propagated through every action and a
// successor claims its cell key globally. Levels are therefore disjoint and
// every cell is genuinely reachable by some rollout from x0. A value of 0
// restricts the expansion to cell centers.
inline LevelSetStack build_level_sets(const State& x0, const std::vector<double>& action_deltas,
                                      const VehicleParams& p, const Resolution& r, int n_steps,
                                      double w_psi = 1.0, int states_per_cell = 16) {
    if (n_steps < 1) throw std::invalid_argument("build_level_sets: n_steps must be >= 1");
    if (action_deltas.empty()) throw std::invalid_argument("build_level_sets: no actions");

    // Anchor the grid half a cell below x0 on every axis so x0 is the exact
    // center of cell (0, 0, 0) and expansion starts from a representative
    // state instead of drifting half a cell away from real rollouts.
    const State anchor{x0.x - 0.5 * r.dx, x0.y - 0.5 * r.dy, wrap_angle(x0.psi - 0.5 * r.dpsi)};
    LevelSetStack stack{r, anchor, x0, w_psi, {}};
    std::unordered_map<CellKey, int, CellKeyHash> claimed;  // key -> owning level

    LevelSet first(0, r, anchor, w_psi);
    const CellKey k0 = discretize(x0, r, anchor);
    first.insert(Cell{k0, cell_center(k0, r, anchor), -1, -1, x0});
    first.set_members({{x0}});
    claimed.emplace(k0, 0);
    stack.levels.push_back(std::move(first));
    std::vector<std::vector<State>> members{{x0}};

    for (int t = 0; t < n_steps; ++t) {
        const LevelSet& cur = stack.levels.back();
        struct Pending {
            Cell cell;
            std::vector<State> states;
        };
        std::vector<Pending> found;
        std::unordered_map<CellKey, int, CellKeyHash> fresh;  // key -> index into found

        auto visit = [&](const State& succ, std::size_t parent, std::size_t action) {
            const CellKey key = discretize(succ, r, anchor);
            if (const auto it = fresh.find(key); it != fresh.end()) {
                auto& m = found[static_cast<std::size_t>(it->second)].states;
                if (static_cast<int>(m.size()) < std::max(states_per_cell, 1)) m.push_back(succ);
                return;
            }
            if (claimed.contains(key)) return;
            claimed.emplace(key, t + 1);
            fresh.emplace(key, static_cast<int>(found.size()));
            found.push_back(Pending{Cell{key, cell_center(key, r, anchor),
                                         static_cast<std::int32_t>(parent),
                                         static_cast<std::int32_t>(action), succ},
                                    {succ}});
        };

        for (std::size_t ci = 0; ci < cur.size(); ++ci) {
            if (states_per_cell == 0) {
                for (std::size_t ai = 0; ai < action_deltas.size(); ++ai)
                    visit(step(cur.cell(ci).center, ControlInput{action_deltas[ai]}, p), ci, ai);
            } else {
                for (const State& s : members[ci])
                    for (std::size_t ai = 0; ai < action_deltas.size(); ++ai)
                        visit(step(s, ControlInput{action_deltas[ai]}, p), ci, ai);
            }
        }
        if (found.empty())
            throw std::runtime_error("build_level_sets: level " + std::to_string(t + 1) +
                                     " is empty (all successors already claimed)");

        std::vector<int> order(found.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return found[static_cast<std::size_t>(a)].cell.key <
                   found[static_cast<std::size_t>(b)].cell.key;
        });

        LevelSet next(t + 1, r, anchor, w_psi);
        std::vector<std::vector<State>> next_members;
        next_members.reserve(found.size());
        for (int idx : order) {
            next.insert(found[static_cast<std::size_t>(idx)].cell);
            next_members.push_back(std::move(found[static_cast<std::size_t>(idx)].states));
        }
        members = next_members;
        next.set_members(std::move(next_members));
        stack.levels.push_back(std::move(next));
    }
    return stack;
}

// ---------------------------------------------------------------------------
// Serialization: magic "CULS", u32 version, resolution triple, grid origin,
// root state, w_psi, then per level a cell count followed by
// (ix, iy, ipsi, center, member states) records. Little-endian f64 / i32.

inline constexpr std::uint32_t kLevelSetFormatVersion = 1;

inline void save_level_sets(const LevelSetStack& stack, const std::string& path) {
    detail::BinaryWriter w(path);
    w.magic("CULS");
    w.u32(kLevelSetFormatVersion);
    w.f64(stack.res.dx);
    w.f64(stack.res.dy);
    w.f64(stack.res.dpsi);
    w.f64(stack.origin.x);
    w.f64(stack.origin.y);
    w.f64(stack.origin.psi);
    w.f64(stack.root.x);
    w.f64(stack.root.y);
    w.f64(stack.root.psi);
    w.f64(stack.w_psi);
    w.u32(static_cast<std::uint32_t>(stack.levels.size()));
    for (const auto& level : stack.levels) {
        w.u32(static_cast<std::uint32_t>(level.size()));
        for (std::size_t i = 0; i < level.size(); ++i) {
            const Cell& c = level.cell(i);
            w.i32(c.key.ix);
            w.i32(c.key.iy);
            w.i32(c.key.ipsi);
            w.f64(c.center.x);
            w.f64(c.center.y);
            w.f64(c.center.psi);
            const auto& members = level.members(i);
            w.u32(static_cast<std::uint32_t>(members.size()));
            for (const State& m : members) {
                w.f64(m.x);
                w.f64(m.y);
                w.f64(m.psi);
            }
        }
    }
}

inline LevelSetStack load_level_sets(const std::string& path) {
    detail::BinaryReader rd(path);
    rd.expect_magic("CULS");
    const std::uint32_t version = rd.u32();
    if (version != kLevelSetFormatVersion)
        throw std::runtime_error("load_level_sets: unsupported format version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kLevelSetFormatVersion) + ")");
    LevelSetStack stack;
    stack.res.dx = rd.f64();
    stack.res.dy = rd.f64();
    stack.res.dpsi = rd.f64();
    stack.origin.x = rd.f64();
    stack.origin.y = rd.f64();
    stack.origin.psi = rd.f64();
    stack.root.x = rd.f64();
    stack.root.y = rd.f64();
    stack.root.psi = rd.f64();
    stack.w_psi = rd.f64();
    const std::uint32_t n_levels = rd.u32();
    stack.levels.reserve(n_levels);
    for (std::uint32_t t = 0; t < n_levels; ++t) {
        LevelSet level(static_cast<int>(t), stack.res, stack.origin, stack.w_psi);
        const std::uint32_t n_cells = rd.u32();
        std::vector<std::vector<State>> members;
        members.reserve(n_cells);
        for (std::uint32_t i = 0; i < n_cells; ++i) {
            Cell c;
            c.key.ix = rd.i32();
            c.key.iy = rd.i32();
            c.key.ipsi = rd.i32();
            c.center.x = rd.f64();
            c.center.y = rd.f64();
            c.center.psi = rd.f64();
            level.insert(c);
            const std::uint32_t n_members = rd.u32();
            std::vector<State> m(n_members);
            for (auto& st : m) {
                st.x = rd.f64();
                st.y = rd.f64();
                st.psi = rd.f64();
            }
            members.push_back(std::move(m));
        }
        level.set_members(std::move(members));
        stack.levels.push_back(std::move(level));
    }
    return stack;
}

}  // namespace cuniform
