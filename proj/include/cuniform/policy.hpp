#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuniform/binary_io.hpp"
#include "cuniform/dynamics.hpp"
#include "cuniform/levelset.hpp"
#include "cuniform/rng.hpp"

namespace cuniform {

// Discrete steering actions, uniformly spaced and exactly symmetric about 0.
struct ActionSet {
    std::vector<double> deltas;

    static ActionSet uniform_spread(int n, double delta_max) {
        if (n < 1 || n % 2 == 0)
            throw std::invalid_argument("ActionSet: action count must be odd and positive");
        ActionSet a;
        a.deltas.resize(n);
        const int mid = n / 2;
        const double stride = delta_max / mid;
        for (int j = 0; j <= mid; ++j) {
            a.deltas[mid + j] = j * stride;
            a.deltas[mid - j] = -(j * stride);
        }
        a.deltas.front() = -delta_max;
        a.deltas.back() = delta_max;
        return a;
    }

    int size() const { return static_cast<int>(deltas.size()); }
};

using ActionPmf = std::vector<double>;

// Network input encoding: (x, y, cos psi, sin psi).
inline Eigen::Vector4d encode_state(const State& s) {
    return Eigen::Vector4d(s.x, s.y, std::cos(s.psi), std::sin(s.psi));
}

inline Eigen::MatrixXd encode_states(const std::vector<State>& states) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(states.size()), 4);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        X.row(i) = encode_state(states[static_cast<std::size_t>(i)]).transpose();
    return X;
}

struct PolicyConfig {
    int input_dim = 4;
    int hidden = 256;
    int n_actions = 45;
    bool batchnorm = true;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
};

// Intermediate activations of one train-mode forward pass, kept for backprop.
struct ForwardCache {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Z1, A1, XH1, H1;
    Eigen::MatrixXd Z2, A2, XH2, H2;
    Eigen::MatrixXd P;
    Eigen::VectorXd invstd1, invstd2;
};

// Two hidden layers (affine -> ReLU -> batchnorm), affine output, softmax over
// the discrete action set. Train-mode batchnorm normalizes with batch
// statistics and maintains running statistics for eval mode.
class PolicyNetwork {
public:
    PolicyNetwork() = default;
    PolicyNetwork(const PolicyConfig& cfg, std::uint64_t seed) : cfg_(cfg) { initialize(seed); }

    const PolicyConfig& config() const { return cfg_; }

    // Kaiming-uniform fan-in init for the hidden layers; the output layer is
    // zeroed so an untrained network emits the uniform pmf.
    void initialize(std::uint64_t seed) {
        const int h = cfg_.hidden;
        const int in = cfg_.input_dim;
        const int a = cfg_.n_actions;
        Rng rng(seed);
        W1_ = uniform_matrix(h, in, std::sqrt(6.0 / in), rng);
        b1_ = Eigen::VectorXd::Zero(h);
        W2_ = uniform_matrix(h, h, std::sqrt(6.0 / h), rng);
        b2_ = Eigen::VectorXd::Zero(h);
        W3_ = Eigen::MatrixXd::Zero(a, h);
        b3_ = Eigen::VectorXd::Zero(a);
        g1_ = Eigen::VectorXd::Ones(h);
        be1_ = Eigen::VectorXd::Zero(h);
        g2_ = Eigen::VectorXd::Ones(h);
        be2_ = Eigen::VectorXd::Zero(h);
        rm1_ = Eigen::VectorXd::Zero(h);
        rv1_ = Eigen::VectorXd::Ones(h);
        rm2_ = Eigen::VectorXd::Zero(h);
        rv2_ = Eigen::VectorXd::Ones(h);
    }

    Eigen::MatrixXd forward_eval(const Eigen::MatrixXd& X) const {
        Eigen::MatrixXd a1 = (X * W1_.transpose()).rowwise() + b1_.transpose();
        relu_inplace(a1);
        if (cfg_.batchnorm) bn_eval_inplace(a1, rm1_, rv1_, g1_, be1_);
        Eigen::MatrixXd a2 = (a1 * W2_.transpose()).rowwise() + b2_.transpose();
        relu_inplace(a2);
        if (cfg_.batchnorm) bn_eval_inplace(a2, rm2_, rv2_, g2_, be2_);
        Eigen::MatrixXd z3 = (a2 * W3_.transpose()).rowwise() + b3_.transpose();
        softmax_rows_inplace(z3);
        return z3;
    }

    // Train-mode forward; updates the running statistics as a side effect.
    Eigen::MatrixXd forward_train(const Eigen::MatrixXd& X, ForwardCache& cache) {
        cache.X = X;
        cache.Z1.noalias() = X * W1_.transpose();
        cache.Z1.rowwise() += b1_.transpose();
        cache.A1 = cache.Z1.cwiseMax(0.0);
        if (cfg_.batchnorm) {
            bn_train(cache.A1, g1_, be1_, rm1_, rv1_, cache.XH1, cache.H1, cache.invstd1);
        } else {
            cache.H1 = cache.A1;
        }
        cache.Z2.noalias() = cache.H1 * W2_.transpose();
        cache.Z2.rowwise() += b2_.transpose();
        cache.A2 = cache.Z2.cwiseMax(0.0);
        if (cfg_.batchnorm) {
            bn_train(cache.A2, g2_, be2_, rm2_, rv2_, cache.XH2, cache.H2, cache.invstd2);
        } else {
            cache.H2 = cache.A2;
        }
        cache.P.noalias() = cache.H2 * W3_.transpose();
        cache.P.rowwise() += b3_.transpose();
        softmax_rows_inplace(cache.P);
        return cache.P;
    }

    // Gradient of a scalar loss w.r.t. all parameters, given dLoss/dP from a
    // cached train-mode pass. Packing matches get_params().
    Eigen::VectorXd backward(const ForwardCache& cache, const Eigen::MatrixXd& dP) const {
        // softmax
        Eigen::MatrixXd dZ3 = cache.P.cwiseProduct(dP);
        const Eigen::VectorXd rowdot = dZ3.rowwise().sum();
        dZ3.noalias() -= rowdot.asDiagonal() * cache.P;

        Eigen::MatrixXd dW3 = dZ3.transpose() * cache.H2;
        Eigen::VectorXd db3 = dZ3.colwise().sum();
        Eigen::MatrixXd dH2 = dZ3 * W3_;

        Eigen::VectorXd dg2, dbe2, dg1, dbe1;
        Eigen::MatrixXd dA2;
        if (cfg_.batchnorm) {
            bn_backward(dH2, cache.XH2, cache.invstd2, g2_, dA2, dg2, dbe2);
        } else {
            dA2 = std::move(dH2);
        }
        Eigen::MatrixXd dZ2 = dA2.cwiseProduct((cache.Z2.array() > 0.0).cast<double>().matrix());

        Eigen::MatrixXd dW2 = dZ2.transpose() * cache.H1;
        Eigen::VectorXd db2 = dZ2.colwise().sum();
        Eigen::MatrixXd dH1 = dZ2 * W2_;

        Eigen::MatrixXd dA1;
        if (cfg_.batchnorm) {
            bn_backward(dH1, cache.XH1, cache.invstd1, g1_, dA1, dg1, dbe1);
        } else {
            dA1 = std::move(dH1);
        }
        Eigen::MatrixXd dZ1 = dA1.cwiseProduct((cache.Z1.array() > 0.0).cast<double>().matrix());

        Eigen::MatrixXd dW1 = dZ1.transpose() * cache.X;
        Eigen::VectorXd db1 = dZ1.colwise().sum();

        Eigen::VectorXd grad(n_params());
        Eigen::Index off = 0;
        pack(grad, off, dW1);
        pack(grad, off, db1);
        if (cfg_.batchnorm) {
            pack(grad, off, dg1);
            pack(grad, off, dbe1);
        }
        pack(grad, off, dW2);
        pack(grad, off, db2);
        if (cfg_.batchnorm) {
            pack(grad, off, dg2);
            pack(grad, off, dbe2);
        }
        pack(grad, off, dW3);
        pack(grad, off, db3);
        return grad;
    }

    Eigen::Index n_params() const {
        Eigen::Index n = W1_.size() + b1_.size() + W2_.size() + b2_.size() + W3_.size() + b3_.size();
        if (cfg_.batchnorm) n += g1_.size() + be1_.size() + g2_.size() + be2_.size();
        return n;
    }

    Eigen::VectorXd get_params() const {
        Eigen::VectorXd p(n_params());
        Eigen::Index off = 0;
        pack(p, off, W1_);
        pack(p, off, b1_);
        if (cfg_.batchnorm) {
            pack(p, off, g1_);
            pack(p, off, be1_);
        }
        pack(p, off, W2_);
        pack(p, off, b2_);
        if (cfg_.batchnorm) {
            pack(p, off, g2_);
            pack(p, off, be2_);
        }
        pack(p, off, W3_);
        pack(p, off, b3_);
        return p;
    }

    void set_params(const Eigen::VectorXd& p) {
        if (p.size() != n_params()) throw std::invalid_argument("set_params: size mismatch");
        Eigen::Index off = 0;
        unpack(p, off, W1_);
        unpack(p, off, b1_);
        if (cfg_.batchnorm) {
            unpack(p, off, g1_);
            unpack(p, off, be1_);
        }
        unpack(p, off, W2_);
        unpack(p, off, b2_);
        if (cfg_.batchnorm) {
            unpack(p, off, g2_);
            unpack(p, off, be2_);
        }
        unpack(p, off, W3_);
        unpack(p, off, b3_);
    }

    // Replaces running statistics with exact population statistics of the
    // given inputs under the current weights.
    void recalibrate_batchnorm(const Eigen::MatrixXd& X) {
        if (!cfg_.batchnorm || X.rows() < 1) return;
        const double b = static_cast<double>(X.rows());
        Eigen::MatrixXd a1 = (X * W1_.transpose()).rowwise() + b1_.transpose();
        relu_inplace(a1);
        rm1_ = a1.colwise().mean();
        rv1_ = (a1.rowwise() - rm1_.transpose()).array().square().colwise().sum() / b;
        bn_eval_inplace(a1, rm1_, rv1_, g1_, be1_);
        Eigen::MatrixXd a2 = (a1 * W2_.transpose()).rowwise() + b2_.transpose();
        relu_inplace(a2);
        rm2_ = a2.colwise().mean();
        rv2_ = (a2.rowwise() - rm2_.transpose()).array().square().colwise().sum() / b;
    }

    // Serialized alongside the affine/batchnorm parameters.
    const Eigen::VectorXd& running_mean1() const { return rm1_; }
    const Eigen::VectorXd& running_var1() const { return rv1_; }
    const Eigen::VectorXd& running_mean2() const { return rm2_; }
    const Eigen::VectorXd& running_var2() const { return rv2_; }
    void set_running_stats(Eigen::VectorXd m1, Eigen::VectorXd v1, Eigen::VectorXd m2,
                           Eigen::VectorXd v2) {
        rm1_ = std::move(m1);
        rv1_ = std::move(v1);
        rm2_ = std::move(m2);
        rv2_ = std::move(v2);
    }

private:
    static Eigen::MatrixXd uniform_matrix(int rows, int cols, double bound, Rng& rng) {
        Eigen::MatrixXd m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
        return m;
    }

    static void relu_inplace(Eigen::MatrixXd& m) { m = m.cwiseMax(0.0); }

    static void softmax_rows_inplace(Eigen::MatrixXd& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            Eigen::ArrayXd row = m.row(i).array() - m.row(i).maxCoeff();
            row = row.exp();
            m.row(i) = (row / row.sum()).matrix();
        }
    }

    void bn_eval_inplace(Eigen::MatrixXd& a, const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& var, const Eigen::VectorXd& gamma,
                         const Eigen::VectorXd& beta) const {
        const Eigen::ArrayXd scale = gamma.array() / (var.array() + cfg_.bn_eps).sqrt();
        const Eigen::ArrayXd shift = beta.array() - mean.array() * scale;
        a = (a.array().rowwise() * scale.transpose()).rowwise() + shift.transpose();
    }

    void bn_train(const Eigen::MatrixXd& a, const Eigen::VectorXd& gamma,
                  const Eigen::VectorXd& beta, Eigen::VectorXd& rmean, Eigen::VectorXd& rvar,
                  Eigen::MatrixXd& xhat, Eigen::MatrixXd& out, Eigen::VectorXd& invstd) {
        const double b = static_cast<double>(a.rows());
        const Eigen::VectorXd mean = a.colwise().mean();
        const Eigen::VectorXd var =
            (a.rowwise() - mean.transpose()).array().square().colwise().sum() / b;
        invstd = (var.array() + cfg_.bn_eps).rsqrt();
        xhat = (a.rowwise() - mean.transpose()).array().rowwise() *
               invstd.transpose().array();
        out = (xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
              beta.transpose().array();
        const double m = cfg_.bn_momentum;
        rmean = (1.0 - m) * rmean + m * mean;
        rvar = (1.0 - m) * rvar + m * var;
    }

    // Biased-variance batchnorm backward through the batch statistics.
    static void bn_backward(const Eigen::MatrixXd& dout, const Eigen::MatrixXd& xhat,
                            const Eigen::VectorXd& invstd, const Eigen::VectorXd& gamma,
                            Eigen::MatrixXd& dx, Eigen::VectorXd& dgamma,
                            Eigen::VectorXd& dbeta) {
        const double b = static_cast<double>(dout.rows());
        dgamma = dout.cwiseProduct(xhat).colwise().sum();
        dbeta = dout.colwise().sum();
        const Eigen::ArrayXd coef = gamma.array() * invstd.array() / b;
        dx = ((dout.array() * b).rowwise() -
              dbeta.transpose().array() -
              xhat.array().rowwise() * dgamma.transpose().array())
                 .rowwise() *
             coef.transpose();
    }

    static void pack(Eigen::VectorXd& dst, Eigen::Index& off, const Eigen::MatrixXd& m) {
        dst.segment(off, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        off += m.size();
    }
    static void unpack(const Eigen::VectorXd& src, Eigen::Index& off, Eigen::MatrixXd& m) {
        Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = src.segment(off, m.size());
        off += m.size();
    }
    static void pack(Eigen::VectorXd& dst, Eigen::Index& off, const Eigen::VectorXd& v) {
        dst.segment(off, v.size()) = v;
        off += v.size();
    }
    static void unpack(const Eigen::VectorXd& src, Eigen::Index& off, Eigen::VectorXd& v) {
        v = src.segment(off, v.size());
        off += v.size();
    }

    PolicyConfig cfg_;
    Eigen::MatrixXd W1_, W2_, W3_;
    Eigen::VectorXd b1_, b2_, b3_;
    Eigen::VectorXd g1_, be1_, g2_, be2_;
    Eigen::VectorXd rm1_, rv1_, rm2_, rv2_;
};

// Action pmf for one state expressed in the network's training frame.
inline ActionPmf forward_pmf(const PolicyNetwork& net, const State& canonical) {
    const Eigen::MatrixXd p = net.forward_eval(encode_state(canonical).transpose());
    ActionPmf pmf(static_cast<std::size_t>(p.cols()));
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
        if (!std::isfinite(p(0, i))) throw std::runtime_error("forward_pmf: non-finite output");
        pmf[static_cast<std::size_t>(i)] = p(0, i);
    }
    return pmf;
}

// Inverse-CDF draw from a pmf.
inline int sample_action(const ActionPmf& pmf, Rng& rng) {
    const double r = rng.uniform();
    double acc = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
        if (pmf[i] > 0.0) last_positive = static_cast<int>(i);
        acc += pmf[i];
        if (r < acc) return static_cast<int>(i);
    }
    return last_positive;
}

// ---------------------------------------------------------------------------
// Soft assignment (training-time occupancy prediction)

struct SoftAssignConfig {
    double beta = 0.0;  // kernel sharpness [1/m]; 0 selects 1/resolution.dx
    int k_neighbors = 8;
    bool eval_mode = false;
};

// Constants of the entropy objective for one level transition: for every
// (cell, action) pair, the k candidate target cells and their normalized
// kernel weights. Gradients flow through the action probabilities only, so
// this table is reusable across epochs.
struct AssignmentTable {
    int n_cells = 0;
    int n_actions = 0;
    int k = 0;
    std::vector<std::int32_t> index;
    std::vector<double> weight;
};

// Normalized exp(-beta * d) weights over candidate distances.
inline std::vector<double> kernel_weights(const std::vector<double>& distances, double beta) {
    std::vector<double> w(distances.size());
    const double dmin = *std::min_element(distances.begin(), distances.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(-beta * (distances[i] - dmin));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

inline AssignmentTable build_assignment_table(const LevelSetStack& stack, int t,
                                              const ActionSet& actions, const VehicleParams& vp,
                                              int k_neighbors, double beta,
                                              bool average_members = false) {
    if (t < 0 || t + 1 >= static_cast<int>(stack.levels.size()))
        throw std::invalid_argument("build_assignment_table: level out of range");
    const LevelSet& cur = stack.levels[static_cast<std::size_t>(t)];
    const LevelSet& next = stack.levels[static_cast<std::size_t>(t) + 1];
    if (next.empty()) throw std::runtime_error("build_assignment_table: next level is empty");
    const bool use_members = average_members && cur.has_members();

    AssignmentTable table;
    table.n_cells = static_cast<int>(cur.size());
    table.n_actions = actions.size();
    table.k = std::min<int>(k_neighbors, static_cast<int>(next.size()));
    table.index.resize(static_cast<std::size_t>(table.n_cells) * table.n_actions * table.k);
    table.weight.resize(table.index.size());

    std::vector<double> dists(static_cast<std::size_t>(table.k));
    std::vector<std::pair<double, std::int32_t>> pooled;  // weight, cell (for member averaging)
    std::size_t pos = 0;
    for (int c = 0; c < table.n_cells; ++c) {
        const Cell& cell = cur.cell(static_cast<std::size_t>(c));
        const auto& members = cur.members(static_cast<std::size_t>(c));
        for (int a = 0; a < table.n_actions; ++a) {
            const ControlInput u{actions.deltas[static_cast<std::size_t>(a)]};
            if (!use_members || members.size() <= 1) {
                const State succ = step(use_members && !members.empty() ? members.front()
                                                                        : cell.center,
                                        u, vp);
                const auto nbrs = nearest_cells(next, succ, table.k);
                for (int j = 0; j < table.k; ++j)
                    dists[static_cast<std::size_t>(j)] = nbrs[static_cast<std::size_t>(j)].distance;
                const auto w = kernel_weights(dists, beta);
                for (int j = 0; j < table.k; ++j, ++pos) {
                    table.index[pos] = nbrs[static_cast<std::size_t>(j)].index;
                    table.weight[pos] = w[static_cast<std::size_t>(j)];
                }
                continue;
            }
            // Average the per-state kernel over the cell's recorded members,
            // then keep the k strongest targets (renormalized). This matches
            // what rollouts passing through the cell actually do, instead of
            // what its geometric center would do.
            pooled.clear();
            const double member_mass = 1.0 / static_cast<double>(members.size());
            for (const State& m : members) {
                const State succ = step(m, u, vp);
                const auto nbrs = nearest_cells(next, succ, table.k);
                for (int j = 0; j < table.k; ++j)
                    dists[static_cast<std::size_t>(j)] = nbrs[static_cast<std::size_t>(j)].distance;
                const auto w = kernel_weights(dists, beta);
                for (int j = 0; j < table.k; ++j)
                    pooled.emplace_back(member_mass * w[static_cast<std::size_t>(j)],
                                        nbrs[static_cast<std::size_t>(j)].index);
            }
            std::sort(pooled.begin(), pooled.end(),
                      [](const auto& x, const auto& y) { return x.second < y.second; });
            std::vector<std::pair<double, std::int32_t>> merged;
            for (const auto& [w, idx] : pooled) {
                if (!merged.empty() && merged.back().second == idx)
                    merged.back().first += w;
                else
                    merged.emplace_back(w, idx);
            }
            std::sort(merged.begin(), merged.end(), [](const auto& x, const auto& y) {
                if (x.first != y.first) return x.first > y.first;
                return x.second < y.second;
            });
            if (static_cast<int>(merged.size()) > table.k) merged.resize(static_cast<std::size_t>(table.k));
            double total = 0.0;
            for (const auto& [w, idx] : merged) total += w;
            for (int j = 0; j < table.k; ++j, ++pos) {
                if (j < static_cast<int>(merged.size())) {
                    table.index[pos] = merged[static_cast<std::size_t>(j)].second;
                    table.weight[pos] = merged[static_cast<std::size_t>(j)].first / total;
                } else {
                    table.index[pos] = merged.front().second;
                    table.weight[pos] = 0.0;
                }
            }
        }
    }
    return table;
}

// q over next-level cells: each (cell, action) deposits
// p(action|cell) / n_cells split across its candidates. Sums to 1.
inline Eigen::VectorXd accumulate_occupancy(const Eigen::MatrixXd& probs,
                                            const AssignmentTable& table, int next_size) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(next_size);
    const double inv_b = 1.0 / static_cast<double>(table.n_cells);
    std::size_t pos = 0;
    for (int c = 0; c < table.n_cells; ++c) {
        for (int a = 0; a < table.n_actions; ++a) {
            const double mass = probs(c, a) * inv_b;
            for (int j = 0; j < table.k; ++j, ++pos)
                q[table.index[pos]] += mass * table.weight[pos];
        }
    }
    return q;
}

// dLoss/dP for loss = sum q log q given the accumulation above.
inline Eigen::MatrixXd occupancy_backward(const Eigen::VectorXd& q, const AssignmentTable& table) {
    Eigen::VectorXd dq(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i)
        dq[i] = q[i] > 0.0 ? std::log(q[i]) + 1.0 : 0.0;
    Eigen::MatrixXd dP(table.n_cells, table.n_actions);
    const double inv_b = 1.0 / static_cast<double>(table.n_cells);
    std::size_t pos = 0;
    for (int c = 0; c < table.n_cells; ++c) {
        for (int a = 0; a < table.n_actions; ++a) {
            double g = 0.0;
            for (int j = 0; j < table.k; ++j, ++pos)
                g += table.weight[pos] * dq[table.index[pos]];
            dP(c, a) = g * inv_b;
        }
    }
    return dP;
}

// Negative entropy of an occupancy vector; 0 log 0 := 0. Minimized (= -ln n)
// exactly at the uniform distribution.
inline double entropy_loss(const Eigen::VectorXd& q) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i)
        if (q[i] > 0.0) loss += q[i] * std::log(q[i]);
    return loss;
}

// Inputs for one level: cell centers expressed in the frame of the stack's
// root state (the same frame sample_cuniform uses at control time).
inline Eigen::MatrixXd level_inputs(const LevelSetStack& stack, int t) {
    const LevelSet& level = stack.levels[static_cast<std::size_t>(t)];
    Eigen::MatrixXd X(static_cast<Eigen::Index>(level.size()), 4);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        X.row(i) =
            encode_state(world_to_frame(stack.root, level.cell(static_cast<std::size_t>(i)).center))
                .transpose();
    return X;
}

// Predicted occupancy of L_{t+1} when every cell of L_t carries uniform mass
// and actions follow the network's pmf.
inline Eigen::VectorXd soft_assign(PolicyNetwork& net, const LevelSetStack& stack, int t,
                                   const ActionSet& actions, const VehicleParams& vp,
                                   const SoftAssignConfig& cfg) {
    const double beta = cfg.beta > 0.0 ? cfg.beta : 1.0 / stack.res.dx;
    const AssignmentTable table =
        build_assignment_table(stack, t, actions, vp, cfg.k_neighbors, beta);
    const Eigen::MatrixXd X = level_inputs(stack, t);
    Eigen::MatrixXd P;
    if (cfg.eval_mode) {
        P = net.forward_eval(X);
    } else {
        ForwardCache cache;
        P = net.forward_train(X, cache);
    }
    return accumulate_occupancy(P, table,
                                static_cast<int>(stack.levels[static_cast<std::size_t>(t) + 1].size()));
}

// ---------------------------------------------------------------------------
// Training (iterative level-set entropy maximization)

struct TrainConfig {
    double lr = 1e-4;
    int epochs = 20;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double beta_assign = 0.0;  // 0 selects 1/resolution.dx
    int k_neighbors = 8;
    // Average each cell's assignment kernel over its recorded member states
    // when the stack provides them (falls back to centers otherwise).
    bool member_kernel = false;
    // Decoupled weight decay; keeps logits small so the pmf stays soft when
    // the policy is queried beyond the trained horizon.
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

struct LossRecord {
    int epoch = 0;
    int level = 0;
    double loss = 0.0;
};

class AdamOptimizer {
public:
    AdamOptimizer(Eigen::Index n, double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
          m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        params.array() -=
            lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
    }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    Eigen::VectorXd m_, v_;
};

// One pass: for each transition t, predict the next-level occupancy, descend
// on sum q log q. Deterministic given cfg.seed (the only randomness is the
// initialization). Ends with a batchnorm recalibration over all cell inputs.
inline std::vector<LossRecord> train(PolicyNetwork& net, const LevelSetStack& stack,
                                     const ActionSet& actions, const VehicleParams& vp,
                                     const TrainConfig& cfg) {
    const int n_transitions = stack.steps();
    if (n_transitions < 1) throw std::invalid_argument("train: stack needs at least 2 levels");
    if (net.config().n_actions != actions.size())
        throw std::invalid_argument("train: action set size does not match network output");

    net.initialize(cfg.seed);
    const double beta = cfg.beta_assign > 0.0 ? cfg.beta_assign : 1.0 / stack.res.dx;

    std::vector<AssignmentTable> tables;
    std::vector<Eigen::MatrixXd> inputs;
    tables.reserve(static_cast<std::size_t>(n_transitions));
    inputs.reserve(static_cast<std::size_t>(n_transitions));
    for (int t = 0; t < n_transitions; ++t) {
        tables.push_back(build_assignment_table(stack, t, actions, vp, cfg.k_neighbors, beta,
                                                cfg.member_kernel));
        inputs.push_back(level_inputs(stack, t));
    }

    AdamOptimizer adam(net.n_params(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    std::vector<LossRecord> trace;
    trace.reserve(static_cast<std::size_t>(cfg.epochs) * n_transitions);
    ForwardCache cache;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int t = 0; t < n_transitions; ++t) {
            const Eigen::MatrixXd& P = net.forward_train(inputs[static_cast<std::size_t>(t)], cache);
            const int next_size =
                static_cast<int>(stack.levels[static_cast<std::size_t>(t) + 1].size());
            const Eigen::VectorXd q =
                accumulate_occupancy(P, tables[static_cast<std::size_t>(t)], next_size);
            const double loss = entropy_loss(q);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", level " + std::to_string(t));
            trace.push_back(LossRecord{epoch, t, loss});
            const Eigen::MatrixXd dP = occupancy_backward(q, tables[static_cast<std::size_t>(t)]);
            const Eigen::VectorXd grad = net.backward(cache, dP);
            Eigen::VectorXd params = net.get_params();
            if (cfg.weight_decay > 0.0) params *= 1.0 - cfg.lr * cfg.weight_decay;
            adam.step(params, grad);
            net.set_params(params);
        }
    }

    Eigen::Index total_rows = 0;
    for (const auto& X : inputs) total_rows += X.rows();
    Eigen::MatrixXd all(total_rows, 4);
    Eigen::Index off = 0;
    for (const auto& X : inputs) {
        all.middleRows(off, X.rows()) = X;
        off += X.rows();
    }
    net.recalibrate_batchnorm(all);
    return trace;
}

// ---------------------------------------------------------------------------
// Model file: magic "CUNN", u32 version, dimension list, flags, parameters in
// declaration order as little-endian f64, then batchnorm running mean/var.

inline constexpr std::uint32_t kPolicyFormatVersion = 1;

inline void save_policy(const PolicyNetwork& net, const std::string& path) {
    detail::BinaryWriter w(path);
    w.magic("CUNN");
    w.u32(kPolicyFormatVersion);
    const PolicyConfig& cfg = net.config();
    w.u32(4);  // number of layer dimensions
    w.u32(static_cast<std::uint32_t>(cfg.input_dim));
    w.u32(static_cast<std::uint32_t>(cfg.hidden));
    w.u32(static_cast<std::uint32_t>(cfg.hidden));
    w.u32(static_cast<std::uint32_t>(cfg.n_actions));
    w.u32(cfg.batchnorm ? 1 : 0);
    w.f64(cfg.bn_momentum);
    w.f64(cfg.bn_eps);
    const Eigen::VectorXd p = net.get_params();
    for (Eigen::Index i = 0; i < p.size(); ++i) w.f64(p[i]);
    if (cfg.batchnorm) {
        for (const Eigen::VectorXd* v :
             {&net.running_mean1(), &net.running_var1(), &net.running_mean2(), &net.running_var2()})
            for (Eigen::Index i = 0; i < v->size(); ++i) w.f64((*v)[i]);
    }
}

inline PolicyNetwork load_policy(const std::string& path) {
    detail::BinaryReader rd(path);
    rd.expect_magic("CUNN");
    const std::uint32_t version = rd.u32();
    if (version != kPolicyFormatVersion)
        throw std::runtime_error("load_policy: unsupported format version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kPolicyFormatVersion) + ")");
    const std::uint32_t n_dims = rd.u32();
    if (n_dims != 4) throw std::runtime_error("load_policy: unexpected layer count");
    PolicyConfig cfg;
    cfg.input_dim = static_cast<int>(rd.u32());
    cfg.hidden = static_cast<int>(rd.u32());
    const std::uint32_t hidden2 = rd.u32();
    if (static_cast<int>(hidden2) != cfg.hidden)
        throw std::runtime_error("load_policy: hidden layer widths differ");
    cfg.n_actions = static_cast<int>(rd.u32());
    cfg.batchnorm = rd.u32() != 0;
    cfg.bn_momentum = rd.f64();
    cfg.bn_eps = rd.f64();
    PolicyNetwork net(cfg, 0);
    Eigen::VectorXd p(net.n_params());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = rd.f64();
    net.set_params(p);
    if (cfg.batchnorm) {
        Eigen::VectorXd m1(cfg.hidden), v1(cfg.hidden), m2(cfg.hidden), v2(cfg.hidden);
        for (Eigen::VectorXd* v : {&m1, &v1, &m2, &v2})
            for (Eigen::Index i = 0; i < v->size(); ++i) (*v)[i] = rd.f64();
        net.set_running_stats(std::move(m1), std::move(v1), std::move(m2), std::move(v2));
    }
    return net;
}

}  // namespace cuniform
