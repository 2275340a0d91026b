#pragma once

// Mixed-integer QPs whose integer variables are binaries partitioned into
// exactly-one groups. Best-first branch-and-bound over QP relaxations.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "mambot/errors.hpp"
#include "mambot/qp.hpp"

namespace mambot::solver {

/// Variables are [continuous..., binaries...]; the last n_binary entries are binary.
struct MiqpProblem {
    QpProblem base;
    Eigen::Index n_binary{0};
    std::vector<std::vector<Eigen::Index>> groups;  // binary indices (0-based within the binary block)
    // Optional: row_binary[i] = b means inequality row i only matters when binary b is 1
    // (a big-M row that is redundant once b is fixed to 0). -1 for ordinary rows.
    std::vector<Eigen::Index> row_binary;
    // Optional: one ordering key per group member. When present, branching splits a
    // group into a low-key and a high-key part instead of fixing a single binary.
    std::vector<std::vector<double>> group_keys;

    Eigen::Index n_continuous() const { return base.n() - n_binary; }

    void validate() const {
        base.validate();
        if (n_binary < 0 || n_binary > base.n()) throw DimensionError("miqp: binary count out of range");
        std::vector<int> seen(static_cast<std::size_t>(n_binary), 0);
        for (const auto& g : groups) {
            if (g.empty()) throw InputError("miqp: empty group");
            for (auto b : g) {
                if (b < 0 || b >= n_binary) throw DimensionError("miqp: group index out of range");
                ++seen[static_cast<std::size_t>(b)];
            }
        }
        for (int c : seen) {
            if (c != 1) throw InputError("miqp: every binary must belong to exactly one group");
        }
        if (!row_binary.empty() && static_cast<Eigen::Index>(row_binary.size()) != base.b_in.size()) {
            throw DimensionError("miqp: row_binary length must equal the inequality count");
        }
        for (auto b : row_binary) {
            if (b < -1 || b >= n_binary) throw DimensionError("miqp: row_binary index out of range");
        }
        if (!group_keys.empty()) {
            if (group_keys.size() != groups.size()) throw DimensionError("miqp: group_keys must match the group count");
            for (std::size_t g = 0; g < groups.size(); ++g) {
                if (group_keys[g].size() != groups[g].size()) throw DimensionError("miqp: group_keys entry must match its group size");
            }
        }
    }
};

/// Per group, the position (within the group) of the binary set to 1.
using Assignment = std::vector<int>;

struct BnbConfig {
    double abs_gap{1e-6};
    double rel_gap{0.0};  // extra pruning slack relative to |incumbent|
    long max_nodes{100000};
    double relax_tol{1e-6};
    QpSettings qp;
    std::vector<Assignment> hints;  // candidate assignments tried before branching
    // Proposes an assignment from a relaxed solution (full variable vector).
    std::function<std::optional<Assignment>(const VectorXd&)> heuristic;
    int heuristic_interval{10};  // call the heuristic every this many nodes
};

struct MiqpSolution {
    QpStatus status{QpStatus::Infeasible};
    VectorXd z;             // full variable vector, binaries exactly 0/1
    Assignment assignment;  // per group
    double objective{std::numeric_limits<double>::infinity()};
    double bound{-std::numeric_limits<double>::infinity()};  // best proven lower bound
    double root_bound{-std::numeric_limits<double>::infinity()};
    double kkt_residual{std::numeric_limits<double>::infinity()};
    long nodes{0};
    long qp_iterations{0};
    double wall_time{0.0};
};

namespace detail {

/// QP over continuous + free binaries with the fixed binaries substituted.
struct NodeQp {
    QpProblem qp;
    std::vector<Eigen::Index> var_map;  // reduced index -> full index
    bool trivially_infeasible{false};
};

inline NodeQp node_qp(const MiqpProblem& p, const std::vector<signed char>& fix) {
    const auto n = p.base.n();
    const auto nc = p.n_continuous();
    NodeQp out;
    VectorXd z_fixed = VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j < nc || fix[static_cast<std::size_t>(j - nc)] < 0) {
            out.var_map.push_back(j);
        } else {
            z_fixed(j) = fix[static_cast<std::size_t>(j - nc)];
        }
    }
    const auto& vm = out.var_map;
    const auto nr = static_cast<Eigen::Index>(vm.size());
    std::vector<Eigen::Index> reduced(static_cast<std::size_t>(n), -1);
    for (Eigen::Index k = 0; k < nr; ++k) reduced[static_cast<std::size_t>(vm[static_cast<std::size_t>(k)])] = k;
    std::vector<Eigen::Index> free_bins;
    for (Eigen::Index j = nc; j < n; ++j) {
        if (fix[static_cast<std::size_t>(j - nc)] < 0) free_bins.push_back(j);
    }

    QpProblem& q = out.qp;
    q.H = p.base.H(vm, vm);
    const VectorXd g = p.base.H * z_fixed;
    q.f = p.base.f(vm) + g(vm);
    q.constant = p.base.constant + 0.5 * z_fixed.dot(g) + p.base.f.dot(z_fixed);

    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < p.base.b_in.size(); ++i) {
        if (!p.row_binary.empty()) {
            const auto b = p.row_binary[static_cast<std::size_t>(i)];
            if (b >= 0 && fix[static_cast<std::size_t>(b)] == 0) continue;
        }
        rows.push_back(i);
    }
    const auto nb_free = static_cast<Eigen::Index>(free_bins.size());
    const auto m_base = static_cast<Eigen::Index>(rows.size());
    q.A_in = MatrixXd::Zero(m_base + 2 * nb_free, nr);
    q.b_in.resize(m_base + 2 * nb_free);
    if (m_base > 0) {
        q.A_in.topRows(m_base) = p.base.A_in(rows, vm);
        q.b_in.head(m_base) = p.base.b_in(rows) - p.base.A_in(rows, Eigen::all) * z_fixed;
    }
    for (Eigen::Index k = 0; k < nb_free; ++k) {
        const auto rcol = reduced[static_cast<std::size_t>(free_bins[static_cast<std::size_t>(k)])];
        q.A_in(m_base + 2 * k, rcol) = 1.0;
        q.b_in(m_base + 2 * k) = 1.0;
        q.A_in(m_base + 2 * k + 1, rcol) = -1.0;
        q.b_in(m_base + 2 * k + 1) = 0.0;
    }

    std::vector<double> group_rhs;
    std::vector<std::vector<Eigen::Index>> group_cols;
    for (const auto& grp : p.groups) {
        double rhs = 1.0;
        std::vector<Eigen::Index> cols;
        for (auto b : grp) {
            const auto f = fix[static_cast<std::size_t>(b)];
            if (f < 0) {
                cols.push_back(reduced[static_cast<std::size_t>(nc + b)]);
            } else {
                rhs -= f;
            }
        }
        if (cols.empty()) {
            if (std::abs(rhs) > 1e-12) out.trivially_infeasible = true;
            continue;
        }
        if (rhs < -1e-12) out.trivially_infeasible = true;
        group_cols.push_back(std::move(cols));
        group_rhs.push_back(rhs);
    }
    const auto m_eq = p.base.b_eq.size();
    const auto ng = static_cast<Eigen::Index>(group_cols.size());
    q.A_eq = MatrixXd::Zero(m_eq + ng, nr);
    q.b_eq.resize(m_eq + ng);
    if (m_eq > 0) {
        q.A_eq.topRows(m_eq) = p.base.A_eq(Eigen::all, vm);
        q.b_eq.head(m_eq) = p.base.b_eq - p.base.A_eq * z_fixed;
    }
    for (Eigen::Index g2 = 0; g2 < ng; ++g2) {
        for (auto c : group_cols[static_cast<std::size_t>(g2)]) q.A_eq(m_eq + g2, c) = 1.0;
        q.b_eq(m_eq + g2) = group_rhs[static_cast<std::size_t>(g2)];
    }
    return out;
}

inline VectorXd expand(const MiqpProblem& p, const NodeQp& nq, const std::vector<signed char>& fix, const VectorXd& zr) {
    VectorXd z(p.base.n());
    const auto nc = p.n_continuous();
    for (Eigen::Index j = nc; j < p.base.n(); ++j) z(j) = std::max<double>(0.0, fix[static_cast<std::size_t>(j - nc)]);
    for (std::size_t k = 0; k < nq.var_map.size(); ++k) z(nq.var_map[k]) = zr(static_cast<Eigen::Index>(k));
    return z;
}

struct Node {
    double bound;
    long id;
    std::vector<signed char> fix;
    VectorXd z;  // relaxed solution, full size
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.id > b.id;
    }
};

}  // namespace detail

class BranchAndBound {
public:
    BranchAndBound(const MiqpProblem& p, const BnbConfig& cfg) : p_(p), cfg_(cfg) {
        p.validate();
        if (cfg.abs_gap < 0.0 || cfg.rel_gap < 0.0) throw InputError("bnb: gaps must be >= 0");
        if (cfg.max_nodes < 1) throw InputError("bnb: max_nodes must be >= 1");
        group_of_.assign(static_cast<std::size_t>(p.n_binary), 0);
        for (std::size_t g = 0; g < p.groups.size(); ++g) {
            for (auto b : p.groups[g]) group_of_[static_cast<std::size_t>(b)] = g;
        }
    }

    MiqpSolution run() {
        const auto t0 = std::chrono::steady_clock::now();
        MiqpSolution& s = best_;
        const std::vector<signed char> root_fix(static_cast<std::size_t>(p_.n_binary), -1);

        for (const auto& h : cfg_.hints) try_assignment(h);

        std::priority_queue<detail::Node, std::vector<detail::Node>, detail::NodeOrder> open;
        long next_id = 0;
        auto evaluate = [&](std::vector<signed char> fix, const VectorXd* warm) -> bool {
            ++s.nodes;
            const auto nq = detail::node_qp(p_, fix);
            if (nq.trivially_infeasible) return false;
            QpSettings qs = cfg_.qp;
            if (warm) qs.warm_z = (*warm)(nq.var_map);
            const QpSolution r = solve_qp(nq.qp, qs);
            s.qp_iterations += r.iterations;
            if (r.status == QpStatus::Infeasible) return false;
            const VectorXd z = detail::expand(p_, nq, fix, r.z);
            double bound = r.status == QpStatus::Optimal ? r.objective : -std::numeric_limits<double>::infinity();
            if (warm == nullptr) s.root_bound = bound;
            if (r.status != QpStatus::Optimal) bound = parent_bound_;
            if (prunable(bound)) return true;
            if (cfg_.heuristic && (s.nodes == 1 || s.nodes % cfg_.heuristic_interval == 0)) {
                if (auto a = cfg_.heuristic(z)) try_assignment(*a);
            }
            if (s.nodes == 1) try_assignment(round(z));
            if (r.status == QpStatus::Optimal && integral(z, fix)) {
                try_assignment(round(z));
                return true;
            }
            open.push({bound, next_id++, std::move(fix), z});
            return true;
        };

        parent_bound_ = -std::numeric_limits<double>::infinity();
        const bool root_feasible = evaluate(root_fix, nullptr);
        bool exhausted = true;
        if (!root_feasible && s.z.size() == 0) {
            s.status = QpStatus::Infeasible;
            s.bound = std::numeric_limits<double>::infinity();
            s.wall_time = elapsed(t0);
            return s;
        }
        while (!open.empty()) {
            if (s.nodes >= cfg_.max_nodes) {
                exhausted = false;
                break;
            }
            detail::Node node = open.top();
            open.pop();
            if (prunable(node.bound)) continue;
            const auto [b, one_first] = branch_variable(node.z, node.fix);
            if (b < 0) continue;
            parent_bound_ = node.bound;
            if (auto parts = split(node.z, node.fix, b)) {
                evaluate(std::move(parts->first), &node.z);
                if (s.nodes >= cfg_.max_nodes) {
                    exhausted = false;
                    open.push(std::move(node));
                    break;
                }
                evaluate(std::move(parts->second), &node.z);
                continue;
            }
            auto up = node.fix;
            up[static_cast<std::size_t>(b)] = 1;
            for (auto sib : p_.groups[group_of_[static_cast<std::size_t>(b)]]) {
                if (sib != b) up[static_cast<std::size_t>(sib)] = 0;
            }
            auto down = node.fix;
            down[static_cast<std::size_t>(b)] = 0;
            evaluate(std::move(up), &node.z);
            if (s.nodes >= cfg_.max_nodes) {
                exhausted = false;
                open.push(std::move(node));
                // The down child was never evaluated; keep the parent bound in play.
                break;
            }
            evaluate(std::move(down), &node.z);
        }
        double open_bound = std::numeric_limits<double>::infinity();
        if (!open.empty()) open_bound = open.top().bound;
        if (s.z.size() == 0) {
            s.status = exhausted ? QpStatus::Infeasible : QpStatus::IterLimit;
            s.bound = exhausted ? std::numeric_limits<double>::infinity() : open_bound;
        } else {
            s.status = exhausted ? QpStatus::Optimal : QpStatus::IterLimit;
            s.bound = exhausted ? s.objective : std::min(open_bound, s.objective);
        }
        s.wall_time = elapsed(t0);
        return s;
    }

private:
    static double elapsed(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    bool prunable(double bound) const {
        if (best_.z.size() == 0) return false;
        const double slack = std::max(cfg_.abs_gap, cfg_.rel_gap * std::abs(best_.objective));
        return bound >= best_.objective - slack;
    }

    bool integral(const VectorXd& z, const std::vector<signed char>& fix) const {
        const auto nc = p_.n_continuous();
        for (Eigen::Index b = 0; b < p_.n_binary; ++b) {
            if (fix[static_cast<std::size_t>(b)] >= 0) continue;
            const double v = z(nc + b);
            if (std::min(v, 1.0 - v) > cfg_.relax_tol) return false;
        }
        return true;
    }

    Assignment round(const VectorXd& z) const {
        const auto nc = p_.n_continuous();
        Assignment a(p_.groups.size(), 0);
        for (std::size_t g = 0; g < p_.groups.size(); ++g) {
            double best = -1.0;
            for (std::size_t k = 0; k < p_.groups[g].size(); ++k) {
                const double v = z(nc + p_.groups[g][k]);
                if (v > best) {
                    best = v;
                    a[g] = static_cast<int>(k);
                }
            }
        }
        return a;
    }

    // Earliest group with a fractional binary; within it the most fractional, lowest index on ties.
    std::pair<Eigen::Index, bool> branch_variable(const VectorXd& z, const std::vector<signed char>& fix) const {
        const auto nc = p_.n_continuous();
        for (const auto& g : p_.groups) {
            Eigen::Index pick = -1;
            double best = cfg_.relax_tol;
            for (auto b : g) {
                if (fix[static_cast<std::size_t>(b)] >= 0) continue;
                const double v = z(nc + b);
                const double frac = std::min(v, 1.0 - v);
                if (frac > best || (pick >= 0 && frac == best && b < pick)) {
                    best = frac;
                    pick = b;
                }
            }
            if (pick >= 0) return {pick, true};
        }
        // Nearly integral but not accepted: branch on the first free binary with the largest value.
        for (const auto& g : p_.groups) {
            Eigen::Index pick = -1;
            double best = -1.0;
            int free_count = 0;
            for (auto b : g) {
                if (fix[static_cast<std::size_t>(b)] >= 0) continue;
                ++free_count;
                if (z(nc + b) > best) {
                    best = z(nc + b);
                    pick = b;
                }
            }
            if (free_count > 1) return {pick, true};
        }
        return {-1, false};
    }

    // Splits the group of b by key where the cumulative relaxed mass reaches one half.
    std::optional<std::pair<std::vector<signed char>, std::vector<signed char>>> split(const VectorXd& z, const std::vector<signed char>& fix,
                                                                                       Eigen::Index b) const {
        if (p_.group_keys.empty()) return std::nullopt;
        const auto nc = p_.n_continuous();
        const auto g = group_of_[static_cast<std::size_t>(b)];
        const auto& grp = p_.groups[g];
        const auto& keys = p_.group_keys[g];
        std::vector<std::size_t> order;
        double total = 0.0;
        for (std::size_t k = 0; k < grp.size(); ++k) {
            if (fix[static_cast<std::size_t>(grp[k])] >= 0) continue;
            order.push_back(k);
            total += std::max(0.0, z(nc + grp[k]));
        }
        if (order.size() < 2) return std::nullopt;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return keys[a] < keys[c]; });
        std::size_t cut = 0;
        double mass = 0.0;
        while (cut + 1 < order.size()) {
            mass += std::max(0.0, z(nc + grp[order[cut]]));
            ++cut;
            if (mass >= 0.5 * total) break;
        }
        auto low = fix, high = fix;
        for (std::size_t t = 0; t < order.size(); ++t) {
            const auto bin = static_cast<std::size_t>(grp[order[t]]);
            (t < cut ? high : low)[bin] = 0;
        }
        return std::make_pair(std::move(low), std::move(high));
    }

    void try_assignment(const Assignment& a) {
        if (a.size() != p_.groups.size()) return;
        std::vector<signed char> fix(static_cast<std::size_t>(p_.n_binary), 0);
        for (std::size_t g = 0; g < a.size(); ++g) {
            if (a[g] < 0 || a[g] >= static_cast<int>(p_.groups[g].size())) return;
            fix[static_cast<std::size_t>(p_.groups[g][static_cast<std::size_t>(a[g])])] = 1;
        }
        if (tried_.size() < 4096) {
            for (const auto& t : tried_) {
                if (t == a) return;
            }
            tried_.push_back(a);
        }
        const auto nq = detail::node_qp(p_, fix);
        if (nq.trivially_infeasible) return;
        QpSettings qs = cfg_.qp;
        qs.warm_z.reset();
        qs.warm_y.reset();
        const QpSolution r = solve_qp(nq.qp, qs);
        best_.qp_iterations += r.iterations;
        // Any feasible point is a valid incumbent, converged or not.
        if (r.status == QpStatus::Infeasible || r.z.size() == 0) return;
        if (r.status != QpStatus::Optimal && !(kkt_residuals(nq.qp, r.z, r.duals_in, r.duals_eq).primal <= cfg_.qp.tol)) return;
        if (best_.z.size() == 0 || r.objective < best_.objective) {
            best_.z = detail::expand(p_, nq, fix, r.z);
            best_.objective = r.objective;
            best_.assignment = a;
            best_.kkt_residual = r.kkt_residual;
        }
    }

    const MiqpProblem& p_;
    const BnbConfig& cfg_;
    std::vector<std::size_t> group_of_;
    std::vector<Assignment> tried_;
    MiqpSolution best_;
    double parent_bound_{-std::numeric_limits<double>::infinity()};
};

/// Best-first branch-and-bound. Optimal means proven within abs_gap/rel_gap;
/// IterLimit returns the incumbent (if any) when max_nodes is reached.
inline MiqpSolution solve_miqp(const MiqpProblem& p, const BnbConfig& cfg = {}) {
    if (p.n_binary == 0) {
        MiqpSolution s;
        const QpSolution r = solve_qp(p.base, cfg.qp);
        s.status = r.status;
        s.nodes = 1;
        s.qp_iterations = r.iterations;
        if (r.status != QpStatus::Infeasible) {
            s.z = r.z;
            s.objective = r.objective;
            s.kkt_residual = r.kkt_residual;
        }
        s.bound = s.root_bound = r.status == QpStatus::Optimal ? r.objective : s.bound;
        return s;
    }
    return BranchAndBound(p, cfg).run();
}

}  // namespace mambot::solver
