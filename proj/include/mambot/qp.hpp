#pragma once

// Convex quadratic programs
//   min  1/2 z'Hz + f'z + constant
//   s.t. A_in z <= b_in,  A_eq z = b_eq
// solved by operator splitting (ADMM) on a Ruiz-scaled copy, followed by an
// active-set KKT polish on the original data. A primal-dual interior-point
// method is available as an alternative for poorly scaled problems.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mambot/errors.hpp"

namespace mambot::solver {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class QpStatus { Optimal, Infeasible, IterLimit };

inline std::string_view to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::IterLimit: return "iter_limit";
    }
    return "?";
}

struct QpProblem {
    MatrixXd H;
    VectorXd f;
    MatrixXd A_in;
    VectorXd b_in;
    MatrixXd A_eq;
    VectorXd b_eq;
    double constant{0.0};

    Eigen::Index n() const { return f.size(); }

    /// Empty constraint blocks sized to n columns.
    static QpProblem unconstrained(MatrixXd H, VectorXd f) {
        QpProblem p;
        const auto n = f.size();
        p.H = std::move(H);
        p.f = std::move(f);
        p.A_in.resize(0, n);
        p.b_in.resize(0);
        p.A_eq.resize(0, n);
        p.b_eq.resize(0);
        return p;
    }

    void validate() const {
        const auto n = f.size();
        if (H.rows() != n || H.cols() != n) throw DimensionError("qp: H must be n x n");
        if (A_in.cols() != n || A_in.rows() != b_in.size()) throw DimensionError("qp: A_in/b_in shape mismatch");
        if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) throw DimensionError("qp: A_eq/b_eq shape mismatch");
        if (!H.allFinite() || !f.allFinite() || !A_in.allFinite() || !b_in.allFinite() || !A_eq.allFinite() ||
            !b_eq.allFinite() || !std::isfinite(constant)) {
            throw InputError("qp: non-finite data");
        }
        if (n > 0 && (H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, H.cwiseAbs().maxCoeff())) {
            throw InputError("qp: H is not symmetric");
        }
    }

    double objective(const VectorXd& z) const { return 0.5 * z.dot(H * z) + f.dot(z) + constant; }
};

struct KktResiduals {
    double stationarity{0.0};     // ||Hz + f + A_in'l + A_eq'v||_inf
    double primal{0.0};           // max violation of A_in z <= b_in and A_eq z = b_eq
    double dual_sign{0.0};        // max(0, -min l)
    double complementarity{0.0};  // max |l_i (b_in - A_in z)_i|

    double max() const { return std::max({stationarity, primal, dual_sign, complementarity}); }
};

inline KktResiduals kkt_residuals(const QpProblem& p, const VectorXd& z, const VectorXd& lam, const VectorXd& nu) {
    KktResiduals r;
    VectorXd g = p.H * z + p.f;
    if (lam.size() > 0) g.noalias() += p.A_in.transpose() * lam;
    if (nu.size() > 0) g.noalias() += p.A_eq.transpose() * nu;
    r.stationarity = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    if (p.b_in.size() > 0) {
        const VectorXd slack = p.b_in - p.A_in * z;
        r.primal = std::max(0.0, -slack.minCoeff());
        r.dual_sign = std::max(0.0, -lam.minCoeff());
        r.complementarity = lam.cwiseProduct(slack).cwiseAbs().maxCoeff();
    }
    if (p.b_eq.size() > 0) r.primal = std::max(r.primal, (p.A_eq * z - p.b_eq).cwiseAbs().maxCoeff());
    return r;
}

enum class QpMethod { Admm, InteriorPoint };

struct QpSettings {
    QpMethod method{QpMethod::Admm};
    double tol{1e-7};           // KKT residual required for Optimal
    int max_iterations{20000};  // ADMM iterations
    double rho{0.1};
    double sigma{1e-6};
    double alpha{1.6};
    int rho_interval{50};
    int scaling_iterations{10};
    double infeasibility_tol{1e-7};
    int polish_iterations{60};
    int ipm_iterations{80};
    std::optional<VectorXd> warm_z;  // primal starting point
    std::optional<VectorXd> warm_y;  // stacked [duals_in; duals_eq]
};

struct QpSolution {
    VectorXd z;
    VectorXd duals_in;
    VectorXd duals_eq;
    QpStatus status{QpStatus::IterLimit};
    double kkt_residual{std::numeric_limits<double>::infinity()};
    double objective{std::numeric_limits<double>::quiet_NaN()};
    int iterations{0};
    bool polished{false};
};

namespace detail {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Active-set KKT solve: given a working set of inequality rows, solve the
/// equality-constrained QP exactly, then grow/shrink the set until the point
/// is primal and dual feasible.
class Polisher {
public:
    Polisher(const QpProblem& p, double tol, int max_iter) : p_(p), tol_(tol), max_iter_(max_iter) {}

    bool run(std::vector<char> active, VectorXd& z, VectorXd& lam, VectorXd& nu) {
        const auto m_in = p_.b_in.size();
        for (int it = 0; it < max_iter_; ++it) {
            std::vector<Eigen::Index> rows;
            for (Eigen::Index i = 0; i < m_in; ++i) {
                if (active[static_cast<std::size_t>(i)]) rows.push_back(i);
            }
            VectorXd mu;
            if (!solve_equality(rows, z, mu)) return false;
            lam = VectorXd::Zero(m_in);
            for (std::size_t k = 0; k < rows.size(); ++k) lam(rows[k]) = mu(static_cast<Eigen::Index>(k));
            nu = mu.tail(p_.b_eq.size());

            bool changed = false;
            if (m_in > 0) {
                const VectorXd viol = p_.A_in * z - p_.b_in;
                for (Eigen::Index i = 0; i < m_in; ++i) {
                    if (!active[static_cast<std::size_t>(i)] && viol(i) > 0.1 * tol_) {
                        active[static_cast<std::size_t>(i)] = 1;
                        changed = true;
                    }
                }
            }
            if (changed) continue;
            Eigen::Index worst = -1;
            double worst_val = -0.1 * tol_;
            for (Eigen::Index i : rows) {
                if (lam(i) < worst_val) {
                    worst_val = lam(i);
                    worst = i;
                }
            }
            if (worst < 0) return true;
            active[static_cast<std::size_t>(worst)] = 0;
        }
        return false;
    }

private:
    // Variables fixed by single-entry active rows are substituted out before
    // the dense KKT solve; their multipliers come back from stationarity.
    bool solve_equality(const std::vector<Eigen::Index>& rows, VectorXd& z, VectorXd& mu) {
        const auto n = p_.n();
        const auto m_eq = p_.b_eq.size();
        std::vector<Eigen::Index> fixed_row(static_cast<std::size_t>(n), -1);
        std::vector<Eigen::Index> general;
        VectorXd z_fixed = VectorXd::Zero(n);
        for (Eigen::Index i : rows) {
            Eigen::Index nz = -1;
            int count = 0;
            for (Eigen::Index j = 0; j < n && count < 2; ++j) {
                if (p_.A_in(i, j) != 0.0) {
                    nz = j;
                    ++count;
                }
            }
            if (count == 1 && fixed_row[static_cast<std::size_t>(nz)] < 0) {
                fixed_row[static_cast<std::size_t>(nz)] = i;
                z_fixed(nz) = p_.b_in(i) / p_.A_in(i, nz);
            } else {
                general.push_back(i);
            }
        }
        std::vector<Eigen::Index> free;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (fixed_row[static_cast<std::size_t>(j)] < 0) free.push_back(j);
        }
        const auto nf = static_cast<Eigen::Index>(free.size());
        const auto mg = static_cast<Eigen::Index>(general.size());
        const Eigen::Index dim = nf + mg + m_eq;

        // Reduced data: rows restricted to free columns, right-hand sides shifted by fixed values.
        MatrixXd K = MatrixXd::Zero(dim, dim);
        VectorXd rhs(dim);
        const VectorXd g_fixed = p_.H * z_fixed + p_.f;
        for (Eigen::Index a = 0; a < nf; ++a) {
            for (Eigen::Index b = 0; b < nf; ++b) K(a, b) = p_.H(free[a], free[b]);
            rhs(a) = -g_fixed(free[a]);
        }
        for (Eigen::Index r = 0; r < mg; ++r) {
            const auto i = general[static_cast<std::size_t>(r)];
            for (Eigen::Index a = 0; a < nf; ++a) {
                K(nf + r, a) = p_.A_in(i, free[a]);
                K(a, nf + r) = p_.A_in(i, free[a]);
            }
            rhs(nf + r) = p_.b_in(i) - p_.A_in.row(i).dot(z_fixed);
        }
        for (Eigen::Index r = 0; r < m_eq; ++r) {
            for (Eigen::Index a = 0; a < nf; ++a) {
                K(nf + mg + r, a) = p_.A_eq(r, free[a]);
                K(a, nf + mg + r) = p_.A_eq(r, free[a]);
            }
            rhs(nf + mg + r) = p_.b_eq(r) - p_.A_eq.row(r).dot(z_fixed);
        }
        VectorXd sol = VectorXd::Zero(dim);
        if (dim > 0) {
            const double delta = 1e-9 * std::max(1.0, K.cwiseAbs().maxCoeff());
            MatrixXd Kreg = K;
            for (Eigen::Index a = 0; a < nf; ++a) Kreg(a, a) += delta;
            for (Eigen::Index a = nf; a < dim; ++a) Kreg(a, a) -= delta;
            const Eigen::PartialPivLU<MatrixXd> lu(Kreg);
            sol = lu.solve(rhs);
            for (int k = 0; k < 10; ++k) {
                const VectorXd res = rhs - K * sol;
                if (inf_norm(res) <= 1e-14 * std::max(1.0, inf_norm(rhs))) break;
                sol += lu.solve(res);
            }
            if (!sol.allFinite()) return false;
        }

        z = z_fixed;
        for (Eigen::Index a = 0; a < nf; ++a) z(free[a]) = sol(a);
        mu = VectorXd::Zero(static_cast<Eigen::Index>(rows.size()) + m_eq);
        VectorXd lam_full = VectorXd::Zero(p_.b_in.size());
        for (Eigen::Index r = 0; r < mg; ++r) lam_full(general[static_cast<std::size_t>(r)]) = sol(nf + r);
        const VectorXd nu = sol.tail(m_eq);
        VectorXd g = p_.H * z + p_.f;
        if (mg > 0) g.noalias() += p_.A_in.transpose() * lam_full;
        if (m_eq > 0) g.noalias() += p_.A_eq.transpose() * nu;
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto i = fixed_row[static_cast<std::size_t>(j)];
            if (i >= 0) lam_full(i) = -g(j) / p_.A_in(i, j);
        }
        for (std::size_t k = 0; k < rows.size(); ++k) mu(static_cast<Eigen::Index>(k)) = lam_full(rows[k]);
        mu.tail(m_eq) = nu;
        return true;
    }

    const QpProblem& p_;
    double tol_;
    int max_iter_;
};

class Admm {
public:
    Admm(const QpProblem& p, const QpSettings& s) : p_(p), s_(s) {
        n_ = p.n();
        m_in_ = p.b_in.size();
        m_ = m_in_ + p.b_eq.size();
        MatrixXd C(m_, n_);
        C << p.A_in, p.A_eq;
        l_.resize(m_);
        u_.resize(m_);
        l_.head(m_in_).setConstant(-kInf);
        u_.head(m_in_) = p.b_in;
        l_.tail(m_ - m_in_) = p.b_eq;
        u_.tail(m_ - m_in_) = p.b_eq;
        C_ = C.sparseView();
        C_.makeCompressed();
        P_ = p.H;
        q_ = p.f;
        scale();
        Ct_ = C_.transpose();
        rho_vec_.resize(m_);
        set_rho(s.rho);
    }

    QpSolution solve() {
        QpSolution sol;
        VectorXd x = VectorXd::Zero(n_), z = VectorXd::Zero(m_), y = VectorXd::Zero(m_);
        if (s_.warm_z && s_.warm_z->size() == n_) x = D_.cwiseInverse().cwiseProduct(*s_.warm_z);
        if (s_.warm_y && s_.warm_y->size() == m_) y = c_ * E_.cwiseInverse().cwiseProduct(*s_.warm_y);
        z = project(C_ * x);

        double eps = 1e-4;
        int next_polish = 0;
        VectorXd x_prev, z_prev, y_prev;
        for (int it = 1; it <= s_.max_iterations; ++it) {
            x_prev = x;
            z_prev = z;
            y_prev = y;
            VectorXd rhs = s_.sigma * x - q_;
            rhs.noalias() += Ct_ * (rho_vec_.cwiseProduct(z) - y);
            const VectorXd xt = llt_.solve(rhs);
            const VectorXd zt = C_ * xt;
            x = s_.alpha * xt + (1.0 - s_.alpha) * x_prev;
            const VectorXd zr = s_.alpha * zt + (1.0 - s_.alpha) * z_prev;
            z = project(zr + rho_vec_.cwiseInverse().cwiseProduct(y));
            y += rho_vec_.cwiseProduct(zr - z);

            const bool check = it % 10 == 0 || it == s_.max_iterations;
            if (!check) continue;
            const auto [rp, rd, np, nd] = residuals(x, z, y);
            const bool converged = rp <= eps * (1.0 + np) && rd <= eps * (1.0 + nd);
            if (converged && it >= next_polish) {
                sol.iterations = it;
                if (polish(x, z, y, sol)) return sol;
                eps = std::max(eps * 1e-2, 1e-12);
                next_polish = it + 50;
            }
            if (primal_infeasible(y - y_prev)) {
                sol.status = QpStatus::Infeasible;
                sol.iterations = it;
                unscale(x, y, sol);
                return sol;
            }
            if (dual_infeasible(x - x_prev)) throw UnboundedError("qp: objective is unbounded below on the feasible set");
            if (s_.rho_interval > 0 && it % s_.rho_interval == 0) adapt_rho(rp, rd, np, nd);
        }
        sol.iterations = s_.max_iterations;
        if (polish(x, z, y, sol)) return sol;
        sol.status = QpStatus::IterLimit;
        unscale(x, y, sol);
        sol.objective = p_.objective(sol.z);
        sol.kkt_residual = kkt_residuals(p_, sol.z, sol.duals_in, sol.duals_eq).max();
        return sol;
    }

private:
    static constexpr double kInf = std::numeric_limits<double>::infinity();

    void scale() {
        D_ = VectorXd::Ones(n_);
        E_ = VectorXd::Ones(m_);
        MatrixXd Cd = MatrixXd(C_);
        for (int k = 0; k < s_.scaling_iterations; ++k) {
            VectorXd dd(n_), de(m_);
            for (Eigen::Index j = 0; j < n_; ++j) {
                double nrm = P_.col(j).cwiseAbs().maxCoeff();
                if (m_ > 0) nrm = std::max(nrm, Cd.col(j).cwiseAbs().maxCoeff());
                dd(j) = nrm < 1e-4 ? 1.0 : 1.0 / std::sqrt(std::min(nrm, 1e4));
            }
            for (Eigen::Index i = 0; i < m_; ++i) {
                const double nrm = Cd.row(i).cwiseAbs().maxCoeff();
                de(i) = nrm < 1e-4 ? 1.0 : 1.0 / std::sqrt(std::min(nrm, 1e4));
            }
            P_ = dd.asDiagonal() * P_ * dd.asDiagonal();
            q_ = dd.cwiseProduct(q_);
            Cd = de.asDiagonal() * Cd * dd.asDiagonal();
            D_ = D_.cwiseProduct(dd);
            E_ = E_.cwiseProduct(de);
        }
        double pn = 0.0;
        for (Eigen::Index j = 0; j < n_; ++j) pn += P_.col(j).cwiseAbs().maxCoeff();
        pn = n_ > 0 ? pn / static_cast<double>(n_) : 1.0;
        const double cost = std::max(pn, inf_norm(q_));
        c_ = cost < 1e-4 ? 1.0 : 1.0 / std::min(cost, 1e4);
        P_ *= c_;
        q_ *= c_;
        C_ = Cd.sparseView();
        C_.makeCompressed();
        for (Eigen::Index i = 0; i < m_; ++i) {
            if (std::isfinite(l_(i))) l_(i) *= E_(i);
            u_(i) *= E_(i);
        }
    }

    void set_rho(double rho) {
        rho_ = std::clamp(rho, 1e-6, 1e6);
        for (Eigen::Index i = 0; i < m_; ++i) rho_vec_(i) = (l_(i) == u_(i)) ? 1e3 * rho_ : rho_;
        MatrixXd K = P_;
        K.diagonal().array() += s_.sigma;
        if (m_ > 0) {
            const SpMat W = Ct_ * rho_vec_.asDiagonal() * C_;
            K += MatrixXd(W);
        }
        llt_.compute(K);
        if (llt_.info() != Eigen::Success) throw NumericalError("qp: ADMM system factorization failed");
    }

    VectorXd project(const VectorXd& v) const { return v.cwiseMax(l_).cwiseMin(u_); }

    struct Res {
        double rp, rd, np, nd;
    };

    Res residuals(const VectorXd& x, const VectorXd& z, const VectorXd& y) const {
        const VectorXd Cx = C_ * x;
        const VectorXd Einv = E_.cwiseInverse();
        const double rp = m_ ? inf_norm(Einv.cwiseProduct(Cx - z)) : 0.0;
        const double np = m_ ? std::max(inf_norm(Einv.cwiseProduct(Cx)), inf_norm(Einv.cwiseProduct(z))) : 0.0;
        const VectorXd Px = P_ * x;
        const VectorXd Cty = Ct_ * y;
        const VectorXd Dinv = D_.cwiseInverse() / c_;
        const double rd = inf_norm(Dinv.cwiseProduct(Px + q_ + Cty));
        const double nd = std::max({inf_norm(Dinv.cwiseProduct(Px)), inf_norm(Dinv.cwiseProduct(Cty)), inf_norm(Dinv.cwiseProduct(q_))});
        return {rp, rd, np, nd};
    }

    void adapt_rho(double rp, double rd, double np, double nd) {
        const double num = rp / (np + 1e-10);
        const double den = rd / (nd + 1e-10);
        if (den <= 0.0) return;
        const double ratio = std::sqrt(num / den);
        if (ratio > 5.0 || ratio < 0.2) set_rho(rho_ * ratio);
    }

    bool primal_infeasible(VectorXd dy) const {
        if (m_ == 0) return false;
        for (Eigen::Index i = 0; i < m_; ++i) {
            if (!std::isfinite(l_(i))) dy(i) = std::max(dy(i), 0.0);
        }
        const VectorXd dyu = E_.cwiseProduct(dy);
        const double nrm = inf_norm(dyu);
        if (nrm < 1e-12) return false;
        const VectorXd Ctdy = D_.cwiseInverse().cwiseProduct(Ct_ * dy);
        double support = 0.0;
        for (Eigen::Index i = 0; i < m_; ++i) {
            const double lu = E_(i) == 0.0 ? 0.0 : 1.0 / E_(i);
            if (dy(i) > 0.0) support += u_(i) * lu * dyu(i);
            if (dy(i) < 0.0) support += l_(i) * lu * dyu(i);
        }
        return inf_norm(Ctdy) <= s_.infeasibility_tol * nrm && support <= -s_.infeasibility_tol * nrm;
    }

    bool dual_infeasible(const VectorXd& dx) const {
        const VectorXd dxu = D_.cwiseProduct(dx);
        const double nrm = inf_norm(dxu);
        if (nrm < 1e-12) return false;
        const double eps = s_.infeasibility_tol * nrm;
        if (inf_norm(D_.cwiseInverse().cwiseProduct(P_ * dx)) / c_ > eps) return false;
        if (D_.cwiseInverse().cwiseProduct(q_).dot(dxu) / c_ > -eps) return false;
        const VectorXd Cdx = E_.cwiseInverse().cwiseProduct(C_ * dx);
        for (Eigen::Index i = 0; i < m_; ++i) {
            const bool up_ok = !std::isfinite(u_(i)) ? true : Cdx(i) <= eps;
            const bool lo_ok = !std::isfinite(l_(i)) ? true : Cdx(i) >= -eps;
            if (!up_ok || !lo_ok) return false;
        }
        return true;
    }

    void unscale(const VectorXd& x, const VectorXd& y, QpSolution& sol) const {
        sol.z = D_.cwiseProduct(x);
        const VectorXd yu = E_.cwiseProduct(y) / c_;
        sol.duals_in = yu.head(m_in_);
        sol.duals_eq = yu.tail(m_ - m_in_);
    }

    bool polish(const VectorXd& x, const VectorXd& z, const VectorXd& y, QpSolution& sol) const {
        QpSolution cand;
        unscale(x, y, cand);
        const VectorXd zu = E_.cwiseInverse().cwiseProduct(z);
        std::vector<char> active(static_cast<std::size_t>(m_in_), 0);
        for (Eigen::Index i = 0; i < m_in_; ++i) {
            active[static_cast<std::size_t>(i)] = (p_.b_in(i) - zu(i)) < cand.duals_in(i) ? 1 : 0;
        }
        Polisher pol(p_, s_.tol, s_.polish_iterations);
        VectorXd zp, lam, nu;
        if (!pol.run(active, zp, lam, nu)) return false;
        const double res = kkt_residuals(p_, zp, lam, nu).max();
        if (!(res <= s_.tol)) return false;
        sol.z = zp;
        sol.duals_in = lam;
        sol.duals_eq = nu;
        sol.kkt_residual = res;
        sol.objective = p_.objective(zp);
        sol.status = QpStatus::Optimal;
        sol.polished = true;
        return true;
    }

    const QpProblem& p_;
    const QpSettings& s_;
    Eigen::Index n_{0}, m_in_{0}, m_{0};
    MatrixXd P_;
    VectorXd q_, l_, u_, D_, E_, rho_vec_;
    SpMat C_, Ct_;
    double c_{1.0};
    double rho_{0.1};
    Eigen::LLT<MatrixXd> llt_;
};


/// Mehrotra predictor-corrector on the slack form A_in z + s = b_in, s >= 0.
/// Each Newton step reduces to the quasi-definite system
///   [H + A'WA + dI   A_eq'] [dz]   [r1]
///   [A_eq            -dI  ] [dv] = [r2],   W = diag(lambda / s),
/// factored with a sparse LDL' and refined against the unregularized matrix.
class InteriorPoint {
public:
    // `loosen` shifts every equilibrated inequality outward, giving degenerate
    // problems without a strict interior one of small width.
    InteriorPoint(const QpProblem& p, const QpSettings& s, double loosen = 0.0) : p_(p), s_(s), loosen_(loosen) {
        n_ = p.n();
        m_ = p.b_in.size();
        me_ = p.b_eq.size();
        // Rows equilibrated to unit infinity norm; multipliers are mapped back in store().
        row_in_ = VectorXd::Ones(m_);
        row_eq_ = VectorXd::Ones(me_);
        for (Eigen::Index i = 0; i < m_; ++i) {
            const double r = p.A_in.row(i).cwiseAbs().maxCoeff();
            if (r > 0.0) row_in_(i) = 1.0 / r;
        }
        for (Eigen::Index i = 0; i < me_; ++i) {
            const double r = p.A_eq.row(i).cwiseAbs().maxCoeff();
            if (r > 0.0) row_eq_(i) = 1.0 / r;
        }
        b_ = row_in_.cwiseProduct(p.b_in).array() + loosen;
        d_ = row_eq_.cwiseProduct(p.b_eq);
        H_ = p.H.sparseView();
        A_ = (row_in_.asDiagonal() * p.A_in).sparseView();
        E_ = (row_eq_.asDiagonal() * p.A_eq).sparseView();
        At_ = A_.transpose();
        Et_ = E_.transpose();
        for (int k = 0; k < E_.outerSize(); ++k) {
            for (SpCol::InnerIterator it(E_, k); it; ++it) e_trip_.emplace_back(n_ + m_ + it.row(), it.col(), it.value());
        }
        for (int k = 0; k < A_.outerSize(); ++k) {
            for (SpCol::InnerIterator it(A_, k); it; ++it) a_trip_.emplace_back(n_ + it.row(), it.col(), it.value());
        }
        for (int k = 0; k < H_.outerSize(); ++k) {
            for (SpCol::InnerIterator it(H_, k); it; ++it) {
                if (it.row() >= it.col()) h_trip_.emplace_back(it.row(), it.col(), it.value());
                h_scale_ = std::max(h_scale_, std::abs(it.value()));
            }
        }
    }

    QpSolution solve(bool allow_phase_one = true) {
        QpSolution sol;
        VectorXd z, lam, nu, sl;
        if (!start(z, lam, nu, sl)) {
            sol.status = QpStatus::IterLimit;
            return sol;
        }
        const double mu0 = m_ ? sl.dot(lam) / static_cast<double>(m_) : 0.0;
        int stalls = 0;
        double best_kkt = std::numeric_limits<double>::infinity();
        double best_rel = std::numeric_limits<double>::infinity();
        double best_pinf = std::numeric_limits<double>::infinity();
        VectorXd bz = z, blam = lam, bnu = nu, bsl = sl;
        bool suspect = false;

        for (int it = 0; it <= s_.ipm_iterations; ++it) {
            sol.iterations = it;
            const VectorXd Az = A_ * z;
            const VectorXd rd = H_ * z + p_.f + At_ * lam + Et_ * nu;
            const VectorXd rp = Az + sl - b_;
            const VectorXd re = E_ * z - d_;
            const double mu = m_ ? sl.dot(lam) / static_cast<double>(m_) : 0.0;
            const double kkt = residual(z, Az, rd, re, lam);
            if (!std::isfinite(kkt)) break;
            const double rel = relative_residual(z, Az, rd, re, lam, nu);
            if (kkt <= s_.tol || rel <= s_.tol) return finish(z, lam, nu, kkt, sol);
            if (rel < best_rel) {
                best_rel = rel;
                bz = z, blam = lam, bnu = nu, bsl = sl;
            }
            const double pinf = std::max(inf_norm(rp), inf_norm(re));
            if (kkt < best_kkt * 0.9 || pinf < best_pinf * 0.9) {
                best_kkt = std::min(best_kkt, kkt);
                best_pinf = std::min(best_pinf, pinf);
                stalls = 0;
            } else if (++stalls >= 8) {
                break;
            }
            const double scale = 1.0 + std::max({inf_norm(p_.f), inf_norm(p_.b_in), inf_norm(p_.b_eq)});
            if (m_ && farkas(lam, nu)) {
                sol.status = QpStatus::Infeasible;
                store(z, lam, nu, sol);
                return sol;
            }
            if (it >= 15 && m_ && mu < 1e-8 * mu0 && std::max(inf_norm(rp), inf_norm(re)) > 1e-6 * scale) {
                suspect = true;  // complementarity closes while the residual does not
                break;
            }
            if (std::max(inf_norm(lam), inf_norm(nu)) > 1e13 * scale) {
                suspect = true;
                break;
            }
            if (it == s_.ipm_iterations) break;

            const VectorXd w = m_ ? VectorXd(lam.cwiseQuotient(sl).cwiseMax(1e-14).cwiseMin(1e14)) : VectorXd();
            if (!factor(w)) break;

            // Predictor.
            VectorXd rc = sl.cwiseProduct(lam);
            VectorXd dz, dnu, dlam, ds;
            newton(rd, rp, re, rc, lam, dz, dnu, dlam, ds);
            double alpha = m_ ? std::min(max_step(sl, ds), max_step(lam, dlam)) : 1.0;
            if (m_) {
                const double mu_aff = (sl + alpha * ds).dot(lam + alpha * dlam) / static_cast<double>(m_);
                const double sigma = std::pow(mu_aff / mu, 3);
                // Corrector with centering.
                const double alpha_aff = alpha;
                rc = sl.cwiseProduct(lam) + ds.cwiseProduct(dlam) - VectorXd::Constant(m_, sigma * mu);
                newton(rd, rp, re, rc, lam, dz, dnu, dlam, ds);
                alpha = std::min(1.0, 0.995 * std::min(max_step(sl, ds), max_step(lam, dlam)));
                if (alpha < 0.5 * alpha_aff) {
                    // Weak corrector: compare with a strongly centred first-order step.
                    VectorXd cz, cnu, clam, cs;
                    const VectorXd rc2 = sl.cwiseProduct(lam) - VectorXd::Constant(m_, 0.5 * mu);
                    newton(rd, rp, re, rc2, lam, cz, cnu, clam, cs);
                    const double a2 = std::min(1.0, 0.995 * std::min(max_step(sl, cs), max_step(lam, clam)));
                    if (a2 > alpha) {
                        alpha = a2;
                        dz = std::move(cz), dnu = std::move(cnu), dlam = std::move(clam), ds = std::move(cs);
                    }
                }
            }
            z += alpha * dz;
            nu += alpha * dnu;
            if (m_) {
                sl += alpha * ds;
                lam += alpha * dlam;
                sl = sl.cwiseMax(1e-300);
                lam = lam.cwiseMax(1e-300);
            }
        }
        // Stalled short of the absolute tolerance: let the active-set polish finish.
        z = bz, lam = blam, nu = bnu, sl = bsl;
        if (best_rel <= 10.0 * s_.tol) {
            finish(z, lam, nu, 0.0, sol);
            sol.kkt_residual = kkt_residuals(p_, sol.z, sol.duals_in, sol.duals_eq).max();
            return sol;
        }
        if (!suspect && best_pinf <= s_.tol) {
            // Stalled at a feasible point: report it without the costly fallbacks.
            sol.status = QpStatus::IterLimit;
            store(z, lam, nu, sol);
            sol.objective = p_.objective(z);
            sol.kkt_residual = kkt_residuals(p_, sol.z, sol.duals_in, sol.duals_eq).max();
            return sol;
        }
        if (allow_phase_one && !suspect && loosen_ == 0.0 && m_ > 0) {
            InteriorPoint wide(p_, s_, kLoosen);
            QpSolution r = wide.solve(false);
            if (r.status == QpStatus::Optimal) {
                r.iterations += sol.iterations;
                r.kkt_residual = kkt_residuals(p_, r.z, r.duals_in, r.duals_eq).max();
                return r;
            }
        }
        if (allow_phase_one && !suspect && best_rel <= 1e-3 && polish(z, sl, lam, sol)) return sol;
        if (allow_phase_one && (suspect || m_ > 0) && phase_one_infeasible()) {
            sol.status = QpStatus::Infeasible;
            store(z, lam, nu, sol);
            return sol;
        }
        sol.status = QpStatus::IterLimit;
        store(z, lam, nu, sol);
        sol.objective = p_.objective(z);
        sol.kkt_residual = kkt_residuals(p_, sol.z, sol.duals_in, sol.duals_eq).max();
        return sol;
    }

private:
    using SpCol = Eigen::SparseMatrix<double>;
    using Trip = Eigen::Triplet<double>;

    double residual(const VectorXd& z, const VectorXd& Az, const VectorXd& rd, const VectorXd& re, const VectorXd& lam) const {
        (void)z;
        double r = inf_norm(rd);
        if (me_) r = std::max(r, re.cwiseQuotient(row_eq_).cwiseAbs().maxCoeff());
        if (m_) {
            const VectorXd slack = b_ - Az;
            r = std::max(r, std::max(0.0, -slack.cwiseQuotient(row_in_).minCoeff()));
            r = std::max(r, lam.cwiseProduct(slack).cwiseAbs().maxCoeff());
            r = std::max(r, std::max(0.0, -lam.minCoeff()));
        }
        return r;
    }

    // Scale-aware residual; the duality gap is weighted against the objective.
    double relative_residual(const VectorXd& z, const VectorXd& Az, const VectorXd& rd, const VectorXd& re, const VectorXd& lam,
                             const VectorXd& nu) const {
        double r = inf_norm(rd) / (1.0 + std::max({inf_norm(p_.f), inf_norm(H_ * z), inf_norm(At_ * lam), inf_norm(Et_ * nu)}));
        if (me_) r = std::max(r, re.cwiseQuotient(row_eq_).cwiseAbs().maxCoeff());
        if (m_) {
            const VectorXd slack = b_ - Az;
            r = std::max(r, std::max(0.0, -slack.cwiseQuotient(row_in_).minCoeff()));
            r = std::max(r, std::max(0.0, -lam.minCoeff()));
            const double gap = std::abs(lam.dot(slack)) + lam.cwiseProduct(slack).cwiseAbs().maxCoeff();
            r = std::max(r, kGapWeight * gap / (1.0 + std::abs(p_.objective(z))));
        }
        return r;
    }

    QpSolution finish(const VectorXd& z, const VectorXd& lam, const VectorXd& nu, double kkt, QpSolution& sol) const {
        store(z, lam, nu, sol);
        sol.status = QpStatus::Optimal;
        sol.kkt_residual = kkt;
        sol.objective = p_.objective(z);
        return sol;
    }

    void store(const VectorXd& z, const VectorXd& lam, const VectorXd& nu, QpSolution& sol) const {
        sol.z = z;
        sol.duals_in = row_in_.cwiseProduct(lam);
        sol.duals_eq = row_eq_.cwiseProduct(nu);
    }

    // Least-squares point of the regularized problem, then Mehrotra's shift and centering.
    // Always cold: a warm primal point is a poor interior start.
    bool start(VectorXd& z, VectorXd& lam, VectorXd& nu, VectorXd& sl) {
        if (!factor(VectorXd::Ones(m_))) return false;
        VectorXd rhs(n_ + m_ + me_);
        rhs << -p_.f, b_, d_;
        const VectorXd x = kkt_solve(rhs);
        if (!x.allFinite()) return false;
        z = x.head(n_);
        nu = x.tail(me_);
        if (m_ == 0) {
            lam.resize(0);
            sl.resize(0);
            return true;
        }
        sl = b_ - A_ * z;
        lam = -sl;
        const double ds = std::max(-1.5 * sl.minCoeff(), 0.0);
        const double dl = std::max(-1.5 * lam.minCoeff(), 0.0);
        sl.array() += ds;
        lam.array() += dl;
        const double sl_dot = sl.dot(lam);
        const double sum_l = lam.sum(), sum_s = sl.sum();
        sl.array() += 0.5 * sl_dot / std::max(sum_l, 1e-12) + 1e-8;
        lam.array() += 0.5 * sl_dot / std::max(sum_s, 1e-12) + 1e-8;
        return true;
    }

    static double max_step(const VectorXd& v, const VectorXd& dv) {
        double a = 1.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
        }
        return a;
    }

    // Augmented quasi-definite system [H, A', E'; A, -1/W, 0; E, 0, 0] (lower triangle),
    // regularized by +delta on the primal block and -delta on the rest.
    bool factor(const VectorXd& w) {
        const auto dim = n_ + m_ + me_;
        std::vector<Trip> trip;
        trip.reserve(h_trip_.size() + a_trip_.size() + e_trip_.size() + static_cast<std::size_t>(m_));
        trip.insert(trip.end(), h_trip_.begin(), h_trip_.end());
        trip.insert(trip.end(), a_trip_.begin(), a_trip_.end());
        trip.insert(trip.end(), e_trip_.begin(), e_trip_.end());
        for (Eigen::Index i = 0; i < m_; ++i) trip.emplace_back(n_ + i, n_ + i, -1.0 / w(i));
        K_.resize(dim, dim);
        K_.setFromTriplets(trip.begin(), trip.end());
        // Retry with stronger regularization on pivot breakdown; refinement restores accuracy.
        double delta = 1e-9 * h_scale_;
        for (int attempt = 0; attempt < 4; ++attempt, delta *= 1e2) {
            std::vector<Trip> diag;
            // The inequality block is already negative definite through -1/W.
            for (Eigen::Index i = 0; i < n_; ++i) diag.emplace_back(i, i, delta);
            for (Eigen::Index i = n_ + m_; i < dim; ++i) diag.emplace_back(i, i, -delta);
            SpCol D(dim, dim);
            D.setFromTriplets(diag.begin(), diag.end());
            Kreg_ = K_ + D;
            if (!analyzed_) {
                ldlt_.analyzePattern(Kreg_);
                analyzed_ = true;
            }
            ldlt_.factorize(Kreg_);
            if (ldlt_.info() == Eigen::Success) return true;
        }
        return false;
    }

    // Solves with the regularized factor, refining against the exact (lower-stored) matrix.
    VectorXd kkt_solve(const VectorXd& rhs) const {
        VectorXd x = ldlt_.solve(rhs);
        for (int k = 0; k < 5; ++k) {
            const VectorXd r = rhs - K_.selfadjointView<Eigen::Lower>() * x;
            if (inf_norm(r) <= 1e-15 * std::max(1.0, inf_norm(rhs))) break;
            x += ldlt_.solve(r);
        }
        return x;
    }

    void newton(const VectorXd& rd, const VectorXd& rp, const VectorXd& re, const VectorXd& rc, const VectorXd& lam, VectorXd& dz,
                VectorXd& dnu, VectorXd& dlam, VectorXd& ds) const {
        VectorXd rhs(n_ + m_ + me_);
        if (m_) {
            rhs << -rd, rc.cwiseQuotient(lam) - rp, -re;
        } else {
            rhs << -rd, -re;
        }
        const VectorXd x = kkt_solve(rhs);
        dz = x.head(n_);
        dnu = x.tail(me_);
        if (m_) {
            dlam = x.segment(n_, m_);
            ds = -rp - A_ * dz;
        }
    }

    // Normalized multipliers with A'y ~ 0 and b'y < 0 prove that no feasible point exists.
    bool farkas(const VectorXd& lam, const VectorXd& nu) const {
        const double ny = std::max(inf_norm(lam), inf_norm(nu));
        if (ny < 1e6) return false;
        const VectorXd g = (At_ * lam + Et_ * nu) / ny;
        const double c = (b_.dot(lam) + d_.dot(nu)) / ny;
        return inf_norm(g) <= s_.infeasibility_tol && c <= -s_.infeasibility_tol;
    }

    // Elastic feasibility LP: min t + 1'(p + q)  s.t.  A z - t <= b,  t >= -1,  E z - p + q = d,  p, q >= 0.
    bool phase_one_infeasible() const {
        const Eigen::Index nv = n_ + 1 + 2 * me_;
        QpProblem lp;
        lp.H = MatrixXd::Zero(nv, nv);
        lp.f = VectorXd::Zero(nv);
        lp.f.tail(nv - n_).setOnes();
        lp.A_in = MatrixXd::Zero(m_ + 1 + 2 * me_, nv);
        lp.b_in = VectorXd::Zero(m_ + 1 + 2 * me_);
        lp.A_in.topLeftCorner(m_, n_) = p_.A_in;
        lp.A_in.block(0, n_, m_, 1).setConstant(-1.0);
        lp.b_in.head(m_) = p_.b_in;
        lp.A_in(m_, n_) = -1.0;
        lp.b_in(m_) = 1.0;
        for (Eigen::Index i = 0; i < 2 * me_; ++i) lp.A_in(m_ + 1 + i, n_ + 1 + i) = -1.0;
        lp.A_eq = MatrixXd::Zero(me_, nv);
        lp.A_eq.leftCols(n_) = p_.A_eq;
        lp.A_eq.block(0, n_ + 1, me_, me_) = -MatrixXd::Identity(me_, me_);
        lp.A_eq.block(0, n_ + 1 + me_, me_, me_) = MatrixXd::Identity(me_, me_);
        lp.b_eq = p_.b_eq;
        QpSettings ps = s_;
        ps.warm_z.reset();
        ps.tol = 1e-8;
        ps.ipm_iterations = std::max(s_.ipm_iterations, 100);
        InteriorPoint ipm(lp, ps);
        const QpSolution r = ipm.solve(false);
        if (r.status == QpStatus::IterLimit && !(r.objective > 0.0)) return false;
        const double scale = 1.0 + std::max(inf_norm(p_.b_in), inf_norm(p_.b_eq));
        return r.objective > 1e-6 * scale;
    }

    bool polish(const VectorXd& z, const VectorXd& sl, const VectorXd& lam, QpSolution& sol) const {
        (void)z;
        std::vector<char> active(static_cast<std::size_t>(m_), 0);
        for (Eigen::Index i = 0; i < m_; ++i) active[static_cast<std::size_t>(i)] = sl(i) < lam(i) * row_in_(i) * row_in_(i) ? 1 : 0;
        Polisher pol(p_, s_.tol, s_.polish_iterations);
        VectorXd zp, lp, np;
        if (!pol.run(active, zp, lp, np)) return false;
        const double res = kkt_residuals(p_, zp, lp, np).max();
        if (!(res <= s_.tol)) return false;
        sol.z = zp;
        sol.duals_in = lp;
        sol.duals_eq = np;
        sol.kkt_residual = res;
        sol.objective = p_.objective(zp);
        sol.status = QpStatus::Optimal;
        sol.polished = true;
        return true;
    }

    static constexpr double kLoosen = 1e-9;
    static constexpr double kGapWeight = 100.0;

    const QpProblem& p_;
    const QpSettings& s_;
    double loosen_{0.0};
    Eigen::Index n_{0}, m_{0}, me_{0};
    VectorXd row_in_, row_eq_, b_, d_;
    double h_scale_{1.0};
    SpCol H_, A_, At_, E_, Et_, K_, Kreg_;
    std::vector<Trip> h_trip_, a_trip_, e_trip_;
    bool analyzed_{false};
    Eigen::SimplicialLDLT<SpCol, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

}  // namespace detail

inline QpSolution solve_qp(const QpProblem& p, const QpSettings& settings = {}) {
    p.validate();
    // Presolve: rows with no nonzero entry are either trivially satisfied or infeasible.
    const auto n = p.n();
    auto nonzero_rows = [](const MatrixXd& A) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            if (A.row(i).cwiseAbs().maxCoeff() > 0.0) keep.push_back(i);
        }
        return keep;
    };
    const auto keep_in = nonzero_rows(p.A_in);
    const auto keep_eq = nonzero_rows(p.A_eq);
    QpSolution out;
    bool infeasible = false;
    std::vector<char> kept_in(static_cast<std::size_t>(p.A_in.rows()), 0), kept_eq(static_cast<std::size_t>(p.A_eq.rows()), 0);
    for (auto i : keep_in) kept_in[static_cast<std::size_t>(i)] = 1;
    for (auto i : keep_eq) kept_eq[static_cast<std::size_t>(i)] = 1;
    for (Eigen::Index i = 0; i < p.A_in.rows(); ++i) {
        if (!kept_in[static_cast<std::size_t>(i)] && p.b_in(i) < -settings.tol) infeasible = true;
    }
    for (Eigen::Index i = 0; i < p.A_eq.rows(); ++i) {
        if (!kept_eq[static_cast<std::size_t>(i)] && std::abs(p.b_eq(i)) > settings.tol) infeasible = true;
    }
    if (infeasible) {
        out.status = QpStatus::Infeasible;
        out.z = VectorXd::Zero(n);
        out.duals_in = VectorXd::Zero(p.b_in.size());
        out.duals_eq = VectorXd::Zero(p.b_eq.size());
        return out;
    }
    const bool reduced = static_cast<Eigen::Index>(keep_in.size()) != p.A_in.rows() ||
                         static_cast<Eigen::Index>(keep_eq.size()) != p.A_eq.rows();
    auto run = [](const QpProblem& q, const QpSettings& s) {
        if (s.method == QpMethod::InteriorPoint) return detail::InteriorPoint(q, s).solve();
        return detail::Admm(q, s).solve();
    };
    if (!reduced) return run(p, settings);

    QpProblem r;
    r.H = p.H;
    r.f = p.f;
    r.constant = p.constant;
    r.A_in = p.A_in(keep_in, Eigen::all);
    r.b_in = p.b_in(keep_in);
    r.A_eq = p.A_eq(keep_eq, Eigen::all);
    r.b_eq = p.b_eq(keep_eq);
    QpSettings rs = settings;
    if (settings.warm_y && settings.warm_y->size() == p.b_in.size() + p.b_eq.size()) {
        VectorXd wy(r.b_in.size() + r.b_eq.size());
        wy << (*settings.warm_y)(keep_in), settings.warm_y->tail(p.b_eq.size())(keep_eq);
        rs.warm_y = wy;
    } else {
        rs.warm_y.reset();
    }
    const QpSolution rsol = run(r, rs);
    out = rsol;
    out.duals_in = VectorXd::Zero(p.b_in.size());
    out.duals_eq = VectorXd::Zero(p.b_eq.size());
    out.duals_in(keep_in) = rsol.duals_in;
    out.duals_eq(keep_eq) = rsol.duals_eq;
    if (out.status != QpStatus::Infeasible) out.kkt_residual = kkt_residuals(p, out.z, out.duals_in, out.duals_eq).max();
    return out;
}

namespace detail {

inline nlohmann::json matrix_to_json(const MatrixXd& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(M.cols()));
        for (Eigen::Index j = 0; j < M.cols(); ++j) r[static_cast<std::size_t>(j)] = M(i, j);
        rows.push_back(r);
    }
    return rows;
}

inline MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols, const char* name) {
    if (!j.is_array()) throw InputError(std::string("qp json: ") + name + " must be an array of rows");
    MatrixXd M(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto row = j[i].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != cols) throw DimensionError(std::string("qp json: row width of ") + name);
        for (Eigen::Index c = 0; c < cols; ++c) M(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)];
    }
    return M;
}

inline std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline VectorXd vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// Dense row-major JSON: {"n", "H", "f", "A_in", "b_in", "A_eq", "b_eq", "constant"}.
inline nlohmann::json qp_to_json(const QpProblem& p) {
    return {{"n", p.n()},
            {"H", detail::matrix_to_json(p.H)},
            {"f", detail::to_std(p.f)},
            {"A_in", detail::matrix_to_json(p.A_in)},
            {"b_in", detail::to_std(p.b_in)},
            {"A_eq", detail::matrix_to_json(p.A_eq)},
            {"b_eq", detail::to_std(p.b_eq)},
            {"constant", p.constant}};
}

inline QpProblem qp_from_json(const nlohmann::json& j) {
    try {
        QpProblem p;
        const auto n = j.at("n").get<Eigen::Index>();
        p.H = detail::matrix_from_json(j.at("H"), n, "H");
        p.f = detail::vector_from_json(j.at("f"));
        p.A_in = detail::matrix_from_json(j.at("A_in"), n, "A_in");
        p.b_in = detail::vector_from_json(j.at("b_in"));
        p.A_eq = detail::matrix_from_json(j.at("A_eq"), n, "A_eq");
        p.b_eq = detail::vector_from_json(j.at("b_eq"));
        p.constant = j.value("constant", 0.0);
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("invalid QP JSON: ") + e.what());
    }
}

}  // namespace mambot::solver
