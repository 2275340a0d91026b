#pragma once

// Small dense two-phase simplex for problems of the form
//   min c'z  s.t.  A z <= b,  z free.
// Sizes here are tiny (dimension 2-4, a few dozen rows), so a full tableau
// with Bland's rule is used: deterministic and free of cycling.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "mambot/errors.hpp"

namespace mambot::lp {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
    LpStatus status{LpStatus::Infeasible};
    Eigen::VectorXd z;
    double objective{std::numeric_limits<double>::quiet_NaN()};
};

struct SimplexOptions {
    double feasibility_tol{1e-8};
    double pivot_tol{1e-11};
    int max_iterations{0};  // 0 selects a size-dependent default
};

namespace detail {

class Tableau {
public:
    Tableau(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const SimplexOptions& opt)
        : opt_(opt), m_(static_cast<int>(A.rows())), d_(static_cast<int>(A.cols())) {
        int n_art = 0;
        for (int i = 0; i < m_; ++i) {
            if (b(i) < 0.0) ++n_art;
        }
        first_art_ = 2 * d_ + m_;
        cols_ = first_art_ + n_art;
        T_ = Eigen::MatrixXd::Zero(m_ + 1, cols_ + 1);
        basis_.assign(static_cast<std::size_t>(m_), -1);
        int art = first_art_;
        for (int i = 0; i < m_; ++i) {
            const double sign = b(i) < 0.0 ? -1.0 : 1.0;
            for (int j = 0; j < d_; ++j) {
                T_(i, j) = sign * A(i, j);
                T_(i, d_ + j) = -sign * A(i, j);
            }
            T_(i, 2 * d_ + i) = sign;
            T_(i, cols_) = sign * b(i);
            if (sign < 0.0) {
                T_(i, art) = 1.0;
                basis_[static_cast<std::size_t>(i)] = art++;
            } else {
                basis_[static_cast<std::size_t>(i)] = 2 * d_ + i;
            }
        }
        max_iter_ = opt.max_iterations > 0 ? opt.max_iterations : 50 * (m_ + cols_) + 200;
    }

    bool has_artificials() const { return cols_ > first_art_; }

    // Returns false when the phase-1 optimum leaves residual infeasibility.
    bool phase_one() {
        Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols_);
        for (int j = first_art_; j < cols_; ++j) cost(j) = 1.0;
        load_objective(cost);
        if (!run(cols_)) {
            throw UnboundedError("phase-1 objective unbounded (internal error)");
        }
        if (-T_(m_, cols_) > opt_.feasibility_tol) return false;
        // Drive remaining artificials out of the basis.
        for (int i = 0; i < m_; ++i) {
            if (basis_[static_cast<std::size_t>(i)] < first_art_) continue;
            for (int j = 0; j < first_art_; ++j) {
                if (std::abs(T_(i, j)) > 1e-9) {
                    pivot(i, j);
                    break;
                }
            }
        }
        return true;
    }

    // Returns false when the objective is unbounded below.
    bool phase_two(const Eigen::VectorXd& c) {
        Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols_);
        cost.head(d_) = c;
        cost.segment(d_, d_) = -c;
        load_objective(cost);
        return run(first_art_);
    }

    Eigen::VectorXd point() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(cols_);
        for (int i = 0; i < m_; ++i) x(basis_[static_cast<std::size_t>(i)]) = T_(i, cols_);
        return x.head(d_) - x.segment(d_, d_);
    }

    double objective() const { return -T_(m_, cols_); }

private:
    void load_objective(const Eigen::VectorXd& cost) {
        T_.row(m_).setZero();
        T_.row(m_).head(cols_) = cost.transpose();
        for (int i = 0; i < m_; ++i) {
            const double cb = cost(basis_[static_cast<std::size_t>(i)]);
            if (cb != 0.0) T_.row(m_) -= cb * T_.row(i);
        }
    }

    void pivot(int r, int c) {
        T_.row(r) /= T_(r, c);
        for (int i = 0; i <= m_; ++i) {
            if (i == r) continue;
            const double f = T_(i, c);
            if (f != 0.0) T_.row(i) -= f * T_.row(r);
        }
        basis_[static_cast<std::size_t>(r)] = c;
    }

    // Bland's rule over columns [0, allowed). Returns false on unboundedness.
    bool run(int allowed) {
        for (int it = 0; it < max_iter_; ++it) {
            int enter = -1;
            for (int j = 0; j < allowed; ++j) {
                if (T_(m_, j) < -opt_.pivot_tol) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return true;
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m_; ++i) {
                const double a = T_(i, enter);
                if (a <= opt_.pivot_tol) continue;
                const double ratio = std::max(T_(i, cols_), 0.0) / a;
                const bool tie = leave >= 0 && ratio <= best + 1e-14 &&
                                 basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)];
                if (leave < 0 || ratio < best - 1e-14 || tie) {
                    best = std::min(best, ratio);
                    leave = i;
                }
            }
            if (leave < 0) return false;
            pivot(leave, enter);
        }
        throw LpUndecided("simplex iteration limit exceeded (" + std::to_string(max_iter_) + ")");
    }

    SimplexOptions opt_;
    int m_;
    int d_;
    int first_art_{0};
    int cols_{0};
    int max_iter_{0};
    Eigen::MatrixXd T_;
    std::vector<int> basis_;
};

// Normalizes rows to unit length so the feasibility tolerance is a distance.
// Zero rows are dropped; a zero row with negative offset makes the system infeasible.
inline bool normalize_rows(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, Eigen::MatrixXd& An,
                           Eigen::VectorXd& bn, double tol) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        const double n = A.row(i).norm();
        if (n == 0.0) {
            if (b(i) < -tol) return false;
            continue;
        }
        keep.push_back(i);
    }
    An.resize(static_cast<Eigen::Index>(keep.size()), A.cols());
    bn.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        const double n = A.row(keep[k]).norm();
        An.row(static_cast<Eigen::Index>(k)) = A.row(keep[k]) / n;
        bn(static_cast<Eigen::Index>(k)) = b(keep[k]) / n;
    }
    return true;
}

}  // namespace detail

/// Minimizes c'z over {z | A z <= b}. Throws LpUndecided on iteration limit.
inline LpResult minimize(const Eigen::VectorXd& c, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                         const SimplexOptions& opt = {}) {
    if (A.cols() != c.size() || A.rows() != b.size()) {
        throw DimensionError("lp::minimize: inconsistent dimensions");
    }
    LpResult res;
    Eigen::MatrixXd An;
    Eigen::VectorXd bn;
    if (!detail::normalize_rows(A, b, An, bn, opt.feasibility_tol)) return res;
    detail::Tableau t(An, bn, opt);
    if (t.has_artificials() && !t.phase_one()) return res;
    if (!t.phase_two(c)) {
        res.status = LpStatus::Unbounded;
        res.z = t.point();
        return res;
    }
    res.status = LpStatus::Optimal;
    res.z = t.point();
    res.objective = c.dot(res.z);
    return res;
}

/// Phase-1 only: returns a feasible point or an empty optional-like result.
inline LpResult find_feasible(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const SimplexOptions& opt = {}) {
    return minimize(Eigen::VectorXd::Zero(A.cols()), A, b, opt);
}

}  // namespace mambot::lp
