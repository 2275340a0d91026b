#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mambot/errors.hpp"
#include "mambot/simplex.hpp"

namespace mambot::geometry {

/// Slack allowed by point containment.
inline constexpr double kContainTol = 1e-9;
/// Feasibility tolerance of the emptiness / bounding-box linear programs.
inline constexpr double kLpFeasTol = 1e-8;
/// A piece is kept only if it still has a point after every row is pulled in by this much.
inline constexpr double kInteriorMargin = 1e-7;

/// Axis-aligned box [lower, upper].
class AxisBox {
public:
    AxisBox() = default;
    AxisBox(Eigen::VectorXd lower, Eigen::VectorXd upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
        if (lower_.size() != upper_.size()) throw DimensionError("AxisBox: lower/upper size mismatch");
        for (Eigen::Index i = 0; i < lower_.size(); ++i) {
            if (!std::isfinite(lower_(i)) || !std::isfinite(upper_(i))) {
                throw InputError("AxisBox: non-finite bound");
            }
            if (lower_(i) > upper_(i)) throw InputError("AxisBox: lower > upper in coordinate " + std::to_string(i));
        }
    }

    const Eigen::VectorXd& lower() const noexcept { return lower_; }
    const Eigen::VectorXd& upper() const noexcept { return upper_; }
    int dim() const noexcept { return static_cast<int>(lower_.size()); }
    Eigen::VectorXd center() const { return 0.5 * (lower_ + upper_); }
    Eigen::VectorXd halfwidth() const { return 0.5 * (upper_ - lower_); }

    bool contains(const Eigen::VectorXd& z, double tol = kContainTol) const {
        if (z.size() != lower_.size()) throw DimensionError("AxisBox::contains: dimension mismatch");
        return ((z - upper_).array() <= tol).all() && ((lower_ - z).array() <= tol).all();
    }

private:
    Eigen::VectorXd lower_;
    Eigen::VectorXd upper_;
};

/// Convex polytope {z | A z <= b}. Rows are stored normalized to unit length.
class HalfspacePolytope {
public:
    HalfspacePolytope() = default;

    HalfspacePolytope(Eigen::MatrixXd A, Eigen::VectorXd b) : A_(std::move(A)), b_(std::move(b)) {
        if (A_.rows() != b_.size()) throw DimensionError("HalfspacePolytope: A rows != b size");
        if (!A_.allFinite() || !b_.allFinite()) throw InputError("HalfspacePolytope: non-finite entry");
        for (Eigen::Index i = 0; i < A_.rows(); ++i) {
            const double n = A_.row(i).norm();
            if (n == 0.0) throw InputError("HalfspacePolytope: row " + std::to_string(i) + " is zero");
            A_.row(i) /= n;
            b_(i) /= n;
        }
    }

    /// Box rows in the order lower-then-upper per coordinate: -z_i <= -l_i, z_i <= u_i.
    static HalfspacePolytope from_box(const AxisBox& box) {
        const int d = box.dim();
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * d, d);
        Eigen::VectorXd b(2 * d);
        for (int i = 0; i < d; ++i) {
            A(2 * i, i) = -1.0;
            b(2 * i) = -box.lower()(i);
            A(2 * i + 1, i) = 1.0;
            b(2 * i + 1) = box.upper()(i);
        }
        return {std::move(A), std::move(b)};
    }

    const Eigen::MatrixXd& A() const noexcept { return A_; }
    const Eigen::VectorXd& b() const noexcept { return b_; }
    int dim() const noexcept { return static_cast<int>(A_.cols()); }
    int rows() const noexcept { return static_cast<int>(A_.rows()); }

private:
    Eigen::MatrixXd A_;
    Eigen::VectorXd b_;
};

/// Ordered convex pieces of one dimension; region_diff guarantees disjoint interiors.
using PolytopeList = std::vector<HalfspacePolytope>;

inline bool contains(const HalfspacePolytope& P, const Eigen::VectorXd& z) {
    if (z.size() != P.dim()) throw DimensionError("contains: point/polytope dimension mismatch");
    if (P.rows() == 0) return true;
    return ((P.A() * z - P.b()).array() <= kContainTol).all();
}

inline HalfspacePolytope intersect(const HalfspacePolytope& P, const HalfspacePolytope& Q) {
    if (P.dim() != Q.dim()) throw DimensionError("intersect: dimension mismatch");
    Eigen::MatrixXd A(P.rows() + Q.rows(), P.dim());
    Eigen::VectorXd b(P.rows() + Q.rows());
    A << P.A(), Q.A();
    b << P.b(), Q.b();
    return {std::move(A), std::move(b)};
}

inline bool is_empty(const HalfspacePolytope& P) {
    lp::SimplexOptions opt;
    opt.feasibility_tol = kLpFeasTol;
    return lp::find_feasible(P.A(), P.b(), opt).status == lp::LpStatus::Infeasible;
}

/// True when P keeps a point after all offsets shrink by kInteriorMargin (full-dimensional test).
inline bool has_interior(const HalfspacePolytope& P) {
    lp::SimplexOptions opt;
    opt.feasibility_tol = kLpFeasTol;
    const Eigen::VectorXd shrunk = P.b().array() - kInteriorMargin;
    return lp::find_feasible(P.A(), shrunk, opt).status != lp::LpStatus::Infeasible;
}

inline AxisBox bounding_box(const HalfspacePolytope& P) {
    const int d = P.dim();
    Eigen::VectorXd lo(d), hi(d);
    lp::SimplexOptions opt;
    opt.feasibility_tol = kLpFeasTol;
    for (int i = 0; i < d; ++i) {
        for (const double sign : {1.0, -1.0}) {
            Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
            c(i) = sign;
            const auto r = lp::minimize(c, P.A(), P.b(), opt);
            if (r.status == lp::LpStatus::Infeasible) throw NumericalError("bounding_box: polytope is empty");
            if (r.status == lp::LpStatus::Unbounded) {
                throw UnboundedError("bounding_box: polytope unbounded along coordinate " + std::to_string(i));
            }
            (sign > 0 ? lo : hi)(i) = r.z(i);
        }
    }
    return {lo, hi};
}

/// Drops rows implied by the others. P must be nonempty.
inline HalfspacePolytope remove_redundant(const HalfspacePolytope& P) {
    std::vector<int> keep;
    for (int i = 0; i < P.rows(); ++i) {
        bool duplicate = false;
        for (int k : keep) {
            if ((P.A().row(k) - P.A().row(i)).norm() < 1e-12 && std::abs(P.b()(k) - P.b()(i)) < 1e-12) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) keep.push_back(i);
    }
    std::size_t pos = 0;
    while (pos < keep.size()) {
        const int i = keep[pos];
        Eigen::MatrixXd A(static_cast<Eigen::Index>(keep.size()), P.dim());
        Eigen::VectorXd b(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k) {
            A.row(static_cast<Eigen::Index>(k)) = P.A().row(keep[k]);
            b(static_cast<Eigen::Index>(k)) = P.b()(keep[k]);
        }
        b(static_cast<Eigen::Index>(pos)) += 1.0;
        const auto r = lp::minimize(-P.A().row(i).transpose(), A, b);
        if (r.status == lp::LpStatus::Optimal && -r.objective <= P.b()(i) + kContainTol) {
            keep.erase(keep.begin() + static_cast<std::ptrdiff_t>(pos));
        } else {
            ++pos;
        }
    }
    Eigen::MatrixXd A(static_cast<Eigen::Index>(keep.size()), P.dim());
    Eigen::VectorXd b(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        A.row(static_cast<Eigen::Index>(k)) = P.A().row(keep[k]);
        b(static_cast<Eigen::Index>(k)) = P.b()(keep[k]);
    }
    return {std::move(A), std::move(b)};
}

namespace detail {

inline HalfspacePolytope with_row(const HalfspacePolytope& P, const Eigen::RowVectorXd& a, double b) {
    Eigen::MatrixXd A(P.rows() + 1, P.dim());
    Eigen::VectorXd bb(P.rows() + 1);
    A << P.A(), a;
    bb << P.b(), b;
    return {std::move(A), std::move(bb)};
}

}  // namespace detail

/// Convex pieces covering closure(P \ union(obstacles)) with pairwise disjoint interiors.
///
/// Each obstacle is removed from every current piece by walking its rows in
/// H-rep order: the part of the piece beyond row i is split off as a new
/// piece and the remainder continues with the next row. What is left after
/// the last row lies inside the obstacle and is dropped. Pieces without
/// interior are discarded and survivors are reduced to irredundant rows.
inline PolytopeList region_diff(const HalfspacePolytope& P, const PolytopeList& obstacles) {
    for (const auto& o : obstacles) {
        if (o.dim() != P.dim()) throw DimensionError("region_diff: obstacle dimension mismatch");
    }
    PolytopeList pieces;
    if (has_interior(P)) pieces.push_back(P);
    for (const auto& obstacle : obstacles) {
        PolytopeList next;
        for (const auto& piece : pieces) {
            if (!has_interior(intersect(piece, obstacle))) {
                next.push_back(piece);
                continue;
            }
            HalfspacePolytope remainder = piece;
            for (int i = 0; i < obstacle.rows(); ++i) {
                const Eigen::RowVectorXd a = obstacle.A().row(i);
                const double bi = obstacle.b()(i);
                HalfspacePolytope outside = detail::with_row(remainder, -a, -bi);
                if (has_interior(outside)) next.push_back(std::move(outside));
                remainder = detail::with_row(remainder, a, bi);
                if (!has_interior(remainder)) break;
            }
        }
        pieces = std::move(next);
    }
    for (auto& piece : pieces) piece = remove_redundant(piece);
    return pieces;
}

/// Counter-clockwise vertices of a bounded 2D polytope.
inline std::vector<Eigen::Vector2d> polygon_vertices(const HalfspacePolytope& P) {
    if (P.dim() != 2) throw DimensionError("polygon_vertices: 2D only");
    if (is_empty(P)) return {};
    const AxisBox box = bounding_box(P);
    const double pad = 1.0 + box.halfwidth().maxCoeff();
    std::vector<Eigen::Vector2d> poly{{box.lower()(0) - pad, box.lower()(1) - pad},
                                      {box.upper()(0) + pad, box.lower()(1) - pad},
                                      {box.upper()(0) + pad, box.upper()(1) + pad},
                                      {box.lower()(0) - pad, box.upper()(1) + pad}};
    for (int r = 0; r < P.rows() && !poly.empty(); ++r) {
        const Eigen::Vector2d a = P.A().row(r).transpose();
        const double b = P.b()(r);
        std::vector<Eigen::Vector2d> out;
        for (std::size_t k = 0; k < poly.size(); ++k) {
            const Eigen::Vector2d& p = poly[k];
            const Eigen::Vector2d& q = poly[(k + 1) % poly.size()];
            const double sp = a.dot(p) - b;
            const double sq = a.dot(q) - b;
            if (sp <= 0.0) out.push_back(p);
            if ((sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0)) {
                const double t = sp / (sp - sq);
                out.push_back(p + t * (q - p));
            }
        }
        poly = std::move(out);
    }
    return poly;
}

inline double area(const HalfspacePolytope& P) {
    const auto v = polygon_vertices(P);
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const auto& p = v[k];
        const auto& q = v[(k + 1) % v.size()];
        s += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * std::abs(s);
}

}  // namespace mambot::geometry
