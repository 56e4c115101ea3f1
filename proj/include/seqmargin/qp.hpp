#pragma once

#include "seqmargin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace seqmargin {

// The set {w : a_i^T w >= 1 for every row a_i of A}. Feasibility is not
// assumed; operations report infeasibility.
struct Polyhedron {
    Matrix A;

    int rows() const { return static_cast<int>(A.rows()); }
    int dim() const { return static_cast<int>(A.cols()); }

    void validate() const {
        if (!A.allFinite()) throw Error("Polyhedron: non-finite entries");
    }

    double row_scale() const {
        double s = 1.0;
        for (int i = 0; i < rows(); ++i) s = std::max(s, A.row(i).norm());
        return s;
    }
};

struct KKTResiduals {
    double stationarity = 0;
    double feasibility = 0;
    double complementarity = 0;
};

struct QPSolution {
    Vector w;
    Vector alpha;                 // one per constraint, >= 0
    std::vector<int> active_set;  // rows with a_i^T w = 1 within tie tolerance
    KKTResiduals residuals;
    bool dual_unique = true;      // false when the active rows are dependent
    int iterations = 0;
};

struct InfeasibleError : Error {
    using Error::Error;
};

namespace qpdetail {

constexpr double kTieTol = 1e-9;

// Minimum-norm point of conv{rows of A} by Wolfe's algorithm (finite,
// exact up to the solve tolerance). Returns the point and its hull
// coefficients. Used as the feasibility phase: the polyhedron
// {a_i^T w >= 1} is nonempty iff 0 is outside the hull.
struct HullPoint {
    Vector p;
    Vector lambda;  // simplex coefficients over all rows
};

inline HullPoint wolfe_min_norm_point(const Matrix& A) {
    const int n = static_cast<int>(A.rows());
    const int d = static_cast<int>(A.cols());
    double scale2 = 0;
    for (int i = 0; i < n; ++i) scale2 = std::max(scale2, A.row(i).squaredNorm());
    const double eps = 1e-13 * std::max(1.0, scale2);

    int j0 = 0;
    for (int i = 1; i < n; ++i)
        if (A.row(i).squaredNorm() < A.row(j0).squaredNorm()) j0 = i;
    std::vector<int> S = {j0};
    std::vector<double> lam = {1.0};
    Vector x = A.row(j0).transpose();

    // Min-norm point of the affine hull of the rows indexed by S.
    auto affine_min_norm = [&](const std::vector<int>& idx) -> Vector {
        const int k = static_cast<int>(idx.size());
        Matrix M(k + 1, k + 1);
        Vector rhs = Vector::Zero(k + 1);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) M(a, b) = A.row(idx[a]).dot(A.row(idx[b]));
        for (int a = 0; a < k; ++a) {
            M(a, k) = 1;
            M(k, a) = 1;
        }
        M(k, k) = 0;
        rhs(k) = 1;
        Vector sol = M.completeOrthogonalDecomposition().solve(rhs);
        return sol.head(k);
    };

    const int max_major = 4 * (n + d) + 64;
    for (int major = 0; major < max_major; ++major) {
        // most violated vertex
        Vector prods = A * x;
        int j = 0;
        for (int i = 1; i < n; ++i)
            if (prods[i] < prods[j]) j = i;
        if (prods[j] >= x.squaredNorm() - eps) break;  // optimal
        if (std::find(S.begin(), S.end(), j) == S.end()) {
            S.push_back(j);
            lam.push_back(0.0);
        } else {
            break;  // cannot improve further at this precision
        }
        // minor cycle: pull the affine solution back into the simplex face
        for (int minor = 0; minor <= n + 1; ++minor) {
            Vector beta = affine_min_norm(S);
            double bmin = beta.minCoeff();
            if (bmin > 1e-12) {
                lam.assign(beta.data(), beta.data() + beta.size());
                break;
            }
            double theta = 1.0;
            for (size_t a = 0; a < S.size(); ++a)
                if (beta[a] <= 1e-12 && lam[a] - beta[a] > 0)
                    theta = std::min(theta, lam[a] / (lam[a] - beta[a]));
            std::vector<int> keepS;
            std::vector<double> keepL;
            for (size_t a = 0; a < S.size(); ++a) {
                double v = (1 - theta) * lam[a] + theta * beta[a];
                if (v > 1e-12) {
                    keepS.push_back(S[a]);
                    keepL.push_back(v);
                }
            }
            if (keepS.empty()) {  // numerical corner: keep the largest
                size_t best = 0;
                for (size_t a = 1; a < S.size(); ++a)
                    if (lam[a] > lam[best]) best = a;
                keepS = {S[best]};
                keepL = {1.0};
            }
            S = std::move(keepS);
            lam = std::move(keepL);
        }
        x = Vector::Zero(d);
        for (size_t a = 0; a < S.size(); ++a) x += lam[a] * A.row(S[a]).transpose();
    }

    HullPoint out;
    out.p = x;
    out.lambda = Vector::Zero(n);
    double tot = std::accumulate(lam.begin(), lam.end(), 0.0);
    for (size_t a = 0; a < S.size(); ++a) out.lambda[S[a]] = lam[a] / std::max(tot, 1e-300);
    return out;
}

// Strictly feasible point of {Aw >= 1}, or throw InfeasibleError.
inline Vector feasible_point(const Polyhedron& P) {
    HullPoint h = wolfe_min_norm_point(P.A);
    const double scale = P.row_scale();
    double pn = h.p.norm();
    if (pn <= 1e-10 * scale)
        throw InfeasibleError("polyhedron infeasible: 0 lies in conv{a_i} (hull point norm " +
                              format_double(pn) + ")");
    Vector dir = h.p / pn;
    double min_margin = (P.A * dir).minCoeff();
    if (min_margin <= 1e-8 * scale)
        throw InfeasibleError("polyhedron infeasible: best direction has margin " +
                              format_double(min_margin));
    return dir * (1.0 + 1e-6) / min_margin;
}

} // namespace qpdetail

// argmin ||w - c||^2 subject to Aw >= 1, by a primal active-set method
// started from a feasible point. `start` must satisfy the constraints.
inline QPSolution solve_projection_qp(const Polyhedron& P, const Vector& c,
                                      const Vector& start, double tol = 1e-10) {
    P.validate();
    const int n = P.rows();
    const int d = P.dim();
    const double scale = P.row_scale();
    const double tie = qpdetail::kTieTol * std::max(1.0, scale);

    Vector x = start;
    std::vector<int> W;  // working set
    Vector nu;           // multipliers on W

    auto solve_eq = [&](const std::vector<int>& idx, Vector& xeq, Vector& mult) {
        if (idx.empty()) {
            xeq = c;
            mult.resize(0);
            return;
        }
        const int k = static_cast<int>(idx.size());
        Matrix Aw(k, d);
        for (int a = 0; a < k; ++a) Aw.row(a) = P.A.row(idx[a]);
        Matrix G = Aw * Aw.transpose();
        Vector rhs = Vector::Ones(k) - Aw * c;
        mult = G.completeOrthogonalDecomposition().solve(rhs);
        xeq = c + Aw.transpose() * mult;
    };

    const int max_iter = 50 * std::max(n, 1) + 50;
    int it = 0;
    for (; it < max_iter; ++it) {
        Vector xeq, mult;
        solve_eq(W, xeq, mult);
        Vector p = xeq - x;
        if (p.norm() <= tol * (1.0 + x.norm())) {
            // at the working-set minimizer: check multiplier signs
            int worst = -1;
            double worst_v = -tie;
            for (size_t a = 0; a < W.size(); ++a)
                if (mult[a] < worst_v) {
                    worst_v = mult[a];
                    worst = static_cast<int>(a);
                }
            if (worst < 0) {
                x = xeq;
                break;  // KKT satisfied
            }
            W.erase(W.begin() + worst);
            continue;
        }
        // step toward xeq, stopping at the first blocking constraint
        double alpha = 1.0;
        int blocker = -1;
        for (int i = 0; i < n; ++i) {
            if (std::find(W.begin(), W.end(), i) != W.end()) continue;
            double ap = P.A.row(i).dot(p);
            if (ap >= -1e-14 * scale) continue;
            double gap = 1.0 - P.A.row(i).dot(x);
            double a_i = gap / ap;  // >= 0 since gap <= 0, ap < 0
            if (a_i < alpha - 1e-15) {
                alpha = a_i;
                blocker = i;
            }
        }
        x += std::max(alpha, 0.0) * p;
        if (blocker >= 0)
            W.push_back(blocker);
    }
    if (it >= max_iter) {
        Vector margins = P.A * x - Vector::Ones(n);
        throw Error("active-set QP failed to converge in " + std::to_string(max_iter) +
                    " iterations (worst violation " + format_double(-margins.minCoeff()) + ")");
    }

    QPSolution sol;
    sol.w = x;
    sol.iterations = it + 1;
    Vector margins = P.A * x;
    for (int i = 0; i < n; ++i)
        if (std::abs(margins[i] - 1.0) <= tie) sol.active_set.push_back(i);

    // Duals over the tie-tolerant active set: minimum-norm solution of
    // x - c = A_S^T alpha_S. Unique iff the active rows are independent.
    sol.alpha = Vector::Zero(n);
    if (!sol.active_set.empty()) {
        const int k = static_cast<int>(sol.active_set.size());
        Matrix As(k, d);
        for (int a = 0; a < k; ++a) As.row(a) = P.A.row(sol.active_set[a]);
        Vector as = As.transpose().completeOrthogonalDecomposition().solve(x - c);
        Eigen::JacobiSVD<Matrix> svd(As);
        double smin = svd.singularValues().minCoeff();
        sol.dual_unique = (k <= d) && (smin > 1e-8 * std::max(1.0, svd.singularValues().maxCoeff()));
        for (int a = 0; a < k; ++a) sol.alpha[sol.active_set[a]] = std::max(0.0, as[a]);
    }

    // KKT residuals
    Vector stat = (x - c) - P.A.transpose() * sol.alpha;
    sol.residuals.stationarity = stat.norm();
    sol.residuals.feasibility = std::max(0.0, (Vector::Ones(n) - margins).maxCoeff());
    double comp = 0;
    for (int i = 0; i < n; ++i) comp = std::max(comp, std::abs(sol.alpha[i] * (margins[i] - 1.0)));
    sol.residuals.complementarity = comp;
    return sol;
}

// The unique minimizer of ||w||^2 subject to a_i^T w >= 1.
inline QPSolution min_norm_in_polyhedron(const Polyhedron& P, double tol = 1e-10) {
    P.validate();
    if (P.rows() == 0) throw Error("min_norm_in_polyhedron: no constraints");
    Vector start = qpdetail::feasible_point(P);  // throws InfeasibleError
    return solve_projection_qp(P, Vector::Zero(P.dim()), start, tol);
}

// argmin ||w - w0||^2 over the polyhedron; returns w0 unchanged (empty
// active set) when w0 is already feasible.
inline QPSolution project_onto_polyhedron(const Polyhedron& P, const Vector& w0,
                                          double tol = 1e-10) {
    P.validate();
    if (P.rows() == 0) {
        QPSolution sol;
        sol.w = w0;
        sol.alpha = Vector::Zero(0);
        return sol;
    }
    Vector margins = P.A * w0;
    if ((margins.array() >= 1.0).all()) {
        QPSolution sol;
        sol.w = w0;
        sol.alpha = Vector::Zero(P.rows());
        for (int i = 0; i < P.rows(); ++i)
            if (std::abs(margins[i] - 1.0) <= qpdetail::kTieTol * std::max(1.0, P.row_scale()))
                sol.active_set.push_back(i);
        return sol;
    }
    Vector start = qpdetail::feasible_point(P);
    return solve_projection_qp(P, w0, start, tol);
}

enum class OracleObjective { min_norm, min_dist };

// Brute-force optimum by enumerating equality-constrained subsets of size
// <= d, keeping the feasible candidate with nonnegative duals and the best
// objective. Exhaustive-search budget: at most 12 constraints.
inline QPSolution active_set_oracle(const Polyhedron& P, OracleObjective obj,
                                    const Vector& w0 = Vector()) {
    P.validate();
    const int n = P.rows();
    const int d = P.dim();
    if (n > 12) throw Error("active_set_oracle: enumeration budget is 12 constraints");
    Vector c = obj == OracleObjective::min_norm ? Vector::Zero(d) : w0;
    if (c.size() != d) throw Error("active_set_oracle: min_dist requires w0 of dimension d");

    const double tie = qpdetail::kTieTol * std::max(1.0, P.row_scale());
    bool found = false;
    double best_obj = std::numeric_limits<double>::infinity();
    QPSolution best;

    const int subset_max = std::min(n, d);
    std::vector<int> idx;
    auto consider = [&](const std::vector<int>& sel) {
        const int k = static_cast<int>(sel.size());
        Vector x;
        Vector mult(k);
        if (k == 0) {
            x = c;
        } else {
            Matrix Aw(k, d);
            for (int a = 0; a < k; ++a) Aw.row(a) = P.A.row(sel[a]);
            Matrix G = Aw * Aw.transpose();
            Vector rhs = Vector::Ones(k) - Aw * c;
            auto cod = G.completeOrthogonalDecomposition();
            mult = cod.solve(rhs);
            // reject subsets whose equality system is inconsistent
            if ((G * mult - rhs).norm() > 1e-8 * std::max(1.0, rhs.norm())) return;
            x = c + Aw.transpose() * mult;
            for (int a = 0; a < k; ++a)
                if (mult[a] < -tie) return;  // dual-infeasible subset
        }
        Vector margins = P.A * x;
        if (n > 0 && margins.minCoeff() < 1.0 - tie) return;  // primal-infeasible
        double o = (x - c).squaredNorm();
        if (obj == OracleObjective::min_norm) o = x.squaredNorm();
        if (found && o >= best_obj - 1e-14 * (1 + std::abs(best_obj))) return;
        found = true;
        best_obj = o;
        best = QPSolution();
        best.w = x;
        best.alpha = Vector::Zero(n);
        for (int a = 0; a < k; ++a) best.alpha[sel[a]] = std::max(0.0, mult[a]);
        for (int i = 0; i < n; ++i)
            if (std::abs(margins[i] - 1.0) <= tie) best.active_set.push_back(i);
        Vector stat = (x - c) - P.A.transpose() * best.alpha;
        best.residuals.stationarity = stat.norm();
        best.residuals.feasibility =
            n > 0 ? std::max(0.0, (Vector::Ones(n) - margins).maxCoeff()) : 0.0;
    };

    // enumerate subsets of size 0..subset_max
    std::function<void(int, int)> rec = [&](int from, int need) {
        if (need == 0) {
            consider(idx);
            return;
        }
        for (int i = from; i <= n - need; ++i) {
            idx.push_back(i);
            rec(i + 1, need - 1);
            idx.pop_back();
        }
    };
    for (int k = 0; k <= subset_max; ++k) rec(0, k);

    if (!found)
        throw InfeasibleError("active_set_oracle: no feasible candidate (contradictory halfspaces)");
    return best;
}

} // namespace seqmargin
