#pragma once

#include "seqmargin/loss.hpp"
#include "seqmargin/qp.hpp"
#include "seqmargin/rng.hpp"

#include <cmath>
#include <numeric>
#include <optional>

namespace seqmargin {

// Everything the theorems read off a separable dataset: the max-margin
// weight and margin, support structure, dual coefficients, and the
// assumption flags.
struct MarginCertificate {
    Vector w_hat;
    double phi = 0;               // maximum margin = 1/||w_hat||
    double theta = 0;             // second margin, > 1 when defined
    bool theta_defined = false;   // false when every point is a support vector
    std::vector<int> support;     // S
    std::vector<std::vector<int>> task_support;  // S_m = S intersect I_m
    Vector alpha;                 // dual coefficients, zero off S
    double sigma_max = 0;
    bool non_degenerate = false;  // unique alpha > 0 on S
    bool sv_span_full = false;    // support vectors span the dataset
    KKTResiduals residuals;
};

struct SeparabilityResult {
    bool separable = false;
    Vector witness;       // some w with margins >= 1 (when separable)
    std::string detail;
};

inline Polyhedron margin_polyhedron(const JointDataset& ds) {
    require_absorbed(ds, "margin_polyhedron");
    return Polyhedron{ds.X};
}

inline SeparabilityResult separability_check(const JointDataset& ds) {
    require_absorbed(ds, "separability_check");
    SeparabilityResult r;
    try {
        QPSolution sol = min_norm_in_polyhedron(margin_polyhedron(ds));
        r.separable = true;
        r.witness = sol.w;
    } catch (const InfeasibleError& e) {
        r.separable = false;
        r.detail = e.what();
    }
    return r;
}

namespace geodetail {

constexpr double kSupportTol = 1e-8;

inline int rank_of(const Matrix& M, double rel_tol = 1e-8) {
    if (M.rows() == 0 || M.cols() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(M);
    double top = svd.singularValues()(0);
    if (top == 0) return 0;
    int r = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > rel_tol * top) ++r;
    return r;
}

inline MarginCertificate certificate_from_solution(const JointDataset& ds, const QPSolution& sol) {
    MarginCertificate cert;
    cert.w_hat = sol.w;
    cert.phi = 1.0 / sol.w.norm();
    cert.residuals = sol.residuals;

    Vector margins = ds.X * sol.w;
    for (int i = 0; i < ds.size(); ++i)
        if (std::abs(margins[i] - 1.0) <= kSupportTol) cert.support.push_back(i);
    cert.task_support.assign(ds.num_tasks(), {});
    std::vector<int> task_of(ds.size(), 0);
    for (int m = 0; m < ds.num_tasks(); ++m)
        for (int i : ds.partition.index_sets[m]) task_of[i] = m;
    for (int i : cert.support) cert.task_support[task_of[i]].push_back(i);

    double theta = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ds.size(); ++i)
        if (std::abs(margins[i] - 1.0) > kSupportTol) theta = std::min(theta, margins[i]);
    cert.theta_defined = std::isfinite(theta);
    cert.theta = cert.theta_defined ? theta : std::numeric_limits<double>::quiet_NaN();

    const int k = static_cast<int>(cert.support.size());
    Matrix Xs(k, ds.dim());
    for (int a = 0; a < k; ++a) Xs.row(a) = ds.X.row(cert.support[a]);
    int rank_s = rank_of(Xs);
    // Unique positive duals require independent support rows; otherwise take
    // the minimum-norm dual (the spec's Fig.-1 toy needs the symmetric one).
    cert.alpha = Vector::Zero(ds.size());
    if (k > 0) {
        Vector as;
        if (rank_s == k) {
            as = Xs.transpose().colPivHouseholderQr().solve(sol.w);
        } else {
            as = Xs.transpose().completeOrthogonalDecomposition().solve(sol.w);
        }
        for (int a = 0; a < k; ++a) cert.alpha[cert.support[a]] = as[a];
        cert.non_degenerate = (rank_s == k) && (as.minCoeff() > 1e-10);
    }
    cert.sv_span_full = rank_s == rank_of(ds.X);

    Eigen::JacobiSVD<Matrix> svd(ds.X);
    cert.sigma_max = svd.singularValues()(0);
    return cert;
}

} // namespace geodetail

inline MarginCertificate max_margin_certificate(const JointDataset& ds, double tol = 1e-10) {
    require_absorbed(ds, "max_margin_certificate");
    QPSolution sol;
    try {
        sol = min_norm_in_polyhedron(margin_polyhedron(ds), tol);
    } catch (const InfeasibleError&) {
        throw Error("max_margin_certificate: dataset is not separable");
    }
    return geodetail::certificate_from_solution(ds, sol);
}

// Certificate for a single task's constraint set, indexed in the task's own
// row order.
inline MarginCertificate task_max_margin(const JointDataset& ds, int m, double tol = 1e-10) {
    require_absorbed(ds, "task_max_margin");
    JointDataset sub;
    sub.X = ds.task_matrix(m);
    sub.labels.assign(sub.X.rows(), +1);
    sub.partition.index_sets = {std::vector<int>(sub.X.rows())};
    std::iota(sub.partition.index_sets[0].begin(), sub.partition.index_sets[0].end(), 0);
    sub.absorbed = true;
    try {
        QPSolution sol = min_norm_in_polyhedron(margin_polyhedron(sub), tol);
        return geodetail::certificate_from_solution(sub, sol);
    } catch (const InfeasibleError&) {
        throw Error("task_max_margin: task " + std::to_string(m) + " is not separable");
    }
}

// ---------------------------------------------------------------------------
// Non-separability coefficient b = min over unit v of sum_i [x_i^T v]^-.
// The objective is piecewise linear in the direction, so a dense angular
// grid plus local refinement pins the minimum; the returned value is a
// certified lower bound (refined minimum minus the Lipschitz slack of the
// final resolution).
// ---------------------------------------------------------------------------

struct NonsepBResult {
    double lower_bound = 0;   // certified: true b >= lower_bound
    double value = 0;         // refined grid minimum (upper estimate of b)
    Vector direction;         // minimizing unit direction found
};

namespace geodetail {

inline double b_objective(const Matrix& X, const Vector& v) {
    double s = 0;
    for (int i = 0; i < X.rows(); ++i) s += std::max(0.0, -X.row(i).dot(v));
    return s;
}

} // namespace geodetail

inline NonsepBResult nonseparability_coefficient_b(const JointDataset& ds, int resolution = 4096) {
    require_absorbed(ds, "nonseparability_coefficient_b");
    const int d = ds.dim();
    if (resolution < 8) throw Error("nonseparability_coefficient_b: resolution too small");
    double lipschitz = 0;
    for (int i = 0; i < ds.size(); ++i) lipschitz += ds.X.row(i).norm();

    NonsepBResult out;
    if (d == 1) {
        Vector vp = Vector::Ones(1), vm = -vp;
        double fp = geodetail::b_objective(ds.X, vp), fm = geodetail::b_objective(ds.X, vm);
        out.value = std::min(fp, fm);
        out.lower_bound = out.value;
        out.direction = fp <= fm ? vp : vm;
        return out;
    }
    if (d == 2) {
        auto eval_angle = [&](double th) {
            Vector v(2);
            v << std::cos(th), std::sin(th);
            return geodetail::b_objective(ds.X, v);
        };
        double best_th = 0, best = std::numeric_limits<double>::infinity();
        for (int a = 0; a < resolution; ++a) {
            double th = 2.0 * M_PI * a / resolution;
            double f = eval_angle(th);
            if (f < best) {
                best = f;
                best_th = th;
            }
        }
        // local refinement: shrink the bracket around the best grid angle
        double h = 2.0 * M_PI / resolution;
        for (int pass = 0; pass < 40; ++pass) {
            h *= 0.5;
            double fl = eval_angle(best_th - h), fr = eval_angle(best_th + h);
            if (fl < best) { best = fl; best_th -= h; }
            else if (fr < best) { best = fr; best_th += h; }
        }
        out.value = best;
        out.lower_bound = std::max(0.0, best - lipschitz * h);
        out.direction = Vector(2);
        out.direction << std::cos(best_th), std::sin(best_th);
        return out;
    }
    if (d == 3) {
        // Fibonacci sphere grid, then coordinate refinement in angles.
        auto sph = [](double th, double ph) {
            Vector v(3);
            v << std::sin(ph) * std::cos(th), std::sin(ph) * std::sin(th), std::cos(ph);
            return v;
        };
        double best = std::numeric_limits<double>::infinity(), bth = 0, bph = 0;
        const double ga = M_PI * (3.0 - std::sqrt(5.0));
        for (int a = 0; a < resolution; ++a) {
            double z = 1.0 - 2.0 * (a + 0.5) / resolution;
            double ph = std::acos(z), th = ga * a;
            double f = geodetail::b_objective(ds.X, sph(th, ph));
            if (f < best) { best = f; bth = th; bph = ph; }
        }
        double h = 2.0 * M_PI / std::sqrt(static_cast<double>(resolution));
        for (int pass = 0; pass < 60; ++pass) {
            h *= 0.7;
            for (auto [dth, dph] : {std::pair{h, 0.0}, {-h, 0.0}, {0.0, h}, {0.0, -h}}) {
                double f = geodetail::b_objective(ds.X, sph(bth + dth, bph + dph));
                if (f < best) { best = f; bth += dth; bph += dph; }
            }
        }
        out.value = best;
        out.lower_bound = std::max(0.0, best - lipschitz * h);
        out.direction = sph(bth, bph);
        return out;
    }
    throw Error("nonseparability_coefficient_b: grid method supports d <= 3");
}

// ---------------------------------------------------------------------------
// Certificate for the strictly non-separable analysis: the unique minimizer
// w*, the constants b, B, V*, the compact-set radius, and the local
// strong-convexity coefficient mu on that set.
// ---------------------------------------------------------------------------

struct NonSepCertificate {
    double b = 0;           // certified lower bound on the coefficient
    double B = 0;           // sum of task smoothness constants
    double V_star = 0;      // sum (1/beta_m) ||grad L_m(w*)||^2
    Vector w_star;
    double grad_norm = 0;   // ||grad L(w*)|| at termination
    double mu = 0;          // strong convexity on the ball
    double radius_sq = 0;   // squared radius of the ball around w*
    double lambda_min = 0;  // lambda_min(X X^T)
    double eta = 0, K = 0;  // the step configuration the radius was computed at
    std::vector<double> beta_m;
};

// Damped Newton on the joint loss until ||grad|| < grad_tol. The Hessian is
// positive definite under b > 0 and full rank.
inline Vector newton_minimizer(const LossSpec& spec, const JointDataset& ds,
                               double grad_tol = 1e-12, int max_iter = 200) {
    require_absorbed(ds, "newton_minimizer");
    Vector w = Vector::Zero(ds.dim());
    for (int it = 0; it < max_iter; ++it) {
        Vector g = joint_gradient(spec, ds, w);
        if (g.norm() < grad_tol) return w;
        Matrix H = joint_hessian(spec, ds, w);
        Eigen::LDLT<Matrix> ldlt(H);
        if (ldlt.info() != Eigen::Success)
            throw Error("newton_minimizer: Hessian factorization failed (rank deficiency?)");
        Vector step = ldlt.solve(g);
        double f0 = joint_loss(spec, ds, w);
        double t = 1.0;
        while (t > 1e-12 && joint_loss(spec, ds, w - t * step) > f0 - 0.25 * t * g.dot(step))
            t *= 0.5;
        w -= t * step;
    }
    Vector g = joint_gradient(spec, ds, w);
    if (g.norm() >= grad_tol)
        throw Error("newton_minimizer: no convergence, |grad| = " + format_double(g.norm()));
    return w;
}

// The ball radius follows the bounded-iterates lemma:
//   radius^2 = [ (1/(G b)) (L(w*) + sqrt(2) eta K B V*) + ||w*|| ]^2
//              + 2 sqrt(2) eta^2 K^2 B V*.
// mu is the exact minimum of l'' over the ball times lambda_min(X X^T):
// for the logistic loss l'' is symmetric and decreasing in |u|, so the
// minimum sits at the largest attainable |x_i^T w| = |x_i^T w*| + R ||x_i||.
inline NonSepCertificate nonsep_certificate(const JointDataset& ds, const LossSpec& spec,
                                            double eta, int K) {
    require_absorbed(ds, "nonsep_certificate");
    NonSepCertificate cert;
    cert.eta = eta;
    cert.K = K;

    Eigen::SelfAdjointEigenSolver<Matrix> es(ds.X.transpose() * ds.X);
    cert.lambda_min = es.eigenvalues().minCoeff();
    if (cert.lambda_min < 1e-12)
        throw Error("nonsep_certificate: data matrix is rank deficient");

    NonsepBResult br = nonseparability_coefficient_b(ds);
    cert.b = br.lower_bound;
    if (!(cert.b > 0))
        throw Error("nonsep_certificate: dataset not strictly non-separable (b lower bound 0)");

    SmoothnessConstants sc = smoothness_constants(spec, ds);
    cert.beta_m = sc.beta_m;
    cert.B = sc.B;

    cert.w_star = newton_minimizer(spec, ds);
    cert.grad_norm = joint_gradient(spec, ds, cert.w_star).norm();

    for (int m = 0; m < ds.num_tasks(); ++m)
        cert.V_star += task_gradient(spec, ds, m, cert.w_star).squaredNorm() / sc.beta_m[m];

    const double G = spec.G();
    double l_star = joint_loss(spec, ds, cert.w_star);
    double base = (l_star + std::sqrt(2.0) * eta * K * cert.B * cert.V_star) / (G * cert.b) +
                  cert.w_star.norm();
    cert.radius_sq = base * base + 2.0 * std::sqrt(2.0) * eta * eta * K * K * cert.B * cert.V_star;

    // Exact min of l'' over the ball: l'' is symmetric and decreasing in |u|
    // for logistic, so the minimum sits at the largest attainable |x_i^T w|,
    // which is |x_i^T w*| + R ||x_i|| over the ball of radius R around w*.
    const double R = std::sqrt(cert.radius_sq);
    double worst = 0;
    for (int i = 0; i < ds.size(); ++i) {
        double reach = std::abs(ds.X.row(i).dot(cert.w_star)) + R * ds.X.row(i).norm();
        worst = std::max(worst, reach);
    }
    cert.mu = loss_second_derivative(spec, worst) * cert.lambda_min;
    return cert;
}

// ---------------------------------------------------------------------------
// Residual target w~: the solution of x_i^T w~ = ln(eta / alpha_i) on the
// support span, with the off-span component copied from w0.
// ---------------------------------------------------------------------------

inline Vector residual_target_w_tilde(const JointDataset& ds, const MarginCertificate& cert,
                                      double eta, const Vector& w0) {
    require_absorbed(ds, "residual_target_w_tilde");
    if (!(eta > 0)) throw Error("residual_target_w_tilde: eta must be > 0");
    if (cert.support.empty()) throw Error("residual_target_w_tilde: empty support");
    const int k = static_cast<int>(cert.support.size());
    const int d = ds.dim();
    Matrix Xs(k, d);
    Vector rhs(k);
    for (int a = 0; a < k; ++a) {
        int i = cert.support[a];
        double ai = cert.alpha[i];
        if (!(ai > 0))
            throw Error("residual_target_w_tilde: degenerate dual coefficient on support");
        Xs.row(a) = ds.X.row(i);
        rhs[a] = std::log(eta / ai);
    }
    // least-squares solution constrained to span(X_S): w_s = X_S^T z
    Matrix Gram = Xs * Xs.transpose();
    Vector z = Gram.completeOrthogonalDecomposition().solve(rhs);
    Vector ws = Xs.transpose() * z;
    double resid = (Xs * ws - rhs).norm();
    if (resid > 1e-10 * std::max(1.0, rhs.norm()))
        throw Error("residual_target_w_tilde: inconsistent support system, residual " +
                    format_double(resid));
    // off-span component from w0: subtract the projection onto span(X_S)
    Matrix XsT = Xs.transpose();
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(XsT);
    Vector w0_span = XsT * cod.pseudoInverse() * w0;
    return ws + (w0 - w0_span);
}

} // namespace seqmargin
