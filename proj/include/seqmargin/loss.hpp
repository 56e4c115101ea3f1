#pragma once

#include "seqmargin/dataset.hpp"

#include <cmath>

namespace seqmargin {

enum class LossKind { logistic, exponential };

// Scalar loss with its analytic derivatives and the constants used by the
// learning-rate guards: smoothness beta, linear lower-bound constant G with
// l(u) >= G*[u]^-, and the exponential-tail parameters (mu+, mu-, u_bar).
struct LossSpec {
    LossKind kind = LossKind::logistic;

    // beta-smoothness of the scalar loss. The exponential loss has no global
    // smoothness constant; it is provided for SMM-side experimentation only
    // and its guard-related constants must not be used.
    double beta() const {
        if (kind == LossKind::logistic) return 0.25;
        throw Error("LossSpec: exponential loss has no global smoothness constant");
    }
    double G() const {
        if (kind == LossKind::logistic) return 1.0;
        throw Error("LossSpec: G defined for logistic loss only");
    }
    // Tight-tail parameters for logistic: mu+ = mu- = 1, u_bar = 0
    // (grid-verified by the sandwich property test).
    double mu_plus() const { return 1.0; }
    double mu_minus() const { return 1.0; }
    double u_bar() const { return 0.0; }
};

inline LossSpec logistic_loss() { return {LossKind::logistic}; }
inline LossSpec exponential_loss() { return {LossKind::exponential}; }

// l(u); the logistic branch is evaluated as -u + ln(1+e^u) for u << 0 so the
// value stays exact instead of overflowing.
inline double loss_value(const LossSpec& spec, double u) {
    if (spec.kind == LossKind::exponential) return std::exp(-u);
    if (u > 0) return std::log1p(std::exp(-u));
    return -u + std::log1p(std::exp(u));
}

// l'(u); in (-1, 0) for logistic.
inline double loss_derivative(const LossSpec& spec, double u) {
    if (spec.kind == LossKind::exponential) return -std::exp(-u);
    if (u > 0) {
        double e = std::exp(-u);
        return -e / (1.0 + e);
    }
    return -1.0 / (1.0 + std::exp(u));
}

inline double loss_second_derivative(const LossSpec& spec, double u) {
    if (spec.kind == LossKind::exponential) return std::exp(-u);
    double s = u > 0 ? std::exp(-u) / (1.0 + std::exp(-u)) : 1.0 / (1.0 + std::exp(u));
    return s * (1.0 - s);
}

inline void check_dim(const JointDataset& ds, const Vector& w, const char* who) {
    if (w.size() != ds.dim()) throw Error(std::string(who) + ": dimension mismatch");
}

inline double joint_loss(const LossSpec& spec, const JointDataset& ds, const Vector& w) {
    require_absorbed(ds, "joint_loss");
    check_dim(ds, w, "joint_loss");
    double s = 0;
    const Vector u = ds.X * w;
    for (int i = 0; i < u.size(); ++i) s += loss_value(spec, u[i]);
    return s;
}

inline double task_loss(const LossSpec& spec, const JointDataset& ds, int m, const Vector& w) {
    require_absorbed(ds, "task_loss");
    check_dim(ds, w, "task_loss");
    double s = 0;
    for (int i : ds.partition.index_sets.at(m))
        s += loss_value(spec, ds.X.row(i).dot(w));
    return s;
}

inline Vector task_gradient(const LossSpec& spec, const JointDataset& ds, int m, const Vector& w) {
    require_absorbed(ds, "task_gradient");
    check_dim(ds, w, "task_gradient");
    Vector g = Vector::Zero(ds.dim());
    for (int i : ds.partition.index_sets.at(m))
        g += loss_derivative(spec, ds.X.row(i).dot(w)) * ds.X.row(i).transpose();
    return g;
}

inline Vector joint_gradient(const LossSpec& spec, const JointDataset& ds, const Vector& w) {
    require_absorbed(ds, "joint_gradient");
    check_dim(ds, w, "joint_gradient");
    const Vector u = ds.X * w;
    Vector lp(u.size());
    for (int i = 0; i < u.size(); ++i) lp[i] = loss_derivative(spec, u[i]);
    return ds.X.transpose() * lp;
}

inline Matrix joint_hessian(const LossSpec& spec, const JointDataset& ds, const Vector& w) {
    require_absorbed(ds, "joint_hessian");
    check_dim(ds, w, "joint_hessian");
    Matrix H = Matrix::Zero(ds.dim(), ds.dim());
    for (int i = 0; i < ds.size(); ++i) {
        double c = loss_second_derivative(spec, ds.X.row(i).dot(w));
        H.noalias() += c * ds.X.row(i).transpose() * ds.X.row(i);
    }
    return H;
}

// sigma_max = top singular value of X, beta_m = beta * lambda_max(X_m X_m^T),
// B = sum_m beta_m.
struct SmoothnessConstants {
    double sigma_max = 0;
    std::vector<double> beta_m;
    double B = 0;
};

inline SmoothnessConstants smoothness_constants(const LossSpec& spec, const JointDataset& ds) {
    require_absorbed(ds, "smoothness_constants");
    SmoothnessConstants out;
    Eigen::JacobiSVD<Matrix> svd(ds.X);
    out.sigma_max = svd.singularValues()(0);
    const double beta = spec.beta();
    for (int m = 0; m < ds.num_tasks(); ++m) {
        Matrix Xm = ds.task_matrix(m);
        Eigen::SelfAdjointEigenSolver<Matrix> es(Xm.transpose() * Xm);
        out.beta_m.push_back(beta * es.eigenvalues().maxCoeff());
        out.B += out.beta_m.back();
    }
    return out;
}

} // namespace seqmargin
