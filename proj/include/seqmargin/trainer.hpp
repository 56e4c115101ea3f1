#pragma once

#include "seqmargin/generators.hpp"
#include "seqmargin/geometry.hpp"
#include "seqmargin/loss.hpp"
#include "seqmargin/qp.hpp"
#include "seqmargin/rng.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <string>

namespace seqmargin {

enum class Ordering { cyclic, random_uniform };

struct OrderingSchedule {
    Ordering kind = Ordering::cyclic;
    int M = 1;
    uint64_t seed = 0;

    // The task at stage t is a pure function of (seed, t), so it does not
    // depend on snapshot policy or on how much state earlier stages consumed.
    int task_at(int64_t t) const {
        if (kind == Ordering::cyclic) return static_cast<int>(t % M);
        return static_cast<int>(hash_counter(seed, static_cast<uint64_t>(t)) % M);
    }
};

inline OrderingSchedule cyclic_schedule(int M) { return {Ordering::cyclic, M, 0}; }
inline OrderingSchedule random_schedule(int M, uint64_t seed) {
    return {Ordering::random_uniform, M, seed};
}

enum class Algorithm { seqgd, jointgd, smm };

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::seqgd: return "seqgd";
        case Algorithm::jointgd: return "jointgd";
        case Algorithm::smm: return "smm";
    }
    return "?";
}

struct TrainConfig {
    Algorithm algorithm = Algorithm::seqgd;
    int K = 1;             // GD steps per stage
    double eta = 0;        // resolved step size
    int64_t stages = -1;   // total stage count T (random ordering)
    int64_t cycles = -1;   // cycle count J (cyclic ordering); stages = M*J
    Vector w0;             // empty means zero vector
    bool record_step_joint_loss = false;
    int64_t snapshot_cap = 10000;

    int64_t resolve_stages(int M, Ordering kind) const {
        if ((stages >= 0) == (cycles >= 0))
            throw Error("TrainConfig: exactly one of stages/cycles must be set");
        if (cycles >= 0) {
            if (kind != Ordering::cyclic) throw Error("TrainConfig: cycles requires cyclic ordering");
            return cycles * M;
        }
        return stages;
    }
};

// Full trajectory metadata. Per-task end-of-stage losses are always kept
// (forgetting needs them at every stage); weights follow the snapshot policy.
struct TrainRun {
    Algorithm algorithm = Algorithm::seqgd;
    int M = 1, K = 1;
    double eta = 0;
    uint64_t seed = 0;
    bool cyclic = true;
    bool resample = false;
    int64_t stages = 0;

    Vector final_w;
    std::map<int64_t, Vector> stage_weights;         // stage -> w_K^{(stage)}
    std::vector<int> task_sequence;                  // m_t per stage
    std::vector<double> joint_loss_end_of_stage;     // L(w_K^{(t)})
    Matrix task_loss_end_of_stage;                   // stages x M, L_m(w_K^{(t)})
    std::vector<double> sq_change_per_stage;         // sum_k ||w_{k+1}-w_k||^2
    std::vector<std::vector<double>> step_joint_losses;  // optional per-step traces

    bool aborted = false;
    std::string abort_reason;

    const Vector& weight_at(int64_t stage) const {
        auto it = stage_weights.find(stage);
        if (it == stage_weights.end())
            throw Error("TrainRun: no snapshot at stage " + std::to_string(stage));
        return it->second;
    }
    bool has_weight(int64_t stage) const { return stage_weights.count(stage) != 0; }

    // end-of-cycle weight w_0^{(M(j+1))} = w_K^{(M(j+1)-1)}
    const Vector& end_of_cycle_weight(int64_t j) const {
        return weight_at(M * (j + 1) - 1);
    }
    int64_t num_cycles() const { return cyclic ? stages / M : 0; }
};

// ---------------------------------------------------------------------------
// Learning-rate guards, exactly as the statements give them.
// ---------------------------------------------------------------------------

enum class GuardTheorem { T31, T33, T41, T52 };

inline double guard_eta_T31(double phi, double sigma_max, double beta, int M, int K) {
    return phi * phi / (2.0 * K * beta * std::pow(sigma_max, 3) * (M * phi + sigma_max));
}

inline double guard_eta_T33(double phi, double sigma_max, double beta, int M, int K) {
    return phi * phi / (4.0 * K * beta * std::pow(sigma_max, 3) * (M * phi + sigma_max));
}

inline double guard_eta_T41(double phi, double sigma_max, double beta) {
    return 2.0 * phi * phi / (beta * std::pow(sigma_max, 4));
}

// eta = min{ 1/(2 sqrt2 K B),
//            (1+2 sqrt2)/(2 sqrt2 K J) * ln(J^2 max{1, ||w0-w*||^2 mu^3/(B^2 V*)}) }
inline double guard_eta_T52(const NonSepCertificate& cert, int K, int64_t J, const Vector& w0) {
    const double s2 = std::sqrt(2.0);
    double branch1 = 1.0 / (2.0 * s2 * K * cert.B);
    double dist_sq = (w0.size() ? (w0 - cert.w_star).squaredNorm() : cert.w_star.squaredNorm());
    double ratio = cert.V_star > 0
                       ? dist_sq * std::pow(cert.mu, 3) / (cert.B * cert.B * cert.V_star)
                       : std::numeric_limits<double>::infinity();
    double ln_arg = static_cast<double>(J) * J * std::max(1.0, ratio);
    if (!std::isfinite(ln_arg)) return branch1;
    double branch2 = (1.0 + 2.0 * s2) / (2.0 * s2 * K * J) * std::log(ln_arg);
    return std::min(branch1, branch2);
}

// Dispatcher used by the harness; cert/ncert must match the theorem family.
inline double guard_eta(GuardTheorem thm, const LossSpec& spec, int M, int K, int64_t J,
                        const MarginCertificate* cert, const NonSepCertificate* ncert,
                        const Vector& w0 = Vector()) {
    switch (thm) {
        case GuardTheorem::T31:
            if (!cert) throw Error("guard_eta: T3.1 needs a margin certificate");
            return guard_eta_T31(cert->phi, cert->sigma_max, spec.beta(), M, K);
        case GuardTheorem::T33:
            if (!cert) throw Error("guard_eta: T3.3 needs a margin certificate");
            return guard_eta_T33(cert->phi, cert->sigma_max, spec.beta(), M, K);
        case GuardTheorem::T41:
            if (!cert) throw Error("guard_eta: T4.1 needs a margin certificate");
            return guard_eta_T41(cert->phi, cert->sigma_max, spec.beta());
        case GuardTheorem::T52:
            if (!ncert) throw Error("guard_eta: T5.2 needs a non-separable certificate");
            return guard_eta_T52(*ncert, K, J, w0);
    }
    throw Error("guard_eta: unknown theorem");
}

// ---------------------------------------------------------------------------
// Iteration engines
// ---------------------------------------------------------------------------

namespace traindetail {

inline bool want_snapshot(int64_t t, int64_t total, int M, bool cyclic, int64_t cap) {
    if (total <= cap) return true;
    if (t == total - 1) return true;
    if (cyclic && (t + 1) % M == 0) return true;  // end-of-cycle always kept
    // geometric thinning
    int64_t p = 1;
    while (p < t + 1) p *= 2;
    return p == t + 1;
}

inline Vector resolve_w0(const TrainConfig& cfg, int d) {
    if (cfg.w0.size() == 0) return Vector::Zero(d);
    if (cfg.w0.size() != d) throw Error("TrainConfig: w0 dimension mismatch");
    return cfg.w0;
}

} // namespace traindetail

// Sequential GD, Eq.-style: K steps on the stage's task, carrying the weight.
// The provider form supports the online resampling mode; the dataset form
// wraps a fixed dataset.
inline TrainRun run_sequential_gd(const LossSpec& spec, const DatasetProvider& provider,
                                  const TrainConfig& cfg, const OrderingSchedule& schedule) {
    if (!(cfg.eta > 0)) throw Error("run_sequential_gd: eta must be resolved and > 0");
    if (cfg.K < 1) throw Error("run_sequential_gd: K must be >= 1");
    const int M = schedule.M;
    const int64_t total = cfg.resolve_stages(M, schedule.kind);

    TrainRun run;
    run.algorithm = cfg.algorithm;
    run.M = M;
    run.K = cfg.K;
    run.eta = cfg.eta;
    run.seed = schedule.seed;
    run.cyclic = schedule.kind == Ordering::cyclic;
    run.resample = provider.resample;
    run.stages = total;
    run.task_loss_end_of_stage.resize(total, M);
    run.sq_change_per_stage.assign(total, 0.0);

    JointDataset ds = provider.next(0);
    Vector w = traindetail::resolve_w0(cfg, ds.dim());
    std::vector<Matrix> task_mats;
    auto refresh_tasks = [&](const JointDataset& d) {
        task_mats.clear();
        for (int m = 0; m < d.num_tasks(); ++m) task_mats.push_back(d.task_matrix(m));
    };
    refresh_tasks(ds);

    for (int64_t t = 0; t < total; ++t) {
        if (provider.resample && t > 0) {
            ds = provider.next(static_cast<uint64_t>(t));
            refresh_tasks(ds);
        }
        const int m = schedule.task_at(t);
        run.task_sequence.push_back(m);
        const Matrix& Xm = task_mats.at(m);

        std::vector<double> step_losses;
        if (cfg.record_step_joint_loss) step_losses.push_back(joint_loss(spec, ds, w));
        double sq = 0;
        for (int k = 0; k < cfg.K; ++k) {
            Vector u = Xm * w;
            Vector lp(u.size());
            for (int i = 0; i < u.size(); ++i) lp[i] = loss_derivative(spec, u[i]);
            Vector g = Xm.transpose() * lp;
            Vector dw = -cfg.eta * g;
            w += dw;
            sq += dw.squaredNorm();
            if (cfg.record_step_joint_loss) step_losses.push_back(joint_loss(spec, ds, w));
            if (!w.allFinite() || w.norm() > 1e12) {
                w -= dw;  // keep the last finite state
                run.aborted = true;
                run.abort_reason = "iterate overflow at stage " + std::to_string(t) +
                                   " step " + std::to_string(k);
                break;
            }
        }
        run.sq_change_per_stage[t] = sq;
        if (cfg.record_step_joint_loss) run.step_joint_losses.push_back(std::move(step_losses));

        run.joint_loss_end_of_stage.push_back(joint_loss(spec, ds, w));
        for (int mm = 0; mm < M; ++mm)
            run.task_loss_end_of_stage(t, mm) = task_loss(spec, ds, mm, w);
        if (traindetail::want_snapshot(t, total, M, run.cyclic, cfg.snapshot_cap))
            run.stage_weights.emplace(t, w);
        if (run.aborted) {
            run.stages = t + 1;
            run.task_loss_end_of_stage.conservativeResize(t + 1, M);
            break;
        }
    }
    run.final_w = w;
    return run;
}

inline TrainRun run_sequential_gd(const LossSpec& spec, const JointDataset& ds,
                                  const TrainConfig& cfg, const OrderingSchedule& schedule) {
    require_absorbed(ds, "run_sequential_gd");
    if (schedule.M != ds.num_tasks())
        throw Error("run_sequential_gd: schedule M does not match dataset");
    DatasetProvider p;
    p.resample = false;
    auto fixed = std::make_shared<JointDataset>(ds);
    p.next = [fixed](uint64_t) { return *fixed; };
    return run_sequential_gd(spec, p, cfg, schedule);
}

// Full-batch GD baseline: identical machinery with a single all-points task,
// so a one-task sequential run and a joint run agree bit for bit.
inline TrainRun run_joint_gd(const LossSpec& spec, const JointDataset& ds, TrainConfig cfg) {
    require_absorbed(ds, "run_joint_gd");
    JointDataset merged = ds;
    merged.partition.index_sets.assign(1, std::vector<int>(ds.size()));
    std::iota(merged.partition.index_sets[0].begin(), merged.partition.index_sets[0].end(), 0);
    cfg.algorithm = Algorithm::jointgd;
    TrainRun run = run_sequential_gd(spec, merged, cfg, cyclic_schedule(1));
    run.algorithm = Algorithm::jointgd;
    return run;
}

// Sequential max-margin: one Euclidean projection onto the stage task's
// margin polyhedron per stage.
inline TrainRun run_smm(const JointDataset& ds, const TrainConfig& cfg,
                        const OrderingSchedule& schedule) {
    require_absorbed(ds, "run_smm");
    if (schedule.M != ds.num_tasks())
        throw Error("run_smm: schedule M does not match dataset");
    const int M = schedule.M;
    const int64_t total = cfg.resolve_stages(M, schedule.kind);

    std::vector<Polyhedron> polys;
    for (int m = 0; m < M; ++m) {
        polys.push_back(Polyhedron{ds.task_matrix(m)});
        qpdetail::feasible_point(polys.back());  // task-wise separability required
    }

    TrainRun run;
    run.algorithm = Algorithm::smm;
    run.M = M;
    run.K = 1;
    run.eta = 0;
    run.seed = schedule.seed;
    run.cyclic = schedule.kind == Ordering::cyclic;
    run.stages = total;
    run.task_loss_end_of_stage.resize(total, M);
    run.sq_change_per_stage.assign(total, 0.0);

    LossSpec spec = logistic_loss();  // recorded losses use the logistic scale
    Vector w = traindetail::resolve_w0(cfg, ds.dim());
    for (int64_t t = 0; t < total; ++t) {
        const int m = schedule.task_at(t);
        run.task_sequence.push_back(m);
        Vector next = project_onto_polyhedron(polys[m], w).w;
        run.sq_change_per_stage[t] = (next - w).squaredNorm();
        w = next;
        run.joint_loss_end_of_stage.push_back(joint_loss(spec, ds, w));
        for (int mm = 0; mm < M; ++mm)
            run.task_loss_end_of_stage(t, mm) = task_loss(spec, ds, mm, w);
        if (traindetail::want_snapshot(t, total, M, run.cyclic, cfg.snapshot_cap))
            run.stage_weights.emplace(t, w);
    }
    run.final_w = w;
    return run;
}

} // namespace seqmargin
