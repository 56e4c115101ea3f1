#pragma once

#include "seqmargin/dataset.hpp"
#include "seqmargin/rng.hpp"

#include <cmath>
#include <functional>
#include <optional>

namespace seqmargin {

namespace detail {
inline JointDataset from_rows(const std::vector<std::vector<double>>& rows,
                              const std::vector<std::vector<int>>& tasks) {
    JointDataset ds;
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows.front().size());
    ds.X.resize(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) ds.X(i, j) = rows[i][j];
    ds.labels.assign(n, +1);
    ds.partition.index_sets = tasks;
    ds.absorbed = true; // all labels +1 already
    ds.validate();
    return ds;
}
} // namespace detail

// Two tasks in R^3 whose joint max-margin direction (1,0,0) lies outside the
// span of the individual task max-margin directions.
inline JointDataset make_fig1_toy() {
    return detail::from_rows(
        {{1, 1, 0}, {1, -2, 1}, {1, 0, 1}, {1, 1, -2}},
        {{0, 1}, {2, 3}});
}

enum class Fig3Split { contradicting, aligned };

// Six points, all labels +1, partitioned two ways over the same joint set.
// "contradicting" puts the upper half in task 1 and the lower half in task 2;
// "aligned" mixes upper and lower points within each task so that positive
// cross-task inner products dominate.
inline JointDataset make_fig3_dataset(Fig3Split split) {
    const std::vector<std::vector<double>> rows = {
        {1.0, 2.0}, {1.1, 1.8}, {1.2, 1.9}, {1.0, -2.0}, {1.1, -1.8}, {1.2, -1.9}};
    if (split == Fig3Split::contradicting)
        return detail::from_rows(rows, {{0, 1, 2}, {3, 4, 5}});
    return detail::from_rows(rows, {{0, 4, 2}, {1, 3, 5}});
}

// Five singleton tasks; task 1 opposes the shared direction of the others,
// which makes the joint loss rise while task 1 is being trained.
inline JointDataset make_c3_toy() {
    return detail::from_rows(
        {{1.0, -2.0}, {1.0, 2.0}, {1.1, 2.1}, {1.1, 2.2}, {1.1, 2.3}},
        {{0}, {1}, {2}, {3}, {4}});
}

// ---------------------------------------------------------------------------
// 2-D task generator: per task and label, a uniform region (disk or axis-
// aligned rectangle), plus pinned points inserted post-sampling.
// ---------------------------------------------------------------------------

struct Region2D {
    enum Kind { disk, rectangle } kind = disk;
    double cx = 0, cy = 0, radius = 1;      // disk
    double x0 = 0, y0 = 0, x1 = 1, y1 = 1;  // rectangle

    static Region2D make_disk(double cx, double cy, double r) {
        if (!(r > 0)) throw Error("Region2D: disk radius must be > 0");
        Region2D g;
        g.kind = disk; g.cx = cx; g.cy = cy; g.radius = r;
        return g;
    }
    static Region2D make_rect(double x0, double y0, double x1, double y1) {
        if (!(x1 > x0) || !(y1 > y0)) throw Error("Region2D: rectangle must have positive area");
        Region2D g;
        g.kind = rectangle; g.x0 = x0; g.y0 = y0; g.x1 = x1; g.y1 = y1;
        return g;
    }

    bool contains(double x, double y) const {
        if (kind == disk) {
            double dx = x - cx, dy = y - cy;
            return dx * dx + dy * dy <= radius * radius * (1 + 1e-12);
        }
        return x >= x0 - 1e-12 && x <= x1 + 1e-12 && y >= y0 - 1e-12 && y <= y1 + 1e-12;
    }

    // Rejection sampling for disks keeps the distribution exactly uniform.
    std::pair<double, double> sample(SplitMix64& g) const {
        if (kind == rectangle)
            return {g.next_uniform(x0, x1), g.next_uniform(y0, y1)};
        for (;;) {
            double dx = g.next_uniform(-radius, radius);
            double dy = g.next_uniform(-radius, radius);
            if (dx * dx + dy * dy <= radius * radius) return {cx + dx, cy + dy};
        }
    }
};

struct PinnedPoint2D {
    int task = 0;
    double x = 0, y = 0;
    int label = +1;
};

struct TaskRegions2D {
    Region2D positive;  // support of x | y = +1
    Region2D negative;  // support of x | y = -1
};

struct Generator2D {
    std::vector<TaskRegions2D> tasks;
    std::vector<PinnedPoint2D> pinned;  // each replaces one sampled point of its task
    int samples_per_task = 100;
    uint64_t seed = 0;

    void validate() const {
        if (tasks.empty()) throw Error("Generator2D: no tasks");
        if (samples_per_task < 1) throw Error("Generator2D: samples_per_task must be >= 1");
        for (const auto& p : pinned) {
            if (p.task < 0 || p.task >= static_cast<int>(tasks.size()))
                throw Error("Generator2D: pinned point task out of range");
            const Region2D& r = p.label == +1 ? tasks[p.task].positive : tasks[p.task].negative;
            if (!r.contains(p.x, p.y))
                throw Error("Generator2D: pinned point outside its declared support");
        }
    }
};

// The fixed dataset of the paper's 2-D experiments: three tasks, labels
// uniform, and one pinned point per task so that the three pinned points are
// the joint support vectors, giving max-margin direction (1,1)/sqrt(2) with
// maximum margin 0.6*sqrt(2).
inline Generator2D make_paper_2d_generator(uint64_t seed, int samples_per_task = 100) {
    Generator2D gen;
    gen.tasks = {
        {Region2D::make_disk(0.6, 4.5, 0.9), Region2D::make_rect(0.0, -3.9, 1.5, -2.7)},
        {Region2D::make_disk(5.1, 0.0, 0.75), Region2D::make_rect(-4.2, -0.9, -2.1, 0.9)},
        {Region2D::make_rect(0.6, 0.6, 3.0, 2.7), Region2D::make_disk(-3.0, -2.4, 1.2)},
    };
    gen.pinned = {
        {0, 1.5, -2.7, -1},
        {1, -2.1, 0.9, -1},
        {2, 0.6, 0.6, +1},
    };
    gen.samples_per_task = samples_per_task;
    gen.seed = seed;
    return gen;
}

// One draw. `draw` distinguishes stages in resample mode; the result is a
// pure function of (gen.seed, draw).
inline JointDataset sample_2d_tasks_once(const Generator2D& gen, uint64_t draw = 0) {
    gen.validate();
    SplitMix64 g(hash_counter(gen.seed, draw));
    const int M = static_cast<int>(gen.tasks.size());
    const int n = gen.samples_per_task;
    JointDataset ds;
    ds.X.resize(M * n, 2);
    ds.labels.assign(M * n, +1);
    ds.partition.index_sets.assign(M, {});
    for (int m = 0; m < M; ++m) {
        for (int i = 0; i < n; ++i) {
            const int row = m * n + i;
            int y = g.next_below(2) ? +1 : -1;
            const Region2D& r = y == +1 ? gen.tasks[m].positive : gen.tasks[m].negative;
            auto [px, py] = r.sample(g);
            ds.X(row, 0) = px;
            ds.X(row, 1) = py;
            ds.labels[row] = y;
            ds.partition.index_sets[m].push_back(row);
        }
    }
    std::vector<bool> taken(M * n, false);
    for (const auto& p : gen.pinned) {
        int off = static_cast<int>(g.next_below(n));
        while (taken[p.task * n + off]) off = (off + 1) % n;
        const int slot = p.task * n + off;
        taken[slot] = true;
        ds.X(slot, 0) = p.x;
        ds.X(slot, 1) = p.y;
        ds.labels[slot] = p.label;
    }
    ds.absorbed = false;
    ds.validate();
    return absorb_labels(ds);
}

// Dataset provider: fixed mode replays one sample, resample mode yields a
// fresh draw per stage (online setting).
struct DatasetProvider {
    std::function<JointDataset(uint64_t stage)> next;
    bool resample = false;
};

inline DatasetProvider sample_2d_tasks(const Generator2D& gen, bool resample) {
    gen.validate();
    DatasetProvider p;
    p.resample = resample;
    if (resample) {
        p.next = [gen](uint64_t stage) { return sample_2d_tasks_once(gen, stage); };
    } else {
        auto fixed = std::make_shared<JointDataset>(sample_2d_tasks_once(gen, 0));
        p.next = [fixed](uint64_t) { return *fixed; };
    }
    return p;
}

// ---------------------------------------------------------------------------
// Strictly non-separable 2-D instances (Assumption: full rank, b > 0).
//
// Each task is a cluster pair: a +1 cluster on a disk around the task center
// and a -1 cluster on the same disk shifted by 2r(1-overlap). The two
// clusters of a pair share offsets (antithetic sampling), so at overlap = 1
// every task is point-symmetric after absorption: each task's gradient
// vanishes at the joint minimizer w* = 0, which keeps the sequential-GD
// limit cycle collapsed onto w* itself.
// ---------------------------------------------------------------------------

struct NonSepConfig {
    double overlap = 1.0;
    int pairs_per_task = 10;  // each pair contributes two points
    int num_tasks = 2;
    double cluster_radius = 0.6;
    uint64_t seed = 0;
    double min_b = 1e-3;   // reject-and-retry threshold
    int max_retries = 32;
};

namespace detail {
// min over unit directions of sum_i [x_i^T v]^- for d = 2, dense angular scan
inline double nonsep_b_scan2d(const Matrix& X, int n_angles);
} // namespace detail

inline JointDataset make_nonseparable(const NonSepConfig& cfg) {
    if (!(cfg.overlap > 0) || cfg.overlap > 1)
        throw Error("make_nonseparable: overlap must be in (0, 1]");
    if (cfg.num_tasks < 1 || cfg.pairs_per_task < 1)
        throw Error("make_nonseparable: bad counts");
    const double r = cfg.cluster_radius;
    const double shift = 2.0 * r * (1.0 - cfg.overlap);

    for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
        SplitMix64 g(hash_counter(cfg.seed, attempt));
        const int M = cfg.num_tasks;
        const int n = 2 * cfg.pairs_per_task;
        JointDataset ds;
        ds.X.resize(M * n, 2);
        ds.labels.assign(M * n, +1);
        ds.partition.index_sets.assign(M, {});
        for (int m = 0; m < M; ++m) {
            double ang = 2.0 * M_PI * (m + 0.37) / M;
            double cx = 1.1 * std::cos(ang), cy = 1.1 * std::sin(ang);
            for (int i = 0; i < cfg.pairs_per_task; ++i) {
                double dx, dy;
                do {
                    dx = g.next_uniform(-r, r);
                    dy = g.next_uniform(-r, r);
                } while (dx * dx + dy * dy > r * r);
                int rp = m * n + 2 * i, rm = rp + 1;
                ds.X(rp, 0) = cx + dx;
                ds.X(rp, 1) = cy + dy;
                ds.labels[rp] = +1;
                ds.X(rm, 0) = cx + shift + dx;
                ds.X(rm, 1) = cy + dy;
                ds.labels[rm] = -1;
                ds.partition.index_sets[m].push_back(rp);
                ds.partition.index_sets[m].push_back(rm);
            }
        }
        ds.validate();
        JointDataset abs = absorb_labels(ds);
        Eigen::JacobiSVD<Matrix> svd(abs.X);
        if (svd.singularValues().minCoeff() < 1e-9) continue;  // rank-deficient draw
        if (detail::nonsep_b_scan2d(abs.X, 4096) <= cfg.min_b) continue;
        return abs;
    }
    throw Error("make_nonseparable: retry limit reached without b > " +
                format_double(cfg.min_b));
}

namespace detail {
inline double nonsep_b_scan2d(const Matrix& X, int n_angles) {
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < n_angles; ++a) {
        double th = 2.0 * M_PI * a / n_angles;
        Eigen::Vector2d v(std::cos(th), std::sin(th));
        double s = 0;
        for (int i = 0; i < X.rows(); ++i) s += std::max(0.0, -X.row(i).dot(v));
        best = std::min(best, s);
    }
    return best;
}
} // namespace detail

} // namespace seqmargin
