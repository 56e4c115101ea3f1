#pragma once

#include <Eigen/Dense>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqmargin {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One labeled point. Label is +1 or -1; after absorption all labels are +1.
struct DataPoint {
    Vector x;
    int y = +1;
};

// Disjoint index sets I_0..I_{M-1} covering [0, N).
struct TaskPartition {
    std::vector<std::vector<int>> index_sets;

    int num_tasks() const { return static_cast<int>(index_sets.size()); }

    int total_count() const {
        int n = 0;
        for (const auto& s : index_sets) n += static_cast<int>(s.size());
        return n;
    }

    void validate(int n_points) const {
        if (index_sets.empty()) throw Error("partition: M must be >= 1");
        std::vector<int> seen(n_points, 0);
        for (const auto& s : index_sets) {
            if (s.empty()) throw Error("partition: empty task");
            for (int i : s) {
                if (i < 0 || i >= n_points) throw Error("partition: index out of range");
                if (seen[i]++) throw Error("partition: index assigned twice");
            }
        }
        for (int i = 0; i < n_points; ++i)
            if (!seen[i]) throw Error("partition: index " + std::to_string(i) + " unassigned");
    }
};

// The joint dataset. Rows of X are the points x_i^T.
struct JointDataset {
    Matrix X;                 // N x d
    std::vector<int> labels;  // +1 / -1, all +1 once absorbed
    TaskPartition partition;
    bool absorbed = false;

    int size() const { return static_cast<int>(X.rows()); }
    int dim() const { return static_cast<int>(X.cols()); }
    int num_tasks() const { return partition.num_tasks(); }

    Matrix task_matrix(int m) const {
        const auto& idx = partition.index_sets.at(m);
        Matrix Xm(idx.size(), dim());
        for (size_t r = 0; r < idx.size(); ++r) Xm.row(r) = X.row(idx[r]);
        return Xm;
    }

    void validate() const {
        if (X.rows() == 0 || X.cols() == 0) throw Error("dataset: empty");
        if (static_cast<int>(labels.size()) != size()) throw Error("dataset: label count mismatch");
        if (!X.allFinite()) throw Error("dataset: non-finite coordinate");
        for (int y : labels)
            if (y != 1 && y != -1) throw Error("dataset: label outside {-1,+1}");
        partition.validate(size());
    }
};

// x_i <- y_i * x_i, y_i <- +1. The loss of any w is unchanged.
inline JointDataset absorb_labels(const JointDataset& ds) {
    if (ds.absorbed) throw Error("absorb_labels: dataset already absorbed");
    JointDataset out = ds;
    for (int i = 0; i < ds.size(); ++i)
        if (ds.labels[i] == -1) out.X.row(i) = -ds.X.row(i);
    std::fill(out.labels.begin(), out.labels.end(), +1);
    out.absorbed = true;
    return out;
}

inline void require_absorbed(const JointDataset& ds, const char* who) {
    if (!ds.absorbed) throw Error(std::string(who) + ": dataset must be absorbed");
}

// Full-precision decimal printing so that save -> load round-trips exactly.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Text format: line 1 "d N M"; then N lines "task_id label x_0 ... x_{d-1}".
// '#' starts a comment line.
inline void save_dataset(const JointDataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw Error("save_dataset: cannot open " + path);
    f << ds.dim() << ' ' << ds.size() << ' ' << ds.num_tasks() << '\n';
    std::vector<int> task_of(ds.size(), -1);
    for (int m = 0; m < ds.num_tasks(); ++m)
        for (int i : ds.partition.index_sets[m]) task_of[i] = m;
    for (int i = 0; i < ds.size(); ++i) {
        f << task_of[i] << ' ' << ds.labels[i];
        for (int j = 0; j < ds.dim(); ++j) f << ' ' << format_double(ds.X(i, j));
        f << '\n';
    }
    if (!f) throw Error("save_dataset: write failed for " + path);
}

inline JointDataset load_dataset(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("load_dataset: cannot open " + path);
    std::string line;
    int lineno = 0;
    auto next_data_line = [&](std::string& out) -> bool {
        while (std::getline(f, line)) {
            ++lineno;
            size_t p = line.find_first_not_of(" \t\r");
            if (p == std::string::npos || line[p] == '#') continue;
            out = line;
            return true;
        }
        return false;
    };
    auto fail = [&](const std::string& msg) -> Error {
        return Error("load_dataset: " + path + ":" + std::to_string(lineno) + ": " + msg);
    };

    std::string hdr;
    if (!next_data_line(hdr)) throw fail("missing header");
    int d = 0, n = 0, m = 0;
    {
        std::istringstream ss(hdr);
        if (!(ss >> d >> n >> m) || d < 1 || n < 1 || m < 1)
            throw fail("malformed header, expected 'd N M'");
        std::string extra;
        if (ss >> extra) throw fail("trailing tokens in header");
    }

    JointDataset ds;
    ds.X.resize(n, d);
    ds.labels.resize(n);
    ds.partition.index_sets.assign(m, {});
    for (int i = 0; i < n; ++i) {
        std::string row;
        if (!next_data_line(row)) throw fail("expected " + std::to_string(n) + " rows, got " + std::to_string(i));
        std::istringstream ss(row);
        int task = 0, label = 0;
        if (!(ss >> task >> label)) throw fail("malformed row prefix");
        if (task < 0 || task >= m) throw fail("task_id " + std::to_string(task) + " out of range [0," + std::to_string(m) + ")");
        if (label != 1 && label != -1) throw fail("label outside {-1,1}");
        for (int j = 0; j < d; ++j) {
            double v;
            if (!(ss >> v)) throw fail("non-numeric or missing coordinate " + std::to_string(j));
            ds.X(i, j) = v;
        }
        std::string extra;
        if (ss >> extra) throw fail("trailing tokens");
        ds.labels[i] = label;
        ds.partition.index_sets[task].push_back(i);
    }
    ds.validate();
    return ds;
}

} // namespace seqmargin
