#pragma once

#include "icmpc/types.hpp"

#include <string>
#include <vector>

namespace icmpc {

enum class Split { train, val, test };

/// Sample/label table for one prediction step.
///
/// Column layout of `samples` is (x_t, u_t, ..., u_{t+K-1}) where K =
/// hold_steps; `labels` holds x_{t+K} (or |x_{t+K}| for the abs variant).
/// Values are stored in raw physical units; scaling happens in the training
/// pipeline.
struct Dataset {
    Mat samples;
    Mat labels;
    std::vector<Split> split;
    int state_dim = 0;
    int input_dim = 0;
    int hold_steps = 0;

    int rows() const { return static_cast<int>(samples.rows()); }
    int sample_dim() const { return state_dim + input_dim * hold_steps; }

    /// Assign train/val/test tags by a seeded shuffle of row indices.
    void assign_splits(double train_frac, double val_frac, std::uint64_t seed);

    Mat samples_of(Split s) const { return select_rows(samples, s); }
    Mat labels_of(Split s) const { return select_rows(labels, s); }
    int count_of(Split s) const;

    /// Componentwise |labels| variant (samples shared).
    Dataset abs_labels() const;

    void write_csv(const std::string& path) const;
    static Dataset read_csv(const std::string& path);

    std::vector<std::string> column_names() const;

private:
    Mat select_rows(const Mat& src, Split s) const;
};

} // namespace icmpc
