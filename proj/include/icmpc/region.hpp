#pragma once

#include "icmpc/types.hpp"

#include <string>
#include <vector>

namespace icmpc::pwl {

/// Affine surrogate of one horizon model over one region, in scaled units:
/// pred_k = w_state * x + sum_j w_inputs[j] * u_j + w_const.
struct AffinePiece {
    Mat w_state;              // n_out x n
    std::vector<Mat> w_inputs; // k blocks, each n_out x m
    Vec w_const;              // n_out
};

struct Region {
    int id = -1;
    Box box;                        // over (x, u_0..u_{np-1}) scaled space
    std::vector<AffinePiece> pieces; // one per horizon step k = 1..np
    Vec max_rel_err;                // per horizon step: worst output error on fit samples
    bool saturated = false;         // true when still over-bound at the minimum edge length
};

/// Binary-split partition of the joint (state, input-sequence) box.
///
/// Leaves carry the affine coefficients; internal nodes carry the split.
/// Point location uses half-open boxes [lo, hi): a point exactly on a split
/// plane belongs to the upper child. The outer hi face of the root box is
/// treated as inclusive so the closed root box is fully covered.
class RegionTree {
public:
    struct Node {
        int split_dim = -1;   // -1 for leaves
        double split_coord = 0;
        int left = -1;
        int right = -1;
        int leaf = -1;        // index into leaves() for leaf nodes
    };

    RegionTree() = default;
    RegionTree(Box root, int state_dim, int input_dim, int horizon);

    int state_dim() const { return n_; }
    int input_dim() const { return m_; }
    int horizon() const { return np_; }
    int joint_dim() const { return root_.dim(); }
    const Box& root_box() const { return root_; }

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Region>& leaves() const { return leaves_; }
    std::vector<Region>& leaves() { return leaves_; }
    const Region& leaf(int id) const { return leaves_.at(static_cast<std::size_t>(id)); }

    /// Splits leaf node `node_index` at `coord` along `dim`; returns the two
    /// child node indices. Used by the builder.
    std::pair<int, int> split_node(int node_index, int dim, double coord);
    int make_root();
    int attach_leaf(int node_index, Region region);

    /// Leaf containing `z` (half-open convention). Throws if z is outside
    /// the closed root box.
    const Region& locate(const Vec& z) const;

    /// Ids of all leaves whose state-slab contains x; their input boxes tile
    /// the input-sequence space.
    std::vector<int> candidate_regions(const Vec& x) const;

    /// Box of the node, reconstructed from the splits.
    Box node_box(int node_index) const;

    int depth() const;

    std::string to_json_string() const;
    static RegionTree from_json_string(const std::string& text);
    void save(const std::string& path) const;
    static RegionTree load(const std::string& path);

private:
    Box root_;
    int n_ = 0, m_ = 0, np_ = 0;
    std::vector<Node> nodes_;
    std::vector<Region> leaves_;

    bool in_upper(double value, double split) const { return value >= split; }
};

struct TreeStats {
    int leaf_count = 0;
    int depth = 0;
    int saturated_count = 0;
    std::vector<int> depth_histogram;
    std::vector<double> error_quantiles; // 0, 25, 50, 75, 100 percentiles of leaf max error
};

TreeStats tree_stats(const RegionTree& tree);
void write_stats_csv(const RegionTree& tree, const std::string& path);
void write_stats_summary_csv(const RegionTree& tree, const std::string& path);

} // namespace icmpc::pwl
