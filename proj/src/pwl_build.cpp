#include "icmpc/pwl_build.hpp"

#include <atomic>
#include <future>
#include <memory>

namespace icmpc::pwl {

std::vector<Vec> error_denominators(const nn::SurrogateStack& stack, double floor)
{
    std::vector<Vec> denoms;
    for (int k = 1; k <= stack.np; ++k) {
        const auto& net = stack.model(k);
        denoms.push_back((net.label_scaled_max - net.label_scaled_min).cwiseMax(floor));
    }
    return denoms;
}

namespace {

Mat sample_matrix(const Box& box, int n_samples, std::uint64_t seed)
{
    Rng rng(seed);
    Mat z(n_samples, box.dim());
    for (int r = 0; r < n_samples; ++r) z.row(r) = box.sample(rng).transpose();
    return z;
}

/// Box corners plus center. For a convex model the positive part of
/// (model - affine fit) attains its maximum at a corner, so probing corners
/// pins down that side of the error exactly.
Mat probe_matrix(const Box& box)
{
    const int d = box.dim();
    if (d > 12) return box.center().transpose();
    const long corners = 1L << d;
    Mat z(corners + 1, d);
    for (long c = 0; c < corners; ++c)
        for (int i = 0; i < d; ++i) z(c, i) = (c >> i) & 1 ? box.hi[i] : box.lo[i];
    z.row(corners) = box.center().transpose();
    return z;
}

/// Max relative error of the given affine pieces against the true models
/// over the rows of z.
Vec pieces_error(const nn::SurrogateStack& stack, const std::vector<AffinePiece>& pieces,
                 const Mat& z, const std::vector<Vec>& denoms)
{
    Vec err = Vec::Zero(stack.np);
    for (int k = 1; k <= stack.np; ++k) {
        const int dk = stack.n + k * stack.m;
        const auto& piece = pieces[static_cast<std::size_t>(k - 1)];
        Mat truth = stack.model(k).forward_rows(z.leftCols(dk));
        Mat pred = z.leftCols(stack.n) * piece.w_state.transpose();
        for (int j = 0; j < k; ++j)
            pred += z.middleCols(stack.n + j * stack.m, stack.m) *
                    piece.w_inputs[static_cast<std::size_t>(j)].transpose();
        pred.rowwise() += piece.w_const.transpose();
        Mat rel = (pred - truth).cwiseAbs();
        rel.array().rowwise() /= denoms[static_cast<std::size_t>(k - 1)].transpose().array();
        err[k - 1] = rel.maxCoeff();
    }
    return err;
}

} // namespace

FitResult fit_affine(const nn::SurrogateStack& stack, const Box& box, int n_samples,
                     std::uint64_t seed, const std::vector<Vec>& denoms)
{
    const int d = box.dim();
    if (n_samples < d + 1) throw std::invalid_argument("fit_affine: need at least dim+1 samples");

    Mat z = sample_matrix(box, n_samples, seed);

    FitResult result;
    result.max_rel_err = Vec::Zero(stack.np);
    for (int k = 1; k <= stack.np; ++k) {
        const int dk = stack.n + k * stack.m;
        Mat design(n_samples, dk + 1);
        design.col(0).setOnes();
        design.rightCols(dk) = z.leftCols(dk);

        Mat targets = stack.model(k).forward_rows(z.leftCols(dk));

        Eigen::ColPivHouseholderQR<Mat> qr(design);
        if (qr.rank() < dk + 1) {
            // one resample before giving up
            z = sample_matrix(box, n_samples, seed + 0x9e3779b97f4a7c15ull);
            design.rightCols(dk) = z.leftCols(dk);
            targets = stack.model(k).forward_rows(z.leftCols(dk));
            qr.compute(design);
            if (qr.rank() < dk + 1)
                throw std::runtime_error("fit_affine: rank-deficient sample matrix after resampling");
        }
        Mat coeff = qr.solve(targets); // (dk+1) x n_out

        AffinePiece piece;
        piece.w_const = coeff.row(0).transpose();
        piece.w_state = coeff.middleRows(1, stack.n).transpose();
        for (int j = 0; j < k; ++j)
            piece.w_inputs.push_back(coeff.middleRows(1 + stack.n + j * stack.m, stack.m).transpose());

        Mat resid = (design * coeff - targets).cwiseAbs();
        resid.array().rowwise() /= denoms[static_cast<std::size_t>(k - 1)].transpose().array();
        result.max_rel_err[k - 1] = resid.maxCoeff();
        result.pieces.push_back(std::move(piece));
    }
    return result;
}

namespace {

struct BuildNode {
    Box box;
    bool is_leaf = false;
    int split_dim = -1;
    double split_coord = 0;
    FitResult fit;
    bool saturated = false;
    std::unique_ptr<BuildNode> left, right;
};

int longest_edge(const Box& box)
{
    int dim = 0;
    double best = box.hi[0] - box.lo[0];
    for (int d = 1; d < box.dim(); ++d) {
        const double len = box.hi[d] - box.lo[d];
        if (len > best + 1e-15) {
            best = len;
            dim = d;
        }
    }
    return dim;
}

/// Tokens bound the number of extra worker threads; a child forks when a
/// token is free and recurses inline otherwise, so deep subtrees keep every
/// core busy. The result does not depend on scheduling: all randomness is
/// derived from box coordinates.
std::unique_ptr<BuildNode> build_recursive(const nn::SurrogateStack& stack, const ApproxConfig& cfg,
                                           const std::vector<Vec>& denoms, Box box,
                                           std::atomic<int>& tokens)
{
    auto node = std::make_unique<BuildNode>();
    node->box = box;

    const int d = box.dim();
    const int n_samples = std::min(cfg.samples_per_dim * (d + 1), cfg.max_samples);
    const std::uint64_t seed = derive_seed(cfg.seed, box);
    node->fit = fit_affine(stack, box, n_samples, seed, denoms);

    // Error estimate beyond the fit samples: corners/center plus an
    // independent draw. The leaf keeps the combined estimate.
    Mat probes(0, d);
    {
        Mat corners = probe_matrix(box);
        Mat fresh = sample_matrix(box, n_samples, seed ^ 0x5851f42d4c957f2dull);
        probes.resize(corners.rows() + fresh.rows(), d);
        probes << corners, fresh;
    }
    node->fit.max_rel_err =
        node->fit.max_rel_err.cwiseMax(pieces_error(stack, node->fit.pieces, probes, denoms));

    const double err = node->fit.max_rel_err.maxCoeff();
    const int split_dim = longest_edge(box);
    const double len = box.hi[split_dim] - box.lo[split_dim];
    // children must keep every edge >= min_edge
    const bool can_split = 0.5 * len >= cfg.min_edge - 1e-12;

    if (err > cfg.error_bound * cfg.bound_margin && can_split) {
        node->split_dim = split_dim;
        node->split_coord = 0.5 * (box.lo[split_dim] + box.hi[split_dim]);
        Box lo_box = box, hi_box = box;
        lo_box.hi[split_dim] = node->split_coord;
        hi_box.lo[split_dim] = node->split_coord;
        int available = tokens.load();
        bool forked = false;
        while (available > 0 && !(forked = tokens.compare_exchange_weak(available, available - 1)))
            ;
        if (forked) {
            auto fut = std::async(std::launch::async, [&, hi_box]() {
                auto child = build_recursive(stack, cfg, denoms, hi_box, tokens);
                ++tokens;
                return child;
            });
            node->left = build_recursive(stack, cfg, denoms, lo_box, tokens);
            node->right = fut.get();
        } else {
            node->left = build_recursive(stack, cfg, denoms, lo_box, tokens);
            node->right = build_recursive(stack, cfg, denoms, hi_box, tokens);
        }
    } else {
        node->is_leaf = true;
        node->saturated = err > cfg.error_bound;
    }
    return node;
}

void flatten(RegionTree& tree, int node_index, const BuildNode& bn)
{
    if (bn.is_leaf) {
        Region r;
        r.box = bn.box;
        r.pieces = bn.fit.pieces;
        r.max_rel_err = bn.fit.max_rel_err;
        r.saturated = bn.saturated;
        tree.attach_leaf(node_index, std::move(r));
        return;
    }
    auto [l, rgt] = tree.split_node(node_index, bn.split_dim, bn.split_coord);
    flatten(tree, l, *bn.left);
    flatten(tree, rgt, *bn.right);
}

} // namespace

RegionTree build_region_tree(const nn::SurrogateStack& stack, const ApproxConfig& cfg)
{
    const int joint_dim = stack.n + stack.m * stack.np;
    Box root = Box::unit(joint_dim);
    cfg.validate((root.hi - root.lo).maxCoeff());

    std::atomic<int> tokens{std::max(1, cfg.threads) - 1};
    auto build_root = build_recursive(stack, cfg, error_denominators(stack), root, tokens);

    RegionTree tree(root, stack.n, stack.m, stack.np);
    flatten(tree, tree.make_root(), *build_root);
    return tree;
}

ValidationReport validate_tree(const RegionTree& tree, const nn::SurrogateStack& stack,
                               const ApproxConfig& cfg, std::uint64_t val_seed)
{
    const auto denoms = error_denominators(stack);
    ValidationReport rep;
    for (const auto& leaf : tree.leaves()) {
        const int d = leaf.box.dim();
        const int n_samples = std::min(cfg.samples_per_dim * (d + 1), cfg.max_samples);
        Mat z = sample_matrix(leaf.box, n_samples, derive_seed(val_seed, leaf.box));
        const double leaf_err = pieces_error(stack, leaf.pieces, z, denoms).maxCoeff();
        ++rep.checked;
        if (leaf_err > rep.worst_rel_err) {
            rep.worst_rel_err = leaf_err;
            rep.worst_leaf_id = leaf.id;
        }
        if (!leaf.saturated && leaf_err > cfg.error_bound) ++rep.over_bound_non_saturated;
    }
    return rep;
}

} // namespace icmpc::pwl
