#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icmpc/pwl_build.hpp"

#include <cmath>

using namespace icmpc;
using namespace icmpc::pwl;

namespace {

/// Stack of small random convex nets, n=1 m=1 so trees stay small in tests.
nn::SurrogateStack test_stack(int np, std::uint64_t seed, int width = 8)
{
    std::vector<nn::Network> models;
    for (int k = 1; k <= np; ++k) {
        auto net = nn::make_network(nn::NetworkKind::icnn, 1 + k, {width, width}, 1, true,
                                    seed + static_cast<std::uint64_t>(k));
        net.step_index = k;
        models.push_back(std::move(net));
    }
    return nn::SurrogateStack::from_models(std::move(models), 1, 1);
}

/// Single affine model (linear activation, one layer) over n=1, m=1.
nn::SurrogateStack affine_stack(double wx, double wu, double c)
{
    nn::Network net;
    net.kind = nn::NetworkKind::icnn;
    net.input_dim = 2;
    net.output_dim = 1;
    net.input_scaler = MinMaxScaler::from_box(Box::unit(2));
    net.output_scaler = MinMaxScaler::from_box(Box::unit(1));
    net.label_scaled_min = Vec::Constant(1, -1.0);
    net.label_scaled_max = Vec::Constant(1, 1.0);
    nn::Layer layer;
    layer.w_z = Mat(1, 0);
    layer.w_s = Mat(1, 2);
    layer.w_s << wx, wu;
    layer.b = Vec::Constant(1, c);
    layer.act = nn::Activation::linear;
    net.layers.push_back(std::move(layer));
    return nn::SurrogateStack::from_models({net}, 1, 1);
}

/// Containment with the tree's half-open convention (root hi inclusive).
bool leaf_contains(const Box& leaf, const Box& root, const Vec& p)
{
    for (int d = 0; d < leaf.dim(); ++d) {
        if (p[d] < leaf.lo[d]) return false;
        const bool at_root_hi = leaf.hi[d] >= root.hi[d];
        if (at_root_hi ? p[d] > leaf.hi[d] : p[d] >= leaf.hi[d]) return false;
    }
    return true;
}

} // namespace

TEST_CASE("fit_affine: an affine model is reproduced exactly")
{
    auto stack = affine_stack(0.75, -0.4, 0.2);
    auto denoms = error_denominators(stack);
    auto fit = fit_affine(stack, Box::unit(2), 64, 3, denoms);
    CHECK(fit.max_rel_err[0] <= 1e-10);
    CHECK(fit.pieces[0].w_state(0, 0) == doctest::Approx(0.75).epsilon(1e-8));
    CHECK(fit.pieces[0].w_inputs[0](0, 0) == doctest::Approx(-0.4).epsilon(1e-8));
    CHECK(fit.pieces[0].w_const[0] == doctest::Approx(0.2).epsilon(1e-8));
}

TEST_CASE("fit_affine: constant model gives zero slopes")
{
    auto stack = affine_stack(0.0, 0.0, 0.6);
    auto fit = fit_affine(stack, Box::unit(2), 64, 3, error_denominators(stack));
    CHECK(std::abs(fit.pieces[0].w_state(0, 0)) <= 1e-10);
    CHECK(std::abs(fit.pieces[0].w_inputs[0](0, 0)) <= 1e-10);
    CHECK(fit.pieces[0].w_const[0] == doctest::Approx(0.6).epsilon(1e-10));
}

TEST_CASE("fit_affine: splitting at a kink strictly reduces the error")
{
    // model relu(x) over a box straddling x = 0
    nn::SurrogateStack stack = affine_stack(1.0, 0.0, 0.0);
    // swap the linear output for relu to create the kink
    // (weights stay non-negative, so the model is still convex)
    auto models = stack.models;
    models[0].layers[0].act = nn::Activation::relu;
    stack = nn::SurrogateStack::from_models(std::move(models), 1, 1);

    auto denoms = error_denominators(stack);
    auto whole = fit_affine(stack, Box::unit(2), 128, 7, denoms);

    Box left(Vec(2), Vec(2)), right(Vec(2), Vec(2));
    left.lo << -1, -1;
    left.hi << 0, 1;
    right.lo << 0, -1;
    right.hi << 1, 1;
    auto fit_l = fit_affine(stack, left, 128, 7, denoms);
    auto fit_r = fit_affine(stack, right, 128, 7, denoms);

    CHECK(whole.max_rel_err[0] > 1e-3);
    CHECK(fit_l.max_rel_err[0] < whole.max_rel_err[0]);
    CHECK(fit_r.max_rel_err[0] < whole.max_rel_err[0]);
    CHECK(fit_l.max_rel_err[0] <= 1e-8);
    CHECK(fit_r.max_rel_err[0] <= 1e-8);
}

TEST_CASE("build_region_tree: affine model yields exactly one leaf")
{
    auto stack = affine_stack(0.5, 0.5, -0.1);
    ApproxConfig cfg;
    cfg.error_bound = 0.15;
    cfg.min_edge = 0.125;
    cfg.seed = 1;
    auto tree = build_region_tree(stack, cfg);
    CHECK(tree.leaves().size() == 1);
    CHECK(tree.leaves().front().saturated == false);
}

TEST_CASE("build_region_tree: leaf count restricted by the minimum edge bound")
{
    auto stack = test_stack(2, 99);
    ApproxConfig cfg;
    cfg.error_bound = 0.05;
    cfg.min_edge = 0.25;
    cfg.seed = 2;
    auto tree = build_region_tree(stack, cfg);

    const int joint = 1 + 1 * 2;
    const double bound = std::pow(2.0 / cfg.min_edge, joint);
    CHECK(static_cast<double>(tree.leaves().size()) <= bound);
    CHECK(tree.leaves().size() >= 2); // a random convex net is not affine

    // every edge at least min_edge
    for (const auto& leaf : tree.leaves())
        CHECK((leaf.box.hi - leaf.box.lo).minCoeff() >= cfg.min_edge - 1e-12);
}

TEST_CASE("build_region_tree: partition integrity and locate oracle")
{
    auto stack = test_stack(2, 7);
    ApproxConfig cfg;
    cfg.error_bound = 0.08;
    cfg.min_edge = 0.125;
    cfg.seed = 5;
    auto tree = build_region_tree(stack, cfg);
    const auto& leaves = tree.leaves();
    REQUIRE(leaves.size() >= 2);

    // volumes sum to the root volume
    double vol = 0;
    for (const auto& leaf : leaves) vol += leaf.box.volume();
    CHECK(vol == doctest::Approx(tree.root_box().volume()).epsilon(1e-9));

    // pairwise disjoint interiors (exact check; trees here are small)
    for (std::size_t a = 0; a < leaves.size(); ++a)
        for (std::size_t b = a + 1; b < leaves.size(); ++b) {
            bool overlap = true;
            for (int d = 0; d < tree.joint_dim(); ++d)
                overlap = overlap && std::max(leaves[a].box.lo[d], leaves[b].box.lo[d]) <
                                         std::min(leaves[a].box.hi[d], leaves[b].box.hi[d]) - 1e-15;
            CHECK_FALSE(overlap);
        }

    // locate agrees with a linear scan over all leaves
    Rng rng(17);
    for (int i = 0; i < 10000; ++i) {
        Vec p = tree.root_box().sample(rng);
        const Region& via_tree = tree.locate(p);
        int scan_hits = 0, scan_id = -1;
        for (const auto& leaf : leaves)
            if (leaf_contains(leaf.box, tree.root_box(), p)) {
                ++scan_hits;
                scan_id = leaf.id;
            }
        CHECK(scan_hits == 1);
        CHECK(scan_id == via_tree.id);
    }
}

TEST_CASE("locate: root-only tree and split-plane convention")
{
    auto stack = affine_stack(0.3, 0.3, 0.0);
    ApproxConfig cfg;
    cfg.seed = 1;
    auto tree = build_region_tree(stack, cfg);
    REQUIRE(tree.leaves().size() == 1);
    Vec p = Vec::Zero(2);
    CHECK(tree.locate(p).id == 0);
    CHECK_THROWS_AS(tree.locate(Vec::Constant(2, 1.5)), std::out_of_range);

    // a point exactly on a split plane goes to the upper child
    RegionTree manual(Box::unit(2), 1, 1, 1);
    int root = manual.make_root();
    auto [left, right] = manual.split_node(root, 0, 0.0);
    Region rl, rr;
    rl.box = Box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
    rl.box.hi[0] = 0.0;
    rr.box = Box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
    rr.box.lo[0] = 0.0;
    manual.attach_leaf(left, rl);
    manual.attach_leaf(right, rr);
    Vec on_plane(2);
    on_plane << 0.0, 0.5;
    CHECK(manual.locate(on_plane).id == 1); // hi-side child
}

TEST_CASE("candidate_regions: matches a brute-force slab filter and tiles input space")
{
    auto stack = test_stack(2, 31);
    ApproxConfig cfg;
    cfg.error_bound = 0.08;
    cfg.min_edge = 0.125;
    cfg.seed = 9;
    auto tree = build_region_tree(stack, cfg);

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Vec x = Vec::Constant(1, rng.uniform(-1, 1));
        auto ids = tree.candidate_regions(x);
        CHECK(!ids.empty());

        std::vector<int> brute;
        for (const auto& leaf : tree.leaves()) {
            Box slab = leaf.box.slice(0, 1);
            Box root_slab = tree.root_box().slice(0, 1);
            if (leaf_contains(slab, root_slab, x)) brute.push_back(leaf.id);
        }
        CHECK(ids == brute);

        // the candidates' input boxes tile the root input box
        const Box root_u = tree.root_box().slice(1, 2);
        double vol = 0;
        for (int id : ids) vol += tree.leaf(id).box.slice(1, 2).volume();
        CHECK(vol == doctest::Approx(root_u.volume()).epsilon(1e-9));
    }
}

TEST_CASE("candidate_regions: u-splits keep both children")
{
    RegionTree manual(Box::unit(2), 1, 1, 1);
    int root = manual.make_root();
    auto [left, right] = manual.split_node(root, 1, 0.0); // split along the input dim
    Region rl, rr;
    manual.attach_leaf(left, rl);
    manual.attach_leaf(right, rr);
    auto ids = manual.candidate_regions(Vec::Constant(1, 0.3));
    CHECK(ids == std::vector<int>{0, 1});
}

TEST_CASE("build_region_tree: tightening the bound never reduces the leaf count")
{
    auto stack = test_stack(1, 13);
    ApproxConfig loose;
    loose.error_bound = 0.15;
    loose.min_edge = 0.125;
    loose.seed = 4;
    ApproxConfig tight = loose;
    tight.error_bound = 0.075;
    auto t_loose = build_region_tree(stack, loose);
    auto t_tight = build_region_tree(stack, tight);
    CHECK(t_tight.leaves().size() >= t_loose.leaves().size());
}

TEST_CASE("build_region_tree: fresh-sample validation holds for non-saturated leaves")
{
    auto stack = test_stack(2, 57);
    ApproxConfig cfg;
    cfg.error_bound = 0.1;
    cfg.min_edge = 0.125;
    cfg.seed = 21;
    auto tree = build_region_tree(stack, cfg);
    auto rep = validate_tree(tree, stack, cfg, cfg.seed + 1000003);
    CHECK(rep.checked == static_cast<int>(tree.leaves().size()));
    CHECK(rep.over_bound_non_saturated == 0);
}

TEST_CASE("build_region_tree: parallel build equals sequential build")
{
    auto stack = test_stack(2, 71);
    ApproxConfig cfg;
    cfg.error_bound = 0.08;
    cfg.min_edge = 0.25;
    cfg.seed = 6;
    cfg.threads = 1;
    auto seq = build_region_tree(stack, cfg);
    cfg.threads = 4;
    auto par = build_region_tree(stack, cfg);
    CHECK(seq.to_json_string() == par.to_json_string());
}

TEST_CASE("region tree json round-trip")
{
    auto stack = test_stack(2, 23);
    ApproxConfig cfg;
    cfg.error_bound = 0.1;
    cfg.min_edge = 0.25;
    cfg.seed = 8;
    auto tree = build_region_tree(stack, cfg);
    auto back = RegionTree::from_json_string(tree.to_json_string());

    CHECK(back.leaves().size() == tree.leaves().size());
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        Vec p = tree.root_box().sample(rng);
        const auto& a = tree.locate(p);
        const auto& b = back.locate(p);
        CHECK(a.id == b.id);
        CHECK((a.box.lo - b.box.lo).cwiseAbs().maxCoeff() == 0.0);
        for (std::size_t k = 0; k < a.pieces.size(); ++k) {
            CHECK((a.pieces[k].w_state - b.pieces[k].w_state).cwiseAbs().maxCoeff() == 0.0);
            CHECK((a.pieces[k].w_const - b.pieces[k].w_const).cwiseAbs().maxCoeff() == 0.0);
        }
    }

    auto stats = tree_stats(tree);
    CHECK(stats.leaf_count == static_cast<int>(tree.leaves().size()));
    CHECK(stats.depth >= 1);
}
