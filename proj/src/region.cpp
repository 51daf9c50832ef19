#include "icmpc/region.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace icmpc::pwl {

using nlohmann::json;

RegionTree::RegionTree(Box root, int state_dim, int input_dim, int horizon)
    : root_(std::move(root)), n_(state_dim), m_(input_dim), np_(horizon)
{
    if (root_.dim() != n_ + m_ * np_)
        throw std::invalid_argument("RegionTree: root box dim != n + m*np");
    if (!root_.valid()) throw std::invalid_argument("RegionTree: degenerate root box");
}

int RegionTree::make_root()
{
    if (!nodes_.empty()) throw std::logic_error("RegionTree: root already exists");
    nodes_.push_back({});
    return 0;
}

std::pair<int, int> RegionTree::split_node(int node_index, int dim, double coord)
{
    Node& nd = nodes_.at(static_cast<std::size_t>(node_index));
    if (nd.leaf >= 0 || nd.left >= 0) throw std::logic_error("RegionTree: node already finalized");
    nd.split_dim = dim;
    nd.split_coord = coord;
    const int l = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_.push_back({});
    // re-fetch: push_back may have invalidated nd
    nodes_[static_cast<std::size_t>(node_index)].left = l;
    nodes_[static_cast<std::size_t>(node_index)].right = l + 1;
    return {l, l + 1};
}

int RegionTree::attach_leaf(int node_index, Region region)
{
    Node& nd = nodes_.at(static_cast<std::size_t>(node_index));
    if (nd.leaf >= 0 || nd.left >= 0) throw std::logic_error("RegionTree: node already finalized");
    region.id = static_cast<int>(leaves_.size());
    nd.leaf = region.id;
    leaves_.push_back(std::move(region));
    return nd.leaf;
}

const Region& RegionTree::locate(const Vec& z) const
{
    if (z.size() != root_.dim()) throw std::invalid_argument("locate: dimension mismatch");
    if (!root_.contains(z)) throw std::out_of_range("locate: point outside root box");
    int cur = 0;
    while (nodes_[static_cast<std::size_t>(cur)].leaf < 0) {
        const Node& nd = nodes_[static_cast<std::size_t>(cur)];
        cur = in_upper(z[nd.split_dim], nd.split_coord) ? nd.right : nd.left;
    }
    return leaves_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(cur)].leaf)];
}

std::vector<int> RegionTree::candidate_regions(const Vec& x) const
{
    if (x.size() != n_) throw std::invalid_argument("candidate_regions: expected state vector");
    if (!root_.slice(0, n_).contains(x)) throw std::out_of_range("candidate_regions: x outside root state box");
    std::vector<int> out;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node nd = nodes_[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        if (nd.leaf >= 0) {
            out.push_back(nd.leaf);
            continue;
        }
        if (nd.split_dim < n_) {
            stack.push_back(in_upper(x[nd.split_dim], nd.split_coord) ? nd.right : nd.left);
        } else {
            // split along an input dimension: both sides contain x
            stack.push_back(nd.left);
            stack.push_back(nd.right);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

Box RegionTree::node_box(int node_index) const
{
    // walk from the root, narrowing the box along the path
    std::vector<int> path;
    // node indices are assigned in DFS order by the builder, so a parent
    // search is needed; precompute parents lazily
    std::vector<int> parent(nodes_.size(), -1);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].left >= 0) {
            parent[static_cast<std::size_t>(nodes_[i].left)] = static_cast<int>(i);
            parent[static_cast<std::size_t>(nodes_[i].right)] = static_cast<int>(i);
        }
    }
    for (int cur = node_index; cur >= 0; cur = parent[static_cast<std::size_t>(cur)]) path.push_back(cur);
    std::reverse(path.begin(), path.end());

    Box box = root_;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const Node& nd = nodes_[static_cast<std::size_t>(path[i])];
        if (path[i + 1] == nd.left)
            box.hi[nd.split_dim] = nd.split_coord;
        else
            box.lo[nd.split_dim] = nd.split_coord;
    }
    return box;
}

int RegionTree::depth() const
{
    int max_depth = 0;
    // depth via stack of (node, depth)
    std::vector<std::pair<int, int>> stack{{0, 0}};
    if (nodes_.empty()) return 0;
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        const Node& nd = nodes_[static_cast<std::size_t>(i)];
        if (nd.leaf >= 0) {
            max_depth = std::max(max_depth, d);
        } else {
            stack.push_back({nd.left, d + 1});
            stack.push_back({nd.right, d + 1});
        }
    }
    return max_depth;
}

namespace {

json vec_to_json(const Vec& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vec vec_from_json(const json& j)
{
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

json mat_to_json(const Mat& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& j)
{
    if (j.empty()) return Mat(0, 0);
    Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = j[r][c].get<double>();
    return m;
}

constexpr int kTreeFormatVersion = 1;

} // namespace

std::string RegionTree::to_json_string() const
{
    json j;
    j["format_version"] = kTreeFormatVersion;
    j["state_dim"] = n_;
    j["input_dim"] = m_;
    j["horizon"] = np_;
    j["root"] = {{"lo", vec_to_json(root_.lo)}, {"hi", vec_to_json(root_.hi)}};
    json nodes = json::array();
    for (const auto& nd : nodes_)
        nodes.push_back({{"dim", nd.split_dim}, {"coord", nd.split_coord}, {"left", nd.left},
                         {"right", nd.right}, {"leaf", nd.leaf}});
    j["nodes"] = std::move(nodes);
    json leaves = json::array();
    for (const auto& leaf : leaves_) {
        json jp = json::array();
        for (const auto& piece : leaf.pieces) {
            json blocks = json::array();
            for (const auto& wu : piece.w_inputs) blocks.push_back(mat_to_json(wu));
            jp.push_back({{"w_state", mat_to_json(piece.w_state)},
                          {"w_inputs", std::move(blocks)},
                          {"w_const", vec_to_json(piece.w_const)}});
        }
        leaves.push_back({{"pieces", std::move(jp)},
                          {"max_rel_err", vec_to_json(leaf.max_rel_err)},
                          {"saturated", leaf.saturated}});
    }
    j["leaves"] = std::move(leaves);
    return j.dump();
}

RegionTree RegionTree::from_json_string(const std::string& text)
{
    json j = json::parse(text);
    if (j.at("format_version").get<int>() != kTreeFormatVersion)
        throw std::runtime_error("region tree file: unsupported format_version");
    RegionTree t(Box(vec_from_json(j.at("root").at("lo")), vec_from_json(j.at("root").at("hi"))),
                 j.at("state_dim").get<int>(), j.at("input_dim").get<int>(), j.at("horizon").get<int>());
    for (const auto& jn : j.at("nodes")) {
        Node nd;
        nd.split_dim = jn.at("dim").get<int>();
        nd.split_coord = jn.at("coord").get<double>();
        nd.left = jn.at("left").get<int>();
        nd.right = jn.at("right").get<int>();
        nd.leaf = jn.at("leaf").get<int>();
        t.nodes_.push_back(nd);
    }
    int id = 0;
    for (const auto& jl : j.at("leaves")) {
        Region r;
        r.id = id++;
        for (const auto& jp : jl.at("pieces")) {
            AffinePiece piece;
            piece.w_state = mat_from_json(jp.at("w_state"));
            for (const auto& jb : jp.at("w_inputs")) piece.w_inputs.push_back(mat_from_json(jb));
            piece.w_const = vec_from_json(jp.at("w_const"));
            r.pieces.push_back(std::move(piece));
        }
        r.max_rel_err = vec_from_json(jl.at("max_rel_err"));
        r.saturated = jl.at("saturated").get<bool>();
        t.leaves_.push_back(std::move(r));
    }
    // rebuild leaf boxes from the split structure
    for (std::size_t i = 0; i < t.nodes_.size(); ++i)
        if (t.nodes_[i].leaf >= 0)
            t.leaves_[static_cast<std::size_t>(t.nodes_[i].leaf)].box = t.node_box(static_cast<int>(i));
    return t;
}

void RegionTree::save(const std::string& path) const
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("RegionTree::save: cannot open " + path);
    out << to_json_string() << "\n";
}

RegionTree RegionTree::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("RegionTree::load: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

TreeStats tree_stats(const RegionTree& tree)
{
    TreeStats s;
    s.leaf_count = static_cast<int>(tree.leaves().size());
    s.depth = tree.depth();
    s.depth_histogram.assign(static_cast<std::size_t>(s.depth) + 1, 0);

    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        const auto& nd = tree.nodes()[static_cast<std::size_t>(i)];
        if (nd.leaf >= 0)
            ++s.depth_histogram[static_cast<std::size_t>(d)];
        else {
            stack.push_back({nd.left, d + 1});
            stack.push_back({nd.right, d + 1});
        }
    }

    std::vector<double> errs;
    for (const auto& leaf : tree.leaves()) {
        if (leaf.saturated) ++s.saturated_count;
        errs.push_back(leaf.max_rel_err.size() ? leaf.max_rel_err.maxCoeff() : 0.0);
    }
    std::sort(errs.begin(), errs.end());
    if (!errs.empty()) {
        for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            auto idx = static_cast<std::size_t>(q * (errs.size() - 1));
            s.error_quantiles.push_back(errs[idx]);
        }
    }
    return s;
}

void write_stats_csv(const RegionTree& tree, const std::string& path)
{
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("write_stats_csv: cannot open " + path);
    std::fprintf(f, "leaf_id,max_rel_err,saturated,volume\n");
    for (const auto& leaf : tree.leaves())
        std::fprintf(f, "%d,%.17g,%d,%.17g\n", leaf.id,
                     leaf.max_rel_err.size() ? leaf.max_rel_err.maxCoeff() : 0.0,
                     leaf.saturated ? 1 : 0, leaf.box.volume());
    std::fclose(f);
}

} // namespace icmpc::pwl
