#include "icmpc/network.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace icmpc::nn {

const char* activation_name(Activation a)
{
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::softplus: return "softplus";
    case Activation::linear: return "linear";
    }
    return "?";
}

Activation activation_from_name(const std::string& name)
{
    if (name == "relu") return Activation::relu;
    if (name == "softplus") return Activation::softplus;
    if (name == "linear") return Activation::linear;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

double activate(Activation a, double x)
{
    switch (a) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::softplus: return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    case Activation::linear: return x;
    }
    return x;
}

double activate_grad(Activation a, double x)
{
    switch (a) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::softplus: return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case Activation::linear: return 1.0;
    }
    return 1.0;
}

Vec Network::forward(const Vec& s) const
{
    if (s.size() != input_dim)
        throw std::invalid_argument("forward: input has " + std::to_string(s.size()) +
                                    " entries, expected " + std::to_string(input_dim));
    Vec z; // starts empty: layer 0 sees no hidden state
    for (const auto& layer : layers) {
        Vec a = layer.w_s * s + layer.b;
        if (layer.w_z.cols() > 0) a += layer.w_z * z;
        z.resize(a.size());
        for (Eigen::Index i = 0; i < a.size(); ++i) z[i] = activate(layer.act, a[i]);
    }
    return z;
}

Mat Network::forward_rows(const Mat& s_rows) const
{
    if (s_rows.cols() != input_dim) throw std::invalid_argument("forward_rows: dimension mismatch");
    Mat z;
    for (const auto& layer : layers) {
        Mat a = s_rows * layer.w_s.transpose();
        a.rowwise() += layer.b.transpose();
        if (layer.w_z.cols() > 0) a += z * layer.w_z.transpose();
        z = a.unaryExpr([&](double v) { return activate(layer.act, v); });
    }
    return z;
}

Vec Network::predict(const Vec& raw_input) const
{
    return output_scaler.inverse(forward(input_scaler.forward(raw_input)));
}

Mat Network::input_vjp_rows(const Mat& s_rows, const Mat& dout_rows) const
{
    if (s_rows.cols() != input_dim || dout_rows.cols() != output_dim ||
        s_rows.rows() != dout_rows.rows())
        throw std::invalid_argument("input_vjp_rows: dimension mismatch");

    const auto L = layers.size();
    std::vector<Mat> pre(L), post(L);
    for (std::size_t li = 0; li < L; ++li) {
        const Layer& layer = layers[li];
        Mat a = s_rows * layer.w_s.transpose();
        a.rowwise() += layer.b.transpose();
        if (layer.w_z.cols() > 0) a += post[li - 1] * layer.w_z.transpose();
        pre[li] = a;
        post[li] = a.unaryExpr([&](double v) { return activate(layer.act, v); });
    }

    Mat ds = Mat::Zero(s_rows.rows(), input_dim);
    Mat dz = dout_rows;
    for (std::size_t li = L; li-- > 0;) {
        const Layer& layer = layers[li];
        Mat da = dz.cwiseProduct(
            pre[li].unaryExpr([&](double v) { return activate_grad(layer.act, v); }));
        ds += da * layer.w_s;
        if (layer.w_z.cols() > 0) dz = da * layer.w_z;
    }
    return ds;
}

bool Network::weights_nonnegative(double tol) const
{
    for (const auto& layer : layers)
        if (layer.w_z.size() > 0 && layer.w_z.minCoeff() < -tol) return false;
    return true;
}

bool Network::activations_convex_nondecreasing() const
{
    // relu, softplus and linear are all convex and non-decreasing
    return true;
}

Network make_network(NetworkKind kind, int input_dim, const std::vector<int>& hidden,
                     int output_dim, bool predicts_absolute, std::uint64_t seed)
{
    if (input_dim <= 0 || output_dim <= 0) throw std::invalid_argument("make_network: bad dims");
    Network net;
    net.kind = kind;
    net.predicts_absolute = predicts_absolute;
    net.input_dim = input_dim;
    net.output_dim = output_dim;
    net.input_scaler = MinMaxScaler::from_box(Box::unit(input_dim));
    net.output_scaler = MinMaxScaler::from_box(Box::unit(output_dim));
    net.label_scaled_min = Vec::Constant(output_dim, -1.0);
    net.label_scaled_max = Vec::Constant(output_dim, 1.0);

    Rng rng(seed);
    std::vector<int> dims = hidden;
    dims.push_back(output_dim);
    int prev = 0;
    for (std::size_t li = 0; li < dims.size(); ++li) {
        Layer layer;
        const int out = dims[li];
        const double r = std::sqrt(1.0 / static_cast<double>(prev + input_dim));
        layer.w_z.resize(out, prev);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < prev; ++j) {
                double v = rng.uniform(-r, r);
                layer.w_z(i, j) = kind == NetworkKind::icnn ? std::abs(v) : v;
            }
        layer.w_s.resize(out, input_dim);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < input_dim; ++j) layer.w_s(i, j) = rng.uniform(-r, r);
        layer.b.resize(out);
        for (int i = 0; i < out; ++i) layer.b[i] = rng.uniform(-r, r);

        const bool last = li + 1 == dims.size();
        if (!last)
            layer.act = Activation::relu;
        else
            layer.act = predicts_absolute ? Activation::relu : Activation::linear;
        net.layers.push_back(std::move(layer));
        prev = out;
    }
    return net;
}

void project_nonnegative(Network& net)
{
    for (auto& layer : net.layers)
        if (layer.w_z.size() > 0) layer.w_z = layer.w_z.cwiseMax(0.0);
}

namespace {

using nlohmann::json;

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

Mat mat_from_json(const json& j, Eigen::Index cols_if_empty = 0)
{
    if (j.empty()) return Mat(0, cols_if_empty);
    Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = j[r][c].get<double>();
    return m;
}

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

constexpr int kModelFormatVersion = 1;

} // namespace

std::string to_json_string(const Network& net)
{
    json j;
    j["format_version"] = kModelFormatVersion;
    j["kind"] = net.kind == NetworkKind::icnn ? "icnn" : "fnn";
    j["predicts_absolute"] = net.predicts_absolute;
    j["input_dim"] = net.input_dim;
    j["output_dim"] = net.output_dim;
    j["step_index"] = net.step_index;
    json layers = json::array();
    for (const auto& layer : net.layers) {
        json jl;
        jl["w_z"] = mat_to_json(layer.w_z);
        jl["w_s"] = mat_to_json(layer.w_s);
        jl["b"] = vec_to_json(layer.b);
        jl["activation"] = activation_name(layer.act);
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    j["input_scaler"] = {{"lo", vec_to_json(net.input_scaler.lo)}, {"hi", vec_to_json(net.input_scaler.hi)}};
    j["output_scaler"] = {{"lo", vec_to_json(net.output_scaler.lo)}, {"hi", vec_to_json(net.output_scaler.hi)}};
    j["label_scaled_min"] = vec_to_json(net.label_scaled_min);
    j["label_scaled_max"] = vec_to_json(net.label_scaled_max);
    return j.dump(2);
}

Network network_from_json_string(const std::string& text)
{
    json j = json::parse(text);
    if (j.at("format_version").get<int>() != kModelFormatVersion)
        throw std::runtime_error("model file: unsupported format_version");
    Network net;
    net.kind = j.at("kind").get<std::string>() == "icnn" ? NetworkKind::icnn : NetworkKind::fnn;
    net.predicts_absolute = j.at("predicts_absolute").get<bool>();
    net.input_dim = j.at("input_dim").get<int>();
    net.output_dim = j.at("output_dim").get<int>();
    net.step_index = j.value("step_index", 1);
    int prev = 0;
    for (const auto& jl : j.at("layers")) {
        Layer layer;
        layer.w_z = mat_from_json(jl.at("w_z"), prev);
        layer.w_s = mat_from_json(jl.at("w_s"));
        layer.b = vec_from_json(jl.at("b"));
        layer.act = activation_from_name(jl.at("activation").get<std::string>());
        prev = layer.out_dim();
        net.layers.push_back(std::move(layer));
    }
    net.input_scaler = MinMaxScaler(vec_from_json(j.at("input_scaler").at("lo")),
                                    vec_from_json(j.at("input_scaler").at("hi")));
    net.output_scaler = MinMaxScaler(vec_from_json(j.at("output_scaler").at("lo")),
                                     vec_from_json(j.at("output_scaler").at("hi")));
    net.label_scaled_min = vec_from_json(j.at("label_scaled_min"));
    net.label_scaled_max = vec_from_json(j.at("label_scaled_max"));
    return net;
}

void save_network(const Network& net, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_network: cannot open " + path);
    out << to_json_string(net) << "\n";
}

Network load_network(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_network: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return network_from_json_string(text);
}

} // namespace icmpc::nn
