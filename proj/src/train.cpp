#include "icmpc/train.hpp"

#include <cassert>
#include <cmath>
#include <numbers>
#include <numeric>

namespace icmpc::nn {

double mse(const Network& net, const Mat& X, const Mat& Y)
{
    Mat pred = net.forward_rows(X);
    return (pred - Y).squaredNorm() / static_cast<double>(Y.size());
}

std::pair<double, Gradients> loss_and_gradients(const Network& net, const Mat& X, const Mat& Y)
{
    const auto L = net.layers.size();
    if (X.rows() != Y.rows()) throw std::invalid_argument("loss_and_gradients: row mismatch");

    // forward with cached pre-activations
    std::vector<Mat> pre(L);  // pre-activation per layer, rows = batch
    std::vector<Mat> post(L); // activation output per layer
    for (std::size_t li = 0; li < L; ++li) {
        const Layer& layer = net.layers[li];
        Mat a = X * layer.w_s.transpose();
        a.rowwise() += layer.b.transpose();
        if (layer.w_z.cols() > 0) a += post[li - 1] * layer.w_z.transpose();
        pre[li] = a;
        post[li] = a.unaryExpr([&](double v) { return activate(layer.act, v); });
    }

    const Mat err = post[L - 1] - Y;
    const double denom = static_cast<double>(Y.size());
    const double loss = err.squaredNorm() / denom;

    Gradients g;
    g.w_z.resize(L);
    g.w_s.resize(L);
    g.b.resize(L);

    Mat dz = (2.0 / denom) * err; // dL/d(post[L-1])
    for (std::size_t li = L; li-- > 0;) {
        const Layer& layer = net.layers[li];
        Mat da = dz.cwiseProduct(
            pre[li].unaryExpr([&](double v) { return activate_grad(layer.act, v); }));
        g.w_s[li] = da.transpose() * X;
        g.b[li] = da.colwise().sum().transpose();
        if (layer.w_z.cols() > 0) {
            g.w_z[li] = da.transpose() * post[li - 1];
            dz = da * layer.w_z;
        } else {
            g.w_z[li] = Mat(layer.w_z.rows(), layer.w_z.cols());
        }
    }
    return {loss, std::move(g)};
}

namespace {

struct AdamState {
    std::vector<Mat> m_wz, v_wz, m_ws, v_ws;
    std::vector<Vec> m_b, v_b;
    long t = 0;

    explicit AdamState(const Network& net)
    {
        for (const auto& layer : net.layers) {
            m_wz.push_back(Mat::Zero(layer.w_z.rows(), layer.w_z.cols()));
            v_wz.push_back(Mat::Zero(layer.w_z.rows(), layer.w_z.cols()));
            m_ws.push_back(Mat::Zero(layer.w_s.rows(), layer.w_s.cols()));
            v_ws.push_back(Mat::Zero(layer.w_s.rows(), layer.w_s.cols()));
            m_b.push_back(Vec::Zero(layer.b.size()));
            v_b.push_back(Vec::Zero(layer.b.size()));
        }
    }

    template <typename T>
    void update(T& param, const T& grad, T& m, T& v, const TrainOptions& opt, double lr)
    {
        m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
        v = opt.beta2 * v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
        param -= (lr / bc1) *
                 (m.array() / ((v.array() / bc2).sqrt() + opt.eps)).matrix();
    }

    void step(Network& net, const Gradients& g, const TrainOptions& opt, double lr)
    {
        ++t;
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            Layer& layer = net.layers[li];
            if (layer.w_z.size() > 0) update(layer.w_z, g.w_z[li], m_wz[li], v_wz[li], opt, lr);
            update(layer.w_s, g.w_s[li], m_ws[li], v_ws[li], opt, lr);
            update(layer.b, g.b[li], m_b[li], v_b[li], opt, lr);
        }
    }
};

} // namespace

TrainHistory train(Network& net, const Mat& X, const Mat& Y, const Mat& Xval, const Mat& Yval,
                   const TrainOptions& opt)
{
    if (X.rows() == 0) throw std::invalid_argument("train: empty dataset");
    if (X.cols() != net.input_dim || Y.cols() != net.output_dim)
        throw std::invalid_argument("train: dataset dims do not match model dims");

    AdamState adam(net);
    Rng rng(opt.seed);
    std::vector<int> order(static_cast<std::size_t>(X.rows()));
    std::iota(order.begin(), order.end(), 0);

    TrainHistory hist;
    const int n = static_cast<int>(X.rows());
    const int bs = std::max(1, std::min(opt.batch, n));

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const double lr = opt.cosine_decay
                              ? opt.lr * (0.55 + 0.45 * std::cos(std::numbers::pi * epoch /
                                                                 std::max(1, opt.epochs - 1)))
                              : opt.lr;
        rng.shuffle(order);
        for (int start = 0; start < n; start += bs) {
            const int count = std::min(bs, n - start);
            Mat xb(count, X.cols()), yb(count, Y.cols());
            for (int i = 0; i < count; ++i) {
                xb.row(i) = X.row(order[static_cast<std::size_t>(start + i)]);
                yb.row(i) = Y.row(order[static_cast<std::size_t>(start + i)]);
            }
            auto [loss, grads] = loss_and_gradients(net, xb, yb);
            if (!std::isfinite(loss)) throw TrainingDiverged(epoch);
            adam.step(net, grads, opt, lr);
            if (net.kind == NetworkKind::icnn) project_nonnegative(net);
#ifndef NDEBUG
            assert(net.kind != NetworkKind::icnn || net.weights_nonnegative());
#endif
        }
        const double train_loss = mse(net, X, Y);
        if (!std::isfinite(train_loss)) throw TrainingDiverged(epoch);
        hist.train_mse.push_back(train_loss);
        if (Xval.rows() > 0) hist.val_mse.push_back(mse(net, Xval, Yval));
    }
    return hist;
}

} // namespace icmpc::nn
