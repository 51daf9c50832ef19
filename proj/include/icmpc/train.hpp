#pragma once

#include "icmpc/network.hpp"

#include <vector>

namespace icmpc::nn {

struct TrainOptions {
    double lr = 1e-3;
    int epochs = 200;
    int batch = 128;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool cosine_decay = true; // decay lr to lr/10 over the run
};

struct TrainHistory {
    std::vector<double> train_mse; // one entry per epoch, evaluated after the epoch
    std::vector<double> val_mse;   // empty when no validation split given
};

struct TrainingDiverged : std::runtime_error {
    int epoch;
    explicit TrainingDiverged(int e)
        : std::runtime_error("training diverged (NaN loss) at epoch " + std::to_string(e)), epoch(e)
    {
    }
};

/// Per-layer gradient of the mean-squared-error loss.
struct Gradients {
    std::vector<Mat> w_z;
    std::vector<Mat> w_s;
    std::vector<Vec> b;
};

/// MSE = mean over all batch elements and output components of (pred - y)^2.
double mse(const Network& net, const Mat& X, const Mat& Y);

/// Reverse-mode gradients for the fixed topology; exposed for the
/// finite-difference checks.
std::pair<double, Gradients> loss_and_gradients(const Network& net, const Mat& X, const Mat& Y);

/// Minibatch Adam. For icnn networks the non-negativity projection runs
/// after every optimizer step. Deterministic for a fixed seed.
TrainHistory train(Network& net, const Mat& X, const Mat& Y, const Mat& Xval, const Mat& Yval,
                   const TrainOptions& opt);

} // namespace icmpc::nn
