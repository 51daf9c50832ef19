#pragma once

#include "icmpc/scaler.hpp"
#include "icmpc/types.hpp"

#include <string>
#include <vector>

namespace icmpc::nn {

enum class Activation { relu, softplus, linear };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Pre-activation a = w_z * z + w_s * s + b. The first layer carries an
/// empty w_z (0 columns), which realizes the all-zero z_0 / W_{z,0} start of
/// the convex architecture: its pre-activation is exactly w_s * s + b.
struct Layer {
    Mat w_z; // out x prev_hidden
    Mat w_s; // out x input
    Vec b;   // out
    Activation act = Activation::relu;

    int out_dim() const { return static_cast<int>(b.size()); }
};

enum class NetworkKind { icnn, fnn };

/// Dense feedforward network with input shortcuts into every layer.
///
/// kind == icnn keeps every hidden-to-hidden weight non-negative (enforced
/// by projection after each optimizer step), which together with convex
/// non-decreasing activations makes each output a convex function of the
/// input. predicts_absolute networks end in relu, so outputs are >= 0.
struct Network {
    NetworkKind kind = NetworkKind::fnn;
    bool predicts_absolute = false;
    int input_dim = 0;
    int output_dim = 0;
    std::vector<Layer> layers;

    // pipeline metadata, serialized with the weights
    MinMaxScaler input_scaler;
    MinMaxScaler output_scaler;
    Vec label_scaled_min; // per-output range of the scaled training labels,
    Vec label_scaled_max; // used as the relative-error denominator downstream
    int step_index = 1;   // which prediction step this model serves (1-based)

    Vec forward(const Vec& s) const;
    Mat forward_rows(const Mat& s_rows) const;

    /// Batched vector-Jacobian product with respect to the inputs: given
    /// dL/d(output) per row, returns dL/d(input) per row.
    Mat input_vjp_rows(const Mat& s_rows, const Mat& dout_rows) const;

    /// Physical-unit prediction: scale input, evaluate, unscale output.
    Vec predict(const Vec& raw_input) const;

    bool weights_nonnegative(double tol = 0.0) const;
    bool activations_convex_nondecreasing() const;
};

/// Builds a network with seeded uniform init: w_s, b ~ U(+-sqrt(1/fan_in));
/// hidden-to-hidden weights start at |U(...)| so the non-negativity
/// projection is a no-op at step zero.
Network make_network(NetworkKind kind, int input_dim, const std::vector<int>& hidden,
                     int output_dim, bool predicts_absolute, std::uint64_t seed);

/// Clamps negative hidden-to-hidden weights to zero. Shortcut weights and
/// biases are untouched.
void project_nonnegative(Network& net);

double activate(Activation a, double x);
double activate_grad(Activation a, double x);

std::string to_json_string(const Network& net);
Network network_from_json_string(const std::string& text);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

} // namespace icmpc::nn
