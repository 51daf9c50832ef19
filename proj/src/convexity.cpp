#include "icmpc/convexity.hpp"

namespace icmpc::nn {

ConvexityReport certify_convexity(const Network& net, const Box& domain, int n_pairs, double tol,
                                  std::uint64_t seed)
{
    if (n_pairs < 1) throw std::invalid_argument("certify_convexity: n_pairs must be >= 1");
    if (!domain.valid()) throw std::invalid_argument("certify_convexity: empty domain");
    if (domain.dim() != net.input_dim)
        throw std::invalid_argument("certify_convexity: domain dim != input dim");

    ConvexityReport rep;
    rep.n_pairs = n_pairs;
    rep.tol = tol;
    rep.weights_ok = net.weights_nonnegative();
    rep.activations_ok = net.activations_convex_nondecreasing();
    rep.worst_violation = -std::numeric_limits<double>::infinity();

    Rng rng(seed);
    for (int p = 0; p < n_pairs; ++p) {
        Vec a = domain.sample(rng);
        Vec b = domain.sample(rng);
        Vec fm = net.forward(0.5 * (a + b));
        Vec avg = 0.5 * (net.forward(a) + net.forward(b));
        double v = (fm - avg).maxCoeff();
        if (v > rep.worst_violation) {
            rep.worst_violation = v;
            rep.witness_a = a;
            rep.witness_b = b;
        }
    }
    rep.pass = rep.weights_ok && rep.activations_ok && rep.worst_violation <= tol;
    return rep;
}

} // namespace icmpc::nn
