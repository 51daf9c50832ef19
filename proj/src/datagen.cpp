#include "icmpc/datagen.hpp"

namespace icmpc::plant {

std::vector<Dataset> generate_openloop_dataset(const PlantSim& plant, const OpenLoopSpec& spec)
{
    if (!spec.x_box.valid() || !spec.u_box.valid())
        throw std::invalid_argument("generate_openloop_dataset: degenerate sampling box");
    if (spec.n_traj < 1 || spec.horizon < 1)
        throw std::invalid_argument("generate_openloop_dataset: n_traj and horizon must be >= 1");

    const int n = spec.x_box.dim();
    const int m = spec.u_box.dim();
    const int K = spec.horizon;
    const Box keep = spec.x_box.scaled_about_center(spec.trunc_factor);

    // rows per k, collected then packed
    std::vector<std::vector<Vec>> samples(K);
    std::vector<std::vector<Vec>> labels(K);

    Rng rng(spec.seed);
    for (int traj = 0; traj < spec.n_traj; ++traj) {
        Vec x0 = spec.x_box.sample(rng);
        Mat held(K, m);
        for (int k = 0; k < K; ++k) held.row(k) = spec.u_box.sample(rng).transpose();

        Vec x = x0;
        for (int k = 0; k < K; ++k) {
            x = plant.advance(x, held.row(k).transpose(), spec.dt);
            if (!keep.contains(x)) break; // truncate the rest of this trajectory
            Vec row(n + (k + 1) * m);
            row.head(n) = x0;
            for (int j = 0; j <= k; ++j) row.segment(n + j * m, m) = held.row(j).transpose();
            samples[k].push_back(std::move(row));
            labels[k].push_back(x);
        }
    }

    std::vector<Dataset> out;
    for (int k = 0; k < K; ++k) {
        Dataset d;
        d.state_dim = n;
        d.input_dim = m;
        d.hold_steps = k + 1;
        d.samples.resize(static_cast<Eigen::Index>(samples[k].size()), n + (k + 1) * m);
        d.labels.resize(static_cast<Eigen::Index>(labels[k].size()), n);
        for (std::size_t r = 0; r < samples[k].size(); ++r) {
            d.samples.row(static_cast<Eigen::Index>(r)) = samples[k][r].transpose();
            d.labels.row(static_cast<Eigen::Index>(r)) = labels[k][r].transpose();
        }
        out.push_back(std::move(d));
    }
    return out;
}

} // namespace icmpc::plant
