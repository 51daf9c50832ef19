#include "icmpc/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <sstream>

namespace icmpc::pipeline {

namespace fs = std::filesystem;

plant::PlantSim plant_from_config(const Config& cfg)
{
    plant::PlantSim p;
    const std::string kind = cfg.get_str("plant.kind");
    if (kind == "cstr")
        p.kind = plant::PlantKind::cstr;
    else if (kind == "toy")
        p.kind = plant::PlantKind::toy;
    else
        throw cfg::ConfigError("plant.kind must be cstr or toy, got '" + kind + "'");
    p.substeps = cfg.get_int("plant.substeps");
    if (p.substeps < 1) throw cfg::ConfigError("plant.substeps must be >= 1");
    p.cstr.Ea = cfg.get_double("plant.cstr.Ea");
    p.cstr.V = cfg.get_double("plant.cstr.V");
    p.cstr.F = cfg.get_double("plant.cstr.F");
    p.cstr.R = cfg.get_double("plant.cstr.R");
    p.cstr.T0 = cfg.get_double("plant.cstr.T0");
    p.cstr.CA0s = cfg.get_double("plant.cstr.CA0s");
    p.cstr.CAs = cfg.get_double("plant.cstr.CAs");
    p.cstr.Qs = cfg.get_double("plant.cstr.Qs");
    p.cstr.Ts = cfg.get_double("plant.cstr.Ts");
    p.cstr.dH = cfg.get_double("plant.cstr.dH");
    p.cstr.Cp = cfg.get_double("plant.cstr.Cp");
    p.cstr.rho = cfg.get_double("plant.cstr.rho");
    p.cstr.k0 = cfg.get_double("plant.cstr.k0");
    return p;
}

namespace {

Box box_from_config(const Config& cfg, const std::string& lo_key, const std::string& hi_key)
{
    const Vec lo = cfg.get_vec(lo_key);
    const Vec hi = cfg.get_vec(hi_key);
    if (lo.size() != hi.size())
        throw cfg::ConfigError(lo_key + " and " + hi_key + " must have the same length");
    if (!(lo.array() < hi.array()).all())
        throw cfg::ConfigError(lo_key + "/" + hi_key + ": lower corner must be below upper corner");
    return Box(lo, hi);
}

} // namespace

plant::OpenLoopSpec openloop_spec_from_config(const Config& cfg)
{
    plant::OpenLoopSpec spec;
    spec.x_box = box_from_config(cfg, "data.x_lo", "data.x_hi");
    spec.u_box = box_from_config(cfg, "data.u_lo", "data.u_hi");
    spec.n_traj = cfg.get_int("data.n_traj");
    spec.horizon = cfg.get_int("data.horizon");
    spec.dt = cfg.get_double("mpc.dt");
    spec.seed = cfg.get_u64("run.seed");
    spec.trunc_factor = cfg.get_double("data.trunc_factor");
    if (spec.n_traj < 1) throw cfg::ConfigError("data.n_traj must be >= 1");
    if (spec.horizon < 1) throw cfg::ConfigError("data.horizon must be >= 1");
    return spec;
}

pwl::ApproxConfig approx_from_config(const Config& cfg)
{
    pwl::ApproxConfig a;
    a.error_bound = cfg.get_double("approx.error_bound");
    a.min_edge = cfg.get_double("approx.min_edge");
    a.samples_per_dim = cfg.get_int("approx.samples_per_dim");
    a.max_samples = cfg.get_int("approx.max_samples");
    a.bound_margin = cfg.get_double("approx.bound_margin");
    a.seed = cfg.get_u64("approx.seed");
    a.threads = cfg.get_int("run.threads");
    return a;
}

sim::MpcConfig mpc_from_config(const Config& cfg)
{
    sim::MpcConfig m;
    m.np = cfg.get_int("mpc.np");
    m.m_diag = cfg.get_vec("mpc.m_diag");
    m.n_diag = cfg.get_vec("mpc.n_diag");
    m.u_box = box_from_config(cfg, "mpc.u_lo", "mpc.u_hi");
    m.dt = cfg.get_double("mpc.dt");
    m.budget_s = cfg.get_double("mpc.budget_s");
    m.steps = cfg.get_int("mpc.steps");
    const std::string mode = cfg.get_str("mpc.mode");
    if (mode == "exhaustive")
        m.mode = miqp::Mode::exhaustive;
    else if (mode == "greedy")
        m.mode = miqp::Mode::greedy;
    else
        throw cfg::ConfigError("mpc.mode must be exhaustive or greedy, got '" + mode + "'");
    m.conv_band = cfg.get_double("mpc.conv_band");
    m.halt_factor = cfg.get_double("mpc.halt_factor");
    m.threads = cfg.get_int("run.threads");
    try {
        m.validate();
    } catch (const std::exception& e) {
        throw cfg::ConfigError(std::string("mpc config: ") + e.what());
    }
    return m;
}

std::string data_dir(const Config& cfg) { return cfg.get_str("run.out_dir") + "/data"; }
std::string models_dir(const Config& cfg) { return cfg.get_str("run.out_dir") + "/models"; }
std::string regions_dir(const Config& cfg) { return cfg.get_str("run.out_dir") + "/regions"; }
std::string sim_dir(const Config& cfg) { return cfg.get_str("run.out_dir") + "/sim"; }

std::string dataset_path(const Config& cfg, int k, bool abs_variant)
{
    return data_dir(cfg) + "/step" + std::to_string(k) + (abs_variant ? "_abs" : "") + ".csv";
}

std::string model_path(const Config& cfg, const std::string& family, int k)
{
    return models_dir(cfg) + "/" + family + "_k" + std::to_string(k) + ".json";
}

std::string regions_path(const Config& cfg, const std::string& family)
{
    return regions_dir(cfg) + "/" + family + ".json";
}

void prepare_out_dir(const Config& cfg)
{
    const std::string out = cfg.get_str("run.out_dir");
    fs::create_directories(out);
    fs::create_directories(data_dir(cfg));
    fs::create_directories(models_dir(cfg));
    fs::create_directories(regions_dir(cfg));
    fs::create_directories(sim_dir(cfg));
    cfg.echo_to(out + "/effective.cfg");
}

void run_gen_data(const Config& cfg)
{
    prepare_out_dir(cfg);
    const auto plant = plant_from_config(cfg);
    const auto spec = openloop_spec_from_config(cfg);
    auto datasets = plant::generate_openloop_dataset(plant, spec);
    for (int k = 1; k <= spec.horizon; ++k) {
        auto& d = datasets[static_cast<std::size_t>(k - 1)];
        d.write_csv(dataset_path(cfg, k, false));
        d.abs_labels().write_csv(dataset_path(cfg, k, true));
        std::printf("gen-data: step %d: %d rows -> %s\n", k, d.rows(),
                    dataset_path(cfg, k, false).c_str());
    }
}

namespace {

std::vector<int> hidden_from_config(const Config& cfg)
{
    const Vec h = cfg.get_vec("train.hidden");
    std::vector<int> out;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        if (h[i] < 1 || h[i] != std::floor(h[i]))
            throw cfg::ConfigError("train.hidden must be positive integers");
        out.push_back(static_cast<int>(h[i]));
    }
    return out;
}

/// Symmetric feature scaler over (x, u_0..u_{k-1}) from the configured boxes.
MinMaxScaler feature_scaler(const Box& x_box, const Box& u_box, int k)
{
    Vec hx = x_box.lo.cwiseAbs().cwiseMax(x_box.hi.cwiseAbs());
    Vec hu = u_box.lo.cwiseAbs().cwiseMax(u_box.hi.cwiseAbs());
    Vec h(hx.size() + k * hu.size());
    h.head(hx.size()) = hx;
    for (int j = 0; j < k; ++j) h.segment(hx.size() + j * hu.size(), hu.size()) = hu;
    return MinMaxScaler(-h, h);
}

struct TrainedModel {
    nn::Network net;
    nn::TrainHistory history;
    double test_mse = 0;
};

TrainedModel train_one(const Config& cfg, const Dataset& raw, bool abs_targets, int k,
                       const Box& x_box, const Box& u_box)
{
    Dataset data = abs_targets ? raw.abs_labels() : raw;
    const Vec split = cfg.get_vec("train.split");
    if (split.size() != 3 || split.sum() > 1.0 + 1e-9)
        throw cfg::ConfigError("train.split must be three fractions summing to at most 1");
    data.assign_splits(split[0], split[1], cfg.get_u64("train.seed") + static_cast<std::uint64_t>(k));

    const MinMaxScaler in_scaler = feature_scaler(x_box, u_box, k);
    // labels scaled by the symmetric hull of the data (abs labels then land
    // in [0, 1] and the origin stays at the origin)
    const MinMaxScaler out_scaler = MinMaxScaler::fit_symmetric(data.labels);

    const Mat Xtr = in_scaler.forward_rows(data.samples_of(Split::train));
    const Mat Ytr = out_scaler.forward_rows(data.labels_of(Split::train));
    const Mat Xval = in_scaler.forward_rows(data.samples_of(Split::val));
    const Mat Yval = out_scaler.forward_rows(data.labels_of(Split::val));
    const Mat Xte = in_scaler.forward_rows(data.samples_of(Split::test));
    const Mat Yte = out_scaler.forward_rows(data.labels_of(Split::test));

    TrainedModel tm;
    tm.net = nn::make_network(abs_targets ? nn::NetworkKind::icnn : nn::NetworkKind::fnn,
                              data.sample_dim(), hidden_from_config(cfg), data.state_dim,
                              abs_targets, cfg.get_u64("train.seed") * 1000003ull +
                                                static_cast<std::uint64_t>(k));
    tm.net.step_index = k;
    tm.net.input_scaler = in_scaler;
    tm.net.output_scaler = out_scaler;

    nn::TrainOptions opt;
    opt.lr = cfg.get_double("train.lr");
    opt.epochs = cfg.get_int("train.epochs");
    opt.batch = cfg.get_int("train.batch");
    opt.seed = cfg.get_u64("train.seed") + 7919ull * static_cast<std::uint64_t>(k);
    tm.history = nn::train(tm.net, Xtr, Ytr, Xval, Yval, opt);

    tm.net.label_scaled_min = Ytr.colwise().minCoeff();
    tm.net.label_scaled_max = Ytr.colwise().maxCoeff();
    tm.test_mse = Xte.rows() > 0 ? nn::mse(tm.net, Xte, Yte) : 0.0;
    return tm;
}

void write_loss_csv(const nn::TrainHistory& h, const std::string& path)
{
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open " + path);
    std::fprintf(f, "epoch,train_mse,val_mse\n");
    for (std::size_t e = 0; e < h.train_mse.size(); ++e)
        std::fprintf(f, "%zu,%.17g,%.17g\n", e, h.train_mse[e],
                     e < h.val_mse.size() ? h.val_mse[e] : -1.0);
    std::fclose(f);
}

} // namespace

void run_train(const Config& cfg)
{
    prepare_out_dir(cfg);
    const int K = cfg.get_int("data.horizon");
    const Box x_box = box_from_config(cfg, "data.x_lo", "data.x_hi");
    const Box u_box = box_from_config(cfg, "data.u_lo", "data.u_hi");
    const bool do_icnn = cfg.get_bool("train.icnn");
    const bool do_fnn = cfg.get_bool("train.fnn");
    const int threads = cfg.get_int("run.threads");

    struct Job {
        std::string family;
        int k;
        bool abs_targets;
    };
    std::vector<Job> jobs;
    for (int k = 1; k <= K; ++k) {
        if (do_icnn) jobs.push_back({"icnn", k, true});
        if (do_fnn) jobs.push_back({"fnn", k, false});
    }

    auto run_job = [&](const Job& job) {
        const std::string path = dataset_path(cfg, job.k, job.abs_targets);
        if (!fs::exists(path))
            throw cfg::ConfigError("missing dataset '" + path + "' (run gen-data first)");
        Dataset raw = Dataset::read_csv(path);
        TrainedModel tm = train_one(cfg, raw, job.abs_targets, job.k, x_box, u_box);
        nn::save_network(tm.net, model_path(cfg, job.family, job.k));
        write_loss_csv(tm.history,
                       models_dir(cfg) + "/loss_" + job.family + "_k" + std::to_string(job.k) + ".csv");
        std::printf("train: %s_k%d  final train MSE %.3e  test MSE %.3e\n", job.family.c_str(), job.k,
                    tm.history.train_mse.back(), tm.test_mse);
    };

    if (threads > 1) {
        // horizon models are independent; train them as parallel jobs
        std::vector<std::future<void>> futs;
        for (const auto& job : jobs)
            futs.push_back(std::async(std::launch::async, run_job, job));
        for (auto& f : futs) f.get();
    } else {
        for (const auto& job : jobs) run_job(job);
    }
}

nn::SurrogateStack load_stack(const Config& cfg, const std::string& family)
{
    const int np = cfg.get_int("mpc.np");
    std::vector<nn::Network> models;
    for (int k = 1; k <= np; ++k) {
        const std::string path = model_path(cfg, family, k);
        if (!fs::exists(path))
            throw cfg::ConfigError("missing model '" + path + "' (run train first)");
        models.push_back(nn::load_network(path));
    }
    const int n = models.front().output_dim;
    const int m = (models.front().input_dim - n);
    return nn::SurrogateStack::from_models(std::move(models), n, m);
}

void run_build_regions(const Config& cfg)
{
    prepare_out_dir(cfg);
    const auto approx = approx_from_config(cfg);
    for (const std::string& family : cfg.get_list("approx.families")) {
        auto stack = load_stack(cfg, family);
        auto tree = pwl::build_region_tree(stack, approx);
        tree.save(regions_path(cfg, family));
        pwl::write_stats_csv(tree, regions_dir(cfg) + "/" + family + "_stats.csv");
        const auto stats = pwl::tree_stats(tree);
        std::printf("build-regions: %s: %d leaves, depth %d, %d saturated\n", family.c_str(),
                    stats.leaf_count, stats.depth, stats.saturated_count);
    }
}

std::unique_ptr<sim::ExplicitController> make_controller(const Config& cfg, const std::string& family)
{
    auto stack = load_stack(cfg, family);
    const std::string path = regions_path(cfg, family);
    if (!fs::exists(path))
        throw cfg::ConfigError("missing region tree '" + path + "' (run build-regions first)");
    auto tree = pwl::RegionTree::load(path);
    return std::make_unique<sim::ExplicitController>(std::move(stack), std::move(tree),
                                                     mpc_from_config(cfg), family);
}

sim::TrajectoryLog run_simulate(const Config& cfg)
{
    prepare_out_dir(cfg);
    const auto plant = plant_from_config(cfg);
    auto controller = make_controller(cfg, "icnn");
    const Vec x0 = cfg.get_vec("sim.x0");
    auto log = sim::run_closed_loop(plant, *controller, x0, mpc_from_config(cfg));
    log.write_csv(sim_dir(cfg) + "/trajectory.csv");
    log.write_summary_csv(sim_dir(cfg) + "/summary.csv");
    std::printf("simulate: %zu steps, converged=%d halted=%d iae=%.6g\n", log.rows.size(),
                log.converged ? 1 : 0, log.halted ? 1 : 0, log.iae_total);
    return log;
}

namespace {

std::vector<Vec> x0_set_from_config(const Config& cfg)
{
    std::vector<Vec> out;
    std::stringstream ss(cfg.get_str("sim.x0_set"));
    std::string tok;
    while (std::getline(ss, tok, ';')) {
        std::vector<double> vals;
        std::stringstream vs(tok);
        std::string num;
        while (std::getline(vs, num, ',')) vals.push_back(std::stod(num));
        Vec v(static_cast<Eigen::Index>(vals.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = vals[static_cast<std::size_t>(i)];
        out.push_back(v);
    }
    if (out.empty()) throw cfg::ConfigError("sim.x0_set: no initial states");
    return out;
}

} // namespace

std::vector<sim::CompareRow> run_compare(const Config& cfg)
{
    prepare_out_dir(cfg);
    const auto plant = plant_from_config(cfg);
    const auto mpc = mpc_from_config(cfg);

    std::vector<std::unique_ptr<sim::Controller>> owned;
    for (const std::string& name : cfg.get_list("sim.stacks")) {
        if (name == "openloop") {
            // reuse the icnn models' scaling for the halt/convergence bands
            auto stack = load_stack(cfg, "icnn");
            owned.push_back(std::make_unique<sim::ZeroController>(stack.m, stack.state_scale()));
        } else {
            owned.push_back(make_controller(cfg, name));
        }
    }
    std::vector<sim::Controller*> stacks;
    for (auto& c : owned) stacks.push_back(c.get());

    auto rows = sim::compare_controllers(plant, stacks, x0_set_from_config(cfg), mpc);
    sim::write_compare_csv(rows, cfg.get_str("run.out_dir") + "/compare.csv");
    for (const auto& r : rows)
        std::printf("compare: %-10s x0=(%.3g,%.3g) converged=%d iae=%.6g max_solve=%.3gs budget_viol=%d\n",
                    r.controller.c_str(), r.x0[0], r.x0[1], r.converged ? 1 : 0, r.iae_total,
                    r.max_solve_s, r.budget_violations);
    return rows;
}

void run_surface(const Config& cfg)
{
    prepare_out_dir(cfg);
    const std::string stem = cfg.get_str("surface.model");
    const std::string path = models_dir(cfg) + "/" + stem + ".json";
    if (!fs::exists(path)) throw cfg::ConfigError("missing model '" + path + "'");
    nn::Network net = nn::load_network(path);
    const int n = net.output_dim;
    const int m = net.input_dim - n;
    auto stack = nn::SurrogateStack::from_models({std::move(net)}, n, m);

    nn::GridSpec grid;
    grid.u_box = box_from_config(cfg, "surface.u_lo", "surface.u_hi");
    grid.points_per_axis = cfg.get_int("surface.points");
    auto pts = nn::objective_surface(stack, cfg.get_vec("surface.x"), grid,
                                     cfg.get_vec("surface.m_diag"), cfg.get_vec("surface.n_diag"));
    nn::write_surface_csv(pts, cfg.get_str("run.out_dir") + "/surface.csv");
    std::printf("surface: %zu grid points -> %s/surface.csv\n", pts.size(),
                cfg.get_str("run.out_dir").c_str());
}

bridge::Endpoint endpoint_from_config(const Config& cfg)
{
    const char* env = std::getenv("ICMPC_ENDPOINT");
    return bridge::Endpoint::parse(env ? env : cfg.get_str("bridge.endpoint"));
}

void run_serve(const Config& cfg)
{
    const auto plant = plant_from_config(cfg);
    const auto ep = endpoint_from_config(cfg);
    std::printf("serve: plant server on %s (until a client sends bye)\n", ep.str().c_str());
    bridge::serve_plant(plant, ep, cfg.get_double("mpc.dt"));
}

bridge::BridgeRunResult run_bridge(const Config& cfg)
{
    prepare_out_dir(cfg);
    auto controller = make_controller(cfg, "icnn");
    bridge::BridgeClientConfig bcfg;
    bcfg.request_timeout_s = cfg.get_double("bridge.timeout_s");
    auto result = bridge::bridge_client_loop(endpoint_from_config(cfg), *controller,
                                             cfg.get_vec("sim.x0"), mpc_from_config(cfg), bcfg);
    result.log.write_csv(sim_dir(cfg) + "/bridge_trajectory.csv");
    result.log.write_summary_csv(sim_dir(cfg) + "/bridge_summary.csv");
    if (result.protocol_error)
        std::fprintf(stderr, "bridge-run: protocol error: %s\n", result.error.c_str());
    else
        std::printf("bridge-run: %zu steps, converged=%d\n", result.log.rows.size(),
                    result.log.converged ? 1 : 0);
    return result;
}

} // namespace icmpc::pipeline
