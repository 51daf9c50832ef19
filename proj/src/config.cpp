#include "icmpc/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace icmpc::cfg {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

} // namespace

const std::vector<KeySpec>& Config::registry()
{
    static const std::vector<KeySpec> keys = {
        {"run.out_dir", "out", "output directory for all artifacts"},
        {"run.seed", "1", "master seed for data generation"},
        {"run.threads", "1", "worker threads for tree build and candidate solves"},

        {"plant.kind", "cstr", "reference plant: cstr | toy"},
        {"plant.substeps", "10", "RK4 sub-steps per sampling period (cstr)"},
        {"plant.cstr.Ea", "5e4", "activation energy, kJ/kmol"},
        {"plant.cstr.V", "1", "reactor volume, m^3"},
        {"plant.cstr.F", "5", "feed flow rate, m^3/hr"},
        {"plant.cstr.R", "8.314", "gas constant, kJ/kmol K"},
        {"plant.cstr.T0", "300", "feed temperature, K"},
        {"plant.cstr.CA0s", "4", "steady-state feed concentration, kmol/m^3"},
        {"plant.cstr.CAs", "1.95", "steady-state concentration, kmol/m^3"},
        {"plant.cstr.Qs", "0", "steady-state heat input, kJ/hr"},
        {"plant.cstr.Ts", "402", "steady-state temperature, K"},
        {"plant.cstr.dH", "-1.15e4", "heat of reaction, kJ/kmol"},
        {"plant.cstr.Cp", "0.231", "heat capacity, kJ/kg K"},
        {"plant.cstr.rho", "1000", "liquid density, kg/m^3"},
        {"plant.cstr.k0", "8.46e6", "pre-exponential factor, m^3/kmol hr"},

        {"data.n_traj", "5000", "open-loop trajectories to simulate"},
        {"data.horizon", "2", "prediction steps K; emits one dataset per step"},
        {"data.x_lo", "-1.95,-90", "modeling box lower corner (state)"},
        {"data.x_hi", "1.95,90", "modeling box upper corner (state)"},
        {"data.u_lo", "-3.5,-5e5", "input sampling box lower corner"},
        {"data.u_hi", "3.5,5e5", "input sampling box upper corner"},
        {"data.trunc_factor", "1.2", "truncate trajectories leaving this multiple of the state box"},

        {"train.hidden", "16,16", "hidden layer widths"},
        {"train.epochs", "300", "training epochs"},
        {"train.batch", "128", "minibatch size"},
        {"train.lr", "1e-3", "Adam learning rate"},
        {"train.seed", "7", "training seed (init, shuffling, splits)"},
        {"train.split", "0.7,0.15,0.15", "train/val/test fractions"},
        {"train.icnn", "true", "train the convex (absolute-value target) family"},
        {"train.fnn", "true", "train the unconstrained exact-target family"},

        {"approx.error_bound", "0.15", "relative error bound for the affine regions"},
        {"approx.min_edge", "0.125", "minimum scaled edge length of a region"},
        {"approx.samples_per_dim", "32", "fit samples = this * (dim+1) per region"},
        {"approx.max_samples", "4096", "cap on fit samples per region"},
        {"approx.bound_margin", "0.95", "split against margin*bound for validation headroom"},
        {"approx.seed", "11", "seed for region fitting"},
        {"approx.families", "icnn,fnn", "model families to build region trees for"},
        {"approx.dump_qps", "false", "also dump every region's assembled program as CSV"},

        {"mpc.np", "2", "prediction horizon"},
        {"mpc.m_diag", "500,0.5", "state weight diagonal"},
        {"mpc.n_diag", "1,8e-11", "input weight diagonal"},
        {"mpc.u_lo", "-3.5,-5e5", "input bound lower corner"},
        {"mpc.u_hi", "3.5,5e5", "input bound upper corner"},
        {"mpc.dt", "0.01", "sampling period, hr"},
        {"mpc.budget_s", "1.0", "wall-clock compute budget per step, seconds"},
        {"mpc.steps", "20", "closed-loop steps"},
        {"mpc.mode", "exhaustive", "candidate selection: exhaustive | greedy"},
        {"mpc.conv_band", "0.1", "scaled infinity-norm convergence band"},
        {"mpc.halt_factor", "1.5", "halt when the state exits this multiple of the modeling box"},
        {"mpc.dump_selection", "false", "dump the per-step candidate table as CSV"},

        {"sim.x0", "0.9,45", "initial state for simulate/bridge-run"},
        {"sim.x0_set", "0.9,45;1.35,-65;-1.1,-90;-1.4,80", "initial states for compare (; separated)"},
        {"sim.stacks", "icnn,fnn,openloop", "controllers for compare"},

        {"bridge.endpoint", "127.0.0.1:7700", "plant server endpoint (ICMPC_ENDPOINT overrides)"},
        {"bridge.timeout_s", "5", "per-request timeout, seconds"},

        {"surface.model", "icnn_k1", "one-step model stem under <out>/models"},
        {"surface.x", "1.5,-1", "fixed state for the objective surface"},
        {"surface.u_lo", "-10,-10", "surface grid lower corner"},
        {"surface.u_hi", "10,10", "surface grid upper corner"},
        {"surface.points", "41", "grid points per axis"},
        {"surface.m_diag", "1,1", "state weight diagonal for the surface"},
        {"surface.n_diag", "0.1,0.1", "input weight diagonal for the surface"},
    };
    return keys;
}

const KeySpec& Config::spec_for(const std::string& key)
{
    for (const auto& spec : registry())
        if (key == spec.key) return spec;
    throw ConfigError("unknown config key '" + key + "'");
}

Config Config::from_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void Config::set_pair(const std::string& pair)
{
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value, got '" + pair + "'");
    set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value)
{
    spec_for(key); // throws on unknown keys
    values_[key] = value;
}

std::string Config::get_str(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it != values_.end()) return it->second;
    return spec_for(key).def;
}

double Config::get_double(const std::string& key) const
{
    const std::string s = get_str(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
    }
}

int Config::get_int(const std::string& key) const
{
    const double v = get_double(key);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw ConfigError("config key '" + key + "': expected an integer");
    return i;
}

std::uint64_t Config::get_u64(const std::string& key) const
{
    const std::string s = get_str(key);
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + s + "'");
    }
}

bool Config::get_bool(const std::string& key) const
{
    std::string s = get_str(key);
    std::transform(s.begin(), s.end(), s.begin(), ::tolower);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + s + "'");
}

Vec Config::get_vec(const std::string& key) const
{
    const std::string s = get_str(key);
    std::vector<double> vals;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            vals.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected comma-separated numbers, got '" + s + "'");
        }
    }
    if (vals.empty()) throw ConfigError("config key '" + key + "': empty vector");
    Vec v(static_cast<Eigen::Index>(vals.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = vals[static_cast<std::size_t>(i)];
    return v;
}

std::vector<std::string> Config::get_list(const std::string& key) const
{
    std::vector<std::string> out;
    std::stringstream ss(get_str(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

std::string Config::effective_text() const
{
    std::string out;
    for (const auto& spec : registry()) {
        out += spec.key;
        out += " = ";
        out += get_str(spec.key);
        out += "\n";
    }
    return out;
}

void Config::echo_to(const std::string& path) const
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write effective config to " + path);
    out << effective_text();
}

std::string Config::registry_help()
{
    std::string out = "Config keys (key = default | description):\n";
    for (const auto& spec : registry()) {
        out += "  ";
        out += spec.key;
        out += " = ";
        out += spec.def;
        out += "\n      ";
        out += spec.help;
        out += "\n";
    }
    return out;
}

} // namespace icmpc::cfg
