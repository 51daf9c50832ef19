#include "icmpc/bridge.hpp"

#include <json.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstring>

namespace icmpc::bridge {

using nlohmann::json;

Endpoint Endpoint::parse(const std::string& text)
{
    const auto colon = text.rfind(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("endpoint must be host:port, got '" + text + "'");
    Endpoint ep;
    ep.host = text.substr(0, colon);
    ep.port = std::stoi(text.substr(colon + 1));
    if (ep.host.empty() || ep.port < 0 || ep.port > 65535)
        throw std::invalid_argument("invalid endpoint '" + text + "'");
    return ep;
}

namespace {

constexpr std::size_t kMaxLine = 1 << 20;

struct LineSocket {
    int fd = -1;
    std::string buffer;

    explicit LineSocket(int f) : fd(f) {}
    LineSocket(const LineSocket&) = delete;
    LineSocket& operator=(const LineSocket&) = delete;
    LineSocket(LineSocket&& o) noexcept : fd(o.fd), buffer(std::move(o.buffer)) { o.fd = -1; }
    ~LineSocket()
    {
        if (fd >= 0) ::close(fd);
    }

    /// Reads one LF-terminated line. Returns false on EOF/timeout/error.
    /// Over-long lines are discarded up to the next LF and returned as a
    /// sentinel so the peer still gets exactly one reply.
    bool read_line(std::string& out, double timeout_s, bool* too_long = nullptr)
    {
        if (too_long) *too_long = false;
        while (true) {
            const auto nl = buffer.find('\n');
            if (nl != std::string::npos) {
                out = buffer.substr(0, nl);
                buffer.erase(0, nl + 1);
                if (!out.empty() && out.back() == '\r') out.pop_back();
                return true;
            }
            if (buffer.size() > kMaxLine) {
                // drop until newline arrives
                buffer.clear();
                std::string rest;
                if (!read_line(rest, timeout_s)) return false;
                out.clear();
                if (too_long) *too_long = true;
                return true;
            }
            struct pollfd pfd{fd, POLLIN, 0};
            const int timeout_ms = timeout_s < 0 ? -1 : static_cast<int>(timeout_s * 1000);
            const int pr = ::poll(&pfd, 1, timeout_ms);
            if (pr <= 0) return false;
            char chunk[4096];
            const ssize_t got = ::recv(fd, chunk, sizeof chunk, 0);
            if (got <= 0) return false;
            buffer.append(chunk, static_cast<std::size_t>(got));
        }
    }

    bool write_line(const std::string& line)
    {
        std::string payload = line + "\n";
        std::size_t sent = 0;
        while (sent < payload.size()) {
            const ssize_t w = ::send(fd, payload.data() + sent, payload.size() - sent, MSG_NOSIGNAL);
            if (w <= 0) return false;
            sent += static_cast<std::size_t>(w);
        }
        return true;
    }
};

json error_reply(const std::string& msg)
{
    return json{{"ok", false}, {"err", msg}};
}

json vec_to_json(const Vec& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

int tcp_connect(const Endpoint& ep, double timeout_s)
{
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error("bridge: socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(ep.port));
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw std::runtime_error("bridge: cannot resolve host '" + ep.host + "'");
    }
    (void)timeout_s;
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        throw std::runtime_error("bridge: cannot connect to " + ep.str());
    }
    return fd;
}

} // namespace

PlantServer::PlantServer(plant::PlantSim plant, double default_dt)
    : plant_(std::move(plant)), default_dt_(default_dt)
{
    reset_session();
}

PlantServer::~PlantServer()
{
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void PlantServer::reset_session()
{
    session_.x = Vec::Zero(plant_.state_dim());
    session_.u = Vec::Zero(plant_.input_dim());
    session_.t = 0;
    session_.hello_done = false;
}

void PlantServer::bind(const Endpoint& ep)
{
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("bridge: socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(ep.port));
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
        throw std::runtime_error("bridge: bad bind host '" + ep.host + "'");
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw std::runtime_error("bridge: cannot bind " + ep.str());
    if (::listen(listen_fd_, 1) != 0) throw std::runtime_error("bridge: listen failed");
    sockaddr_in got{};
    socklen_t len = sizeof got;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&got), &len);
    port_ = ntohs(got.sin_port);
}

std::string PlantServer::handle_line(const std::string& line)
{
    json req;
    try {
        req = json::parse(line);
    } catch (const json::exception&) {
        return error_reply("parse error: not a JSON object").dump();
    }
    if (!req.is_object()) return error_reply("request must be a JSON object").dump();
    if (!req.contains("op") || !req["op"].is_string()) return error_reply("missing op").dump();
    const std::string op = req["op"].get<std::string>();

    const int n = plant_.state_dim();
    const int mdim = plant_.input_dim();
    auto var_index = [&](const std::string& name, bool& is_state) -> int {
        for (int i = 0; i < n; ++i)
            if (name == "x" + std::to_string(i + 1)) {
                is_state = true;
                return i;
            }
        for (int i = 0; i < mdim; ++i)
            if (name == "u" + std::to_string(i + 1)) {
                is_state = false;
                return i;
            }
        return -1;
    };

    try {
        if (op == "hello") {
            if (!req.contains("version") || !req["version"].is_number_integer())
                return error_reply("hello requires integer version").dump();
            if (req["version"].get<int>() != kProtocolVersion)
                return error_reply("unsupported version " + std::to_string(req["version"].get<int>()))
                    .dump();
            session_.hello_done = true;
            json vars = json::array();
            for (int i = 0; i < n; ++i)
                vars.push_back({{"name", "x" + std::to_string(i + 1)}, {"role", "state"}});
            for (int i = 0; i < mdim; ++i)
                vars.push_back({{"name", "u" + std::to_string(i + 1)}, {"role", "input"}});
            return json{{"ok", true}, {"version", kProtocolVersion}, {"vars", vars}, {"t", session_.t}}
                .dump();
        }
        if (op == "get") {
            if (!req.contains("names") || !req["names"].is_array())
                return error_reply("get requires names array").dump();
            json values = json::array();
            for (const auto& jn : req["names"]) {
                if (!jn.is_string()) return error_reply("names must be strings").dump();
                bool is_state = false;
                const int idx = var_index(jn.get<std::string>(), is_state);
                if (idx < 0) return error_reply("unknown variable '" + jn.get<std::string>() + "'").dump();
                values.push_back(is_state ? session_.x[idx] : session_.u[idx]);
            }
            return json{{"ok", true}, {"values", values}}.dump();
        }
        if (op == "set") {
            if (!req.contains("name") || !req["name"].is_string() || !req.contains("value") ||
                !req["value"].is_number())
                return error_reply("set requires name and numeric value").dump();
            const double value = req["value"].get<double>();
            if (!std::isfinite(value)) return error_reply("value must be finite").dump();
            bool is_state = false;
            const int idx = var_index(req["name"].get<std::string>(), is_state);
            if (idx < 0)
                return error_reply("unknown variable '" + req["name"].get<std::string>() + "'").dump();
            (is_state ? session_.x[idx] : session_.u[idx]) = value;
            return json{{"ok", true}}.dump();
        }
        if (op == "step") {
            double dt = default_dt_;
            if (req.contains("dt")) {
                if (!req["dt"].is_number()) return error_reply("dt must be numeric").dump();
                dt = req["dt"].get<double>();
            }
            if (!(dt > 0) || !std::isfinite(dt)) return error_reply("dt must be positive").dump();
            session_.x = plant_.advance(session_.x, session_.u, dt);
            session_.t += dt;
            return json{{"ok", true}, {"t", session_.t}, {"state", vec_to_json(session_.x)}}.dump();
        }
        if (op == "bye") {
            bye_ = true;
            return json{{"ok", true}}.dump();
        }
    } catch (const std::exception& e) {
        return error_reply(std::string("plant error: ") + e.what()).dump();
    }
    return error_reply("unknown op '" + op + "'").dump();
}

void PlantServer::run()
{
    if (listen_fd_ < 0) throw std::logic_error("PlantServer: bind() first");
    bye_ = false;
    while (!bye_) {
        const int client = ::accept(listen_fd_, nullptr, nullptr);
        if (client < 0) throw std::runtime_error("bridge: accept failed");
        LineSocket sock(client);
        reset_session();
        std::string line;
        bool too_long = false;
        while (!bye_ && sock.read_line(line, -1, &too_long)) {
            const std::string reply =
                too_long ? error_reply("line too long").dump() : handle_line(line);
            if (!sock.write_line(reply)) break; // transport error: tear down session
        }
        // session state is discarded on the next accept
    }
}

void serve_plant(const plant::PlantSim& plant, const Endpoint& ep, double default_dt)
{
    PlantServer server(plant, default_dt);
    server.bind(ep);
    server.run();
}

namespace {

struct BridgeClient {
    LineSocket sock;
    double timeout_s;

    BridgeClient(int fd, double timeout) : sock(fd), timeout_s(timeout) {}

    json request(const json& req)
    {
        if (!sock.write_line(req.dump())) throw std::runtime_error("bridge: send failed");
        std::string line;
        if (!sock.read_line(line, timeout_s)) throw std::runtime_error("bridge: reply timeout");
        json reply = json::parse(line, nullptr, false);
        if (reply.is_discarded() || !reply.is_object())
            throw std::runtime_error("bridge: malformed reply");
        if (!reply.value("ok", false))
            throw std::runtime_error("bridge: server error: " + reply.value("err", "unknown"));
        return reply;
    }
};

} // namespace

BridgeRunResult bridge_client_loop(const Endpoint& ep, sim::Controller& controller, const Vec& x0,
                                   const sim::MpcConfig& cfg, const BridgeClientConfig& bcfg)
{
    cfg.validate();
    BridgeRunResult result;
    const Vec scale = controller.state_scale();
    const int n = static_cast<int>(x0.size());

    try {
        BridgeClient client(tcp_connect(ep, bcfg.request_timeout_s), bcfg.request_timeout_s);
        json hello = client.request({{"op", "hello"}, {"version", kProtocolVersion}});
        if (hello.value("version", -1) != kProtocolVersion)
            throw std::runtime_error("bridge: version mismatch");

        // place the plant at the initial condition
        for (int i = 0; i < n; ++i)
            client.request({{"op", "set"}, {"name", "x" + std::to_string(i + 1)}, {"value", x0[i]}});

        json names = json::array();
        for (int i = 0; i < n; ++i) names.push_back("x" + std::to_string(i + 1));
        json got = client.request({{"op", "get"}, {"names", names}});
        Vec x(n);
        for (int i = 0; i < n; ++i) x[i] = got["values"][static_cast<std::size_t>(i)].get<double>();

        result.log.dt = cfg.dt;
        result.log.iae_per_state = Vec::Zero(n);
        for (int step = 0; step < cfg.steps; ++step) {
            if (x.cwiseQuotient(scale).cwiseAbs().maxCoeff() > cfg.halt_factor) {
                result.log.halted = true;
                break;
            }
            const auto t_start = miqp::Clock::now();
            miqp::Deadline deadline(t_start + std::chrono::duration_cast<miqp::Clock::duration>(
                                                  std::chrono::duration<double>(cfg.budget_s)));
            sim::StepDecision d = controller.decide(x, deadline);
            const double wall = std::chrono::duration<double>(miqp::Clock::now() - t_start).count();
            Vec u = cfg.u_box.clamp(d.u_phys);
            if ((u - d.u_phys).cwiseAbs().maxCoeff() > 1e-12) ++result.log.input_bound_violations;

            for (int i = 0; i < static_cast<int>(u.size()); ++i)
                client.request({{"op", "set"}, {"name", "u" + std::to_string(i + 1)}, {"value", u[i]}});
            json stepped = client.request({{"op", "step"}, {"dt", cfg.dt}});

            sim::LogRow row;
            row.step = step;
            row.t = step * cfg.dt;
            row.x = x;
            row.u = u;
            row.objective = d.objective;
            row.region_id = d.region_id;
            row.n_candidates = d.n_candidates;
            row.evaluations = d.evaluations;
            row.solve_wall_s = wall;
            row.budget_exceeded = d.budget_exceeded;
            result.log.rows.push_back(row);

            for (int i = 0; i < n; ++i) x[i] = stepped["state"][static_cast<std::size_t>(i)].get<double>();
        }
        result.log.final_state = x;
        client.request({{"op", "bye"}});

        // summary bookkeeping identical to the in-process loop
        std::vector<double> norms;
        for (const auto& row : result.log.rows)
            norms.push_back(row.x.cwiseQuotient(scale).cwiseAbs().maxCoeff());
        norms.push_back(x.cwiseQuotient(scale).cwiseAbs().maxCoeff());
        for (int i = static_cast<int>(norms.size()) - 1; i >= 0; --i) {
            if (norms[static_cast<std::size_t>(i)] < cfg.conv_band)
                result.log.steps_to_band = i;
            else
                break;
        }
        result.log.converged = !result.log.halted && result.log.steps_to_band >= 0;
        if (!result.log.rows.empty()) {
            std::vector<double> times;
            for (const auto& row : result.log.rows) times.push_back(row.t);
            times.push_back(result.log.rows.back().t + cfg.dt);
            for (int c = 0; c < n; ++c) {
                std::vector<double> vals;
                for (const auto& row : result.log.rows) vals.push_back(row.x[c]);
                vals.push_back(x[c]);
                result.log.iae_per_state[c] = sim::iae(times, vals, 0.0);
            }
            result.log.iae_total = result.log.iae_per_state.sum();
        }
    } catch (const std::exception& e) {
        result.protocol_error = true;
        result.error = e.what();
    }
    return result;
}

} // namespace icmpc::bridge
