#pragma once

#include "icmpc/loop.hpp"
#include "icmpc/plant.hpp"

#include <atomic>
#include <string>

namespace icmpc::bridge {

constexpr int kProtocolVersion = 1;

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 0;

    static Endpoint parse(const std::string& text); // "host:port"
    std::string str() const { return host + ":" + std::to_string(port); }
};

/// Single-session plant server speaking the line protocol (one JSON object
/// per line, LF-terminated; see PROTOCOL.md). State is per-session: every
/// accepted connection starts from the zero state with zero inputs.
/// run() serves sessions until a client sends bye, then returns.
class PlantServer {
public:
    PlantServer(plant::PlantSim plant, double default_dt = 0.01);
    ~PlantServer();

    PlantServer(const PlantServer&) = delete;
    PlantServer& operator=(const PlantServer&) = delete;

    /// Binds and listens; port 0 picks an ephemeral port.
    void bind(const Endpoint& ep);
    int port() const { return port_; }

    void run();

    /// Handles one already-parsed request line; exposed for protocol tests.
    std::string handle_line(const std::string& line);

private:
    struct Session {
        Vec x;
        Vec u;
        double t = 0;
        bool hello_done = false;
    };

    plant::PlantSim plant_;
    double default_dt_;
    int listen_fd_ = -1;
    int port_ = 0;
    Session session_;
    bool bye_ = false;

    void reset_session();
};

/// Convenience wrapper: bind, serve until bye.
void serve_plant(const plant::PlantSim& plant, const Endpoint& ep, double default_dt = 0.01);

struct BridgeRunResult {
    sim::TrajectoryLog log;
    bool protocol_error = false;
    std::string error;
};

struct BridgeClientConfig {
    double request_timeout_s = 5.0;
};

/// Drives a conforming plant server through the closed loop: get the state,
/// select the move, set the inputs, step one sampling period. The log has
/// the same schema as the in-process loop.
BridgeRunResult bridge_client_loop(const Endpoint& ep, sim::Controller& controller, const Vec& x0,
                                   const sim::MpcConfig& cfg, const BridgeClientConfig& bcfg = {});

} // namespace icmpc::bridge
