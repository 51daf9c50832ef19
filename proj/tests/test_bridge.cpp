#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icmpc/bridge.hpp"

#include <json.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

using namespace icmpc;
using namespace icmpc::bridge;
using nlohmann::json;

namespace {

plant::PlantSim toy_sim()
{
    plant::PlantSim sim;
    sim.kind = plant::PlantKind::toy;
    return sim;
}

/// Minimal blocking client for protocol-level tests.
struct RawClient {
    int fd = -1;
    std::string buffer;

    explicit RawClient(int port)
    {
        fd = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd >= 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
        REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    }
    ~RawClient()
    {
        if (fd >= 0) ::close(fd);
    }

    void send_line(const std::string& line)
    {
        std::string payload = line + "\n";
        REQUIRE(::send(fd, payload.data(), payload.size(), MSG_NOSIGNAL) ==
                static_cast<ssize_t>(payload.size()));
    }

    std::string recv_line()
    {
        while (true) {
            auto nl = buffer.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer.substr(0, nl);
                buffer.erase(0, nl + 1);
                return line;
            }
            char chunk[4096];
            ssize_t got = ::recv(fd, chunk, sizeof chunk, 0);
            REQUIRE(got > 0);
            buffer.append(chunk, static_cast<std::size_t>(got));
        }
    }

    json request(const json& req)
    {
        send_line(req.dump());
        return json::parse(recv_line());
    }
};

struct ServerFixture {
    PlantServer server;
    std::thread thread;

    explicit ServerFixture(plant::PlantSim sim, double dt = 1.0) : server(std::move(sim), dt)
    {
        server.bind(Endpoint{"127.0.0.1", 0});
        thread = std::thread([this] { server.run(); });
    }
    ~ServerFixture()
    {
        if (thread.joinable()) thread.join();
    }
};

} // namespace

TEST_CASE("handshake returns version and variable registry")
{
    ServerFixture fx(toy_sim());
    RawClient client(fx.server.port());
    json reply = client.request({{"op", "hello"}, {"version", kProtocolVersion}});
    CHECK(reply["ok"] == true);
    CHECK(reply["version"] == kProtocolVersion);
    REQUIRE(reply["vars"].size() == 4);
    CHECK(reply["vars"][0]["name"] == "x1");
    CHECK(reply["vars"][0]["role"] == "state");
    CHECK(reply["vars"][2]["name"] == "u1");
    CHECK(reply["vars"][2]["role"] == "input");
    client.request({{"op", "bye"}});
}

TEST_CASE("version mismatch is refused before any step")
{
    ServerFixture fx(toy_sim());
    RawClient client(fx.server.port());
    json reply = client.request({{"op", "hello"}, {"version", 99}});
    CHECK(reply["ok"] == false);
    CHECK(reply["err"].get<std::string>().find("version") != std::string::npos);
    client.request({{"op", "bye"}});
}

TEST_CASE("set/get round-trips values exactly")
{
    ServerFixture fx(toy_sim());
    RawClient client(fx.server.port());
    client.request({{"op", "hello"}, {"version", kProtocolVersion}});
    const double value = 0.12345678901234567;
    CHECK(client.request({{"op", "set"}, {"name", "u1"}, {"value", value}})["ok"] == true);
    json got = client.request({{"op", "get"}, {"names", json::array({"u1"})}});
    CHECK(got["values"][0].get<double>() == value);
    client.request({{"op", "bye"}});
}

TEST_CASE("step advances the plant and time strictly increases")
{
    ServerFixture fx(toy_sim());
    RawClient client(fx.server.port());
    client.request({{"op", "hello"}, {"version", kProtocolVersion}});
    client.request({{"op", "set"}, {"name", "x1"}, {"value", 0.3}});
    client.request({{"op", "set"}, {"name", "x2"}, {"value", -0.2}});

    Vec x(2), u = Vec::Zero(2);
    x << 0.3, -0.2;
    double prev_t = 0;
    auto sim = toy_sim();
    for (int i = 0; i < 20; ++i) {
        json reply = client.request({{"op", "step"}, {"dt", 1.0}});
        CHECK(reply["t"].get<double>() > prev_t);
        prev_t = reply["t"].get<double>();
        x = sim.advance(x, u, 1.0);
        CHECK(std::abs(reply["state"][0].get<double>() - x[0]) <= 1e-9);
        CHECK(std::abs(reply["state"][1].get<double>() - x[1]) <= 1e-9);
    }
    client.request({{"op", "bye"}});
}

TEST_CASE("protocol errors: one reply per request, connection survives")
{
    ServerFixture fx(toy_sim());
    RawClient client(fx.server.port());
    client.request({{"op", "hello"}, {"version", kProtocolVersion}});

    CHECK(client.request({{"op", "warp"}})["ok"] == false);
    client.send_line("this is not json");
    CHECK(json::parse(client.recv_line())["ok"] == false);
    CHECK(client.request({{"op", "set"}, {"name", "zz"}, {"value", 1.0}})["ok"] == false);
    CHECK(client.request({{"op", "set"}, {"name", "u1"}, {"value", nullptr}})["ok"] == false);
    CHECK(client.request({{"op", "step"}, {"dt", -5.0}})["ok"] == false);
    CHECK(client.request({{"op", "get"}, {"names", json::array({"nope"})}})["ok"] == false);
    client.send_line("[1,2,3]");
    CHECK(json::parse(client.recv_line())["ok"] == false);

    // still functional afterwards
    CHECK(client.request({{"op", "set"}, {"name", "u1"}, {"value", 2.0}})["ok"] == true);
    client.request({{"op", "bye"}});
}

TEST_CASE("fuzz: malformed lines never kill the server")
{
    ServerFixture fx(toy_sim());
    RawClient client(fx.server.port());
    Rng rng(2024);
    const std::string alphabet = "{}[]\":,abcdefXYZ0123456789.+-eE \t";
    for (int i = 0; i < 10000; ++i) {
        std::string line;
        const int len = 1 + static_cast<int>(rng.integer(60));
        for (int c = 0; c < len; ++c)
            line += alphabet[static_cast<std::size_t>(rng.integer(alphabet.size()))];
        client.send_line(line);
        json reply = json::parse(client.recv_line());
        CHECK(reply.contains("ok")); // exactly one well-formed reply per line
    }
    // server is still alive and sane
    CHECK(client.request({{"op", "hello"}, {"version", kProtocolVersion}})["ok"] == true);
    client.request({{"op", "bye"}});
}

TEST_CASE("session state is discarded between sessions")
{
    auto sim = toy_sim();
    PlantServer server(sim, 1.0);
    server.bind(Endpoint{"127.0.0.1", 0});
    std::thread t([&] { server.run(); });

    {
        RawClient first(server.port());
        first.request({{"op", "hello"}, {"version", kProtocolVersion}});
        first.request({{"op", "set"}, {"name", "x1"}, {"value", 7.0}});
        // dropped without bye: transport teardown
    }
    RawClient second(server.port());
    second.request({{"op", "hello"}, {"version", kProtocolVersion}});
    json got = second.request({{"op", "get"}, {"names", json::array({"x1"})}});
    CHECK(got["values"][0].get<double>() == 0.0);
    second.request({{"op", "bye"}});
    t.join();
}

TEST_CASE("endpoint parsing")
{
    auto ep = Endpoint::parse("10.0.0.5:8123");
    CHECK(ep.host == "10.0.0.5");
    CHECK(ep.port == 8123);
    CHECK_THROWS_AS(Endpoint::parse("nocolon"), std::invalid_argument);
    CHECK_THROWS_AS(Endpoint::parse(":99999999"), std::invalid_argument);
}

TEST_CASE("bridge_client_loop: loopback equals the in-process loop")
{
    auto sim = toy_sim();
    ServerFixture fx(sim);

    sim::MpcConfig cfg;
    cfg.np = 1;
    cfg.m_diag = Vec::Ones(2);
    cfg.n_diag = Vec::Constant(2, 0.1);
    cfg.u_box = Box(Vec::Constant(2, -10.0), Vec::Constant(2, 10.0));
    cfg.dt = 1.0;
    cfg.budget_s = 5.0;
    cfg.steps = 6;

    sim::ZeroController ctl_a(2, Vec::Constant(2, 10.0));
    sim::ZeroController ctl_b(2, Vec::Constant(2, 10.0));
    Vec x0(2);
    x0 << 0.4, -0.3;

    auto local = sim::run_closed_loop(sim, ctl_a, x0, cfg);
    auto bridged = bridge_client_loop(Endpoint{"127.0.0.1", fx.server.port()}, ctl_b, x0, cfg);
    REQUIRE_FALSE(bridged.protocol_error);
    REQUIRE(bridged.log.rows.size() == local.rows.size());
    for (std::size_t i = 0; i < local.rows.size(); ++i) {
        CHECK((bridged.log.rows[i].x - local.rows[i].x).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((bridged.log.rows[i].u - local.rows[i].u).cwiseAbs().maxCoeff() <= 1e-9);
    }
    CHECK((bridged.log.final_state - local.final_state).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("bridge_client_loop: server errors abort with a protocol error")
{
    // fake server: valid hello, then refuses everything
    int listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(listen_fd >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = 0;
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::bind(listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    REQUIRE(::listen(listen_fd, 1) == 0);
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd, reinterpret_cast<sockaddr*>(&addr), &len);
    const int port = ntohs(addr.sin_port);

    std::thread fake([&] {
        int client = ::accept(listen_fd, nullptr, nullptr);
        std::string buf;
        char chunk[4096];
        bool first = true;
        while (true) {
            ssize_t got = ::recv(client, chunk, sizeof chunk, 0);
            if (got <= 0) break;
            buf.append(chunk, static_cast<std::size_t>(got));
            std::size_t nl;
            while ((nl = buf.find('\n')) != std::string::npos) {
                buf.erase(0, nl + 1);
                const std::string reply =
                    first ? json{{"ok", true}, {"version", kProtocolVersion}}.dump() + "\n"
                          : json{{"ok", false}, {"err", "nope"}}.dump() + "\n";
                first = false;
                if (::send(client, reply.data(), reply.size(), MSG_NOSIGNAL) <= 0) break;
            }
        }
        ::close(client);
    });

    sim::MpcConfig cfg;
    cfg.np = 1;
    cfg.m_diag = Vec::Ones(2);
    cfg.n_diag = Vec::Ones(2);
    cfg.u_box = Box::unit(2);
    cfg.dt = 1.0;
    cfg.steps = 3;
    sim::ZeroController ctl(2, Vec::Ones(2));
    auto result = bridge_client_loop(Endpoint{"127.0.0.1", port}, ctl, Vec::Zero(2), cfg,
                                     BridgeClientConfig{2.0});
    CHECK(result.protocol_error);
    CHECK(result.error.find("nope") != std::string::npos);
    ::shutdown(listen_fd, SHUT_RDWR);
    ::close(listen_fd);
    fake.join();
}
