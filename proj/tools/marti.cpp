#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "marti/config.hpp"
#include "marti/export.hpp"
#include "marti/netio.hpp"
#include "marti/runner.hpp"

namespace fs = std::filesystem;
using namespace marti;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct Common {
  std::string env = "minipong";
  std::uint64_t episodes = 100;
  std::uint64_t seed = 1;
  std::string config_path;
  std::vector<std::string> settings;
  std::string snapshot;
  std::string out;
  std::string decisions;
};

AgentConfig build_config(const Common& o) {
  AgentConfig c = default_config(o.env);
  if (!o.config_path.empty()) apply_config_file(c, o.config_path);
  for (const auto& kv : o.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(c, detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  c.seed = o.seed;
  c.validate();
  return c;
}

std::unique_ptr<Agent> load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("cannot open snapshot '" + path + "'");
  return std::make_unique<Agent>(Agent::load(in));
}

void check_dims(const Agent& agent, const Environment& env) {
  if (agent.thalamus().sensor_dim() != env.observation_dim() || agent.thalamus().actuator_dim() != 1)
    throw DimensionError("snapshot expects sensor_dim " + std::to_string(agent.thalamus().sensor_dim()) +
                         ", environment " + env.name() + " provides " +
                         std::to_string(env.observation_dim()));
}

void print_summary(const char* label, const Summary& s) {
  std::printf("%-10s mean %.4f sd %.4f n %zu\n", label, s.mean, s.sd, s.n);
}

// One tab-separated row per agent step; fb is "letter:count" pairs.
void write_decision(std::ostream& os, const DecisionRecord& d) {
  os << d.step << '\t';
  bool first = true;
  for (const auto& [l, n] : d.fb) {
    os << (first ? "" : ",") << to_utf8(l) << ':' << n;
    first = false;
  }
  os << '\t' << (d.action ? to_utf8(*d.action) : "-") << '\t';
  if (d.winner) os << *d.winner; else os << '-';
  os << '\t' << d.sb << '\t' << (d.inner_reward ? 1 : 0) << '\n';
}

int cmd_train(const Common& o, bool timing) {
  auto env = make_environment(o.env, o.seed);
  std::unique_ptr<Agent> agent;
  if (!o.snapshot.empty()) {
    agent = load_snapshot(o.snapshot);
    check_dims(*agent, *env);
  } else {
    agent = std::make_unique<Agent>(build_config(o), env->observation_dim(), 1, env->action_space());
  }
  const fs::path dir = o.out.empty() ? fs::path("runs") / o.env : fs::path(o.out);
  fs::create_directories(dir);
  const auto csv_path = dir / "metrics.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv << kCsvHeader << '\n' << std::flush;

  std::ofstream decisions;
  if (!o.decisions.empty()) {
    decisions.open(o.decisions, std::ios::trunc);
    if (!decisions) throw std::runtime_error("cannot write " + o.decisions);
    decisions << "step\tfb\taction\twinner\tsb\tinner_reward\n";
  }

  int last = 0;
  Rolling30 rolling;
  std::uint64_t done = 0;
  for (; done < o.episodes && !g_stop.load(); ++done) {
    TrainOptions t;
    t.episodes = 1;
    t.timing = timing;
    if (decisions.is_open()) t.on_decision = [&](const DecisionRecord& d) { write_decision(decisions, d); };
    auto rec = train(*agent, *env, t, last, done + 1).front();
    rec.rolling30_diff = rolling.push(rec.goal_diff);
    csv << rec.csv() << '\n' << std::flush;
  }
  const auto snap = dir / "agent.snap";
  net::write_snapshot(*agent, snap.string());
  std::printf("episodes %llu  rolling30_diff %.4f  l1_parsers %zu  l2_vocab %zu\n",
              static_cast<unsigned long long>(done), rolling.value(), agent->layer1_parsers(),
              agent->layer2_vocabulary());
  std::printf("csv %s\nsnapshot %s\n", csv_path.c_str(), snap.c_str());
  return g_stop.load() ? 130 : 0;
}

int cmd_eval(const Common& o, bool keep_learning) {
  if (o.snapshot.empty()) throw ConfigError("eval needs --snapshot");
  auto agent = load_snapshot(o.snapshot);
  auto env = make_environment(o.env, o.seed);
  check_dims(*agent, *env);
  int last = 0;
  EvalSummary s;
  if (keep_learning) {
    std::vector<double> score, diff;
    for (std::uint64_t e = 0; e < o.episodes; ++e) {
      const auto r = run_episode(*agent, *env, last);
      score.push_back(r.reward);
      diff.push_back(r.agent_goals - r.opponent_goals);
    }
    s = {summarize(score), summarize(diff)};
  } else {
    s = evaluate(*agent, *env, o.episodes, last);
  }
  print_summary("score", s.score);
  print_summary("goal_diff", s.goal_diff);
  return 0;
}

int cmd_baseline(const Common& o) {
  auto env = make_environment(o.env, o.seed);
  const auto s = random_baseline(*env, o.episodes, mix_seed(o.seed, 0xBA5E));
  print_summary("score", s.score);
  print_summary("goal_diff", s.goal_diff);
  return 0;
}

int cmd_serve(const Common& o, int port, const std::string& host) {
  std::unique_ptr<Agent> agent;
  if (!o.snapshot.empty()) agent = load_snapshot(o.snapshot);
  const auto config = build_config(o);
  net::Server server(port < 0 ? net::default_port() : static_cast<std::uint16_t>(port), host);
  std::printf("listening on %s:%u\n", host.c_str(), server.port());
  std::fflush(stdout);
  net::ServeOptions opts;
  opts.stop = &g_stop;
  opts.snapshot_path = o.out.empty() ? "agent.snap" : o.out;
  const auto res = server.serve_one(
      agent,
      [&](const net::Hello& h) {
        return std::make_unique<Agent>(config, h.sensor_dim, h.actuator_dim, h.actions);
      },
      opts);
  std::printf("session ended: %s  observations %llu  episodes %llu\n", res.end_reason.c_str(),
              static_cast<unsigned long long>(res.observations),
              static_cast<unsigned long long>(res.episodes));
  if (res.snapshot_saved) std::printf("snapshot %s\n", opts.snapshot_path.c_str());
  return res.end_reason == "bye" || res.end_reason == "disconnect" ? 0 : 1;
}

int cmd_play(const Common& o, int port, const std::string& host) {
  auto env = make_environment(o.env, o.seed);
  auto client = net::Client::connect(host, port < 0 ? net::default_port() : static_cast<std::uint16_t>(port));
  client.hello(net::hello_for(*env));
  std::FILE* csv = o.out.empty() ? stdout : std::fopen(o.out.c_str(), "w");
  if (!csv) throw std::runtime_error("cannot write " + o.out);
  std::fprintf(csv, "%s\n", kCsvHeader);
  int last = 0;
  std::uint64_t step = 0;
  Rolling30 rolling;
  for (std::uint64_t e = 0; e < o.episodes && !g_stop.load(); ++e) {
    const auto r = net::remote_episode(client, *env, last, step);
    RunRecord rec;
    rec.episode = e + 1;
    rec.steps = r.steps;
    rec.agent_goals = r.agent_goals;
    rec.opponent_goals = r.opponent_goals;
    rec.goal_diff = r.agent_goals - r.opponent_goals;
    rec.rolling30_diff = rolling.push(rec.goal_diff);
    std::fprintf(csv, "%s\n", rec.csv().c_str());
    std::fflush(csv);
  }
  client.bye("done");
  if (csv != stdout) std::fclose(csv);
  return 0;
}

int cmd_export(const Common& o) {
  if (o.snapshot.empty()) throw ConfigError("export needs --snapshot");
  const auto agent = load_snapshot(o.snapshot);
  const auto text = agent_json(*agent).dump(1);
  if (o.out.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream os(o.out);
    if (!os) throw std::runtime_error("cannot write " + o.out);
    os << text << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MARTI agent: train, evaluate and serve"};
  app.require_subcommand(1);
  Common o;
  bool no_timing = false;
  bool keep_learning = false;
  bool show_config = false;
  int port = -1;
  std::string host = "127.0.0.1";

  auto add_env = [&](CLI::App* c) {
    c->add_option("--env", o.env, "minipong or catch")->check(CLI::IsMember({"minipong", "catch"}));
    c->add_option("--seed", o.seed, "run seed");
  };
  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", o.config_path, "key=value config file")->check(CLI::ExistingFile);
    c->add_option("--set", o.settings, "override one key, e.g. --set epsilon=0.1");
  };

  auto* train = app.add_subcommand("train", "train an agent and write metrics.csv plus agent.snap");
  add_env(train);
  add_config(train);
  train->add_option("--episodes", o.episodes);
  train->add_option("--out", o.out, "output directory (default runs/<env>)");
  train->add_option("--snapshot", o.snapshot, "resume from a snapshot");
  train->add_option("--decisions", o.decisions, "write a per-step striatum log (TSV) to this file");
  train->add_flag("--no-timing", no_timing, "write wall_ms as 0 so runs compare byte for byte");
  train->add_flag("--print-config", show_config, "print the effective config and exit");

  auto* eval = app.add_subcommand("eval", "evaluate a snapshot with learning frozen");
  add_env(eval);
  eval->add_option("--snapshot", o.snapshot)->required();
  eval->add_option("--episodes", o.episodes);
  eval->add_flag("--learn", keep_learning, "keep learning during evaluation");

  auto* baseline = app.add_subcommand("baseline", "uniform random policy");
  add_env(baseline);
  baseline->add_option("--episodes", o.episodes);

  auto* serve = app.add_subcommand("serve", "serve one environment client over TCP");
  add_env(serve);
  add_config(serve);
  serve->add_option("--port", port, "listen port (0 picks a free one; default $MARTI_PORT or 7878)");
  serve->add_option("--host", host);
  serve->add_option("--snapshot", o.snapshot, "resume from a snapshot");
  serve->add_option("--out", o.out, "snapshot written when the session ends (default agent.snap)");

  auto* play = app.add_subcommand("play", "run an environment against a serving agent");
  add_env(play);
  play->add_option("--episodes", o.episodes);
  play->add_option("--port", port);
  play->add_option("--host", host);
  play->add_option("--out", o.out, "metrics CSV (default stdout)");

  auto* exp = app.add_subcommand("export", "snapshot as JSON text");
  exp->add_option("--snapshot", o.snapshot)->required();
  exp->add_option("--out", o.out, "output file (default stdout)");

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGINT, on_sigint);

  try {
    if (show_config) {
      std::cout << config_to_text(build_config(o));
      return 0;
    }
    if (train->parsed()) return cmd_train(o, !no_timing);
    if (eval->parsed()) return cmd_eval(o, keep_learning);
    if (baseline->parsed()) return cmd_baseline(o);
    if (serve->parsed()) return cmd_serve(o, port, host);
    if (play->parsed()) return cmd_play(o, port, host);
    if (exp->parsed()) return cmd_export(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
