#include "pt2i/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "pt2i/agent.hpp"
#include "pt2i/config.hpp"
#include "pt2i/datasets.hpp"
#include "pt2i/errors.hpp"
#include "pt2i/graph_io.hpp"
#include "pt2i/service.hpp"
#include "pt2i/simulator.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string backend = "scripted";
  std::string templates;
  std::string rules;
  std::string backend_config;
  std::string strategy = "mhis";
  int max_turns = 15;
  std::int64_t seed = 0;
  int jobs = 1;
  std::string out;
  std::string data_dir;

  // subcommand arguments
  std::string prompt;
  std::string file;
  std::string manifest;
  std::string addr = "127.0.0.1:8080";
  std::vector<std::string> metrics;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

Strategy parse_strategy(const std::string& s) {
  auto st = strategy_from_string(s);
  if (!st) throw UsageError("unknown strategy '" + s + "'");
  return *st;
}

Agent make_agent(const Options& o) {
  const fs::path templates = o.templates.empty() ? default_templates_dir() : fs::path(o.templates);
  if (!fs::is_directory(templates)) throw ConfigError("template directory not found: " + templates.string());
  Backends b;
  if (o.backend == "scripted") {
    const fs::path rules = o.rules.empty() ? default_rules_file() : fs::path(o.rules);
    if (!fs::exists(rules)) throw ConfigError("rules file not found: " + rules.string());
    b = make_scripted_backends(rules);
  } else {
    std::optional<std::string> file;
    if (!o.backend_config.empty()) file = o.backend_config;
    b = make_remote_backends(RemoteConfig::from_env(file));
  }
  return Agent(std::move(b), load_templates(templates));
}

int cmd_parse(const Options& o, std::ostream& out) {
  std::string prompt = o.prompt;
  if (!o.file.empty()) {
    std::ifstream in(o.file);
    if (!in) throw UsageError("cannot read " + o.file);
    std::stringstream ss;
    ss << in.rdbuf();
    prompt = ss.str();
  }
  if (trim(prompt).empty()) throw UsageError("a non-empty prompt is required");
  const Agent agent = make_agent(o);
  out << serialize(agent.parser().build_belief_graph(trim(prompt)));
  return kExitOk;
}

void print_action(const Action& action, std::ostream& out) {
  if (const auto* ask = std::get_if<AskQuestion>(&action)) {
    out << "Q: " << ask->question_text << "\n";
    for (std::size_t i = 0; i < ask->choices.size(); ++i)
      out << "  " << char('a' + i) << ". " << ask->choices[i] << "\n";
  } else {
    out << "Nothing left to ask. Type /gen to generate an image or /quit to leave.\n";
  }
}

int cmd_chat(const Options& o, std::istream& in, std::ostream& out, std::ostream& err) {
  if (trim(o.prompt).empty()) throw UsageError("a non-empty prompt is required");
  const Agent agent = make_agent(o);
  SessionState state = agent.start(trim(o.prompt), parse_strategy(o.strategy));
  out << "Prompt: " << state.merged_prompt << "\n";

  std::optional<Action> action;
  std::int64_t seed = o.seed;
  for (;;) {
    if (!action) {
      try {
        action = agent.select_action(state);
      } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        action = GenerateImage{state.merged_prompt};
      }
      print_action(*action, out);
    }
    out << "> " << std::flush;
    std::string line;
    if (!std::getline(in, line)) break;
    line = trim(line);
    if (line.empty()) continue;
    if (line == "/quit") break;
    if (line == "/graph") {
      out << serialize(state.graph);
      continue;
    }
    if (line == "/gen") {
      try {
        const ImageArtifact a = agent.backends().images->generate_image(state.merged_prompt, seed++);
        out << "Image " << a.id << ": " << a.content_ref << "\n";
      } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
      }
      continue;
    }
    if (!std::holds_alternative<AskQuestion>(*action)) {
      out << "No question is pending.\n";
      continue;
    }
    try {
      state = agent.transition(state, *action, AnswerText{line});
      if (state.history.back().degraded) err << "warning: the belief graph could not be rebuilt; kept the previous one\n";
      out << "Merged prompt: " << state.merged_prompt << "\n";
      action.reset();
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
    }
  }
  return kExitOk;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  f << content;
  if (!f) throw Error("cannot write " + path.string());
}

int cmd_selfplay(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.max_turns < 1) throw UsageError("--max-turns must be at least 1");
  if (o.jobs < 1) throw UsageError("--jobs must be at least 1");
  SelfPlayConfig cfg;
  cfg.max_turns = o.max_turns;
  cfg.strategy = parse_strategy(o.strategy);
  cfg.seed = o.seed;
  if (!o.metrics.empty()) cfg.metric_set = o.metrics;
  for (const auto& m : cfg.metric_set)
    if (!is_known_metric(m)) throw UsageError("unknown metric '" + m + "'");

  const Agent agent = make_agent(o);
  const Manifest manifest = load_manifest(o.manifest, &agent.parser());
  const BatchResult r = run_batch(agent, manifest.cases, cfg, o.jobs);

  if (!o.out.empty()) {
    const fs::path dir(o.out);
    fs::create_directories(dir / "transcripts");
    for (const auto& t : r.transcripts)
      write_file(dir / "transcripts" / (t.case_id + ".json"), transcript_to_json(t).dump(2) + "\n");
    write_file(dir / "aggregate.csv", aggregate_csv(r));
    write_file(dir / "series.csv", series_csv(r));
    write_file(dir / "summary.txt", summary_text(r, cfg));
  }
  out << summary_text(r, cfg);
  for (const auto& f : r.failures) err << "case " << f.case_id << " failed: " << f.message << "\n";
  return r.transcripts.empty() ? kExitFailure : kExitOk;
}

int cmd_serve(const Options& o, std::ostream& out, std::ostream& err) {
  const auto colon = o.addr.rfind(':');
  int port = -1;
  std::string host;
  if (colon != std::string::npos) {
    host = o.addr.substr(0, colon);
    char* end = nullptr;
    const long p = std::strtol(o.addr.c_str() + colon + 1, &end, 10);
    if (end && *end == '\0' && colon + 1 < o.addr.size() && p >= 0 && p <= 65535) port = static_cast<int>(p);
  }
  if (host.empty() || port < 0) {
    err << "error: bad listen address '" << o.addr << "' (expected host:port)\n";
    return kExitUnavailable;
  }

  std::string data_dir = o.data_dir;
  if (data_dir.empty())
    if (const char* d = std::getenv("DATA_DIR"); d && *d) data_dir = d;
  if (data_dir.empty()) data_dir = "data";

  ServiceConfig cfg;
  cfg.data_dir = data_dir;
  SessionService service(make_agent(o), cfg);
  httplib::Server server;
  // The library default also sets SO_REUSEPORT, which lets a second server
  // share a busy port instead of failing.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  mount_routes(server, service);

  // Block the shutdown signals before the server starts its worker threads
  // so only the waiter below receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
    err << "error: cannot listen on " << o.addr << "\n";
    return kExitUnavailable;
  }
  out << "listening on " << host << ":" << bound << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.listen_after_bind();
  // Wake the waiter if the server stopped on its own.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  out << "stopped" << std::endl;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Clarifies text-to-image prompts by asking questions about a probabilistic belief graph.", "pt2i"};
  app.require_subcommand(1);
  app.add_option("--backend", o.backend, "Backend profile")->check(CLI::IsMember({"scripted", "remote"}));
  app.add_option("--templates", o.templates, "Prompt template directory");
  app.add_option("--rules", o.rules, "Rules file for the scripted backend");
  app.add_option("--backend-config", o.backend_config, "JSON file with remote backend settings");
  app.add_option("--strategy", o.strategy, "mhis | aicq-b | aicq-base | t2i-baseline");
  app.add_option("--max-turns", o.max_turns, "Turns per self-play conversation");
  app.add_option("--seed", o.seed, "Seed for image generation");
  app.add_option("--jobs", o.jobs, "Cases run in parallel");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--data-dir", o.data_dir, "Session directory (default $DATA_DIR or ./data)");

  auto* parse = app.add_subcommand("parse", "Print the belief graph of a prompt");
  parse->add_option("prompt", o.prompt, "Prompt text");
  parse->add_option("--file", o.file, "Read the prompt from a file");

  auto* chat = app.add_subcommand("chat", "Interactive clarification in the terminal");
  chat->add_option("prompt", o.prompt, "Starting prompt")->required();

  auto* selfplay = app.add_subcommand("selfplay", "Run simulated-user conversations over a manifest");
  selfplay->add_option("manifest", o.manifest, "Manifest file")->required()->check(CLI::ExistingFile);
  selfplay->add_option("--metrics", o.metrics, "Metric ids (default nll t2t_embed)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  serve->add_option("--addr", o.addr, "host:port to listen on");

  for (auto* sub : {parse, chat, selfplay, serve}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*parse) return cmd_parse(o, out);
    if (*chat) return cmd_chat(o, in, out, err);
    if (*selfplay) return cmd_selfplay(o, out, err);
    if (*serve) return cmd_serve(o, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseFailure& e) {
    err << "parse failure: " << e.what() << "\n";
    return kExitParseFailure;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace pt2i
