#include <csignal>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <httplib.h>

#include "pt2i/cli.hpp"
#include "pt2i/datasets.hpp"
#include "pt2i/graph_io.hpp"
#include "test_support.hpp"

namespace pt2i {
namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args, const std::string& input = "") {
  args.insert(args.begin(), "pt2i");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string breakfast_prompt() { return load_manifest(testing::fixture_manifest()).find("breakfast")->starting_prompt; }

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"parse", "x", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"--backend", "cloud", "parse", "x"}).code, kExitUsage);
  EXPECT_EQ(run({"parse", "   "}).code, kExitUsage);
  EXPECT_EQ(run({"selfplay", "/nonexistent/manifest.json"}).code, kExitUsage);
  const CliRun help = run({"--help"});
  EXPECT_EQ(help.code, kExitOk);
  EXPECT_NE(help.out.find("selfplay"), std::string::npos);
}

TEST(Cli, ParsePrintsGraph) {
  const CliRun r = run({"parse", breakfast_prompt()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const BeliefGraph g = deserialize(r.out);
  EXPECT_NE(g.find_entity("breakfast"), nullptr);

  testing::TempDir dir;
  std::ofstream(dir.path() / "prompt.txt") << breakfast_prompt() << "\n";
  const CliRun from_file = run({"parse", "--file", (dir.path() / "prompt.txt").string()});
  EXPECT_EQ(from_file.code, kExitOk);
  EXPECT_EQ(from_file.out, r.out);
}

TEST(Cli, ParseFailureAndConfigErrors) {
  const CliRun bad = run({"parse", "zzzz qqqq"});
  EXPECT_EQ(bad.code, kExitParseFailure);
  EXPECT_NE(bad.err.find("parse failure"), std::string::npos);

  EXPECT_EQ(run({"--templates", "/nonexistent", "parse", "x"}).code, kExitConfig);
  EXPECT_EQ(run({"--rules", "/nonexistent.txt", "parse", "x"}).code, kExitConfig);
  unsetenv("PT2I_REMOTE_BASE_URL");
  const CliRun remote = run({"--backend", "remote", "parse", "x"});
  EXPECT_EQ(remote.code, kExitConfig);
  EXPECT_NE(remote.err.find("PT2I_REMOTE_BASE_URL"), std::string::npos);
}

TEST(Cli, ChatLoop) {
  const CliRun r = run({"chat", breakfast_prompt()}, "a\n/graph\n/gen\n/quit\n");
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("Q: What cuisine should the breakfast have?"), std::string::npos);
  EXPECT_NE(r.out.find("Merged prompt: "), std::string::npos);
  EXPECT_NE(r.out.find("\"entities\""), std::string::npos);
  EXPECT_NE(r.out.find("Image img-"), std::string::npos);
  // The second question follows the first answer.
  EXPECT_NE(r.out.find("Q: ", r.out.find("Merged prompt: ")), std::string::npos);

  const CliRun baseline = run({"--strategy", "t2i-baseline", "chat", breakfast_prompt()}, "hello\n");
  EXPECT_NE(baseline.out.find("Nothing left to ask"), std::string::npos);
  EXPECT_NE(baseline.out.find("No question is pending."), std::string::npos);
}

TEST(Cli, SelfPlayWritesOutputs) {
  testing::TempDir dir;
  const CliRun r = run({"--max-turns", "3", "--jobs", "2", "--out", dir.path().string(), "selfplay",
                     testing::fixture_manifest().string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("cases: 5 completed, 0 failed"), std::string::npos);
  for (const char* f : {"aggregate.csv", "series.csv", "summary.txt", "transcripts/breakfast.json"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;
  std::ifstream summary(dir.path() / "summary.txt");
  std::stringstream ss;
  ss << summary.rdbuf();
  EXPECT_EQ(ss.str(), r.out);

  EXPECT_EQ(run({"--max-turns", "0", "selfplay", testing::fixture_manifest().string()}).code, kExitUsage);
  EXPECT_EQ(run({"--strategy", "random", "selfplay", testing::fixture_manifest().string()}).code, kExitUsage);
  EXPECT_EQ(run({"selfplay", testing::fixture_manifest().string(), "--metrics", "bleu"}).code, kExitUsage);
}

TEST(Cli, ServeRejectsBadAddresses) {
  EXPECT_EQ(run({"serve", "--addr", "nonsense"}).code, kExitUnavailable);
  EXPECT_EQ(run({"serve", "--addr", "127.0.0.1:99999"}).code, kExitUnavailable);

  httplib::Server blocker;
  const int port = blocker.bind_to_any_port("127.0.0.1");
  testing::TempDir dir;
  const CliRun r = run({"--data-dir", dir.path().string(), "serve", "--addr", "127.0.0.1:" + std::to_string(port)});
  EXPECT_EQ(r.code, kExitUnavailable);
  EXPECT_NE(r.err.find("cannot listen"), std::string::npos);
}

// Runs the real binary, talks to it over HTTP and stops it with SIGTERM.
TEST(Cli, ServeStopsOnSigterm) {
  testing::TempDir dir;
  int out_pipe[2];
  ASSERT_EQ(pipe(out_pipe), 0);
  const pid_t pid = fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    dup2(out_pipe[1], STDOUT_FILENO);
    close(out_pipe[0]);
    close(out_pipe[1]);
    const std::string data = dir.path().string();
    execl(PT2I_CLI_PATH, "pt2i", "--data-dir", data.c_str(), "serve", "--addr", "127.0.0.1:0",
          static_cast<char*>(nullptr));
    _exit(127);
  }
  close(out_pipe[1]);
  FILE* child_out = fdopen(out_pipe[0], "r");
  char line[256] = {0};
  ASSERT_NE(fgets(line, sizeof line, child_out), nullptr);
  const std::string first(line);
  ASSERT_EQ(first.rfind("listening on 127.0.0.1:", 0), 0u) << first;
  const int port = std::stoi(first.substr(first.rfind(':') + 1));

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  auto created = client.Post("/v1/sessions", json{{"prompt", breakfast_prompt()}}.dump(), "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);

  kill(pid, SIGTERM);
  int status = 0;
  ASSERT_EQ(waitpid(pid, &status, 0), pid);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  ASSERT_NE(fgets(line, sizeof line, child_out), nullptr);
  EXPECT_EQ(std::string(line), "stopped\n");
  fclose(child_out);

  std::size_t files = 0;
  for ([[maybe_unused]] const auto& f : std::filesystem::directory_iterator(dir.path() / "sessions")) ++files;
  EXPECT_EQ(files, 1u);
}

}  // namespace
}  // namespace pt2i
