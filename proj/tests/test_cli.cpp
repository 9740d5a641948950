#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "jsqps/cli.hpp"

using namespace jsqps;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "jsqps");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

std::string header_value(const std::string& text, const std::string& key) {
  const std::string marker = "# " + key + " = ";
  const auto pos = text.find(marker);
  if (pos == std::string::npos) return {};
  const auto end = text.find('\n', pos);
  return text.substr(pos + marker.size(), end - pos - marker.size());
}

double cdf_column(const std::string& line) {
  const auto first = line.find(',');
  return std::stod(line.substr(first + 1, line.find(',', first + 1) - first - 1));
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "jsqps_cli_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cdf command") {
  SUBCASE("auto method and header") {
    const auto r = run({"cdf", "--R", "2", "--lambda", "1", "--mu", "1", "--tmax", "1", "--dt", "0.25"});
    CHECK(r.code == kExitOk);
    CHECK(header_value(r.out, "method") == "D");
    CHECK(header_value(r.out, "rho") == "0.5");
    const auto lines = data_lines(r.out);
    REQUIRE(lines.size() == 6);
    CHECK(lines[0] == "t,cdf,method");
    CHECK(lines[1] == "0,0,D");
  }
  SUBCASE("A and D agree") {
    const auto a = data_lines(run({"cdf", "--R", "2", "--lambda", "1.4", "--mu", "1", "--method", "A", "--tmax", "30"}).out);
    const auto d = data_lines(run({"cdf", "--R", "2", "--lambda", "1.4", "--mu", "1", "--method", "D", "--tmax", "30"}).out);
    REQUIRE(a.size() == d.size());
    double worst = 0.0;
    for (std::size_t i = 1; i < a.size(); ++i) {
      worst = std::max(worst, std::abs(cdf_column(a[i]) - cdf_column(d[i])));
    }
    CHECK(worst < 1e-6);
  }
  SUBCASE("regime map file") {
    const auto path = temp_dir() / "map.txt";
    {
      std::ofstream map(path);
      for (int r = 1; r <= 10; ++r) map << r << " 0 1 B\n";
    }
    const auto r = run({"cdf", "--R", "2", "--lambda", "1", "--mu", "1", "--tmax", "1",
                        "--regime-map", path.string()});
    CHECK(r.code == kExitOk);
    CHECK(header_value(r.out, "method") == "B");
  }
  SUBCASE("parameter errors") {
    CHECK(run({"cdf", "--R", "2", "--lambda", "2", "--mu", "1"}).code == kExitParameter);
    CHECK(run({"cdf", "--R", "2", "--lambda", "1"}).code == kExitParameter);
    CHECK(run({"cdf", "--R", "2", "--lambda", "1", "--mu", "1", "--method", "Q"}).code == kExitParameter);
    CHECK(run({"cdf", "--R", "10", "--lambda", "5", "--mu", "1", "--L1", "5"}).code == kExitParameter);
    CHECK(run({"cdf", "--R", "1", "--lambda", "0.5", "--mu", "1", "--bogus"}).code == kExitParameter);
    CHECK(run({"cdf", "--R", "2", "--lambda", "1", "--mu", "1", "--regime-map", "/nonexistent"}).code ==
          kExitParameter);
  }
  SUBCASE("grid too large") {
    const auto r = run({"cdf", "--R", "1", "--lambda", "0.5", "--mu", "1", "--tmax", "1e6"});
    CHECK(r.code == kExitResource);
    CHECK_FALSE(r.err.empty());
  }
}

TEST_CASE("percentile command") {
  SUBCASE("URLLC levels") {
    const auto r = run({"percentile", "--R", "2", "--lambda", "1", "--mu", "1", "--urllc"});
    CHECK(r.code == kExitOk);
    const auto lines = data_lines(r.out);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "eta,t_eta");
    CHECK(lines[1].rfind("0.99,", 0) == 0);
    CHECK(lines[4].rfind("0.99999,", 0) == 0);
  }
  SUBCASE("exponential sojourn for one server") {
    // M/M/1-PS with rho = 0.5: T ~ Exp(0.5) is not exact for PS, but the
    // 0.5 quantile lies well inside (0.5, 3).
    const auto r = run({"percentile", "--R", "1", "--lambda", "0.5", "--mu", "1", "--eta", "0.5"});
    const auto lines = data_lines(r.out);
    REQUIRE(lines.size() == 2);
    const double t = std::stod(lines[1].substr(lines[1].find(',') + 1));
    CHECK(t > 0.5);
    CHECK(t < 3.0);
  }
  SUBCASE("errors") {
    CHECK(run({"percentile", "--R", "1", "--lambda", "0.5", "--mu", "1", "--eta", "1"}).code == kExitParameter);
    CHECK(run({"percentile", "--R", "1", "--lambda", "0.5", "--mu", "1"}).code == kExitParameter);
    const auto sat = run({"percentile", "--R", "1", "--lambda", "0.5", "--mu", "1", "--eta", "0.99999", "--tmax", "5"});
    CHECK(sat.code == kExitNumerical);
    CHECK(sat.err.find("never exceeds") != std::string::npos);
  }
}

TEST_CASE("config file") {
  const auto path = temp_dir() / "run.conf";
  {
    std::ofstream conf(path);
    conf << "# system\nR = 3\nlambda = 1.5\nmu = 1\ntmax = 2\ndt = 0.5\nmethod = C\n";
  }
  const auto base = run({"cdf", "--config", path.string()});
  CHECK(base.code == kExitOk);
  CHECK(header_value(base.out, "R") == "3");
  CHECK(header_value(base.out, "method") == "C");
  const auto over = run({"cdf", "--config", path.string(), "--method", "F"});
  CHECK(header_value(over.out, "method") == "F");
  {
    std::ofstream conf(path);
    conf << "R = 3\nunknown_key = 1\n";
  }
  CHECK(run({"cdf", "--config", path.string()}).code == kExitParameter);
  CHECK(run({"cdf", "--config", "/nonexistent.conf"}).code == kExitParameter);
}

TEST_CASE("output file") {
  const auto path = temp_dir() / "out.csv";
  const auto r = run({"cdf", "--R", "1", "--lambda", "0.5", "--mu", "1", "--tmax", "1", "--out", path.string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.empty());
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("t,cdf,method") != std::string::npos);
  CHECK(run({"cdf", "--R", "1", "--lambda", "0.5", "--mu", "1", "--tmax", "1", "--out",
             "/nonexistent/dir/out.csv"})
            .code == kExitResource);
}

TEST_CASE("simulation commands are deterministic") {
  const std::vector<std::string> sim = {"simulate", "--R", "2", "--lambda", "1.2", "--mu", "1",
                                        "--qmax", "2000", "--warmup", "100", "--trials", "2",
                                        "--seed", "9", "--tmax", "20"};
  const auto a = run(sim);
  const auto b = run(sim);
  CHECK(a.code == kExitOk);
  CHECK(a.out == b.out);
  auto other = sim;
  other.back() = "20";
  other[other.size() - 3] = "10";
  CHECK(run(other).out != a.out);

  const std::vector<std::string> cmp = {"compare", "--R", "2", "--lambda", "1.2", "--mu", "1",
                                        "--qmax", "2000", "--warmup", "100", "--trials", "2",
                                        "--seed", "9", "--eta", "0.99"};
  const auto c1 = run(cmp);
  CHECK(c1.code == kExitOk);
  CHECK(c1.out == run(cmp).out);
  CHECK(data_lines(c1.out).size() == 7);
}

TEST_CASE("sample dump") {
  const auto prefix = (temp_dir() / "dump").string();
  const auto r = run({"simulate", "--R", "1", "--lambda", "0.5", "--mu", "1", "--qmax", "500",
                      "--warmup", "10", "--trials", "2", "--dump-samples", prefix});
  CHECK(r.code == kExitOk);
  CHECK(std::filesystem::exists(prefix + ".trial0.samples"));
  CHECK(std::filesystem::exists(prefix + ".trial1.samples"));
}

TEST_CASE("reproduce") {
  SUBCASE("table5") {
    const auto r = run({"reproduce", "table5"});
    CHECK(r.code == kExitOk);
    const auto lines = data_lines(r.out);
    REQUIRE(lines.size() == 11);
    CHECK(lines[0] == "R,L1");
    CHECK(lines[1] == "1,22");
    CHECK(lines[5] == "5,7");
    CHECK(lines[10] == "10,2");
  }
  SUBCASE("full scale is gated") {
    CHECK(run({"reproduce", "table6", "--scale", "full"}).code == kExitParameter);
    CHECK(run({"regime-scan", "--scale", "full"}).code == kExitParameter);
    CHECK(run({"reproduce", "unknown"}).code == kExitParameter);
  }
  SUBCASE("fig4 boundary mass") {
    const auto r = run({"reproduce", "fig4", "--servers-list", "1", "--load-list", "0.9"});
    CHECK(r.code == kExitOk);
    const auto lines = data_lines(r.out);
    REQUIRE(lines.size() > 2);
    CHECK(lines[0] == "R,rho,L1,boundary_mass");
  }
}

TEST_CASE("help") {
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({}).code == kExitParameter);
}
