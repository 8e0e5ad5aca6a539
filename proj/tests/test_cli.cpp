#include "fixtures.hpp"

#include "otbb/checkpoint.hpp"
#include "otbb/cli.hpp"
#include "otbb/matrix_market.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace otbb;
using namespace otbb::testing;
namespace fs = std::filesystem;

namespace {

std::optional<CliConfig> parse(std::vector<std::string> args) {
  args.insert(args.begin(), "otbb");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  return parse_config(int(argv.size()), argv.data(), out);
}

int run(std::vector<std::string> args, std::string* stdout_text = nullptr) {
  args.insert(args.begin(), "otbb");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  if (stdout_text) *stdout_text = out.str();
  return code;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("otbb_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("a valid solve invocation parses") {
  const auto cfg = parse({"solve", "--case", "translation", "--refine", "1", "--timesteps", "8",
                          "--precond", "bb"});
  REQUIRE(cfg.has_value());
  CHECK(cfg->command == "solve");
  CHECK(cfg->cases == std::vector<std::string>{"translation"});
  CHECK(cfg->refine == std::vector<int>{1});
  CHECK(cfg->timesteps == std::vector<int>{8});
  CHECK(cfg->preconds == std::vector<std::string>{"bb"});
}

TEST_CASE("out-of-range and unknown settings are input errors") {
  CHECK_THROWS_AS(parse({"solve", "--timesteps", "0"}), InputError);
  CHECK_THROWS_AS(parse({"solve", "--precond", "ilu"}), InputError);
  CHECK_THROWS_AS(parse({"solve", "--mu-factor", "1"}), InputError);
  CHECK_THROWS_AS(parse({"solve", "--no-such-flag"}), InputError);
  CHECK_THROWS_AS(parse({}), InputError);
  CHECK(run({"solve", "--timesteps", "0"}) == kExitInput);
}

TEST_CASE("bench lists are comma separated") {
  const auto cfg = parse({"bench", "--case", "gaussian,translation", "--refine", "0,1",
                          "--timesteps", "4,8", "--precond", "bb,simple", "--diagonal"});
  REQUIRE(cfg.has_value());
  CHECK(cfg->cases.size() == 2);
  CHECK(cfg->refine == std::vector<int>{0, 1});
  CHECK(cfg->preconds == std::vector<std::string>{"bb", "simple"});
  CHECK(cfg->diagonal);
}

TEST_CASE("config file values are overridden by flags") {
  const fs::path dir = scratch_dir("config");
  const fs::path file = dir / "run.ini";
  {
    std::ofstream f(file);
    f << "case = compression\ntimesteps = 16\nouter-tol = 1e-6\n";
  }
  const auto cfg = parse({"solve", "--config", file.string(), "--timesteps", "4"});
  REQUIRE(cfg.has_value());
  CHECK(cfg->cases == std::vector<std::string>{"compression"});
  CHECK(cfg->timesteps == std::vector<int>{4});
  CHECK(cfg->outer_tol == 1e-6);
  {
    std::ofstream f(file);
    f << "unknown-key = 3\n";
  }
  CHECK_THROWS_AS(parse({"solve", "--config", file.string()}), InputError);
  fs::remove_all(dir);
}

TEST_CASE("IP iteration count from the relaxation range") {
  CHECK(ip_iterations_for(1.0, 5e-7, 5.0) == 10);
  CHECK(ip_iterations_for(1.0, 1.0, 5.0) == 1);
  CHECK(ip_iterations_for(1.0, 0.2, 5.0) == 2);
}

TEST_CASE("help exits cleanly") {
  CHECK_FALSE(parse({"--help"}).has_value());
  CHECK(run({"--help"}) == kExitOk);
}

TEST_CASE("check-mesh reports admissibility") {
  const fs::path dir = scratch_dir("mesh");
  std::string text;
  CHECK(run({"check-mesh", "--refine", "1", "--output", dir.string()}, &text) == kExitOk);
  CHECK(fs::exists(dir / "mesh_report.csv"));
  const fs::path bad = dir / "right.txt";
  {
    std::ofstream f(bad);
    f << "3 1\n0 0\n1 0\n0 1\n0 1 2\n";
  }
  CHECK(run({"check-mesh", "--mesh", bad.string(), "--output", dir.string()}) == kExitInput);
  CHECK(run({"check-mesh", "--mesh", (dir / "missing.txt").string()}) == kExitInput);
  fs::remove_all(dir);
}

TEST_CASE("solve writes metrics and a checkpoint that reads back") {
  const fs::path dir = scratch_dir("solve");
  std::string text;
  const int code = run({"solve", "--case", "gaussian", "--refine", "0", "--timesteps", "2",
                        "--precond", "simple", "--mu-min", "0.04", "--output", dir.string()},
                       &text);
  CHECK(code == kExitOk);
  CHECK(text.find("converged") != std::string::npos);
  CHECK(fs::exists(dir / "metrics.csv"));
  const Discretization d = make_discretization(embedded_unit_square(), 2);
  const std::string stem = (dir / "state").string();
  const CheckpointInfo info = read_checkpoint_info(stem);
  CHECK(info.K == 2);
  CHECK(info.mu == doctest::Approx(0.04));
  const PrimalDualState st = read_checkpoint(stem, d);
  CHECK(st.rho.size() == d.grid.m);
  CHECK(st.rho.minCoeff() > 0.0);
  const Discretization other = make_discretization(embedded_unit_square(), 3);
  CHECK_THROWS_AS(read_checkpoint(stem, other), InputError);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const fs::path dir = scratch_dir("checkpoint");
  const Discretization d = small_discretization(1, 3);
  std::mt19937 rng(77);
  PrimalDualState st = random_state(d, rng, 0.37);
  st.lambda = random_vector(d.grid.K, rng);
  const std::string stem = (dir / "s").string();
  write_checkpoint(stem, st, d);
  const PrimalDualState back = read_checkpoint(stem, d);
  CHECK(back.mu == st.mu);
  CHECK(back.phi == st.phi);
  CHECK(back.rho == st.rho);
  CHECK(back.s == st.s);
  CHECK(back.lambda == st.lambda);
  CHECK(back.rho_begin == st.rho_begin);
  CHECK(back.rho_end == st.rho_end);
  {
    std::ofstream f(stem + ".txt");
    f << "phi 3\n1\n2\n";
  }
  CHECK_THROWS_AS(read_checkpoint(stem, d), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("export-system writes the requested blocks") {
  const fs::path dir = scratch_dir("export");
  CHECK(run({"export-system", "--case", "gaussian", "--refine", "0", "--timesteps", "2",
             "--precond", "bb", "--output", dir.string()}) == kExitOk);
  for (const char* name : {"A", "B", "C", "S", "S_tilde", "A_tilde", "B_tilde", "Q"})
    CHECK(fs::exists(dir / (std::string(name) + ".mtx")));
  fs::remove_all(dir);
}

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(f, l);) lines.push_back(l);
  return lines;
}

// Drops the two timing columns (cpu_per_linsys_s, setup_fraction).
std::string without_timing(const std::string& row) {
  std::vector<std::string> cols;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (i != 9 && i != 10) out += cols[i] + ",";
  return out;
}

}  // namespace

TEST_CASE("flag precedence over the config file for the preconditioner") {
  const fs::path dir = scratch_dir("precedence");
  const fs::path file = dir / "run.ini";
  {
    std::ofstream f(file);
    f << "precond = simple\n";
  }
  const auto cfg = parse({"solve", "--config", file.string(), "--precond", "hss"});
  REQUIRE(cfg.has_value());
  CHECK(cfg->preconds == std::vector<std::string>{"hss"});
  fs::remove_all(dir);
}

TEST_CASE("a full translation solve writes one row per IP iteration") {
  const fs::path dir = scratch_dir("ten_rows");
  CHECK(run({"solve", "--case", "translation", "--refine", "0", "--timesteps", "8", "--precond",
             "bb", "--output", dir.string()}) == kExitOk);
  const auto lines = read_lines(dir / "metrics.csv");
  CHECK(lines.size() == 11);
  fs::remove_all(dir);
}

TEST_CASE("an outer iteration cap of one is a numerical failure") {
  const fs::path dir = scratch_dir("cap");
  CHECK(run({"solve", "--case", "gaussian", "--refine", "0", "--timesteps", "2", "--outer-max",
             "1", "--mu-min", "0.2", "--output", dir.string()}) == kExitNumerical);
  const auto lines = read_lines(dir / "metrics.csv");
  REQUIRE(lines.size() >= 2);
  CHECK(lines[1].find("false") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("exported blocks have the saddle dimensions") {
  const fs::path dir = scratch_dir("export_dims");
  CHECK(run({"export-system", "--case", "gaussian", "--refine", "0", "--timesteps", "3",
             "--output", dir.string()}) == kExitOk);
  const Discretization d = make_discretization(embedded_unit_square(), 3);
  const SpMat A = read_matrix_market<double>((dir / "A.mtx").string());
  const SpMat B = read_matrix_market<double>((dir / "B.mtx").string());
  const SpMat C = read_matrix_market<double>((dir / "C.mtx").string());
  CHECK(A.rows() == d.grid.n);
  CHECK(A.cols() == d.grid.n);
  CHECK(B.rows() == d.grid.m);
  CHECK(B.cols() == d.grid.n);
  CHECK(C.rows() == d.grid.m);
  CHECK(C.cols() == d.grid.m);
  fs::remove_all(dir);
}

TEST_CASE("single-worker bench output is deterministic apart from timings") {
  const fs::path a = scratch_dir("bench_a"), b = scratch_dir("bench_b");
  const std::vector<std::string> args = {"bench", "--case", "gaussian", "--refine", "0",
                                         "--timesteps", "2,3", "--precond", "bb,simple",
                                         "--mu-min", "0.04", "--threads", "1"};
  auto with_output = [&](const fs::path& dir) {
    auto v = args;
    v.push_back("--output");
    v.push_back(dir.string());
    return v;
  };
  CHECK(run(with_output(a)) == kExitOk);
  CHECK(run(with_output(b)) == kExitOk);
  const auto la = read_lines(a / "bench.csv"), lb = read_lines(b / "bench.csv");
  REQUIRE(la.size() == lb.size());
  CHECK(la.size() == 1 + 2 * 2 * 3);
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(without_timing(la[i]) == without_timing(lb[i]));
  fs::remove_all(a);
  fs::remove_all(b);
}
