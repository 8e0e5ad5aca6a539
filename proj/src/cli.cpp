#include "otbb/cli.hpp"

#include "otbb/checkpoint.hpp"
#include "otbb/errors.hpp"
#include "otbb/matrix_market.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace otbb {

namespace {

// Thrown by the export hook once the requested system has been written.
struct ExportDone {};

template <class T>
const T& single(const std::vector<T>& v, const char* what) {
  if (v.size() != 1)
    throw InputError(std::string("exactly one --") + what + " value is required");
  return v.front();
}

void require_fraction(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0))
    throw InputError(std::string("--") + name + " must lie in (0, 1)");
}

CoarseMesh base_mesh(const CliConfig& cfg) {
  return cfg.mesh == "embedded" ? embedded_unit_square() : load_mesh(cfg.mesh);
}

std::filesystem::path output_dir(const CliConfig& cfg) {
  std::filesystem::path dir(cfg.output);
  std::filesystem::create_directories(dir);
  return dir;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw InputError("cannot write " + p.string());
  return f;
}

int cmd_solve(const CliConfig& cfg, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const std::string& name = single(cfg.cases, "case");
  const int level = single(cfg.refine, "refine");
  const int K = single(cfg.timesteps, "timesteps");
  const PrecondKind kind = parse_precond_kind(single(cfg.preconds, "precond"));
  const TestCase tc = make_case(name);
  const Discretization d = make_discretization(refine(base_mesh(cfg), level), K);
  const auto [r0, r1] = discretize_boundary(tc, d.mesh.coarse);
  const IpOptions opt = ip_options(cfg);
  PrimalDualState st = initial_state(d, r0, r1, opt.mu0);
  const RunMetrics m = ip_solve(st, d, opt);

  const auto dir = output_dir(cfg);
  auto csv = open_out(dir / "metrics.csv");
  write_csv_header(csv);
  for (const auto& row : rows_from_metrics(name, level, K, kind, m)) write_csv_row(csv, row);
  write_checkpoint((dir / "state").string(), st, d);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (cfg.verbosity > 0)
    for (const auto& it : m.iterations)
      out << "ip " << it.ip_iter << " mu " << it.mu << " linsys " << it.linear_systems
          << " outer/linsys " << it.outer_per_linsys << " inner/outer "
          << it.inner_per_outer << (it.converged && it.newton_converged ? "" : " (not converged)")
          << '\n';
  const bool ok = !m.failed && m.converged();
  out << "cost " << m.final_cost << " linear_systems " << m.total_linear_systems
      << " wall_s " << wall << (ok ? " converged" : " not-converged") << '\n';
  if (m.failed) out << "failure: " << m.failure << '\n';
  return ok ? kExitOk : kExitNumerical;
}

int cmd_bench(const CliConfig& cfg, std::ostream& out) {
  SweepConfig sc;
  sc.cases = cfg.cases;
  sc.mesh_levels = cfg.refine;
  sc.K_values = cfg.timesteps;
  for (const auto& p : cfg.preconds) sc.preconds.push_back(parse_precond_kind(p));
  sc.diagonal = cfg.diagonal;
  sc.threads = effective_threads(cfg.threads);
  sc.ip = ip_options(cfg);
  for (const auto& c : sc.cases) make_case(c);  // reject unknown names up front

  const auto results = sweep(sc, base_mesh(cfg));
  const auto dir = output_dir(cfg);
  auto csv = open_out(dir / "bench.csv");
  write_csv_header(csv);
  int failed = 0;
  for (const auto& r : results) {
    auto rows = r.rows;
    if (rows.empty()) {
      // Nothing ran: keep a marker row so the failure is visible in the table.
      BenchRow b;
      b.case_name = r.spec.case_name;
      b.mesh_level = r.spec.mesh_level;
      b.K = r.spec.K;
      b.precond = to_string(r.spec.precond);
      rows.push_back(b);
    }
    for (const auto& row : rows) write_csv_row(csv, row);
    const bool ok = !r.failed && r.metrics.converged();
    failed += !ok;
    out << r.spec.case_name << " refine " << r.spec.mesh_level << " K " << r.spec.K << ' '
        << to_string(r.spec.precond) << ": outer/linsys "
        << r.metrics.average_outer_per_linsys() << (ok ? "" : " (failed: " + r.error + ")")
        << '\n';
  }
  out << results.size() << " runs, " << failed << " not converged\n";
  return kExitOk;
}

int cmd_check_mesh(const CliConfig& cfg, std::ostream& out) {
  const int level = single(cfg.refine, "refine");
  const TwoLevelMesh mesh = build_two_level(refine(base_mesh(cfg), level));
  const auto dir = output_dir(cfg);
  auto csv = open_out(dir / "mesh_report.csv");
  csv << "level,edge,left,right,angle_error_rad,distance,pass\n";
  csv << std::setprecision(6);
  bool all = true;
  auto report = [&](const char* label, const FvGeometry& g) {
    const AdmissibilityReport r = validate_admissibility(g);
    for (std::size_t e = 0; e < r.edges.size(); ++e)
      csv << label << ',' << e << ',' << g.edges[e].left << ',' << g.edges[e].right << ','
          << r.edges[e].angle_error << ',' << r.edges[e].distance << ','
          << (r.edges[e].pass ? "true" : "false") << '\n';
    out << label << ": cells " << g.num_cells() << " internal edges " << g.num_edges()
        << " max angle error " << r.max_angle_error << " rad, min |w| " << r.min_distance
        << (r.all_pass ? " pass" : " FAIL") << '\n';
    all = all && r.all_pass;
  };
  report("coarse", mesh.coarse);
  report("fine", mesh.fine);
  return all ? kExitOk : kExitInput;
}

int cmd_export(const CliConfig& cfg, std::ostream& out) {
  const std::string& name = single(cfg.cases, "case");
  const int level = single(cfg.refine, "refine");
  const int K = single(cfg.timesteps, "timesteps");
  const Discretization d = make_discretization(refine(base_mesh(cfg), level), K);
  const auto [r0, r1] = discretize_boundary(make_case(name), d.mesh.coarse);
  IpOptions opt = ip_options(cfg);
  if (cfg.export_ip > opt.ip_iterations)
    throw InputError("--export-ip exceeds the number of IP iterations");
  opt.ip_iterations = cfg.export_ip;
  PrimalDualState st = initial_state(d, r0, r1, opt.mu0);
  const auto dir = output_dir(cfg);
  auto hook = [&](int ip, double mu, int step, const PrimalDualState& s,
                  const SaddleSystem& sys) {
    if (ip != cfg.export_ip || step != cfg.export_newton) return;
    const PrecondOptions& po = opt.precond_options;
    auto put = [&dir](const char* file, const SpMat& A) {
      write_matrix_market((dir / file).string(), A);
    };
    put("A.mtx", sys.A);
    put("B.mtx", sys.B);
    put("C.mtx", diagonal_matrix<double>(sys.C));
    put("S.mtx", PrimalSchurPreconditioner(sys, d, po).S());
    put("S_tilde.mtx", SimplePreconditioner(sys, d, po).S_tilde());
    const BbPreconditioner bb(sys, s, d, po);
    put("A_tilde.mtx", bb.A_tilde());
    put("B_tilde.mtx", bb.B_tilde());
    put("Q.mtx", bb.schur_matrix());
    out << "exported ip " << ip << " newton " << step << " mu " << mu << ": n "
        << sys.A.rows() << " m " << sys.B.rows() << " to " << dir.string() << '\n';
    throw ExportDone{};
  };
  try {
    ip_solve(st, d, opt, hook);
  } catch (const ExportDone&) {
    return kExitOk;
  }
  throw InputError("the requested Newton step was never reached");
}

}  // namespace

int ip_iterations_for(double mu0, double mu_min, double mu_factor) {
  int n = 0;
  for (double mu = mu0; mu >= mu_min * (1.0 - 1e-12); mu /= mu_factor) ++n;
  return n;
}

int effective_threads(int requested) {
  int t = std::max(1, requested);
  if (const char* env = std::getenv("OTBB_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1)
      throw InputError("OTBB_THREADS must be a positive integer");
    t = std::min<long>(t, cap);
  }
  return t;
}

void validate(const CliConfig& cfg) {
  for (int r : cfg.refine)
    if (r < 0 || r > 6) throw InputError("--refine must lie in [0, 6]");
  for (int K : cfg.timesteps)
    if (K < 1) throw InputError("--timesteps must be at least 1");
  require_fraction(cfg.outer_tol, "outer-tol");
  require_fraction(cfg.newton_tol, "newton-tol");
  if (cfg.inner_tol) require_fraction(*cfg.inner_tol, "inner-tol");
  if (!(cfg.mu0 > 0.0)) throw InputError("--mu0 must be positive");
  if (!(cfg.mu_min > 0.0 && cfg.mu_min <= cfg.mu0))
    throw InputError("--mu-min must lie in (0, mu0]");
  if (!(cfg.mu_factor > 1.0)) throw InputError("--mu-factor must exceed 1");
  if (cfg.outer_max < 1) throw InputError("--outer-max must be at least 1");
  if (cfg.threads < 1) throw InputError("--threads must be at least 1");
  if (cfg.export_ip < 1 || cfg.export_newton < 1)
    throw InputError("--export-ip and --export-newton are 1-based");
  if (cfg.newton_stop != "relative" && cfg.newton_stop != "mixed")
    throw InputError("--newton-stop must be relative or mixed");
  for (const auto& p : cfg.preconds) parse_precond_kind(p);
  const auto known = case_names();
  for (const auto& c : cfg.cases)
    if (std::find(known.begin(), known.end(), c) == known.end())
      throw InputError("unknown case '" + c + "'");
  if (cfg.command == "bench" && cfg.diagonal && cfg.refine.size() != cfg.timesteps.size())
    throw InputError("--diagonal pairs refine levels with timesteps; counts differ");
}

IpOptions ip_options(const CliConfig& cfg) {
  IpOptions o;
  o.mu0 = cfg.mu0;
  o.mu_factor = cfg.mu_factor;
  o.ip_iterations = ip_iterations_for(cfg.mu0, cfg.mu_min, cfg.mu_factor);
  o.outer_tol = cfg.outer_tol;
  o.outer_max_iterations = cfg.outer_max;
  o.newton_tol = cfg.newton_tol;
  o.newton_stop = cfg.newton_stop == "mixed" ? NewtonStop::mixed : NewtonStop::relative;
  if (!cfg.preconds.empty()) o.precond = parse_precond_kind(cfg.preconds.front());
  if (cfg.inner_tol) {
    auto& p = o.precond_options;
    p.hss_inner_tol = p.primal_inner_tol = p.simple_inner_tol = *cfg.inner_tol;
    p.bb_schur_tol = p.bb_block_tol = *cfg.inner_tol;
  }
  return o;
}

std::optional<CliConfig> parse_config(int argc, const char* const* argv,
                                      std::ostream& out) {
  CliConfig cfg;
  CLI::App app{"Dynamical optimal transport with preconditioned interior-point Newton",
               "otbb"};
  app.set_config("--config", "", "Flat `key = value` file; keys are long option names");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);

  app.add_option("--case", cfg.cases, "gaussian, translation or compression")
      ->delimiter(',');
  app.add_option("--mesh", cfg.mesh, "Mesh file (`nv nt`, vertices, CCW triangles) or `embedded`");
  app.add_option("--refine", cfg.refine, "Uniform refinements of the base mesh")
      ->delimiter(',');
  app.add_option("--timesteps", cfg.timesteps, "Number of density time levels K")
      ->delimiter(',');
  app.add_option("--precond", cfg.preconds, "hss, primal, simple or bb")->delimiter(',');
  app.add_flag("--diagonal", cfg.diagonal, "bench: pair refine levels with timesteps");
  app.add_option("--threads", cfg.threads, "bench: worker threads (capped by OTBB_THREADS)");
  app.add_option("--mu0", cfg.mu0, "Initial relaxation");
  app.add_option("--mu-min", cfg.mu_min, "Smallest relaxation reached");
  app.add_option("--mu-factor", cfg.mu_factor, "Relaxation divisor per IP iteration");
  app.add_option("--outer-tol", cfg.outer_tol, "Relative FGMRES tolerance");
  app.add_option("--outer-max", cfg.outer_max, "FGMRES iteration cap");
  app.add_option("--newton-tol", cfg.newton_tol, "Newton tolerance per relaxation");
  app.add_option("--newton-stop", cfg.newton_stop, "relative or mixed");
  app.add_option("--inner-tol", cfg.inner_tol, "Override every inner solver tolerance");
  app.add_option("--export-ip", cfg.export_ip, "export-system: IP iteration (1-based)");
  app.add_option("--export-newton", cfg.export_newton, "export-system: Newton step (1-based)");
  app.add_option("--output", cfg.output, "Output directory");
  app.add_flag("-v,--verbose", cfg.verbosity, "More output (repeatable)");

  for (const char* cmd : {"solve", "bench", "check-mesh", "export-system"}) {
    auto* sub = app.add_subcommand(cmd);
    sub->fallthrough();
    sub->callback([&cfg, cmd]() { cfg.command = cmd; });
  }
  app.get_subcommand("solve")->description("One interior-point run; writes metrics.csv and a checkpoint");
  app.get_subcommand("bench")->description("Sweep cases x meshes x timesteps x preconditioners; writes bench.csv");
  app.get_subcommand("check-mesh")->description("Admissibility report of the coarse and fine meshes");
  app.get_subcommand("export-system")->description("Matrix Market dump of one Newton system and its auxiliaries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return std::nullopt;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return std::nullopt;
  } catch (const CLI::ParseError& e) {
    throw InputError(e.what());
  }
  validate(cfg);
  return cfg;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    const auto cfg = parse_config(argc, argv, out);
    if (!cfg) return kExitOk;
    if (cfg->command == "solve") return cmd_solve(*cfg, out);
    if (cfg->command == "bench") return cmd_bench(*cfg, out);
    if (cfg->command == "check-mesh") return cmd_check_mesh(*cfg, out);
    return cmd_export(*cfg, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const MatrixMarketError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace otbb
