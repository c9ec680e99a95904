// abflux: run, sweep, audit and oracle-check flux-line scenarios.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "abflux/io.hpp"
#include "abflux/scenario.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string method;
  int threads = 0;
};

abflux::Scenario load(const Common& c) {
  abflux::Scenario s = abflux::load_config_file(c.config);
  if (!c.out.empty()) s.output_dir = c.out;
  if (!c.method.empty()) s.method = abflux::step_method_from_string(c.method);
  abflux::validate(s);
  return s;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("config", c.config, "scenario config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory (overrides output.dir)");
  cmd->add_option("--method", c.method, "time stepper")->check(CLI::IsMember({"implicit", "split"}));
  cmd->add_option("--threads", c.threads, "worker threads (0: library default)")->check(CLI::NonNegativeNumber);
}

void print_report(const abflux::RunResult& r) {
  for (const auto& rep : r.reports) std::cout << abflux::format_step_report(rep.report, rep.probe);
  if (r.flyby) {
    std::printf("t_geometric = %.6g\nt_edge = %.6g\n", r.flyby->t_geometric, r.flyby->t_edge);
    if (r.flyby->fringe) std::printf("fringe_phase = %.10g\n", *r.flyby->fringe);
    if (r.flyby->fringe_error) std::printf("fringe_phase = none (%s)\n", r.flyby->fringe_error->c_str());
  }
  if (r.circle) {
    for (int k = 0; k < 3; ++k)
      std::printf("plateau %d = %.10g %.10g\n", k, r.circle->plateau[k].real(), r.circle->plateau[k].imag());
    std::printf("steps_detected = %d\n", r.circle->steps_detected);
  }
  if (r.capacitor)
    std::printf("O(0) = %.15g\nmax |O(t) - O(0)| = %.3g\nO_weyl(T) = %.15g\nO_local(T) = %.15g\n",
                r.find("O").values.front().real(), r.capacitor->max_deviation, r.capacitor->weyl_at_T,
                r.capacitor->local_at_T);
  if (r.steps > 0) std::printf("steps = %ld\nmax_norm_drift = %.3g\n", r.steps, r.max_norm_drift);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aharonov-Bohm flux-line lattice experiments"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, audit_opts, oracle_opts;
  std::string alpha_list;
  auto* run_cmd = app.add_subcommand("run", "run one scenario and write its outputs");
  add_common(run_cmd, run_opts);
  auto* sweep_cmd = app.add_subcommand("sweep", "run the scenario once per alpha and tabulate");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--alpha", alpha_list, "comma separated, e.g. 0,pi/4,pi/2")->required();
  auto* audit_cmd = app.add_subcommand("audit", "plaquette and gauge checks only");
  add_common(audit_cmd, audit_opts);
  auto* oracle_cmd = app.add_subcommand("oracle", "compare both steppers with the dense propagator");
  add_common(oracle_cmd, oracle_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const abflux::Scenario s = load(run_opts);
      const abflux::RunResult r = abflux::run(s, {true, run_opts.threads});
      print_report(r);
      std::cout << "outputs in " << s.output_dir << "\n";
    } else if (*sweep_cmd) {
      abflux::SweepSpec spec{load(sweep_opts), abflux::parse_alpha_list(alpha_list)};
      const abflux::SweepResult r = abflux::sweep(spec, {true, sweep_opts.threads});
      std::cout << r.csv;
      std::printf("max |measured - predicted| = %.3g\n", r.max_error);
    } else if (*audit_cmd) {
      const abflux::Scenario s = load(audit_opts);
      const abflux::AuditResult r = abflux::audit(s);
      std::filesystem::create_directories(s.output_dir);
      const auto path = std::filesystem::path(s.output_dir) / "gauge.txt";
      abflux::write_file_atomic(path, r.text);
      const auto pos = r.text.find("# t=");
      std::cout << (pos == std::string::npos ? r.text : r.text.substr(pos));
      std::cout << "gauge dump in " << path.string() << "\n" << (r.ok ? "audit ok" : "audit FAILED") << "\n";
      return r.ok ? 0 : 1;
    } else if (*oracle_cmd) {
      const abflux::Scenario s = load(oracle_opts);
      if (oracle_opts.threads > 0) abflux::set_worker_threads(oracle_opts.threads);
      const abflux::OracleResult r = abflux::oracle(s);
      std::printf("t = %.6g\nimplicit max amplitude error = %.3e\nsplit max amplitude error = %.3e\n", r.t,
                  r.implicit_error, r.split_error);
    }
  } catch (const std::exception& e) {
    std::cerr << "abflux: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
