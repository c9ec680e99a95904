// Experiment definitions, the key = value config format, run orchestration
// and alpha sweeps.
//
// Config: one "key = value" per line, dotted keys, "#" starts a comment.
// `kind` is required; everything else has a per-kind default (see
// default_scenario). Packets are given as packet.<n>.<field>; listing any
// packet replaces the whole default packet list.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "abflux/dynamics.hpp"
#include "abflux/gauge.hpp"
#include "abflux/lattice.hpp"
#include "abflux/observables.hpp"
#include "abflux/series.hpp"

namespace abflux {

enum class ScenarioKind { flyby, three_packet, circle, capacitor_1d };

const char* to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

struct Scenario {
  ScenarioKind kind = ScenarioKind::flyby;

  int nx = 256;
  int ny = 256;
  double dx = 0.25;
  double mass = 1.0;

  double dt = 0.005;
  double t_end = 14.0;
  StepMethod method = StepMethod::implicit_midpoint;
  double tolerance = 1e-12;
  int max_iterations = 500;
  double box_limit = 1e-6;

  std::vector<PacketSpec> packets;
  FluxLineSpec flux;
  GaugeKind gauge = GaugeKind::string;

  double probe_interval = 0.05;
  double moment_interval = 1.0;  // <= 0 disables the velocity-moment probes
  double settle = 1.0;           // plateau window for step detection

  // flyby recombination: opposing kicks of +-kick_k along the packet axis at
  // kick_time, fringe read at kick_measure (<= 0: when the packets meet)
  bool recombine = true;
  double kick_time = 10.0;
  double kick_k = 2.0;
  double kick_measure = 0.0;

  // capacitor-1d
  double cap_L = 20.0;
  double cap_k0 = 2.0;
  double cap_sigma = 1.0;

  std::string output_dir = "out";

  bool operator==(const Scenario&) const = default;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, int line, const std::string& what);
  const std::string& key() const { return key_; }
  int line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string key_;
  int line_;
  std::string detail_;
};

Scenario default_scenario(ScenarioKind kind);

/// Parses and validates. Errors name the offending key and its line (0 when
/// the problem is a missing key or a cross-field invariant).
Scenario load_config(const std::string& text);
Scenario load_config_file(const std::filesystem::path& path);

/// Full config text; load_config(serialize(s)) == s.
std::string serialize(const Scenario& scenario);

/// Throws ConfigError for any violated invariant.
void validate(const Scenario& scenario);

Grid2D scenario_grid(const Scenario& scenario);
WaveFunction initial_state(const Scenario& scenario);
HamiltonianSpec scenario_hamiltonian(const Scenario& scenario);
StepperConfig stepper_config(const Scenario& scenario);

/// Displacement in sites from packet `from` to packet `to`; throws when the
/// separation is not a whole number of sites.
std::pair<int, int> packet_displacement(const Scenario& scenario, std::size_t from,
                                        std::size_t to);

/// Lattice group velocity sin(k dx) / (m dx).
double group_velocity(double k, double dx, double mass);

struct NamedReport {
  std::string probe;
  StepReport report;
};

struct CircleSummary {
  cplx plateau[3];
  double t_step[2];       // detected crossings
  double t_geometric[2];  // flux at x = +r, then x = -r
  int steps_detected;
};

struct FlybySummary {
  double t_geometric;  // packet centre reaches the flux column
  double t_edge;       // leading 3 sigma(t) edge reaches the flux plaquette
  double traverse_4sigma;
  std::optional<double> fringe;
  std::optional<std::string> fringe_error;
};

struct CapacitorSummary {
  double T;
  double weyl_at_T;
  double local_at_T;
  double max_deviation;  // max_t |<O(t)> - <O(0)>|
};

struct RunResult {
  std::vector<TimeSeries> series;
  std::vector<NamedReport> reports;
  double max_norm_drift = 0.0;
  long steps = 0;
  std::optional<WaveFunction> final_state;
  std::optional<FlybySummary> flyby;
  std::optional<CircleSummary> circle;
  std::optional<CapacitorSummary> capacitor;
  std::string manifest;

  const TimeSeries& find(const std::string& probe) const;
};

struct RunOptions {
  bool write_files = true;
  int threads = 0;
};

/// Runs the scenario and, with write_files, writes <probe>.series,
/// <probe>.step, final.state, manifest.txt into scenario.output_dir.
RunResult run(const Scenario& scenario, const RunOptions& options = {});

/// Closed forms from alpha alone.
cplx predicted_jump(double alpha);
cplx predicted_circle_plateau(double alpha, int index);

struct SweepRow {
  double alpha;
  cplx measured;   // flyby: chi jump; three-packet: pair-normalised AB jump
  cplx predicted;  // 1/2 (exp(-i alpha) - 1)
  double error;
  std::optional<double> fringe;
  std::optional<cplx> plateau[3];  // circle
};

struct SweepSpec {
  Scenario base;
  std::vector<double> alphas;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double max_error;
  std::string csv;
};

/// One run per alpha in its own subdirectory alpha_<k>, plus sweep.csv.
SweepResult sweep(const SweepSpec& spec, const RunOptions& options = {});

struct AuditResult {
  bool ok;
  std::string text;  // gauge_dump output plus one audit line per sampled time
};

/// Plaquette audit of the scenario's field (at t = 0, and along the flux
/// trajectory when the flux moves).
AuditResult audit(const Scenario& scenario);

struct OracleResult {
  double implicit_error;  // max |psi - psi_dense| after t_end
  double split_error;
  double t;
};

/// Small-grid comparison of both steppers with the dense propagator; the
/// flux must be static and the grid at most 40 x 40.
OracleResult oracle(const Scenario& scenario);

/// "1.5", "pi", "pi/2", "3pi/4", "2*pi", comma separated.
std::vector<double> parse_alpha_list(const std::string& text);

}  // namespace abflux
