#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace spatarch::cli {

struct SimulateArgs {
  std::string config;
  std::string out_prefix;
  std::optional<std::uint64_t> seed;
};

struct EstimateArgs {
  std::string panel;
  std::string weights;  // "lattice:<side>" or a CSV path
  std::string method;   // qml-transformed, qml-direct or gmm
  std::string out;      // optional result CSV
  bool jackknife = false;
  bool time_effects = false;  // qml-direct: also fit time fixed effects
};

struct McArgs {
  std::string config;  // empty with quick=true
  bool quick = false;
  std::string out_dir;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
};

struct ReportArgs {
  std::string run_dir;
  std::string compare;  // optional reference CSV
};

int run_simulate(const SimulateArgs& args, std::ostream& out,
                 std::ostream& err);
int run_estimate(const EstimateArgs& args, std::ostream& out,
                 std::ostream& err);
int run_mc(const McArgs& args, std::ostream& out, std::ostream& err);
int run_report(const ReportArgs& args, std::ostream& out, std::ostream& err);

}  // namespace spatarch::cli
