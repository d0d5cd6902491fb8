#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spatarch/mc.hpp"

namespace spatarch {

// Minimal INI reader: [section] headers, key = value pairs, # or ; comments,
// comma-separated lists. Unknown keys are rejected by the typed loaders.
struct IniFile {
  // section -> ordered (key, value) pairs
  std::map<std::string, std::vector<std::pair<std::string, std::string>>>
      sections;
  std::string path;

  bool has(const std::string& section) const;
  const std::string* find(const std::string& section,
                          const std::string& key) const;
};

IniFile parse_ini(const std::string& path);

// Study configuration: an [mc] section plus one [model <name>] section per
// entry in its models list.
McConfig parse_mc_config(const std::string& path);

struct SimulateSpec {
  ModelSpec model;
  int side = 5;
  int T = 10;
  std::uint64_t seed = kDefaultBaseSeed;
  int burn_in = 100;
};

// Single-panel simulation: a [simulate] section naming one of the [model ...]
// sections in the same file.
SimulateSpec parse_simulate_config(const std::string& path);

}  // namespace spatarch
