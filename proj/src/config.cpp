#include "spatarch/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>

#include "spatarch/errors.hpp"

namespace spatarch {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::config, path + ": " + what);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::string item =
        trim(value.substr(start, comma == std::string::npos
                                     ? std::string::npos
                                     : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(const IniFile& f, const std::string& section,
                 const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0' || !std::isfinite(x))
    fail(f.path, "[" + section + "] " + key + ": not a number: '" + v + "'");
  return x;
}

long to_long(const IniFile& f, const std::string& section,
             const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    fail(f.path, "[" + section + "] " + key + ": not an integer: '" + v + "'");
  return x;
}

std::uint64_t to_u64(const IniFile& f, const std::string& section,
                     const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    fail(f.path, "[" + section + "] " + key + ": not a seed value: '" + v + "'");
  return static_cast<std::uint64_t>(x);
}

bool to_bool(const IniFile& f, const std::string& section,
             const std::string& key, const std::string& v) {
  std::string s = v;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  fail(f.path, "[" + section + "] " + key + ": not a boolean: '" + v + "'");
}

// Accessors over one section with strict unknown-key rejection.
class SectionReader {
 public:
  SectionReader(const IniFile& file, std::string section)
      : file_(file), section_(std::move(section)) {
    if (!file.has(section_)) fail(file.path, "missing section [" + section_ + "]");
  }

  const std::string* find(const std::string& key) {
    seen_.insert(key);
    return file_.find(section_, key);
  }

  std::string require(const std::string& key) {
    const std::string* v = find(key);
    if (v == nullptr)
      fail(file_.path, "[" + section_ + "] is missing key '" + key + "'");
    return *v;
  }

  double number(const std::string& key, double fallback) {
    const std::string* v = find(key);
    return v ? to_double(file_, section_, key, *v) : fallback;
  }
  double require_number(const std::string& key) {
    return to_double(file_, section_, key, require(key));
  }
  long integer(const std::string& key, long fallback) {
    const std::string* v = find(key);
    return v ? to_long(file_, section_, key, *v) : fallback;
  }
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    const std::string* v = find(key);
    return v ? to_u64(file_, section_, key, *v) : fallback;
  }
  bool boolean(const std::string& key, bool fallback) {
    const std::string* v = find(key);
    return v ? to_bool(file_, section_, key, *v) : fallback;
  }
  std::vector<std::string> list(const std::string& key) {
    const std::string* v = find(key);
    return v ? split_list(*v) : std::vector<std::string>{};
  }

  void reject_unknown() const {
    for (const auto& [key, value] : file_.sections.at(section_)) {
      (void)value;
      if (seen_.count(key) == 0)
        fail(file_.path, "[" + section_ + "] has an unknown key '" + key + "'");
    }
  }

 private:
  const IniFile& file_;
  std::string section_;
  std::set<std::string> seen_;
};

ModelSpec load_model(const IniFile& file, const std::string& name) {
  SectionReader sec(file, "model " + name);
  ModelSpec m;
  m.name = name;
  m.rho = sec.require_number("rho");
  m.gamma = sec.require_number("gamma");
  m.delta = sec.require_number("delta");
  const std::vector<std::string> betas = sec.list("beta");
  m.beta.resize(static_cast<Eigen::Index>(betas.size()));
  for (std::size_t i = 0; i < betas.size(); ++i)
    m.beta(static_cast<Eigen::Index>(i)) =
        to_double(file, "model " + name, "beta", betas[i]);
  m.sigma_mu = sec.number("sigma_mu", 1.0);
  m.time_effects = sec.boolean("time_effects", false);
  m.sigma_alpha = sec.number("sigma_alpha", 1.0);
  sec.reject_unknown();
  if (m.sigma_mu < 0.0 || m.sigma_alpha < 0.0)
    fail(file.path, "[model " + name + "] effect scales must be non-negative");
  return m;
}

const std::set<std::string> kKnownEstimators = {"gmm", "qml_transformed",
                                                "qml_direct"};

}  // namespace

bool IniFile::has(const std::string& section) const {
  return sections.count(section) > 0;
}

const std::string* IniFile::find(const std::string& section,
                                 const std::string& key) const {
  const auto it = sections.find(section);
  if (it == sections.end()) return nullptr;
  for (const auto& [k, v] : it->second)
    if (k == key) return &v;
  return nullptr;
}

IniFile parse_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config file: " + path);
  IniFile file;
  file.path = path;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        fail(path, "line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        fail(path, "line " + std::to_string(lineno) + ": empty section name");
      if (file.sections.count(section))
        fail(path, "line " + std::to_string(lineno) + ": duplicate section [" +
                       section + "]");
      file.sections[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(path, "line " + std::to_string(lineno) + ": expected 'key = value'");
    if (section.empty())
      fail(path, "line " + std::to_string(lineno) + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      fail(path, "line " + std::to_string(lineno) + ": empty key");
    for (const auto& [k, v] : file.sections[section]) {
      (void)v;
      if (k == key)
        fail(path, "line " + std::to_string(lineno) + ": duplicate key '" +
                       key + "' in [" + section + "]");
    }
    file.sections[section].emplace_back(key, value);
  }
  return file;
}

McConfig parse_mc_config(const std::string& path) {
  const IniFile file = parse_ini(path);
  SectionReader sec(file, "mc");
  McConfig cfg;
  cfg.replications = static_cast<int>(sec.integer("replications", 1000));
  cfg.seed = sec.seed("seed", kDefaultBaseSeed);
  cfg.burn_in = static_cast<int>(sec.integer("burn_in", 100));
  cfg.workers = static_cast<int>(sec.integer("workers", 0));

  const std::string* sides = sec.find("sides");
  if (sides) {
    for (const std::string& s : split_list(*sides))
      cfg.sides.push_back(static_cast<int>(to_double(file, "mc", "sides", s)));
  } else {
    cfg.sides = {5, 7, 9};
  }
  const std::string* periods = sec.find("periods");
  if (periods) {
    for (const std::string& s : split_list(*periods))
      cfg.periods.push_back(
          static_cast<int>(to_double(file, "mc", "periods", s)));
  } else {
    cfg.periods = {5, 10, 20};
  }
  const std::string* estimators = sec.find("estimators");
  cfg.estimators = estimators ? split_list(*estimators)
                              : std::vector<std::string>{
                                    "gmm", "qml_transformed", "qml_direct"};
  const std::vector<std::string> model_names = sec.list("models");
  sec.reject_unknown();

  if (model_names.empty()) fail(path, "[mc] models list is empty");
  for (const std::string& name : model_names)
    cfg.models.push_back(load_model(file, name));

  if (cfg.replications < 1) fail(path, "[mc] replications must be positive");
  if (cfg.burn_in < 0) fail(path, "[mc] burn_in must be non-negative");
  if (cfg.workers < 0) fail(path, "[mc] workers must be non-negative");
  if (cfg.sides.empty()) fail(path, "[mc] sides list is empty");
  for (int s : cfg.sides)
    if (s < 2) fail(path, "[mc] lattice sides must be at least 2");
  if (cfg.periods.empty()) fail(path, "[mc] periods list is empty");
  for (int t : cfg.periods)
    if (t < 2) fail(path, "[mc] periods must be at least 2");
  if (cfg.estimators.empty()) fail(path, "[mc] estimators list is empty");
  std::set<std::string> seen_est;
  for (const std::string& e : cfg.estimators) {
    if (kKnownEstimators.count(e) == 0)
      fail(path, "[mc] unknown estimator '" + e + "'");
    if (!seen_est.insert(e).second)
      fail(path, "[mc] estimator '" + e + "' listed twice");
  }
  for (const ModelSpec& m : cfg.models)
    if (m.beta.size() != cfg.models.front().beta.size())
      fail(path, "all models must share the same regressor count");
  return cfg;
}

SimulateSpec parse_simulate_config(const std::string& path) {
  const IniFile file = parse_ini(path);
  SectionReader sec(file, "simulate");
  SimulateSpec spec;
  const std::string model_name = sec.require("model");
  spec.side = static_cast<int>(sec.integer("side", 5));
  spec.T = static_cast<int>(sec.integer("periods", 10));
  spec.seed = sec.seed("seed", kDefaultBaseSeed);
  spec.burn_in = static_cast<int>(sec.integer("burn_in", 100));
  sec.reject_unknown();
  spec.model = load_model(file, model_name);
  if (spec.side < 2) fail(path, "[simulate] side must be at least 2");
  if (spec.T < 1) fail(path, "[simulate] periods must be positive");
  if (spec.burn_in < 0) fail(path, "[simulate] burn_in must be non-negative");
  return spec;
}

}  // namespace spatarch
