#include "spatarch/mc.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <thread>

#include "spatarch/dgp.hpp"
#include "spatarch/errors.hpp"
#include "spatarch/gmm.hpp"
#include "spatarch/qml.hpp"

namespace spatarch {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// Byte hash of the simulated panel, used to assert that every estimator in a
// replication sees the same draw.
std::uint64_t panel_hash(const Panel& p) {
  std::uint64_t h = 1469598103934665603ULL;
  h = fnv1a(h, p.y0.data(), sizeof(double) * static_cast<std::size_t>(p.y0.size()));
  h = fnv1a(h, p.y.data(), sizeof(double) * static_cast<std::size_t>(p.y.size()));
  for (const auto& xt : p.x)
    h = fnv1a(h, xt.data(), sizeof(double) * static_cast<std::size_t>(xt.size()));
  return h;
}

ModelSpec make_model(std::string name, double rho, double gamma, double delta,
                     bool time_effects) {
  ModelSpec m;
  m.name = std::move(name);
  m.rho = rho;
  m.gamma = gamma;
  m.delta = delta;
  m.beta.resize(2);
  m.beta << 0.5, 1.0;
  m.time_effects = time_effects;
  return m;
}

int resolve_workers(int configured) {
  if (const char* env = std::getenv("SPATARCH_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 0)
      throw Error(ErrorCode::config,
                  std::string("SPATARCH_THREADS is not a worker count: ") + env);
    configured = static_cast<int>(v);
  }
  if (configured <= 0)
    configured = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, configured);
}

void validate_config(const McConfig& cfg) {
  auto bad = [](const std::string& what) {
    throw Error(ErrorCode::config, "study configuration: " + what);
  };
  if (cfg.models.empty()) bad("no models");
  if (cfg.sides.empty()) bad("no lattice sides");
  if (cfg.periods.empty()) bad("no panel lengths");
  if (cfg.estimators.empty()) bad("no estimators");
  if (cfg.replications < 1) bad("replications must be positive");
  if (cfg.burn_in < 0) bad("burn_in must be non-negative");
  for (int s : cfg.sides)
    if (s < 2) bad("lattice side below 2");
  for (int t : cfg.periods)
    if (t < 2) bad("panel length below 2");
  const std::set<std::string> known = {"gmm", "qml_transformed", "qml_direct"};
  for (const auto& e : cfg.estimators)
    if (known.count(e) == 0) bad("unknown estimator '" + e + "'");
  for (const auto& m : cfg.models)
    if (m.beta.size() != cfg.models.front().beta.size())
      bad("models disagree on the regressor count");
}

struct RepOutcome {
  bool attempted = false;
  bool failed = false;
  bool converged = false;
  Eigen::VectorXd estimates;  // rho, gamma, delta, beta..., sigma2
};

std::vector<std::string> parameter_names(int k) {
  std::vector<std::string> names = {"rho", "gamma", "delta"};
  for (int j = 1; j <= k; ++j) names.push_back("beta" + std::to_string(j));
  names.push_back("sigma2");
  return names;
}

Eigen::VectorXd truth_vector(const ModelSpec& m) {
  Eigen::VectorXd truth(m.beta.size() + 4);
  truth(0) = m.rho;
  truth(1) = m.gamma;
  truth(2) = m.delta;
  truth.segment(3, m.beta.size()) = m.beta;
  truth(m.beta.size() + 3) = log_chi2_variance();
  return truth;
}

Eigen::VectorXd qml_estimates(const QmlResult& r) {
  Eigen::VectorXd e(r.beta.size() + 4);
  e(0) = r.rho;
  e(1) = r.gamma;
  e(2) = r.delta;
  e.segment(3, r.beta.size()) = r.beta;
  e(r.beta.size() + 3) = r.sigma2;
  return e;
}

Eigen::VectorXd gmm_estimates(const GmmResult& r) {
  Eigen::VectorXd e(r.beta.size() + 4);
  e(0) = r.rho;
  e(1) = r.gamma;
  e(2) = r.delta;
  e.segment(3, r.beta.size()) = r.beta;
  e(r.beta.size() + 3) = r.sigma2;
  return e;
}

// One replication: simulate once, then run every requested estimator on the
// same panel.
void run_replication(const McConfig& cfg, const ModelSpec& model,
                     const std::shared_ptr<const WeightMatrix>& W, int T,
                     int cell_index, int rep, const GmmStatics* statics,
                     std::vector<std::vector<RepOutcome>>& slots) {
  DgpConfig dc;
  dc.W = W;
  dc.T = T;
  dc.rho = model.rho;
  dc.gamma = model.gamma;
  dc.delta = model.delta;
  dc.beta = model.beta;
  dc.sigma_mu = model.sigma_mu;
  dc.use_time_effects = model.time_effects;
  dc.sigma_alpha = model.sigma_alpha;
  dc.burn_in = cfg.burn_in;
  dc.seed = cfg.seed;
  dc.cell = static_cast<std::uint32_t>(cell_index);
  dc.replication = static_cast<std::uint32_t>(rep);
  const SimOutput sim = simulate(dc);
  const StarPanel star = log_square(sim.panel);
  const std::uint64_t h0 = panel_hash(sim.panel);

  std::optional<Eigen::VectorXd> trans_point;  // (gamma, delta, beta..., rho)
  auto transformed_seed = [&]() -> std::optional<Eigen::VectorXd> {
    if (!trans_point) {
      if (!W->row_normalized()) return std::nullopt;
      try {
        QmlOptions opt;
        opt.with_variance = false;
        const QmlResult q =
            estimate_qml(star, *W, QmlApproach::transformed, opt);
        Eigen::VectorXd seed(q.beta.size() + 3);
        seed(0) = q.rho;
        seed(1) = q.gamma;
        seed(2) = q.delta;
        seed.tail(q.beta.size()) = q.beta;
        trans_point = seed;
      } catch (const Error& e) {
        if (!is_estimation_failure(e.code())) throw;
        return std::nullopt;
      }
    }
    return trans_point;
  };

  for (std::size_t ei = 0; ei < cfg.estimators.size(); ++ei) {
    if (panel_hash(sim.panel) != h0)
      throw Error(ErrorCode::numeric,
                  "simulated panel changed between estimators");
    const std::string& name = cfg.estimators[ei];
    RepOutcome& slot = slots[ei][static_cast<std::size_t>(rep)];
    slot.attempted = true;
    try {
      if (name == "qml_transformed" || name == "qml_direct") {
        QmlOptions opt;
        opt.with_variance = false;
        // The direct approach fits time effects exactly when the model
        // specification includes them.
        opt.time_effects = model.time_effects;
        const QmlResult r = estimate_qml(star, *W,
                                         name == "qml_transformed"
                                             ? QmlApproach::transformed
                                             : QmlApproach::direct,
                                         opt);
        slot.converged = r.converged;
        slot.estimates = qml_estimates(r);
        if (name == "qml_transformed" && r.converged) {
          Eigen::VectorXd seed(r.beta.size() + 3);
          seed(0) = r.rho;
          seed(1) = r.gamma;
          seed(2) = r.delta;
          seed.tail(r.beta.size()) = r.beta;
          trans_point = seed;
        }
      } else {
        GmmOptions opt;
        opt.with_variance = false;
        opt.statics = statics;
        opt.initial = transformed_seed();
        const GmmResult r = estimate_gmm(star, *W, opt);
        slot.converged = r.converged;
        slot.estimates = gmm_estimates(r);
      }
    } catch (const Error& e) {
      if (!is_estimation_failure(e.code())) throw;
      slot.failed = true;
    }
  }
}

EstimatorCell summarize(const std::string& estimator,
                        const std::vector<std::string>& names,
                        const Eigen::VectorXd& truth,
                        const std::vector<RepOutcome>& outcomes) {
  EstimatorCell cell;
  cell.estimator = estimator;
  cell.n_reps = static_cast<int>(outcomes.size());
  for (const RepOutcome& o : outcomes) {
    if (o.failed) ++cell.n_failed;
    else if (o.converged) ++cell.n_converged;
  }
  if (cell.n_converged == 0)
    throw Error(ErrorCode::non_convergence,
                "no usable replication for estimator " + estimator);
  const int np = static_cast<int>(names.size());
  for (int p = 0; p < np; ++p) {
    double sum = 0.0, sumsq = 0.0, sumabs = 0.0;
    for (const RepOutcome& o : outcomes) {
      if (o.failed || !o.converged) continue;
      const double err = o.estimates(p) - truth(p);
      sum += err;
      sumsq += err * err;
      sumabs += std::abs(err);
    }
    const double inv = 1.0 / cell.n_converged;
    ParamMetric pm;
    pm.parameter = names[static_cast<std::size_t>(p)];
    pm.truth = truth(p);
    pm.bias = sum * inv;
    pm.rmse = std::sqrt(sumsq * inv);
    pm.mae = sumabs * inv;
    cell.params.push_back(pm);
  }
  return cell;
}

}  // namespace

McConfig default_mc_config() {
  McConfig cfg;
  cfg.models.push_back(make_model("M1", 0.2, 0.5, -0.2, false));
  cfg.models.push_back(make_model("M2", 0.3, 0.2, 0.2, false));
  cfg.models.push_back(make_model("M3", 0.8, 0.1, -0.2, true));
  cfg.sides = {5, 7, 9};
  cfg.periods = {5, 10, 20};
  cfg.estimators = {"gmm", "qml_transformed", "qml_direct"};
  cfg.replications = 1000;
  return cfg;
}

McConfig quick_mc_config() {
  McConfig cfg;
  cfg.models.push_back(make_model("M1", 0.2, 0.5, -0.2, false));
  cfg.sides = {5};
  cfg.periods = {5, 10};
  cfg.estimators = {"gmm", "qml_transformed", "qml_direct"};
  cfg.replications = 100;
  return cfg;
}

McReport run_experiment(const McConfig& config, std::ostream* log) {
  validate_config(config);
  const int workers = resolve_workers(config.workers);
  const int total_cells = static_cast<int>(
      config.models.size() * config.sides.size() * config.periods.size());

  McReport report;
  report.config = config;
  const std::vector<std::string> names =
      parameter_names(static_cast<int>(config.models.front().beta.size()));

  int cell_index = 0;
  for (const ModelSpec& model : config.models) {
    const Eigen::VectorXd truth = truth_vector(model);
    for (int side : config.sides) {
      const auto W = std::make_shared<const WeightMatrix>(
          build_lattice_queen(side));
      GmmStatics statics;
      const bool wants_gmm =
          std::find(config.estimators.begin(), config.estimators.end(),
                    "gmm") != config.estimators.end();
      if (wants_gmm) statics = build_gmm_statics(*W);
      for (int T : config.periods) {
        std::vector<std::vector<RepOutcome>> slots(
            config.estimators.size(),
            std::vector<RepOutcome>(
                static_cast<std::size_t>(config.replications)));

        std::atomic<int> next{0};
        std::atomic<bool> abort{false};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto work = [&]() {
          while (!abort.load(std::memory_order_relaxed)) {
            const int rep = next.fetch_add(1, std::memory_order_relaxed);
            if (rep >= config.replications) break;
            try {
              run_replication(config, model, W, T, cell_index, rep,
                              wants_gmm ? &statics : nullptr, slots);
            } catch (...) {
              std::lock_guard<std::mutex> lock(error_mutex);
              if (!error) error = std::current_exception();
              abort.store(true, std::memory_order_relaxed);
              break;
            }
          }
        };
        const int pool_size = std::min(workers, config.replications);
        if (pool_size <= 1) {
          work();
        } else {
          std::vector<std::thread> pool;
          pool.reserve(static_cast<std::size_t>(pool_size));
          for (int i = 0; i < pool_size; ++i) pool.emplace_back(work);
          for (auto& th : pool) th.join();
        }
        if (error) std::rethrow_exception(error);

        CellResult cell;
        cell.cell_index = cell_index;
        cell.model = model.name;
        cell.side = side;
        cell.n = side * side;
        cell.T = T;
        for (std::size_t ei = 0; ei < config.estimators.size(); ++ei) {
          EstimatorCell ec =
              summarize(config.estimators[ei], names, truth, slots[ei]);
          if (log && ec.n_failed > 0.05 * config.replications)
            *log << "warning: " << ec.estimator << " failed " << ec.n_failed
                 << "/" << config.replications << " replications in cell "
                 << cell_index << "\n";
          cell.estimators.push_back(std::move(ec));
        }
        report.cells.push_back(std::move(cell));
        ++cell_index;
        if (log)
          *log << "cell " << cell_index << "/" << total_cells
               << " done: model=" << model.name << " n=" << side * side
               << " T=" << T << "\n";
      }
    }
  }
  return report;
}

}  // namespace spatarch
