#include "spatarch/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <vector>

#include "spatarch/config.hpp"
#include "spatarch/csvio.hpp"
#include "spatarch/dgp.hpp"
#include "spatarch/errors.hpp"
#include "spatarch/gmm.hpp"
#include "spatarch/mc.hpp"
#include "spatarch/panel.hpp"
#include "spatarch/qml.hpp"
#include "spatarch/weights.hpp"

namespace spatarch::cli {

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

std::shared_ptr<const WeightMatrix> resolve_weights(const std::string& spec) {
  const std::string prefix = "lattice:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string side_str = spec.substr(prefix.size());
    char* end = nullptr;
    const long side = std::strtol(side_str.c_str(), &end, 10);
    if (end == side_str.c_str() || *end != '\0')
      throw Error(ErrorCode::config,
                  "bad lattice side in weights argument: " + spec);
    return std::make_shared<const WeightMatrix>(
        build_lattice_queen(static_cast<int>(side)));
  }
  WeightMatrix loaded = load_weights_csv(spec);
  if (loaded.row_normalized())
    return std::make_shared<const WeightMatrix>(std::move(loaded));
  std::vector<int> zero_rows;
  WeightMatrix normalized = row_normalize(loaded.matrix(), &zero_rows);
  if (!zero_rows.empty()) {
    std::ostringstream msg;
    msg << "weight matrix has rows without neighbours:";
    for (int r : zero_rows) msg << " " << r + 1;
    throw Error(ErrorCode::invalid_weights, msg.str());
  }
  return std::make_shared<const WeightMatrix>(std::move(normalized));
}

std::string opt_field(bool present, double value) {
  return present ? csv::fmt(value) : std::string();
}

}  // namespace

int run_simulate(const SimulateArgs& args, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&]() {
    SimulateSpec spec = parse_simulate_config(args.config);
    if (args.seed) spec.seed = *args.seed;

    DgpConfig dc;
    dc.W = std::make_shared<const WeightMatrix>(
        build_lattice_queen(spec.side));
    dc.T = spec.T;
    dc.rho = spec.model.rho;
    dc.gamma = spec.model.gamma;
    dc.delta = spec.model.delta;
    dc.beta = spec.model.beta;
    dc.sigma_mu = spec.model.sigma_mu;
    dc.use_time_effects = spec.model.time_effects;
    dc.sigma_alpha = spec.model.sigma_alpha;
    dc.burn_in = spec.burn_in;
    dc.seed = spec.seed;
    const SimOutput sim = simulate(dc);

    const std::string panel_path = args.out_prefix + ".panel.csv";
    const std::string effects_path = args.out_prefix + ".effects.csv";
    save_panel_csv(panel_path, sim.panel);
    save_effects_csv(effects_path, sim.mu, sim.alpha);
    out << "simulated model " << spec.model.name << ": n="
        << dc.W->n() << " T=" << spec.T << " seed=" << spec.seed
        << " spectral_radius=" << sim.spectral_radius << "\n";
    out << "wrote " << panel_path << " and " << effects_path << "\n";
    return 0;
  });
}

int run_estimate(const EstimateArgs& args, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&]() {
    const Panel panel = load_panel_csv(args.panel);
    const auto W = resolve_weights(args.weights);
    const StarPanel star = log_square(panel);
    const int k = panel.k();

    std::vector<std::string> header = {"method", "rho", "gamma", "delta"};
    for (int j = 1; j <= k; ++j) header.push_back("beta" + std::to_string(j));
    header.push_back("sigma2");
    for (const std::string base : {"rho", "gamma", "delta"})
      header.push_back("se_" + base);
    for (int j = 1; j <= k; ++j)
      header.push_back("se_beta" + std::to_string(j));
    header.push_back("se_sigma2");
    header.push_back("loglik");
    header.push_back("converged");
    header.push_back("bias_corrected");
    header.push_back("j_stat");

    std::vector<std::string> row;
    if (args.method == "qml-transformed" || args.method == "qml-direct") {
      const QmlApproach approach = args.method == "qml-transformed"
                                       ? QmlApproach::transformed
                                       : QmlApproach::direct;
      QmlOptions qopt;
      qopt.time_effects = args.time_effects;
      const QmlResult r =
          args.jackknife ? jackknife_bias_correct(star, *W, approach, qopt)
                         : estimate_qml(star, *W, approach, qopt);
      out << "method: " << args.method
          << (r.bias_corrected ? " (jackknife corrected)" : "") << "\n";
      out << "rho    = " << r.rho << "\n";
      out << "gamma  = " << r.gamma << "\n";
      out << "delta  = " << r.delta << "\n";
      for (int j = 0; j < k; ++j)
        out << "beta" << j + 1 << "  = " << r.beta(j) << "\n";
      out << "sigma2 = " << r.sigma2 << "\n";
      out << "loglik = " << r.loglik << "\n";
      out << "converged = " << (r.converged ? "yes" : "no") << "\n";
      if (r.multi_peak)
        out << "note: profile likelihood showed multiple local peaks\n";

      // Covariance rows are ordered (gamma, delta, beta..., rho, sigma2).
      const bool have_se = r.std_errors.size() == k + 4;
      if (have_se) {
        out << "se(rho) = " << r.std_errors(k + 2)
            << ", se(gamma) = " << r.std_errors(0)
            << ", se(delta) = " << r.std_errors(1) << "\n";
      }
      row = {args.method, csv::fmt(r.rho), csv::fmt(r.gamma),
             csv::fmt(r.delta)};
      for (int j = 0; j < k; ++j) row.push_back(csv::fmt(r.beta(j)));
      row.push_back(csv::fmt(r.sigma2));
      row.push_back(opt_field(have_se, have_se ? r.std_errors(k + 2) : 0.0));
      row.push_back(opt_field(have_se, have_se ? r.std_errors(0) : 0.0));
      row.push_back(opt_field(have_se, have_se ? r.std_errors(1) : 0.0));
      for (int j = 0; j < k; ++j)
        row.push_back(opt_field(have_se, have_se ? r.std_errors(2 + j) : 0.0));
      row.push_back(opt_field(have_se, have_se ? r.std_errors(k + 3) : 0.0));
      row.push_back(csv::fmt(r.loglik));
      row.push_back(r.converged ? "1" : "0");
      row.push_back(r.bias_corrected ? "1" : "0");
      row.push_back("");
    } else if (args.method == "gmm") {
      if (args.jackknife)
        throw Error(ErrorCode::config,
                    "the jackknife correction applies to the likelihood "
                    "estimators only");
      GmmOptions opt;
      if (W->row_normalized()) {
        try {
          QmlOptions qopt;
          qopt.with_variance = false;
          const QmlResult q =
              estimate_qml(star, *W, QmlApproach::transformed, qopt);
          Eigen::VectorXd seed(k + 3);
          seed(0) = q.rho;
          seed(1) = q.gamma;
          seed(2) = q.delta;
          seed.tail(k) = q.beta;
          opt.initial = seed;
        } catch (const Error& e) {
          if (!is_estimation_failure(e.code())) throw;
        }
      }
      const GmmResult r = estimate_gmm(star, *W, opt);
      out << "method: gmm (two-step)\n";
      out << "rho    = " << r.rho << "\n";
      out << "gamma  = " << r.gamma << "\n";
      out << "delta  = " << r.delta << "\n";
      for (int j = 0; j < k; ++j)
        out << "beta" << j + 1 << "  = " << r.beta(j) << "\n";
      out << "sigma2 = " << r.sigma2 << "\n";
      out << "j_stat = " << r.j_stat << " (df " << r.j_df << ")\n";
      out << "converged = " << (r.converged ? "yes" : "no") << "\n";
      if (r.identity_weight_fallback)
        out << "note: weighting matrix was degenerate, identity weighting "
               "used\n";
      const bool have_se = r.std_errors.size() == k + 3;
      if (have_se) {
        out << "se(rho) = " << r.std_errors(0)
            << ", se(gamma) = " << r.std_errors(1)
            << ", se(delta) = " << r.std_errors(2) << "\n";
      }
      row = {"gmm", csv::fmt(r.rho), csv::fmt(r.gamma), csv::fmt(r.delta)};
      for (int j = 0; j < k; ++j) row.push_back(csv::fmt(r.beta(j)));
      row.push_back(csv::fmt(r.sigma2));
      row.push_back(opt_field(have_se, have_se ? r.std_errors(0) : 0.0));
      row.push_back(opt_field(have_se, have_se ? r.std_errors(1) : 0.0));
      row.push_back(opt_field(have_se, have_se ? r.std_errors(2) : 0.0));
      for (int j = 0; j < k; ++j)
        row.push_back(opt_field(have_se, have_se ? r.std_errors(3 + j) : 0.0));
      row.push_back("");  // sigma2 has no moment-based standard error
      row.push_back("");  // no likelihood value
      row.push_back(r.converged ? "1" : "0");
      row.push_back("0");
      row.push_back(csv::fmt(r.j_stat));
    } else {
      throw Error(ErrorCode::config, "unknown method '" + args.method + "'");
    }

    if (!args.out.empty()) {
      std::ofstream f(args.out);
      if (!f) throw Error(ErrorCode::io, "cannot write " + args.out);
      for (std::size_t i = 0; i < header.size(); ++i)
        f << (i ? "," : "") << header[i];
      f << "\n";
      for (std::size_t i = 0; i < row.size(); ++i)
        f << (i ? "," : "") << row[i];
      f << "\n";
      out << "wrote " << args.out << "\n";
    }
    return 0;
  });
}

int run_mc(const McArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() {
    McConfig cfg;
    if (args.quick) {
      cfg = quick_mc_config();
    } else {
      if (args.config.empty())
        throw Error(ErrorCode::config,
                    "mc needs --config <file> or --quick");
      cfg = parse_mc_config(args.config);
    }
    if (args.workers) cfg.workers = *args.workers;
    if (args.seed) cfg.seed = *args.seed;
    if (args.replications) cfg.replications = *args.replications;

    const McReport report = run_experiment(cfg, &err);
    emit_tables(report, args.out_dir);
    emit_raw(report, args.out_dir);
    emit_plots(report, args.out_dir);

    int failed = 0, total = 0;
    for (const CellResult& cell : report.cells)
      for (const EstimatorCell& ec : cell.estimators) {
        failed += ec.n_failed;
        total += ec.n_reps;
      }
    out << "study finished: " << report.cells.size() << " cells, "
        << cfg.replications << " replications each, " << failed << "/"
        << total << " estimator runs failed\n";
    out << "results in " << args.out_dir << "\n";
    return 0;
  });
}

int run_report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() {
    const McReport report = read_raw_cells(args.run_dir + "/raw_cells.csv");
    emit_tables(report, args.run_dir);
    emit_plots(report, args.run_dir);
    out << "rebuilt tables and plots in " << args.run_dir << "\n";
    if (!args.compare.empty()) {
      const CompareResult cmp = compare_to_reference(report, args.compare);
      const std::string cmp_path =
          args.run_dir + "/compare_" + cmp.metric + ".csv";
      write_compare_csv(cmp, cmp_path);
      const CompareRow* worst = nullptr;
      for (const CompareRow& row : cmp.rows)
        if (worst == nullptr || row.abs_diff > worst->abs_diff) worst = &row;
      out << "compared " << cmp.rows.size() << " " << cmp.metric
          << " cells: max |difference| = " << cmp.max_abs_diff << " ("
          << worst->parameter << "/" << worst->model << "/" << worst->method
          << " " << worst->cell << ")\n";
      out << "wrote " << cmp_path << "\n";
    }
    return 0;
  });
}

}  // namespace spatarch::cli
