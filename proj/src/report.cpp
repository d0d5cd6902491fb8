#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "spatarch/csvio.hpp"
#include "spatarch/errors.hpp"
#include "spatarch/mc.hpp"

namespace spatarch {

namespace {

constexpr const char* kRawHeader =
    "cell_index,model,n,T,estimator,parameter,truth,bias,rmse,mae,n_reps,"
    "n_converged,n_failed";

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  // A signed zero would make table bytes depend on the side from which a
  // vanishing metric approached zero.
  if (std::strcmp(buf, "-0.000") == 0) return "0.000";
  return buf;
}

const std::vector<std::string> kMethodOrder = {"gmm", "qml_transformed",
                                               "qml_direct"};

std::vector<std::pair<int, int>> design_cells(const McConfig& cfg) {
  std::vector<std::pair<int, int>> out;
  for (int side : cfg.sides)
    for (int T : cfg.periods) out.emplace_back(side, T);
  return out;
}

std::string design_label(int side, int T) {
  return "n" + std::to_string(side * side) + "_T" + std::to_string(T);
}

double metric_value(const ParamMetric& pm, const std::string& metric) {
  if (metric == "bias") return pm.bias;
  if (metric == "rmse") return pm.rmse;
  if (metric == "mae") return pm.mae;
  throw Error(ErrorCode::config, "unknown metric '" + metric + "'");
}

struct WideRow {
  std::string parameter, model, method;
  std::vector<double> values;
};

struct WideTable {
  std::vector<std::string> columns;
  std::vector<WideRow> rows;
};

std::vector<std::string> table_parameters(const McReport& report) {
  if (report.cells.empty() || report.cells.front().estimators.empty())
    throw Error(ErrorCode::empty_report, "report has no cells to tabulate");
  std::vector<std::string> params;
  for (const ParamMetric& pm :
       report.cells.front().estimators.front().params)
    if (pm.parameter != "sigma2") params.push_back(pm.parameter);
  return params;
}

std::vector<std::string> method_order(const McConfig& cfg) {
  std::vector<std::string> methods;
  for (const std::string& m : kMethodOrder)
    if (std::find(cfg.estimators.begin(), cfg.estimators.end(), m) !=
        cfg.estimators.end())
      methods.push_back(m);
  return methods;
}

WideTable build_wide(const McReport& report, const std::string& metric) {
  std::map<std::tuple<std::string, int, int, std::string>,
           const EstimatorCell*>
      index;
  for (const CellResult& cell : report.cells)
    for (const EstimatorCell& ec : cell.estimators)
      index[{cell.model, cell.side, cell.T, ec.estimator}] = &ec;

  WideTable table;
  const auto designs = design_cells(report.config);
  for (const auto& [side, T] : designs)
    table.columns.push_back(design_label(side, T));

  for (const std::string& param : table_parameters(report)) {
    for (const ModelSpec& model : report.config.models) {
      for (const std::string& method : method_order(report.config)) {
        WideRow row;
        row.parameter = param;
        row.model = model.name;
        row.method = method;
        for (const auto& [side, T] : designs) {
          const auto it = index.find({model.name, side, T, method});
          if (it == index.end())
            throw Error(ErrorCode::config,
                        "report is missing cell " + model.name + "/" +
                            design_label(side, T) + "/" + method);
          const EstimatorCell& ec = *it->second;
          const auto pit = std::find_if(
              ec.params.begin(), ec.params.end(),
              [&](const ParamMetric& pm) { return pm.parameter == param; });
          if (pit == ec.params.end())
            throw Error(ErrorCode::config,
                        "report cell lacks parameter " + param);
          row.values.push_back(metric_value(*pit, metric));
        }
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

void write_wide(const WideTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  out << "parameter,model,method";
  for (const std::string& c : table.columns) out << "," << c;
  out << "\n";
  for (const WideRow& row : table.rows) {
    out << row.parameter << "," << row.model << "," << row.method;
    for (double v : row.values) out << "," << fmt3(v);
    out << "\n";
  }
}

}  // namespace

void emit_tables(const McReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const std::string metric : {"bias", "rmse", "mae"})
    write_wide(build_wide(report, metric), dir + "/" + metric + ".csv");
}

void emit_raw(const McReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    const std::string path = dir + "/raw_cells.csv";
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << kRawHeader << "\n";
    for (const CellResult& cell : report.cells) {
      for (const EstimatorCell& ec : cell.estimators) {
        for (const ParamMetric& pm : ec.params) {
          out << cell.cell_index << "," << cell.model << "," << cell.n << ","
              << cell.T << "," << ec.estimator << "," << pm.parameter << ","
              << csv::fmt(pm.truth) << "," << csv::fmt(pm.bias) << ","
              << csv::fmt(pm.rmse) << "," << csv::fmt(pm.mae) << ","
              << ec.n_reps << "," << ec.n_converged << "," << ec.n_failed
              << "\n";
        }
      }
    }
  }
  {
    const std::string path = dir + "/seeds.csv";
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << "cell_index,model,n,T,base_seed,replications\n";
    for (const CellResult& cell : report.cells)
      out << cell.cell_index << "," << cell.model << "," << cell.n << ","
          << cell.T << "," << report.config.seed << ","
          << report.config.replications << "\n";
  }
}

McReport read_raw_cells(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::config, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRawHeader)
    throw Error(ErrorCode::config, path + ": unexpected header");

  McReport report;
  std::map<int, std::size_t> cell_slot;
  std::set<std::string> models_seen, estimators_seen;
  std::set<int> sides_seen, periods_seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = csv::split(line);
    if (f.size() != 13)
      throw Error(ErrorCode::config,
                  path + ":" + std::to_string(lineno) + ": expected 13 fields");
    const int cell_index =
        static_cast<int>(csv::parse_long(f[0], path, lineno));
    const std::string& model = f[1];
    const int n = static_cast<int>(csv::parse_long(f[2], path, lineno));
    const int T = static_cast<int>(csv::parse_long(f[3], path, lineno));
    const std::string& estimator = f[4];
    const std::string& parameter = f[5];
    const int side = static_cast<int>(std::lround(std::sqrt(double(n))));
    if (side * side != n)
      throw Error(ErrorCode::config, path + ":" + std::to_string(lineno) +
                                         ": n is not a lattice size");

    if (cell_slot.count(cell_index) == 0) {
      cell_slot[cell_index] = report.cells.size();
      CellResult cell;
      cell.cell_index = cell_index;
      cell.model = model;
      cell.side = side;
      cell.n = n;
      cell.T = T;
      report.cells.push_back(std::move(cell));
      if (models_seen.insert(model).second) {
        ModelSpec m;
        m.name = model;
        report.config.models.push_back(m);
      }
      if (sides_seen.insert(side).second) report.config.sides.push_back(side);
      if (periods_seen.insert(T).second) report.config.periods.push_back(T);
    }
    CellResult& cell = report.cells[cell_slot[cell_index]];
    if (cell.model != model || cell.n != n || cell.T != T)
      throw Error(ErrorCode::config, path + ":" + std::to_string(lineno) +
                                         ": inconsistent cell description");

    auto eit = std::find_if(
        cell.estimators.begin(), cell.estimators.end(),
        [&](const EstimatorCell& ec) { return ec.estimator == estimator; });
    if (eit == cell.estimators.end()) {
      EstimatorCell ec;
      ec.estimator = estimator;
      ec.n_reps = static_cast<int>(csv::parse_long(f[10], path, lineno));
      ec.n_converged = static_cast<int>(csv::parse_long(f[11], path, lineno));
      ec.n_failed = static_cast<int>(csv::parse_long(f[12], path, lineno));
      cell.estimators.push_back(std::move(ec));
      eit = cell.estimators.end() - 1;
      if (estimators_seen.insert(estimator).second)
        report.config.estimators.push_back(estimator);
    }
    ParamMetric pm;
    pm.parameter = parameter;
    pm.truth = csv::parse_double(f[6], path, lineno);
    pm.bias = csv::parse_double(f[7], path, lineno);
    pm.rmse = csv::parse_double(f[8], path, lineno);
    pm.mae = csv::parse_double(f[9], path, lineno);
    eit->params.push_back(std::move(pm));

    // Recover the design truths for the reconstructed model list.
    for (ModelSpec& m : report.config.models) {
      if (m.name != model) continue;
      if (parameter == "rho") m.rho = pm.truth;
      else if (parameter == "gamma") m.gamma = pm.truth;
      else if (parameter == "delta") m.delta = pm.truth;
      else if (parameter.rfind("beta", 0) == 0) {
        const int j = static_cast<int>(
            csv::parse_long(parameter.substr(4), path, lineno));
        if (j >= 1) {
          if (m.beta.size() < j) {
            Eigen::VectorXd grown = Eigen::VectorXd::Zero(j);
            grown.head(m.beta.size()) = m.beta;
            m.beta = grown;
          }
          m.beta(j - 1) = pm.truth;
        }
      }
    }
  }
  if (report.cells.empty())
    throw Error(ErrorCode::empty_report, path + ": no data rows");
  report.config.replications = report.cells.front().estimators.empty()
                                   ? 0
                                   : report.cells.front().estimators.front().n_reps;
  return report;
}

CompareResult compare_to_reference(const McReport& report,
                                   const std::string& reference_path) {
  std::ifstream in(reference_path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + reference_path);

  CompareResult cmp;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::size_t pos = line.find("metric=");
      if (pos != std::string::npos) {
        std::string metric = line.substr(pos + 7);
        while (!metric.empty() && std::isspace(static_cast<unsigned char>(
                                      metric.back())))
          metric.pop_back();
        cmp.metric = metric;
      }
      continue;
    }
    if (columns.empty()) {
      columns = csv::split(line);
      continue;
    }
    rows.push_back(csv::split(line));
  }
  if (cmp.metric != "bias" && cmp.metric != "rmse" && cmp.metric != "mae")
    throw Error(ErrorCode::config,
                reference_path + ": missing or unknown '# metric=' tag");
  if (columns.size() < 4 || columns[0] != "parameter" ||
      columns[1] != "model" || columns[2] != "method")
    throw Error(ErrorCode::config,
                reference_path + ": unexpected reference header");

  const WideTable ours = build_wide(report, cmp.metric);
  std::map<std::tuple<std::string, std::string, std::string>, const WideRow*>
      row_index;
  for (const WideRow& r : ours.rows)
    row_index[{r.parameter, r.model, r.method}] = &r;
  std::map<std::string, std::size_t> col_index;
  for (std::size_t c = 0; c < ours.columns.size(); ++c)
    col_index[ours.columns[c]] = c;

  for (const auto& fields : rows) {
    if (fields.size() != columns.size())
      throw Error(ErrorCode::config,
                  reference_path + ": ragged reference row");
    const auto rit = row_index.find({fields[0], fields[1], fields[2]});
    if (rit == row_index.end()) continue;
    for (std::size_t c = 3; c < columns.size(); ++c) {
      const auto cit = col_index.find(columns[c]);
      if (cit == col_index.end()) continue;
      CompareRow row;
      row.parameter = fields[0];
      row.model = fields[1];
      row.method = fields[2];
      row.cell = columns[c];
      row.reference = csv::parse_double(fields[c], reference_path, 0);
      row.ours = rit->second->values[cit->second];
      row.abs_diff = std::abs(row.ours - row.reference);
      cmp.max_abs_diff = std::max(cmp.max_abs_diff, row.abs_diff);
      cmp.rows.push_back(std::move(row));
    }
  }
  if (cmp.rows.empty())
    throw Error(ErrorCode::empty_report,
                reference_path + ": no comparable rows matched the report");
  return cmp;
}

void write_compare_csv(const CompareResult& cmp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  out << "parameter,model,method,cell,ours,reference,abs_diff\n";
  for (const CompareRow& row : cmp.rows)
    out << row.parameter << "," << row.model << "," << row.method << ","
        << row.cell << "," << csv::fmt(row.ours) << ","
        << csv::fmt(row.reference) << "," << csv::fmt(row.abs_diff) << "\n";
}

namespace {

const char* method_color(const std::string& method) {
  if (method == "gmm") return "#c0392b";
  if (method == "qml_transformed") return "#2471a3";
  if (method == "qml_direct") return "#1e8449";
  return "#555555";
}

const char* model_dash(std::size_t model_index) {
  switch (model_index) {
    case 0: return "";
    case 1: return "7 4";
    case 2: return "2 3";
    default: return "10 3 2 3";
  }
}

std::string fmtg(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string fmtc(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct PlotSeries {
  std::string model;
  std::size_t model_index = 0;
  std::string method;
  std::vector<double> values;
};

void draw_panel(std::ostringstream& svg, const std::string& title,
                const std::vector<std::string>& xlabels,
                const std::vector<PlotSeries>& series, double top) {
  const double left = 80.0, right = 740.0, height = 180.0;
  const double bottom = top + height;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const PlotSeries& s : series)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) {
    const double pad = std::max(0.01, std::abs(hi) * 0.1);
    lo -= pad;
    hi += pad;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  const std::size_t ncol = xlabels.size();
  auto xpos = [&](std::size_t i) {
    if (ncol <= 1) return 0.5 * (left + right);
    return left + (right - left) * static_cast<double>(i) /
                      static_cast<double>(ncol - 1);
  };
  auto ypos = [&](double v) { return bottom - (v - lo) / (hi - lo) * height; };

  svg << "<text x=\"" << fmtc(left) << "\" y=\"" << fmtc(top - 8)
      << "\" font-size=\"13\" font-weight=\"bold\">" << title << "</text>\n";
  svg << "<rect x=\"" << fmtc(left) << "\" y=\"" << fmtc(top) << "\" width=\""
      << fmtc(right - left) << "\" height=\"" << fmtc(height)
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = lo + (hi - lo) * tick / 4.0;
    const double y = ypos(v);
    svg << "<line x1=\"" << fmtc(left) << "\" y1=\"" << fmtc(y) << "\" x2=\""
        << fmtc(right) << "\" y2=\"" << fmtc(y)
        << "\" stroke=\"#ddd\" stroke-width=\"0.6\"/>\n";
    svg << "<text x=\"" << fmtc(left - 6) << "\" y=\"" << fmtc(y + 3)
        << "\" font-size=\"10\" text-anchor=\"end\">" << fmtg(v)
        << "</text>\n";
  }
  if (lo < 0.0 && hi > 0.0)
    svg << "<line x1=\"" << fmtc(left) << "\" y1=\"" << fmtc(ypos(0.0))
        << "\" x2=\"" << fmtc(right) << "\" y2=\"" << fmtc(ypos(0.0))
        << "\" stroke=\"#aaa\" stroke-width=\"1\"/>\n";
  for (std::size_t i = 0; i < ncol; ++i)
    svg << "<text x=\"" << fmtc(xpos(i)) << "\" y=\"" << fmtc(bottom + 14)
        << "\" font-size=\"10\" text-anchor=\"middle\">" << xlabels[i]
        << "</text>\n";
  for (const PlotSeries& s : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << method_color(s.method)
        << "\" stroke-width=\"1.6\"";
    const char* dash = model_dash(s.model_index);
    if (dash[0] != '\0') svg << " stroke-dasharray=\"" << dash << "\"";
    svg << " points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (i > 0) svg << " ";
      svg << fmtc(xpos(i)) << "," << fmtc(ypos(s.values[i]));
    }
    svg << "\"/>\n";
  }
}

}  // namespace

void emit_plots(const McReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const WideTable rmse = build_wide(report, "rmse");
  const WideTable bias = build_wide(report, "bias");
  const auto designs = design_cells(report.config);
  std::vector<std::string> xlabels;
  for (const auto& [side, T] : designs)
    xlabels.push_back(std::to_string(side * side) + "/" + std::to_string(T));
  std::map<std::string, std::size_t> model_index;
  for (std::size_t i = 0; i < report.config.models.size(); ++i)
    model_index[report.config.models[i].name] = i;

  for (const std::string& param : table_parameters(report)) {
    auto collect = [&](const WideTable& table) {
      std::vector<PlotSeries> series;
      for (const WideRow& row : table.rows) {
        if (row.parameter != param) continue;
        PlotSeries s;
        s.model = row.model;
        s.model_index = model_index.at(row.model);
        s.method = row.method;
        s.values = row.values;
        series.push_back(std::move(s));
      }
      return series;
    };
    const std::vector<PlotSeries> top = collect(rmse);
    const std::vector<PlotSeries> bot = collect(bias);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 780 580\" "
           "font-family=\"sans-serif\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"780\" height=\"580\" "
           "fill=\"#ffffff\"/>\n";
    draw_panel(svg, param + ": rmse across design cells (n/T)", xlabels, top,
               40.0);
    draw_panel(svg, param + ": bias across design cells (n/T)", xlabels, bot,
               290.0);
    double lx = 80.0, ly = 540.0;
    for (const PlotSeries& s : top) {
      svg << "<line x1=\"" << fmtc(lx) << "\" y1=\"" << fmtc(ly - 4)
          << "\" x2=\"" << fmtc(lx + 22) << "\" y2=\"" << fmtc(ly - 4)
          << "\" stroke=\"" << method_color(s.method) << "\" stroke-width=\"1.6\"";
      const char* dash = model_dash(s.model_index);
      if (dash[0] != '\0') svg << " stroke-dasharray=\"" << dash << "\"";
      svg << "/>\n";
      svg << "<text x=\"" << fmtc(lx + 26) << "\" y=\"" << fmtc(ly)
          << "\" font-size=\"10\">" << s.model << " " << s.method
          << "</text>\n";
      lx += 220.0;
      if (lx > 700.0) {
        lx = 80.0;
        ly += 16.0;
      }
    }
    svg << "</svg>\n";

    const std::string path = dir + "/" + param + ".svg";
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << svg.str();
  }
}

}  // namespace spatarch
