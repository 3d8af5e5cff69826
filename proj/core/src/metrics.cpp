#include "egunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "egunet/baselines.hpp"
#include "egunet/errors.hpp"

namespace egu {

using nlohmann::json;

double armse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols()) {
    throw DimError("armse: abundance shapes disagree");
  }
  if (truth.cols() < 1 || truth.rows() < 1) throw DimError("armse: empty abundances");
  const double c = static_cast<double>(truth.rows());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    acc += std::sqrt((truth.col(j) - estimate.col(j)).squaredNorm() / c);
  }
  return acc / static_cast<double>(truth.cols());
}

double spectral_angle(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimError("spectral angle: lengths disagree");
  double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw NumericError("spectral angle: undefined for a zero spectrum");
  }
  double cosv = a.dot(b) / (na * nb);
  return std::acos(std::clamp(cosv, -1.0, 1.0));
}

std::vector<int> hungarian_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n || n < 1) throw DimError("assignment: cost matrix must be square");
  if (!cost.allFinite()) throw NumericError("assignment: non-finite cost entry");

  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting paths with potentials; 1-based with column 0 as the
  // virtual source.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      int i0 = p[static_cast<std::size_t>(j0)], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                     v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[static_cast<std::size_t>(j)] != 0) {
      row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
    }
  }
  return row_to_col;
}

SadMatch mean_spectral_angle(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols()) {
    throw DimError("mean spectral angle: endmember shapes disagree");
  }
  const int c = static_cast<int>(truth.cols());
  Eigen::MatrixXd cost(c, c);
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) {
      cost(i, j) = spectral_angle(truth.col(i), estimate.col(j));
    }
  }
  SadMatch out;
  out.permutation = hungarian_assignment(cost);
  out.per_class.resize(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) {
    out.per_class[static_cast<std::size_t>(i)] = cost(i, out.permutation[static_cast<std::size_t>(i)]);
    out.mean += out.per_class[static_cast<std::size_t>(i)];
  }
  out.mean /= static_cast<double>(c);
  return out;
}

AbundanceAlignment align_abundances(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols()) {
    throw DimError("align: abundance shapes disagree");
  }
  const int c = static_cast<int>(truth.rows());
  const double n = static_cast<double>(truth.cols());
  Eigen::MatrixXd cost(c, c);
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) {
      cost(i, j) = std::sqrt((truth.row(i) - estimate.row(j)).squaredNorm() / n);
    }
  }
  AbundanceAlignment out;
  out.permutation = hungarian_assignment(cost);
  out.aligned.resize(truth.rows(), truth.cols());
  for (int i = 0; i < c; ++i) {
    out.aligned.row(i) = estimate.row(out.permutation[static_cast<std::size_t>(i)]);
  }
  out.armse = armse(truth, out.aligned);
  return out;
}

Eigen::MatrixXd recover_endmembers(const Eigen::MatrixXd& pixels, const Eigen::MatrixXd& abundances,
                                   bool* ridged) {
  return update_endmembers(pixels, abundances, ridged);
}

double sad_percent(double radians) { return 100.0 * radians / (std::numbers::pi / 2.0); }

EvalRun evaluate_run(const std::string& name, const Eigen::MatrixXd& truth_abund,
                     const Eigen::MatrixXd& est_abund, const Eigen::MatrixXd* truth_endm,
                     const Eigen::MatrixXd* est_endm) {
  EvalRun run;
  run.name = name;
  AbundanceAlignment al = align_abundances(truth_abund, est_abund);
  run.armse = al.armse;
  run.abundance_permutation = al.permutation;
  if (truth_endm && est_endm) {
    run.sad = mean_spectral_angle(*truth_endm, *est_endm);
  }
  return run;
}

EvalReport evaluate(const std::vector<EvalRun>& runs) {
  if (runs.empty()) throw ConfigError("evaluate: need at least one run");
  EvalReport report;
  report.runs = runs;
  if (runs.size() > 1) {
    EvalAggregate agg;
    double n = static_cast<double>(runs.size());
    double mean = 0.0;
    for (const auto& r : runs) mean += r.armse;
    mean /= n;
    double var = 0.0;
    for (const auto& r : runs) var += (r.armse - mean) * (r.armse - mean);
    agg.armse_mean = mean;
    agg.armse_std = std::sqrt(var / (n - 1.0));

    bool all_sad = std::all_of(runs.begin(), runs.end(),
                               [](const EvalRun& r) { return r.sad.has_value(); });
    if (all_sad) {
      double smean = 0.0;
      for (const auto& r : runs) smean += r.sad->mean;
      smean /= n;
      double svar = 0.0;
      for (const auto& r : runs) svar += (r.sad->mean - smean) * (r.sad->mean - smean);
      agg.asad_mean = smean;
      agg.asad_std = std::sqrt(svar / (n - 1.0));
    }
    report.aggregate = agg;
  }
  return report;
}

std::string eval_report_to_json(const EvalReport& report) {
  json j;
  j["runs"] = json::array();
  for (const auto& r : report.runs) {
    json jr;
    jr["name"] = r.name;
    jr["armse"] = r.armse;
    jr["armse_percent"] = 100.0 * r.armse;
    jr["abundance_permutation"] = r.abundance_permutation;
    if (r.sad) {
      jr["asad"] = r.sad->mean;
      jr["asad_percent"] = sad_percent(r.sad->mean);
      jr["sad_per_class"] = r.sad->per_class;
      jr["endmember_permutation"] = r.sad->permutation;
    }
    j["runs"].push_back(jr);
  }
  if (report.aggregate) {
    json ja;
    ja["armse_mean"] = report.aggregate->armse_mean;
    ja["armse_std"] = report.aggregate->armse_std;
    if (report.aggregate->asad_mean) {
      ja["asad_mean"] = *report.aggregate->asad_mean;
      ja["asad_std"] = *report.aggregate->asad_std;
    }
    j["aggregate"] = ja;
  }
  return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  EvalReport report;
  for (const auto& jr : j.at("runs")) {
    EvalRun r;
    r.name = jr.at("name").get<std::string>();
    r.armse = jr.at("armse").get<double>();
    r.abundance_permutation = jr.at("abundance_permutation").get<std::vector<int>>();
    if (jr.contains("asad")) {
      SadMatch s;
      s.mean = jr.at("asad").get<double>();
      s.per_class = jr.at("sad_per_class").get<std::vector<double>>();
      s.permutation = jr.at("endmember_permutation").get<std::vector<int>>();
      r.sad = s;
    }
    report.runs.push_back(std::move(r));
  }
  if (j.contains("aggregate")) {
    EvalAggregate agg;
    agg.armse_mean = j["aggregate"].at("armse_mean").get<double>();
    agg.armse_std = j["aggregate"].at("armse_std").get<double>();
    if (j["aggregate"].contains("asad_mean")) {
      agg.asad_mean = j["aggregate"].at("asad_mean").get<double>();
      agg.asad_std = j["aggregate"].at("asad_std").get<double>();
    }
    report.aggregate = agg;
  }
  return report;
}

namespace {

std::string table_row(const std::string& name, double armse_v, const std::optional<double>& asad_v) {
  char buf[160];
  if (asad_v) {
    std::snprintf(buf, sizeof(buf), "%-20s %12.6f %9.3f %12.6f %9.3f\n", name.c_str(), armse_v,
                  100.0 * armse_v, *asad_v, sad_percent(*asad_v));
  } else {
    std::snprintf(buf, sizeof(buf), "%-20s %12.6f %9.3f %12s %9s\n", name.c_str(), armse_v,
                  100.0 * armse_v, "-", "-");
  }
  return buf;
}

}  // namespace

std::string eval_report_table(const EvalReport& report) {
  std::ostringstream os;
  char head[160];
  std::snprintf(head, sizeof(head), "%-20s %12s %9s %12s %9s\n", "run", "aRMSE", "aRMSE%",
                "aSAD[rad]", "aSAD%");
  os << head;
  os << std::string(66, '-') << "\n";
  for (const auto& r : report.runs) {
    os << table_row(r.name, r.armse,
                    r.sad ? std::optional<double>(r.sad->mean) : std::nullopt);
  }
  if (report.aggregate) {
    os << std::string(66, '-') << "\n";
    os << table_row("mean", report.aggregate->armse_mean, report.aggregate->asad_mean);
    os << table_row("std", report.aggregate->armse_std, report.aggregate->asad_std);
  }
  return os.str();
}

}  // namespace egu
