#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace egu {

// Abundance matrices here are C x N (a row per class), endmember matrices
// are B x C (a column per signature), matching the solver conventions.

// Mean over pixels of the per-pixel root mean squared abundance error.
double armse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate);

// Spectral angle in radians: acos of the normalized inner product, clamped
// into [-1, 1] before acos.  Zero-length inputs have no angle and throw.
double spectral_angle(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Minimum-cost one-to-one assignment on a square cost matrix (the O(n^3)
// shortest-augmenting-path method).  Returns the column matched to each row.
std::vector<int> hungarian_assignment(const Eigen::MatrixXd& cost);

struct SadMatch {
  double mean = 0.0;                  // radians
  std::vector<double> per_class;      // radians, indexed by truth column
  std::vector<int> permutation;       // estimate column matched to each truth column
};

// Mean spectral angle after the class permutation that minimizes the total
// angle; handles arbitrary column order in the estimate.
SadMatch mean_spectral_angle(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate);

struct AbundanceAlignment {
  Eigen::MatrixXd aligned;       // estimate rows reordered to match truth
  std::vector<int> permutation;  // estimate row matched to each truth row
  double armse = 0.0;
};

// Reorders estimate rows by the assignment minimizing total per-class RMSE,
// then scores.  Use this before comparing methods whose class order is
// arbitrary.
AbundanceAlignment align_abundances(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate);

// Recovers endmember signatures from an image and its abundances by solving
// min |X - E Y|_F^2 with E >= 0, one small nonnegative solve per band.
// *ridged reports a rank-deficiency fallback.
Eigen::MatrixXd recover_endmembers(const Eigen::MatrixXd& pixels, const Eigen::MatrixXd& abundances,
                                   bool* ridged = nullptr);

// Percentage convention used in summaries: angles as a share of a right
// angle, abundances as plain percent.
double sad_percent(double radians);

struct EvalRun {
  std::string name;
  double armse = 0.0;
  std::vector<int> abundance_permutation;
  std::optional<SadMatch> sad;
};

struct EvalAggregate {
  double armse_mean = 0.0;
  double armse_std = 0.0;
  std::optional<double> asad_mean;
  std::optional<double> asad_std;
};

struct EvalReport {
  std::vector<EvalRun> runs;
  std::optional<EvalAggregate> aggregate;  // present when runs.size() > 1
};

EvalRun evaluate_run(const std::string& name, const Eigen::MatrixXd& truth_abund,
                     const Eigen::MatrixXd& est_abund, const Eigen::MatrixXd* truth_endm,
                     const Eigen::MatrixXd* est_endm);

EvalReport evaluate(const std::vector<EvalRun>& runs);

// Lossless JSON round trip plus a fixed-width text rendering derived from
// the same data.
std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& json_text);
std::string eval_report_table(const EvalReport& report);

}  // namespace egu
