// Test-set metrics: EQM and normalized EQM over time, the chi-square/CLT
// consistency band, mean gain traces, error/innovation decorrelation
// statistics, and the estimator comparison table.
#pragma once

#include <string>
#include <vector>

#include "rknlab/kalman.hpp"

namespace rknlab {

// EQM(t) = 1/N sum_k ||x_t^(k) - xhat_t^(k)||^2 for the chosen phase.
// Table-style EQM reporting uses the predicted (one-step-ahead) estimates;
// see MetricsSeries::from_runs.
std::vector<double> eqm(const std::vector<FilterRun>& runs,
                        const std::vector<Matrix>& truths, Phase phase);

// 10 log10(x); exactly-zero inputs map to -inf (serialized as "-inf").
std::vector<double> to_db(const std::vector<double>& v);

// EQM_n(t) = 1/N sum_k e^T P_{t|t}^{-1} e on the corrected estimates.
std::vector<double> eqm_normalized(const std::vector<FilterRun>& runs,
                                   const std::vector<Matrix>& truths);

struct Chi2Band {
  double mean;
  double variance;
  double low;
  double high;
};
// CLT band for EQM_n of a consistent estimator: mean m, variance 2m/N.
Chi2Band chi2_band(int m, int N, double k_sigma);

// Elementwise mean of the gain across runs, per time step.
std::vector<Matrix> gain_trace(const std::vector<FilterRun>& runs);

struct DecorrelationStat {
  Matrix cross_cov;   // m x n pooled E[(x - xhat) y^T]
  Matrix std_error;   // per-entry standard error of the mean
  long samples = 0;
};
// Pooled over episodes and the last `tail` steps (corrected errors).
DecorrelationStat decorrelation_stat(const std::vector<FilterRun>& runs,
                                     const std::vector<Matrix>& truths,
                                     int tail = 50);

// Full per-time-step report for one estimator over a test set.
struct MetricsSeries {
  std::string estimator_id;
  int N = 0;
  std::vector<double> eqm_lin;     // predicted-phase EQM
  std::vector<double> eqm_db;
  std::vector<double> eqmn;        // corrected-phase normalized EQM
  std::vector<double> k_pos_mean;  // K(0,0) mean
  std::vector<double> k_vel_mean;  // K(1,0) mean (0 when m < 2)
  std::vector<double> sd_est_pos;  // sqrt(mean P_corr(0,0))
  std::vector<double> sd_emp_pos;  // sqrt(mean squared corrected position error)

  int length() const { return static_cast<int>(eqm_lin.size()); }

  static MetricsSeries from_runs(const std::string& estimator_id,
                                 const std::vector<FilterRun>& runs,
                                 const std::vector<Matrix>& truths);
};

struct ComparisonTable {
  std::vector<int> probe_times;
  std::vector<std::string> estimator_ids;
  // rows x (2 * probes): for each probe, EQM in dB then EQM_n.
  Matrix cells;

  std::string render() const;  // aligned text
};

ComparisonTable compare(const std::vector<MetricsSeries>& reports,
                        const std::vector<int>& probe_times);

}  // namespace rknlab
