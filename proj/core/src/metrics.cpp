#include "rknlab/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace rknlab {

namespace {

void check_aligned(const std::vector<FilterRun>& runs,
                   const std::vector<Matrix>& truths) {
  if (runs.empty()) throw std::invalid_argument("metrics: no runs");
  if (runs.size() != truths.size())
    throw std::invalid_argument("metrics: runs/truths size mismatch");
  const int T = runs.front().length();
  for (size_t k = 0; k < runs.size(); ++k)
    if (runs[k].length() != T || truths[k].rows() != T)
      throw std::invalid_argument("metrics: length mismatch at run " + std::to_string(k));
}

}  // namespace

std::vector<double> eqm(const std::vector<FilterRun>& runs,
                        const std::vector<Matrix>& truths, Phase phase) {
  check_aligned(runs, truths);
  const int T = runs.front().length();
  std::vector<double> out(T, 0.0);
  for (size_t k = 0; k < runs.size(); ++k) {
    const Matrix& est = phase == Phase::predicted ? runs[k].x_pred : runs[k].x_corr;
    for (int t = 0; t < T; ++t)
      out[t] += (truths[k].row(t) - est.row(t)).squaredNorm();
  }
  for (double& v : out) v /= static_cast<double>(runs.size());
  return out;
}

std::vector<double> to_db(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i)
    out[i] = v[i] == 0.0 ? -std::numeric_limits<double>::infinity()
                         : 10.0 * std::log10(v[i]);
  return out;
}

std::vector<double> eqm_normalized(const std::vector<FilterRun>& runs,
                                   const std::vector<Matrix>& truths) {
  check_aligned(runs, truths);
  const int T = runs.front().length();
  std::vector<double> out(T, 0.0);
  for (size_t k = 0; k < runs.size(); ++k) {
    for (int t = 0; t < T; ++t) {
      const Vector e = truths[k].row(t).transpose() - runs[k].x_corr.row(t).transpose();
      Eigen::LLT<Matrix> llt(runs[k].P_corr[t]);
      if (llt.info() != Eigen::Success)
        throw NumericalError("eqm_normalized: non-SPD covariance (episode " +
                             std::to_string(runs[k].episode_id) + ", step " +
                             std::to_string(t) + ")");
      out[t] += e.dot(llt.solve(e));
    }
  }
  for (double& v : out) v /= static_cast<double>(runs.size());
  return out;
}

Chi2Band chi2_band(int m, int N, double k_sigma) {
  if (m < 1 || N < 1) throw std::invalid_argument("chi2_band: m, N must be >= 1");
  Chi2Band band;
  band.mean = m;
  band.variance = 2.0 * m / N;
  const double half = k_sigma * std::sqrt(band.variance);
  band.low = band.mean - half;
  band.high = band.mean + half;
  return band;
}

std::vector<Matrix> gain_trace(const std::vector<FilterRun>& runs) {
  if (runs.empty()) throw std::invalid_argument("gain_trace: no runs");
  const int T = runs.front().length();
  std::vector<Matrix> out(T);
  for (int t = 0; t < T; ++t) out[t] = Matrix::Zero(runs.front().K[t].rows(),
                                                    runs.front().K[t].cols());
  for (const FilterRun& run : runs)
    for (int t = 0; t < T; ++t) out[t] += run.K[t];
  for (Matrix& k : out) k /= static_cast<double>(runs.size());
  return out;
}

DecorrelationStat decorrelation_stat(const std::vector<FilterRun>& runs,
                                     const std::vector<Matrix>& truths, int tail) {
  check_aligned(runs, truths);
  const int T = runs.front().length();
  const int t0 = std::max(0, T - tail);
  const int m = static_cast<int>(runs.front().x_corr.cols());
  const int n = static_cast<int>(runs.front().y.cols());

  Matrix sum = Matrix::Zero(m, n);
  Matrix sumsq = Matrix::Zero(m, n);
  long count = 0;
  for (size_t k = 0; k < runs.size(); ++k) {
    for (int t = t0; t < T; ++t) {
      const Vector e = truths[k].row(t).transpose() - runs[k].x_corr.row(t).transpose();
      const Matrix prod = e * runs[k].y.row(t);
      sum += prod;
      sumsq += prod.cwiseProduct(prod);
      ++count;
    }
  }
  DecorrelationStat stat;
  stat.samples = count;
  stat.cross_cov = sum / count;
  const Matrix var = (sumsq / count - stat.cross_cov.cwiseProduct(stat.cross_cov))
                         .cwiseMax(0.0);
  stat.std_error = (var / std::max<long>(count - 1, 1)).cwiseSqrt();
  return stat;
}

MetricsSeries MetricsSeries::from_runs(const std::string& estimator_id,
                                       const std::vector<FilterRun>& runs,
                                       const std::vector<Matrix>& truths) {
  check_aligned(runs, truths);
  MetricsSeries s;
  s.estimator_id = estimator_id;
  s.N = static_cast<int>(runs.size());
  s.eqm_lin = eqm(runs, truths, Phase::predicted);
  s.eqm_db = to_db(s.eqm_lin);
  s.eqmn = eqm_normalized(runs, truths);

  const int T = runs.front().length();
  const bool has_vel = runs.front().x_corr.cols() > 1;
  const auto gains = gain_trace(runs);
  s.k_pos_mean.resize(T);
  s.k_vel_mean.resize(T);
  s.sd_est_pos.assign(T, 0.0);
  s.sd_emp_pos.assign(T, 0.0);
  for (int t = 0; t < T; ++t) {
    s.k_pos_mean[t] = gains[t](0, 0);
    s.k_vel_mean[t] = has_vel ? gains[t](1, 0) : 0.0;
    double pvar = 0.0, perr = 0.0;
    for (const FilterRun& run : runs) pvar += run.P_corr[t](0, 0);
    for (size_t k = 0; k < runs.size(); ++k) {
      const double e = truths[k](t, 0) - runs[k].x_corr(t, 0);
      perr += e * e;
    }
    s.sd_est_pos[t] = std::sqrt(pvar / s.N);
    s.sd_emp_pos[t] = std::sqrt(perr / s.N);
  }
  return s;
}

ComparisonTable compare(const std::vector<MetricsSeries>& reports,
                        const std::vector<int>& probe_times) {
  if (reports.empty()) throw std::invalid_argument("compare: no reports");
  const int T = reports.front().length();
  for (const auto& r : reports)
    if (r.length() != T) throw std::invalid_argument("compare: reports differ in T");
  for (int p : probe_times)
    if (p < 0 || p >= T)
      throw std::invalid_argument("compare: probe time " + std::to_string(p) +
                                  " outside [0, " + std::to_string(T) + ")");

  ComparisonTable table;
  table.probe_times = probe_times;
  table.cells.resize(reports.size(), 2 * probe_times.size());
  for (size_t r = 0; r < reports.size(); ++r) {
    table.estimator_ids.push_back(reports[r].estimator_id);
    for (size_t p = 0; p < probe_times.size(); ++p) {
      table.cells(r, 2 * p) = reports[r].eqm_db[probe_times[p]];
      table.cells(r, 2 * p + 1) = reports[r].eqmn[probe_times[p]];
    }
  }
  return table;
}

std::string ComparisonTable::render() const {
  std::ostringstream out;
  size_t name_w = 10;
  for (const auto& id : estimator_ids) name_w = std::max(name_w, id.size() + 2);

  out << std::left << std::setw(static_cast<int>(name_w)) << "estimator";
  for (int p : probe_times)
    out << std::right << std::setw(12) << ("EQM(" + std::to_string(p) + ")")
        << std::setw(12) << ("EQMn(" + std::to_string(p) + ")");
  out << '\n';
  for (size_t r = 0; r < estimator_ids.size(); ++r) {
    out << std::left << std::setw(static_cast<int>(name_w)) << estimator_ids[r];
    for (size_t p = 0; p < probe_times.size(); ++p)
      out << std::right << std::fixed << std::setprecision(2) << std::setw(12)
          << cells(r, 2 * p) << std::setw(12) << cells(r, 2 * p + 1);
    out << '\n';
  }
  return out.str();
}

}  // namespace rknlab
