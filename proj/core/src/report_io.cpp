#include "rknlab/report_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace rknlab {

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s, int line) {
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

void write_provenance(std::ofstream& out, const Provenance& prov) {
  for (const auto& [key, value] : prov) out << "# " << key << ": " << value << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace

void export_filter_runs_csv(const std::vector<FilterRun>& runs,
                            const std::string& path, const Provenance& prov) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_filter_runs_csv: cannot open '" + path + "'");
  write_provenance(out, prov);
  if (runs.empty()) throw std::invalid_argument("export_filter_runs_csv: no runs");

  const int m = static_cast<int>(runs.front().x_corr.cols());
  const int n = static_cast<int>(runs.front().y.cols());
  out << "episode_id,t,phase";
  for (int i = 0; i < m; ++i) out << ",x_hat" << i;
  for (int i = 0; i < m; ++i) out << ",P" << i << i;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) out << ",P" << i << j;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out << ",K" << i << j;
  for (int j = 0; j < n; ++j) out << ",y" << j;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out << ",S" << i << j;
  out << '\n';

  auto emit = [&](const FilterRun& run, int t, Phase phase) {
    const bool corr = phase == Phase::corrected;
    const Matrix& x = corr ? run.x_corr : run.x_pred;
    const std::vector<Matrix>& P = corr ? run.P_corr : run.P_pred;
    out << run.episode_id << ',' << t << ',' << (corr ? "corrected" : "predicted");
    for (int i = 0; i < m; ++i) out << ',' << fmt(x(t, i));
    const bool have_p = !P.empty();
    for (int i = 0; i < m; ++i) out << ',' << (have_p ? fmt(P[t](i, i)) : "");
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) out << ',' << (have_p ? fmt(P[t](i, j)) : "");
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out << ',' << fmt(run.K[t](i, j));
    for (int j = 0; j < n; ++j) out << ',' << fmt(run.y(t, j));
    const bool have_s = !run.S.empty();
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) out << ',' << (have_s ? fmt(run.S[t](i, j)) : "");
    out << '\n';
  };

  for (const FilterRun& run : runs)
    for (int t = 0; t < run.length(); ++t) {
      if (!run.P_pred.empty()) emit(run, t, Phase::predicted);
      emit(run, t, Phase::corrected);
    }
}

void write_metrics_csv(const std::vector<MetricsSeries>& series,
                       const std::string& path, const Provenance& prov) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open '" + path + "'");
  write_provenance(out, prov);
  out << "estimator_id,t,eqm,eqm_db,eqmn,k_pos_mean,k_vel_mean,sd_est_pos,sd_emp_pos\n";
  for (const MetricsSeries& s : series)
    for (int t = 0; t < s.length(); ++t)
      out << s.estimator_id << ',' << t << ',' << fmt(s.eqm_lin[t]) << ','
          << fmt(s.eqm_db[t]) << ',' << fmt(s.eqmn[t]) << ','
          << fmt(s.k_pos_mean[t]) << ',' << fmt(s.k_vel_mean[t]) << ','
          << fmt(s.sd_est_pos[t]) << ',' << fmt(s.sd_emp_pos[t]) << '\n';
}

std::vector<MetricsSeries> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_metrics_csv: cannot open '" + path + "'");
  std::vector<MetricsSeries> series;
  std::string line;
  int lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      saw_header = true;  // column header
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != 9)
      throw ParseError("line " + std::to_string(lineno) + ": expected 9 fields");
    if (series.empty() || series.back().estimator_id != fields[0]) {
      series.emplace_back();
      series.back().estimator_id = fields[0];
    }
    MetricsSeries& s = series.back();
    s.eqm_lin.push_back(parse_double(fields[2], lineno));
    s.eqm_db.push_back(parse_double(fields[3], lineno));
    s.eqmn.push_back(parse_double(fields[4], lineno));
    s.k_pos_mean.push_back(parse_double(fields[5], lineno));
    s.k_vel_mean.push_back(parse_double(fields[6], lineno));
    s.sd_est_pos.push_back(parse_double(fields[7], lineno));
    s.sd_emp_pos.push_back(parse_double(fields[8], lineno));
  }
  if (series.empty()) throw ParseError("metrics CSV '" + path + "' has no data rows");
  return series;
}

void write_comparison_csv(const ComparisonTable& table, const std::string& path,
                          const Provenance& prov) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_comparison_csv: cannot open '" + path + "'");
  write_provenance(out, prov);
  out << "estimator_id";
  for (int p : table.probe_times) out << ",eqm_db_t" << p << ",eqmn_t" << p;
  out << '\n';
  for (size_t r = 0; r < table.estimator_ids.size(); ++r) {
    out << table.estimator_ids[r];
    for (Eigen::Index c = 0; c < table.cells.cols(); ++c)
      out << ',' << fmt(table.cells(r, c));
    out << '\n';
  }
}

void write_history_csv(const std::vector<double>& train_loss,
                       const std::vector<double>& val_loss,
                       const std::string& path, const Provenance& prov) {
  if (train_loss.size() != val_loss.size())
    throw std::invalid_argument("write_history_csv: length mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_history_csv: cannot open '" + path + "'");
  write_provenance(out, prov);
  out << "epoch,train_loss,val_loss\n";
  for (size_t i = 0; i < train_loss.size(); ++i)
    out << i << ',' << fmt(train_loss[i]) << ',' << fmt(val_loss[i]) << '\n';
}

}  // namespace rknlab
