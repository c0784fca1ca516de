// CSV export of filter runs, per-time-step metrics and comparison tables.
// Every file starts with '#'-prefixed provenance comments; readers skip them.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "rknlab/metrics.hpp"

namespace rknlab {

using Provenance = std::vector<std::pair<std::string, std::string>>;

// Columns: episode_id, t, phase, x_hat[0..m), P diag, P off-diag (upper,
// row-major), K entries, y, S.
void export_filter_runs_csv(const std::vector<FilterRun>& runs,
                            const std::string& path, const Provenance& prov);

// Columns: estimator_id, t, eqm, eqm_db, eqmn, k_pos_mean, k_vel_mean,
// sd_est_pos, sd_emp_pos. Zero EQM serializes its dB as "-inf".
void write_metrics_csv(const std::vector<MetricsSeries>& series,
                       const std::string& path, const Provenance& prov);
std::vector<MetricsSeries> read_metrics_csv(const std::string& path);

void write_comparison_csv(const ComparisonTable& table, const std::string& path,
                          const Provenance& prov);

// History CSV: epoch, train_loss, val_loss.
void write_history_csv(const std::vector<double>& train_loss,
                       const std::vector<double>& val_loss,
                       const std::string& path, const Provenance& prov);

}  // namespace rknlab
