#include "rknlab/dataset_io.hpp"

#include <fstream>
#include <json.hpp>

namespace rknlab {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Matrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ParseError("field '" + field + "': expected array of arrays");
  const size_t rows = j.size();
  const size_t cols = j[0].size();
  Matrix m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols)
      throw ParseError("field '" + field + "': ragged rows");
    for (size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Vector vector_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ParseError("field '" + field + "': expected array");
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

const json& require(const json& j, const std::string& field, int line) {
  auto it = j.find(field);
  if (it == j.end())
    throw ParseError("line " + std::to_string(line) + ": missing field '" + field + "'");
  return *it;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open '" + path + "'");

  json header;
  header["type"] = "header";
  header["model"] = {{"F", matrix_to_json(ds.model.F)},
                     {"H", matrix_to_json(ds.model.H)},
                     {"Q", matrix_to_json(ds.model.Q)},
                     {"m", ds.model.state_dim()},
                     {"n", ds.model.meas_dim()}};
  header["initial"] = {{"mean", vector_to_json(ds.initial.mean)},
                       {"cov", matrix_to_json(ds.initial.cov)}};
  header["master_seed"] = ds.master_seed;
  header["split"] = to_string(ds.split);
  header["T"] = ds.length();
  header["episodes"] = ds.episodes.size();
  json mix = json::array();
  for (const auto& [scenario, count] : ds.mix)
    mix.push_back(json::array({to_string(scenario), count}));
  header["mix"] = std::move(mix);
  header["rng"] = kRngAlgorithmId;
  out << header.dump() << '\n';

  for (const Episode& ep : ds.episodes) {
    json rec;
    rec["type"] = "episode";
    rec["episode_id"] = ep.episode_id;
    rec["seed"] = ep.seed;
    rec["scenario"] = to_string(ep.schedule.scenario);
    rec["sigma"] = ep.schedule.sigma;
    rec["x"] = matrix_to_json(ep.x);
    rec["z"] = matrix_to_json(ep.z);
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_dataset: write failure on '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open '" + path + "'");

  Dataset ds;
  std::string linebuf;
  int line = 0;
  size_t expected_episodes = 0;
  int T = -1, m = -1, n = -1;
  bool have_header = false;

  while (std::getline(in, linebuf)) {
    ++line;
    if (linebuf.empty()) continue;
    json j;
    try {
      j = json::parse(linebuf);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line) + ": " + e.what());
    }
    const std::string type = require(j, "type", line).get<std::string>();
    if (type == "header") {
      const json& model = require(j, "model", line);
      ds.model.F = matrix_from_json(require(model, "F", line), "F");
      ds.model.H = matrix_from_json(require(model, "H", line), "H");
      ds.model.Q = matrix_from_json(require(model, "Q", line), "Q");
      m = require(model, "m", line).get<int>();
      n = require(model, "n", line).get<int>();
      if (ds.model.state_dim() != m || ds.model.meas_dim() != n)
        throw ParseError("line " + std::to_string(line) + ": field 'model' dims inconsistent");
      const json& initial = require(j, "initial", line);
      ds.initial.mean = vector_from_json(require(initial, "mean", line), "mean");
      ds.initial.cov = matrix_from_json(require(initial, "cov", line), "cov");
      ds.master_seed = require(j, "master_seed", line).get<uint64_t>();
      ds.split = split_from_string(require(j, "split", line).get<std::string>());
      T = require(j, "T", line).get<int>();
      expected_episodes = require(j, "episodes", line).get<size_t>();
      for (const auto& entry : require(j, "mix", line))
        ds.mix.emplace_back(scenario_from_string(entry[0].get<std::string>()),
                            entry[1].get<int>());
      have_header = true;
    } else if (type == "episode") {
      if (!have_header)
        throw ParseError("line " + std::to_string(line) + ": episode before header");
      Episode ep;
      ep.episode_id = require(j, "episode_id", line).get<int64_t>();
      ep.seed = require(j, "seed", line).get<uint64_t>();
      ep.schedule.scenario =
          scenario_from_string(require(j, "scenario", line).get<std::string>());
      ep.schedule.sigma = require(j, "sigma", line).get<std::vector<double>>();
      ep.x = matrix_from_json(require(j, "x", line), "x");
      ep.z = matrix_from_json(require(j, "z", line), "z");
      if (ep.x.rows() != T || ep.z.rows() != T ||
          static_cast<int>(ep.schedule.sigma.size()) != T)
        throw ParseError("line " + std::to_string(line) +
                         ": field 'x'/'z'/'sigma' length != T");
      if (ep.x.cols() != m || ep.z.cols() != n)
        throw ParseError("line " + std::to_string(line) + ": episode width mismatch");
      for (double s : ep.schedule.sigma)
        if (!(s > 0))
          throw ParseError("line " + std::to_string(line) + ": field 'sigma' must be > 0");
      ds.episodes.push_back(std::move(ep));
    } else {
      throw ParseError("line " + std::to_string(line) + ": unknown record type '" + type + "'");
    }
  }
  if (!have_header) throw ParseError("line 0: missing header record");
  if (ds.episodes.size() != expected_episodes)
    throw ParseError("file truncated: expected " + std::to_string(expected_episodes) +
                     " episodes, found " + std::to_string(ds.episodes.size()));
  return ds;
}

}  // namespace rknlab
