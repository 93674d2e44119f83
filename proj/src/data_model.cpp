#include "icarh/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "icarh/errors.hpp"
#include "nlohmann/json.hpp"

namespace icarh {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void format_double(char* buf, size_t n, double v) { std::snprintf(buf, n, "%.17g", v); }

}  // namespace

bool Dataset::two_group_labels() const {
  bool has0 = false, has1 = false;
  for (int g : group) (g == 0 ? has0 : has1) = true;
  return has0 && has1;
}

int Dataset::metabolite_index(const std::string& name) const {
  auto it = std::find(metabolite_names.begin(), metabolite_names.end(), name);
  return it == metabolite_names.end() ? -1 : static_cast<int>(it - metabolite_names.begin());
}

int Dataset::covariate_index(const std::string& name) const {
  auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
  return it == covariate_names.end() ? -1 : static_cast<int>(it - covariate_names.begin());
}

Dataset load_dataset(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(origin + ": empty data file");
  auto header = split_csv_line(trim(line));
  std::map<std::string, int> col;
  for (size_t c = 0; c < header.size(); ++c) col[trim(header[c])] = static_cast<int>(c);
  for (const char* required : {"subject", "time", "group", "kind", "variable", "value"})
    if (!col.count(required))
      throw ValidationError(origin + ": missing required column '" + std::string(required) + "'");

  struct Cell {
    int subject, time, var;
    bool metabolite;
    double value;
  };
  std::vector<Cell> cells;
  std::vector<std::string> subjects;
  std::map<std::string, int> subject_idx;
  std::vector<int> subject_group;
  std::vector<std::string> met_names, cov_names;
  std::map<std::string, int> met_idx, cov_idx;
  int max_time = 0;
  size_t lineno = 1;

  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < header.size())
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    const std::string subj = trim(f[col["subject"]]);
    const std::string grp = trim(f[col["group"]]);
    const std::string kind = trim(f[col["kind"]]);
    const std::string var = trim(f[col["variable"]]);
    int t;
    double value;
    try {
      t = std::stoi(trim(f[col["time"]]));
      value = std::stod(trim(f[col["value"]]));
    } catch (const std::exception&) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": unparseable time or value");
    }
    if (t < 1)
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": time must be >= 1");
    int g;
    if (grp == "cases")
      g = 0;
    else if (grp == "controls")
      g = 1;
    else
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": unknown group label '" + grp +
                            "' (expected cases/controls)");
    if (!subject_idx.count(subj)) {
      subject_idx[subj] = static_cast<int>(subjects.size());
      subjects.push_back(subj);
      subject_group.push_back(g);
    } else if (subject_group[subject_idx[subj]] != g) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": subject '" + subj +
                            "' appears with conflicting group labels");
    }
    bool metab;
    if (kind == "metabolite")
      metab = true;
    else if (kind == "covariate")
      metab = false;
    else
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": unknown kind '" + kind + "'");
    auto& names = metab ? met_names : cov_names;
    auto& idx = metab ? met_idx : cov_idx;
    if (!idx.count(var)) {
      idx[var] = static_cast<int>(names.size());
      names.push_back(var);
    }
    max_time = std::max(max_time, t);
    cells.push_back({subject_idx[subj], t - 1, idx[var], metab, value});
  }

  const int N = static_cast<int>(subjects.size());
  const int T = max_time;
  const int M = static_cast<int>(met_names.size());
  const int K = static_cast<int>(cov_names.size());
  if (N == 0 || T == 0 || M == 0)
    throw ValidationError(origin + ": need at least one subject, time point and metabolite");

  Dataset d;
  d.N = N;
  d.T = T;
  d.M = M;
  d.K = K;
  d.subject_ids = subjects;
  d.group = subject_group;
  d.metabolite_names = met_names;
  d.covariate_names = cov_names;
  d.x.setZero(N * T, M);
  d.y.setZero(N * T, K);

  std::vector<char> seen_x(static_cast<size_t>(N) * T * M, 0);
  std::vector<char> seen_y(static_cast<size_t>(N) * T * std::max(K, 1), 0);
  for (const Cell& c : cells) {
    const size_t flat = (static_cast<size_t>(c.subject) * T + c.time) * (c.metabolite ? M : K) + c.var;
    auto& seen = c.metabolite ? seen_x : seen_y;
    const auto& names = c.metabolite ? met_names : cov_names;
    if (seen[flat])
      throw ValidationError(origin + ": duplicate record for subject '" + subjects[c.subject] +
                            "', time " + std::to_string(c.time + 1) + ", variable '" + names[c.var] + "'");
    seen[flat] = 1;
    if (c.metabolite)
      d.x(d.row(c.subject, c.time), c.var) = c.value;
    else
      d.y(d.row(c.subject, c.time), c.var) = c.value;
  }
  for (int i = 0; i < N; ++i)
    for (int t = 0; t < T; ++t) {
      for (int m = 0; m < M; ++m)
        if (!seen_x[(static_cast<size_t>(i) * T + t) * M + m])
          throw ValidationError(origin + ": incomplete design: missing cell (subject '" + subjects[i] +
                                "', time " + std::to_string(t + 1) + ", variable '" + met_names[m] + "')");
      for (int k = 0; k < K; ++k)
        if (!seen_y[(static_cast<size_t>(i) * T + t) * K + k])
          throw ValidationError(origin + ": incomplete design: missing cell (subject '" + subjects[i] +
                                "', time " + std::to_string(t + 1) + ", variable '" + cov_names[k] + "')");
    }
  return d;
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file: " + path);
  return load_dataset(in, path);
}

void write_dataset(const Dataset& d, std::ostream& out) {
  out << "subject,time,group,kind,variable,value\n";
  char buf[64];
  for (int i = 0; i < d.N; ++i) {
    const char* grp = d.group[i] == 0 ? "cases" : "controls";
    for (int t = 0; t < d.T; ++t) {
      for (int m = 0; m < d.M; ++m) {
        format_double(buf, sizeof buf, d.x(d.row(i, t), m));
        out << d.subject_ids[i] << ',' << (t + 1) << ',' << grp << ",metabolite,"
            << d.metabolite_names[m] << ',' << buf << '\n';
      }
      for (int k = 0; k < d.K; ++k) {
        format_double(buf, sizeof buf, d.y(d.row(i, t), k));
        out << d.subject_ids[i] << ',' << (t + 1) << ',' << grp << ",covariate,"
            << d.covariate_names[k] << ',' << buf << '\n';
      }
    }
  }
}

void write_dataset_file(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write data file: " + path);
  write_dataset(d, out);
}

Dataset standardize(const Dataset& d, ScalingReport* report) {
  Dataset out = d;
  const double n = static_cast<double>(d.N) * d.T;
  if (report) {
    report->variable.clear();
    report->mean.clear();
    report->sd.clear();
  }
  auto scale_columns = [&](Eigen::MatrixXd& mat, const std::vector<std::string>& names) {
    for (int c = 0; c < mat.cols(); ++c) {
      const double mean = mat.col(c).mean();
      const double ss = (mat.col(c).array() - mean).square().sum();
      const double var = ss / (n - 1.0);
      if (!(var > 0.0) || std::sqrt(var) < 1e-14 * std::max(1.0, std::fabs(mean)))
        throw ValidationError("degenerate variable '" + names[c] + "': zero variance");
      const double sd = std::sqrt(var);
      mat.col(c) = (mat.col(c).array() - mean) / sd;
      if (report) {
        report->variable.push_back(names[c]);
        report->mean.push_back(mean);
        report->sd.push_back(sd);
      }
    }
  };
  if (d.N * d.T < 2) throw ValidationError("standardize requires at least two observation rows");
  scale_columns(out.x, d.metabolite_names);
  scale_columns(out.y, d.covariate_names);
  return out;
}

PathwayGraph load_pathways(std::istream& in, const Dataset& d, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(origin + ": pathway JSON parse error: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("pathways") || !j["pathways"].is_array())
    throw ValidationError(origin + ": expected top-level object with a 'pathways' array");
  PathwayGraph g;
  for (const auto& jp : j["pathways"]) {
    Pathway p;
    if (!jp.contains("id") || !jp.contains("metabolites"))
      throw ValidationError(origin + ": each pathway needs 'id' and 'metabolites'");
    p.id = jp["id"].get<std::string>();
    std::map<std::string, int> declared;  // name -> dataset index (-1 if unresolved)
    for (const auto& jm : jp["metabolites"]) {
      const std::string name = jm.get<std::string>();
      const int idx = d.metabolite_index(name);
      declared[name] = idx;
      if (idx >= 0) {
        if (std::find(p.members.begin(), p.members.end(), idx) == p.members.end())
          p.members.push_back(idx);
      } else {
        p.unresolved.push_back(name);
        ++g.dropped_members;
      }
    }
    if (jp.contains("edges")) {
      for (const auto& je : jp["edges"]) {
        if (!je.is_array() || je.size() != 2)
          throw ValidationError(origin + ": pathway '" + p.id + "': edge must be a [from,to] pair");
        const std::string a = je[0].get<std::string>();
        const std::string b = je[1].get<std::string>();
        for (const auto& name : {a, b})
          if (!declared.count(name))
            throw ValidationError(origin + ": pathway '" + p.id + "': edge references metabolite '" +
                                  name + "' not declared in this pathway");
        const int ia = declared[a], ib = declared[b];
        if (ia < 0 || ib < 0) continue;  // edge touching a dropped member
        if (ia == ib)
          throw ValidationError(origin + ": pathway '" + p.id + "': self edge on '" + a + "'");
        p.edges.emplace_back(ia, ib);
      }
    }
    g.pathways.push_back(std::move(p));
  }
  if (g.P() == 0) throw ValidationError(origin + ": empty pathway design (no pathways)");
  return g;
}

PathwayGraph load_pathways_file(const std::string& path, const Dataset& d) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pathway file: " + path);
  return load_pathways(in, d, path);
}

void write_pathways(const PathwayGraph& g, const Dataset& d, std::ostream& out) {
  nlohmann::json j;
  j["pathways"] = nlohmann::json::array();
  for (const auto& p : g.pathways) {
    nlohmann::json jp;
    jp["id"] = p.id;
    jp["metabolites"] = nlohmann::json::array();
    for (int m : p.members) jp["metabolites"].push_back(d.metabolite_names[m]);
    jp["edges"] = nlohmann::json::array();
    for (const auto& [a, b] : p.edges)
      jp["edges"].push_back({d.metabolite_names[a], d.metabolite_names[b]});
    j["pathways"].push_back(std::move(jp));
  }
  out << j.dump(2) << '\n';
}

void write_pathways_file(const PathwayGraph& g, const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pathway file: " + path);
  write_pathways(g, d, out);
}

}  // namespace icarh
