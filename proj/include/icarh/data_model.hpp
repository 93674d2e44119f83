#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace icarh {

// Dense longitudinal dataset. Observation rows are indexed (subject i,
// time t) with row(i, t) = i*T + t; x is (N*T) x M, y is (N*T) x K.
struct Dataset {
  int N = 0, T = 0, M = 0, K = 0;
  Eigen::MatrixXd x;  // metabolite concentrations
  Eigen::MatrixXd y;  // additional omic covariates
  std::vector<std::string> subject_ids;
  std::vector<int> group;  // per subject: 0 = cases, 1 = controls
  std::vector<std::string> metabolite_names;
  std::vector<std::string> covariate_names;

  int row(int i, int t) const { return i * T + t; }
  bool two_group_labels() const;
  int metabolite_index(const std::string& name) const;  // -1 if absent
  int covariate_index(const std::string& name) const;
};

struct ScalingReport {
  std::vector<std::string> variable;  // metabolites then covariates
  std::vector<double> mean;
  std::vector<double> sd;
};

struct Pathway {
  std::string id;
  std::vector<int> members;                  // metabolite indices into Dataset
  std::vector<std::pair<int, int>> edges;    // metabolite index pairs
  std::vector<std::string> unresolved;       // names dropped during loading
};

struct PathwayGraph {
  std::vector<Pathway> pathways;
  int P() const { return static_cast<int>(pathways.size()); }
  int dropped_members = 0;  // warning count from loading
};

Dataset load_dataset(std::istream& in, const std::string& origin = "<stream>");
Dataset load_dataset_file(const std::string& path);
void write_dataset(const Dataset& d, std::ostream& out);
void write_dataset_file(const Dataset& d, const std::string& path);

// Center/scale every metabolite and covariate over the pooled N*T rows.
Dataset standardize(const Dataset& d, ScalingReport* report = nullptr);

PathwayGraph load_pathways(std::istream& in, const Dataset& d,
                           const std::string& origin = "<stream>");
PathwayGraph load_pathways_file(const std::string& path, const Dataset& d);
void write_pathways(const PathwayGraph& g, const Dataset& d, std::ostream& out);
void write_pathways_file(const PathwayGraph& g, const Dataset& d, const std::string& path);

}  // namespace icarh
