#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <map>
#include <vector>

#include "icarh/car_structure.hpp"
#include "icarh/data_model.hpp"
#include "icarh/rng.hpp"

namespace icarh {

struct SimulationConfig {
  int N = 22, T = 7, M = 40, K = 1, P = 11;
  double tau = 1.2;
  double pi_omega = 0.7;    // perturbation probability per pathway
  double rho = 0.05;        // offset of the perturbed mean from the boundary
  double sigma_phi2 = 0.2;  // perturbed-component variance
  double psi_sim = 100.0;   // null-component SD ("large": near-uniform in bounds)
  // distribution of the number of pathways a metabolite belongs to
  std::map<int, double> membership_density = {{1, 0.55}, {2, 0.25}, {3, 0.12}, {4, 0.08}};
  uint64_t seed = 1;
  double corruption_fraction = 0.0;

  void validate() const;  // throws ValidationError with field names
};

struct GroundTruth {
  std::vector<bool> omega;  // per-pathway perturbation flags
  Eigen::VectorXd phi_controls, phi_cases;
  Eigen::VectorXd alpha, theta, sigma_nu2, sigma_gamma2, sigma_beta;
  double sigma2 = 1.0;
  Eigen::MatrixXd beta, lambda;  // M x K
  Eigen::MatrixXd gamma;         // N x M
  Eigen::MatrixXd nu;            // (N*T) x M
};

PathwayGraph simulate_membership(int M, int P, const std::map<int, double>& density, Rng& rng);

// Perturbed pathways get phi_controls near the upper bound and phi_cases
// near the lower bound; unperturbed pathways share one diffuse in-bounds draw.
void simulate_phi(const PathwayDesign& design, const SimulationConfig& cfg, Rng& rng,
                  Eigen::VectorXd& phi_controls, Eigen::VectorXd& phi_cases,
                  std::vector<bool>& omega);

Dataset simulate_dataset(const PathwayDesign& design, const Eigen::VectorXd& phi_controls,
                         const Eigen::VectorXd& phi_cases, const SimulationConfig& cfg, Rng& rng,
                         GroundTruth* truth = nullptr);

PathwayGraph corrupt_design(const PathwayGraph& g, double fraction, Rng& rng);

void write_truth_json(const GroundTruth& truth, const std::vector<std::string>& pathway_ids,
                      std::ostream& out);
std::vector<bool> read_truth_flags(std::istream& in);

}  // namespace icarh
