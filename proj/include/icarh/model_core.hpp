#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "icarh/car_structure.hpp"
#include "icarh/data_model.hpp"

namespace icarh {

enum class PhiPrior { Beta, Uniform };

struct ModelConfig {
  double tau = 1.2;            // half-Student-t degrees of freedom (global sparsity)
  double psi = 0.0;            // sigma^2 prior shape; 0 means use N*T/4
  bool two_group = false;      // group-specific phi
  std::optional<std::string> treatment_covariate;  // alpha_m = beta_alpha_m * y_drug
  PhiPrior phi_prior = PhiPrior::Beta;
  double alpha_bound = 10.0;     // flat prior on [-bound, bound]
  double sigma_nu2_max = 10.0;   // flat prior on (0, max]
  double sigma_beta_max = 10.0;  // flat prior on (0, max]
};

// Packing layout of the parameter vector. Constrained and unconstrained
// vectors share this layout; K and the alpha interpretation already reflect
// treatment-as-covariate mode (the drug column is removed from Y).
struct ModelDims {
  int N = 0, T = 0, M = 0, K = 0, P = 0, E = 1;
  bool treatment_mode = false;

  int off_phi = 0, off_sigma2 = 0, off_alpha = 0, off_gamma = 0, off_nu = 0, off_theta = 0,
      off_beta = 0, off_lambda = 0, off_sigma_beta = 0, off_sigma_gamma2 = 0, off_sigma_nu2 = 0;
  int dim = 0;

  static ModelDims make(int N, int T, int M, int K, int P, bool two_group, bool treatment_mode);

  int phi_index(int e, int p) const { return off_phi + e * P + p; }
  int gamma_index(int i, int m) const { return off_gamma + i * M + m; }
  int nu_index(int i, int t, int m) const { return off_nu + (i * T + t) * M + m; }
  int beta_index(int m, int k) const { return off_beta + m * K + k; }
  int lambda_index(int m, int k) const { return off_lambda + m * K + k; }

  std::vector<std::string> parameter_names() const;
};

double kappa(double lambda, double sigma_beta, double tau);
double kappa_density(double kappa_value, double tau, double sigma_beta);
double expected_kappa(double tau, double sigma_beta);
double calibrate_tau(double target_shrinkage, double sigma_beta);

// Ridge-analogy diagnostic: posterior mean of beta_m given the shrinkage
// profile kappa_m. Yt[t] is N x K, mu_tm[t] is the length-N mean slice for
// metabolite m, sigma_m the diagonal value of Sigma_m.
Eigen::VectorXd conditional_beta_mean(const std::vector<Eigen::MatrixXd>& Yt,
                                      const std::vector<Eigen::VectorXd>& mu_tm, double sigma_m,
                                      const Eigen::VectorXd& kappa_m, double tau);

class Model {
public:
  Model(const Dataset& data, const PathwayDesign& design, const ModelConfig& cfg);

  const ModelDims& dims() const { return dims_; }
  const ModelConfig& config() const { return cfg_; }
  const PathwayDesign& design() const { return design_; }
  double psi() const { return psi_; }
  int group_of(int i) const { return dims_.E == 2 ? data_group_[i] : 0; }

  // log joint density over constrained parameters; -inf out of support
  double log_joint(const Eigen::VectorXd& constrained) const;

  // unconstrained <-> constrained bijection; log_jacobian returns
  // log |d constrained / d unconstrained| at z
  Eigen::VectorXd transform(const Eigen::VectorXd& constrained) const;
  Eigen::VectorXd untransform(const Eigen::VectorXd& z) const;
  double log_jacobian(const Eigen::VectorXd& z) const;

  // posterior target on R^dim: log_joint(untransform(z)) + log_jacobian(z)
  double log_density_unconstrained(const Eigen::VectorXd& z) const;
  double value_and_grad(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const;

  // mean surface mu_it (M-vector) under a constrained parameter vector
  Eigen::VectorXd mu_row(const Eigen::VectorXd& constrained, int i, int t) const;

  Eigen::VectorXd data_row(int i, int t) const {
    return data_.x.row(data_.row(i, t)).transpose();
  }

  // log-likelihood of observation (i,t) under a constrained parameter vector,
  // reusing per-group CAR factors computed once per call via loglik_rows
  Eigen::VectorXd loglik_rows(const Eigen::VectorXd& constrained) const;  // length N*T

  // effective regression covariates (drug column removed in treatment mode)
  const Eigen::MatrixXd& regression_y() const { return y_; }
  const Eigen::VectorXd& drug_profile() const { return drug_; }

  std::vector<std::string> parameter_names() const { return dims_.parameter_names(); }

private:
  double log_prior_phi(double phi, int p) const;
  double dlog_prior_phi(double phi, int p) const;

  const Dataset& data_;
  const PathwayDesign& design_;
  ModelConfig cfg_;
  ModelDims dims_;
  double psi_;
  Eigen::MatrixXd y_;     // (N*T) x K regression covariates
  Eigen::VectorXd drug_;  // (N*T) drug profile; empty unless treatment mode
  std::vector<int> data_group_;
};

}  // namespace icarh
