#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "icarh/model_core.hpp"
#include "icarh/sampler.hpp"

namespace icarh {

struct PathwayPerturbation {
  std::string id;
  double mean = 0.0, ci_lower = 0.0, ci_upper = 0.0;
  double score = 0.5;  // max tail probability of phi_controls - phi_cases
  bool perturbed = false;
  std::optional<bool> truth;
};

struct PerturbationReport {
  double level = 0.95;
  std::vector<PathwayPerturbation> pathways;
  std::optional<double> auc;  // present when truth labels were supplied
  std::vector<std::pair<double, double>> roc;  // (fpr, tpr) points
};

PerturbationReport phi_difference_test(const PosteriorDraws& draws,
                                       const std::vector<std::string>& pathway_ids,
                                       double level = 0.95);

// Threshold-sweep ROC with trapezoid AUC; tie handling matches the
// Wilcoxon rank statistic.
std::pair<std::vector<std::pair<double, double>>, double> roc_auc(
    const std::vector<double>& scores, const std::vector<bool>& truth);

struct WaicResult {
  double waic = 0.0, lppd = 0.0, p_waic = 0.0;
  std::vector<double> pointwise_lppd;    // per (i,t) observation
  std::vector<double> pointwise_p_waic;
};

// WAIC over (i,t) vector observations from a per-draw log-likelihood table
// (rows: draws, cols: observations).
WaicResult waic_from_table(const Eigen::MatrixXd& loglik);
WaicResult waic(const PosteriorDraws& draws, const Model& model, int thin = 1);

// per-draw log-likelihood table used by waic(); exposed for reuse
Eigen::MatrixXd loglik_table(const PosteriorDraws& draws, const Model& model, int thin = 1);

struct PpcMadResult {
  std::vector<int> metabolite_counts;
  std::vector<double> mad;
  int replicates = 0;
};

PpcMadResult ppc_mad(const PosteriorDraws& draws, const Model& model,
                     const std::vector<int>& metabolite_counts, int replicates, uint64_t seed);

struct WhitenedResiduals {
  // per group: pooled residual components and (theoretical, empirical)
  // normal quantile pairs for QQ plotting
  std::vector<std::string> group_label;
  std::vector<std::vector<double>> residuals;
  std::vector<std::vector<std::pair<double, double>>> qq;
};

WhitenedResiduals whitened_residuals(const PosteriorDraws& draws, const Model& model);

struct BetaEffect {
  int m = 0, k = 0;
  double mean = 0.0, ci_lower = 0.0, ci_upper = 0.0;
  bool selected = false;
  double kappa_mean = 0.0, kappa_q50 = 0.0;
};

std::vector<BetaEffect> beta_summary(const PosteriorDraws& draws, const Model& model,
                                     double level = 0.95);

// posterior mean of every column, pooled over chains
Eigen::VectorXd posterior_mean(const PosteriorDraws& draws);

}  // namespace icarh
