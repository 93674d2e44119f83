#include "icarh/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icarh/errors.hpp"
#include "icarh/numeric.hpp"
#include "icarh/rng.hpp"

namespace icarh {

Eigen::VectorXd posterior_mean(const PosteriorDraws& draws) {
  if (draws.n_chains() == 0 || draws.n_draws() == 0)
    throw ValidationError("posterior_mean: no draws");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(draws.names.size());
  for (const auto& ch : draws.chains) mean += ch.colwise().mean().transpose();
  return mean / draws.n_chains();
}

PerturbationReport phi_difference_test(const PosteriorDraws& draws,
                                       const std::vector<std::string>& pathway_ids, double level) {
  PerturbationReport report;
  report.level = level;
  const int P = static_cast<int>(pathway_ids.size());
  for (int p = 0; p < P; ++p) {
    const std::string suffix = "[" + std::to_string(p + 1) + "]";
    const int col_ctl = draws.index_of("phi_controls" + suffix);
    const int col_cas = draws.index_of("phi_cases" + suffix);
    if (col_ctl < 0 || col_cas < 0)
      throw ValidationError("phi difference test requires a two-group fit (group-specific phi)");
    const Eigen::VectorXd diff = draws.pooled(col_ctl) - draws.pooled(col_cas);
    std::vector<double> v(diff.data(), diff.data() + diff.size());
    PathwayPerturbation pp;
    pp.id = pathway_ids[p];
    pp.mean = diff.mean();
    pp.ci_lower = quantile(v, 0.5 * (1.0 - level));
    pp.ci_upper = quantile(v, 1.0 - 0.5 * (1.0 - level));
    pp.perturbed = !(pp.ci_lower <= 0.0 && 0.0 <= pp.ci_upper);
    const double frac_pos =
        static_cast<double>(std::count_if(v.begin(), v.end(), [](double x) { return x > 0.0; })) /
        v.size();
    pp.score = std::max(frac_pos, 1.0 - frac_pos);
    report.pathways.push_back(std::move(pp));
  }
  return report;
}

std::pair<std::vector<std::pair<double, double>>, double> roc_auc(
    const std::vector<double>& scores, const std::vector<bool>& truth) {
  if (scores.size() != truth.size() || scores.empty())
    throw ValidationError("roc_auc: scores and truth must be same nonzero length");
  const int n_pos = static_cast<int>(std::count(truth.begin(), truth.end(), true));
  const int n_neg = static_cast<int>(truth.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError("roc_auc: need at least one positive and one negative label");

  // sweep unique thresholds from high to low
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<std::pair<double, double>> roc{{0.0, 0.0}};
  for (double thr : thresholds) {
    int tp = 0, fp = 0;
    for (size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= thr) (truth[i] ? tp : fp)++;
    roc.emplace_back(static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos);
  }
  double auc = 0.0;
  for (size_t i = 1; i < roc.size(); ++i)
    auc += 0.5 * (roc[i].first - roc[i - 1].first) * (roc[i].second + roc[i - 1].second);
  return {roc, auc};
}

WaicResult waic_from_table(const Eigen::MatrixXd& loglik) {
  const int S = static_cast<int>(loglik.rows());
  const int n_obs = static_cast<int>(loglik.cols());
  if (S < 2) throw ValidationError("WAIC needs at least 2 draws for the variance term");
  WaicResult r;
  for (int o = 0; o < n_obs; ++o) {
    std::vector<double> col(loglik.col(o).data(), loglik.col(o).data() + S);
    const double lppd_o = log_sum_exp(col) - std::log(static_cast<double>(S));
    const double mean = loglik.col(o).mean();
    const double var = (loglik.col(o).array() - mean).square().sum() / (S - 1);
    r.pointwise_lppd.push_back(lppd_o);
    r.pointwise_p_waic.push_back(var);
    r.lppd += lppd_o;
    r.p_waic += var;
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

Eigen::MatrixXd loglik_table(const PosteriorDraws& draws, const Model& model, int thin) {
  if (thin < 1) thin = 1;
  std::vector<Eigen::VectorXd> rows;
  for (int c = 0; c < draws.n_chains(); ++c)
    for (int it = 0; it < draws.n_draws(); it += thin)
      rows.push_back(model.loglik_rows(draws.chains[c].row(it).transpose()));
  Eigen::MatrixXd table(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (size_t s = 0; s < rows.size(); ++s) table.row(s) = rows[s].transpose();
  return table;
}

WaicResult waic(const PosteriorDraws& draws, const Model& model, int thin) {
  return waic_from_table(loglik_table(draws, model, thin));
}

namespace {

Eigen::MatrixXd covariance_pooled_rows(const Eigen::MatrixXd& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  return centered.transpose() * centered / (rows.rows() - 1.0);
}

}  // namespace

PpcMadResult ppc_mad(const PosteriorDraws& draws, const Model& model,
                     const std::vector<int>& metabolite_counts, int replicates, uint64_t seed) {
  const auto& d = model.dims();
  for (int c : metabolite_counts)
    if (c < 2 || c > d.M)
      throw ValidationError("ppc_mad: metabolite count " + std::to_string(c) +
                            " outside [2, M]");
  const int total = draws.n_chains() * draws.n_draws();
  if (total < 1) throw ValidationError("ppc_mad: no draws");
  replicates = std::min(replicates, total);
  if (replicates < 1) throw ValidationError("ppc_mad: need at least one replicate");

  // one posterior-predictive replicate dataset per selected (evenly spaced) draw
  PpcMadResult result;
  result.metabolite_counts = metabolite_counts;
  result.replicates = replicates;
  result.mad.assign(metabolite_counts.size(), 0.0);

  const Eigen::MatrixXd observed = [&] {
    Eigen::MatrixXd obs(d.N * d.T, d.M);
    for (int i = 0; i < d.N; ++i)
      for (int t = 0; t < d.T; ++t) obs.row(i * d.T + t) = model.data_row(i, t).transpose();
    return obs;
  }();

  Rng rng(seed);
  for (int rep = 0; rep < replicates; ++rep) {
    const int flat = static_cast<int>((static_cast<int64_t>(rep) * total) / replicates);
    const int chain = flat / draws.n_draws();
    const int it = flat % draws.n_draws();
    const Eigen::VectorXd c = draws.chains[chain].row(it).transpose();
    const double sigma = std::sqrt(c[d.off_sigma2]);

    std::vector<CarFactor> factors(d.E);
    for (int e = 0; e < d.E; ++e) {
      Eigen::VectorXd phi(d.P);
      for (int p = 0; p < d.P; ++p) phi[p] = c[d.phi_index(e, p)];
      factors[e] = factor_car(phi, model.design());
    }
    Eigen::MatrixXd sim(d.N * d.T, d.M);
    Eigen::VectorXd zvec(d.M);
    for (int i = 0; i < d.N; ++i) {
      const CarFactor& f = factors[model.group_of(i)];
      for (int t = 0; t < d.T; ++t) {
        for (int m = 0; m < d.M; ++m) zvec[m] = rng.normal();
        // x = mu + sigma * L^{-T} z has covariance (I - C)^{-1} sigma^2
        sim.row(i * d.T + t) =
            (model.mu_row(c, i, t) + sigma * f.llt.matrixU().solve(zvec)).transpose();
      }
    }
    for (size_t ci = 0; ci < metabolite_counts.size(); ++ci) {
      const int mm = metabolite_counts[ci];
      const Eigen::MatrixXd cov_obs = covariance_pooled_rows(observed.leftCols(mm));
      const Eigen::MatrixXd cov_sim = covariance_pooled_rows(sim.leftCols(mm));
      result.mad[ci] += (cov_obs - cov_sim).cwiseAbs().mean() / replicates;
    }
  }
  return result;
}

WhitenedResiduals whitened_residuals(const PosteriorDraws& draws, const Model& model) {
  const auto& d = model.dims();
  const Eigen::VectorXd c = posterior_mean(draws);
  WhitenedResiduals out;
  for (int e = 0; e < d.E; ++e) {
    out.group_label.push_back(d.E == 2 ? (e == 0 ? "cases" : "controls") : "all");
    out.residuals.emplace_back();
    out.qq.emplace_back();
  }
  const double sigma2 = c[d.off_sigma2];
  // lower Cholesky factor of the covariance (I - C)^{-1} sigma^2, per group
  std::vector<Eigen::LLT<Eigen::MatrixXd>> cov_chol(d.E);
  for (int e = 0; e < d.E; ++e) {
    Eigen::VectorXd phi(d.P);
    for (int p = 0; p < d.P; ++p) phi[p] = c[d.phi_index(e, p)];
    const CarFactor f = factor_car(phi, model.design());
    const Eigen::MatrixXd cov =
        f.llt.solve(Eigen::MatrixXd::Identity(d.M, d.M)) * sigma2;
    cov_chol[e].compute(cov);
    if (cov_chol[e].info() != Eigen::Success)
      throw NumericError("whitened_residuals: covariance not positive definite");
  }
  for (int i = 0; i < d.N; ++i) {
    const int e = model.group_of(i);
    for (int t = 0; t < d.T; ++t) {
      const Eigen::VectorXd r = model.data_row(i, t) - model.mu_row(c, i, t);
      const Eigen::VectorXd white = cov_chol[e].matrixL().solve(r);
      for (int m = 0; m < d.M; ++m) out.residuals[e].push_back(white[m]);
    }
  }
  for (int e = 0; e < d.E; ++e) {
    std::vector<double> sorted = out.residuals[e];
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    for (size_t j = 0; j < n; ++j)
      out.qq[e].emplace_back(norm_quantile((j + 0.5) / n), sorted[j]);
  }
  return out;
}

std::vector<BetaEffect> beta_summary(const PosteriorDraws& draws, const Model& model,
                                     double level) {
  const auto& d = model.dims();
  std::vector<BetaEffect> out;
  if (d.K == 0) return out;
  for (int m = 0; m < d.M; ++m)
    for (int k = 0; k < d.K; ++k) {
      BetaEffect eff;
      eff.m = m + 1;
      eff.k = k + 1;
      const Eigen::VectorXd b = draws.pooled(d.beta_index(m, k));
      std::vector<double> v(b.data(), b.data() + b.size());
      eff.mean = b.mean();
      eff.ci_lower = quantile(v, 0.5 * (1.0 - level));
      eff.ci_upper = quantile(v, 1.0 - 0.5 * (1.0 - level));
      eff.selected = !(eff.ci_lower <= 0.0 && 0.0 <= eff.ci_upper);
      const Eigen::VectorXd lam = draws.pooled(d.lambda_index(m, k));
      const Eigen::VectorXd sb = draws.pooled(d.off_sigma_beta + m);
      std::vector<double> kap(lam.size());
      for (int s = 0; s < lam.size(); ++s)
        kap[s] = kappa(lam[s], sb[s], model.config().tau);
      eff.kappa_mean = std::accumulate(kap.begin(), kap.end(), 0.0) / kap.size();
      eff.kappa_q50 = quantile(kap, 0.5);
      out.push_back(eff);
    }
  return out;
}

}  // namespace icarh
