#include "icarh/model_core.hpp"

#include <cmath>

#include "icarh/errors.hpp"
#include "icarh/numeric.hpp"

namespace icarh {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
double logit(double p) { return std::log(p) - std::log1p(-p); }

double log_inv_gamma(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

double log_half_student_t(double x, double df) {
  return std::log(2.0) + std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
         0.5 * std::log(df * M_PI) - 0.5 * (df + 1.0) * std::log1p(x * x / df);
}

}  // namespace

ModelDims ModelDims::make(int N, int T, int M, int K, int P, bool two_group, bool treatment_mode) {
  ModelDims d;
  d.N = N;
  d.T = T;
  d.M = M;
  d.K = K;
  d.P = P;
  d.E = two_group ? 2 : 1;
  d.treatment_mode = treatment_mode;
  int off = 0;
  d.off_phi = off;
  off += d.E * P;
  d.off_sigma2 = off;
  off += 1;
  d.off_alpha = off;
  off += M;
  d.off_gamma = off;
  off += N * M;
  d.off_nu = off;
  off += N * T * M;
  d.off_theta = off;
  off += M;
  d.off_beta = off;
  off += M * K;
  d.off_lambda = off;
  off += M * K;
  d.off_sigma_beta = off;
  off += (K > 0 ? M : 0);
  d.off_sigma_gamma2 = off;
  off += M;
  d.off_sigma_nu2 = off;
  off += M;
  d.dim = off;
  return d;
}

std::vector<std::string> ModelDims::parameter_names() const {
  std::vector<std::string> names;
  names.reserve(dim);
  auto idx1 = [](const std::string& base, int a) { return base + "[" + std::to_string(a + 1) + "]"; };
  auto idx2 = [](const std::string& base, int a, int b) {
    return base + "[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]";
  };
  for (int e = 0; e < E; ++e) {
    const std::string base = (E == 2) ? (e == 0 ? "phi_cases" : "phi_controls") : "phi";
    for (int p = 0; p < P; ++p) names.push_back(idx1(base, p));
  }
  names.push_back("sigma2");
  const std::string alpha_base = treatment_mode ? "beta_alpha" : "alpha";
  for (int m = 0; m < M; ++m) names.push_back(idx1(alpha_base, m));
  for (int i = 0; i < N; ++i)
    for (int m = 0; m < M; ++m) names.push_back(idx2("gamma", i, m));
  for (int i = 0; i < N; ++i)
    for (int t = 0; t < T; ++t)
      for (int m = 0; m < M; ++m)
        names.push_back("nu[" + std::to_string(i + 1) + "," + std::to_string(t + 1) + "," +
                        std::to_string(m + 1) + "]");
  for (int m = 0; m < M; ++m) names.push_back(idx1("theta", m));
  for (int m = 0; m < M; ++m)
    for (int k = 0; k < K; ++k) names.push_back(idx2("beta", m, k));
  for (int m = 0; m < M; ++m)
    for (int k = 0; k < K; ++k) names.push_back(idx2("lambda", m, k));
  if (K > 0)
    for (int m = 0; m < M; ++m) names.push_back(idx1("sigma_beta", m));
  for (int m = 0; m < M; ++m) names.push_back(idx1("sigma_gamma2", m));
  for (int m = 0; m < M; ++m) names.push_back(idx1("sigma_nu2", m));
  return names;
}

double kappa(double lambda, double sigma_beta, double tau) {
  return 1.0 / (1.0 + lambda * lambda * sigma_beta * sigma_beta / tau);
}

double kappa_density(double kappa_value, double tau, double sigma_beta) {
  if (!(kappa_value > 0.0 && kappa_value < 1.0))
    throw ValidationError("kappa_density: kappa must lie in (0,1)");
  // Change of variables from lambda ~ St+(tau,0,1); the printed form of this
  // density omits the (tau+1)/2 exponent on the last factor and carries a
  // spurious 1/(2 sqrt(pi)). With sigma_beta = 1 this reduces to
  // Beta(tau/2, 1/2), which pins down the corrected normalization.
  const double log_beta = std::lgamma(0.5 * tau) + std::lgamma(0.5) - std::lgamma(0.5 * (tau + 1.0));
  const double s2 = sigma_beta * sigma_beta;
  const double log_p = -log_beta + tau * std::log(sigma_beta) +
                       (0.5 * tau - 1.0) * std::log(kappa_value) -
                       0.5 * std::log1p(-kappa_value) -
                       0.5 * (tau + 1.0) * std::log(1.0 - kappa_value + kappa_value * s2);
  return std::exp(log_p);
}

double expected_kappa(double tau, double sigma_beta) {
  return integrate_tanh_sinh([&](double k) { return k * kappa_density(k, tau, sigma_beta); }, 0.0,
                             1.0);
}

double calibrate_tau(double target_shrinkage, double sigma_beta) {
  if (!(target_shrinkage > 0.0 && target_shrinkage < 1.0))
    throw ValidationError("calibrate_tau: target must lie in (0,1)");
  double lo = 1e-2, hi = 1e3;
  const double e_lo = expected_kappa(lo, sigma_beta);
  const double e_hi = expected_kappa(hi, sigma_beta);
  if (target_shrinkage < e_lo || target_shrinkage > e_hi) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "calibrate_tau: target %.4f outside attainable range [%.4f, %.4f] for tau in "
                  "[1e-2, 1e3]",
                  target_shrinkage, e_lo, e_hi);
    throw ValidationError(msg);
  }
  for (int it = 0; it < 200 && hi - lo > 1e-10 * std::max(1.0, lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_kappa(mid, sigma_beta) < target_shrinkage ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Eigen::VectorXd conditional_beta_mean(const std::vector<Eigen::MatrixXd>& Yt,
                                      const std::vector<Eigen::VectorXd>& mu_tm, double sigma_m,
                                      const Eigen::VectorXd& kappa_m, double tau) {
  if (Yt.empty() || Yt.size() != mu_tm.size())
    throw ValidationError("conditional_beta_mean: mismatched Y and mu slices");
  const int K = static_cast<int>(Yt[0].cols());
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
  for (size_t t = 0; t < Yt.size(); ++t) {
    lhs += Yt[t].transpose() * Yt[t] / sigma_m;
    rhs += Yt[t].transpose() * mu_tm[t] / sigma_m;
  }
  // penalty tau^{-1} kappa/(1-kappa) = 1/(lambda^2 sigma_beta^2); the printed
  // penalty tau*diag(1/kappa - 1) would vanish as shrinkage grows, which
  // contradicts the conjugate-normal derivation
  for (int k = 0; k < K; ++k) {
    const double kap = kappa_m[k];
    if (!(kap > 0.0 && kap < 1.0))
      throw ValidationError("conditional_beta_mean: kappa must lie in (0,1)");
    lhs(k, k) += kap / ((1.0 - kap) * tau);
  }
  return lhs.ldlt().solve(rhs);
}

Model::Model(const Dataset& data, const PathwayDesign& design, const ModelConfig& cfg)
    : data_(data), design_(design), cfg_(cfg) {
  psi_ = cfg.psi > 0.0 ? cfg.psi : static_cast<double>(data.N) * data.T / 4.0;
  if (!(psi_ > 1.0)) throw ValidationError("sigma2 prior shape psi must exceed 1");
  if (!(cfg.tau > 0.0)) throw ValidationError("tau must be positive");
  if (cfg.two_group && !data.two_group_labels())
    throw ValidationError("two-group mode requires both cases and controls in the data");

  int drug_col = -1;
  if (cfg.treatment_covariate) {
    drug_col = data.covariate_index(*cfg.treatment_covariate);
    if (drug_col < 0)
      throw ValidationError("treatment covariate '" + *cfg.treatment_covariate +
                            "' not found in dataset");
    drug_ = data.y.col(drug_col);
    y_.resize(data.y.rows(), data.K - 1);
    for (int k = 0, c = 0; k < data.K; ++k)
      if (k != drug_col) y_.col(c++) = data.y.col(k);
  } else {
    y_ = data.y;
  }
  data_group_ = data.group;
  dims_ = ModelDims::make(data.N, data.T, data.M, static_cast<int>(y_.cols()), design.P(),
                          cfg.two_group, drug_col >= 0);
}

double Model::log_prior_phi(double phi, int p) const {
  const double lo = design_.lower[p], hi = design_.upper[p];
  if (cfg_.phi_prior == PhiPrior::Uniform) return -std::log(hi - lo);
  // beta-type prior, B(1/2,1/2) = pi
  return -std::log(M_PI) - 0.5 * std::log(phi - lo) - 0.5 * std::log(hi - phi);
}

double Model::dlog_prior_phi(double phi, int p) const {
  if (cfg_.phi_prior == PhiPrior::Uniform) return 0.0;
  return -0.5 / (phi - design_.lower[p]) + 0.5 / (design_.upper[p] - phi);
}

Eigen::VectorXd Model::mu_row(const Eigen::VectorXd& c, int i, int t) const {
  const auto& d = dims_;
  Eigen::VectorXd mu(d.M);
  const int r = data_.row(i, t);
  for (int m = 0; m < d.M; ++m) {
    double base = c[d.off_alpha + m];
    if (d.treatment_mode) base *= drug_[r];
    mu[m] = base + c[d.gamma_index(i, m)] + c[d.nu_index(i, t, m)];
    for (int k = 0; k < d.K; ++k) mu[m] += y_(r, k) * c[d.beta_index(m, k)];
  }
  return mu;
}

double Model::log_joint(const Eigen::VectorXd& c) const {
  const auto& d = dims_;
  if (c.size() != d.dim) throw ValidationError("parameter vector has wrong dimension");
  for (int j = 0; j < d.dim; ++j)
    if (!std::isfinite(c[j])) return kNegInf;

  const double sigma2 = c[d.off_sigma2];
  if (!(sigma2 > 0.0)) return kNegInf;
  for (int e = 0; e < d.E; ++e)
    for (int p = 0; p < d.P; ++p) {
      const double phi = c[d.phi_index(e, p)];
      if (!(phi > design_.lower[p] && phi < design_.upper[p])) return kNegInf;
    }
  for (int m = 0; m < d.M; ++m) {
    if (std::fabs(c[d.off_alpha + m]) > cfg_.alpha_bound) return kNegInf;
    const double theta = c[d.off_theta + m];
    if (!(theta > -1.0 && theta < 1.0)) return kNegInf;
    const double sg2 = c[d.off_sigma_gamma2 + m];
    const double sn2 = c[d.off_sigma_nu2 + m];
    if (!(sg2 > 0.0) || !(sn2 > 0.0) || sn2 > cfg_.sigma_nu2_max) return kNegInf;
    if (d.K > 0) {
      const double sb = c[d.off_sigma_beta + m];
      if (!(sb > 0.0) || sb > cfg_.sigma_beta_max) return kNegInf;
    }
    for (int k = 0; k < d.K; ++k)
      if (!(c[d.lambda_index(m, k)] > 0.0)) return kNegInf;
  }

  double lp = 0.0;

  // likelihood
  std::vector<CarFactor> factors(d.E);
  for (int e = 0; e < d.E; ++e) {
    Eigen::VectorXd phi(d.P);
    for (int p = 0; p < d.P; ++p) phi[p] = c[d.phi_index(e, p)];
    factors[e] = factor_car(phi, design_);
  }
  for (int i = 0; i < d.N; ++i) {
    const CarFactor& f = factors[group_of(i)];
    for (int t = 0; t < d.T; ++t) {
      const Eigen::VectorXd r = data_.x.row(data_.row(i, t)).transpose() - mu_row(c, i, t);
      lp += 0.5 * f.logdet - 0.5 * d.M * std::log(2.0 * M_PI * sigma2) -
            0.5 * r.dot(f.prec * r) / sigma2;
    }
  }

  // phi and sigma2 priors
  for (int e = 0; e < d.E; ++e)
    for (int p = 0; p < d.P; ++p) lp += log_prior_phi(c[d.phi_index(e, p)], p);
  lp += log_inv_gamma(sigma2, psi_, psi_ - 1.0);

  for (int m = 0; m < d.M; ++m) {
    const double theta = c[d.off_theta + m];
    const double sg2 = c[d.off_sigma_gamma2 + m];
    const double sn2 = c[d.off_sigma_nu2 + m];
    lp += -std::log(2.0 * cfg_.alpha_bound);  // alpha (or beta_alpha) flat
    lp += -std::log(2.0);                     // theta flat on (-1,1)
    lp += -std::log(cfg_.sigma_nu2_max);      // sigma_nu2 flat on (0,max]
    lp += log_inv_gamma(sg2, 1.0, 0.1);
    if (d.K > 0) lp += -std::log(cfg_.sigma_beta_max);  // sigma_beta flat

    for (int i = 0; i < d.N; ++i)
      lp += norm_logpdf(c[d.gamma_index(i, m)], 0.0, std::sqrt(sg2));

    const double stat_sd = std::sqrt(sn2 / (1.0 - theta * theta));
    for (int i = 0; i < d.N; ++i) {
      lp += norm_logpdf(c[d.nu_index(i, 0, m)], 0.0, stat_sd);
      for (int t = 1; t < d.T; ++t)
        lp += norm_logpdf(c[d.nu_index(i, t, m)], theta * c[d.nu_index(i, t - 1, m)],
                          std::sqrt(sn2));
    }

    if (d.K > 0) {
      const double sb = c[d.off_sigma_beta + m];
      for (int k = 0; k < d.K; ++k) {
        const double lam = c[d.lambda_index(m, k)];
        lp += norm_logpdf(c[d.beta_index(m, k)], 0.0, lam * sb);
        lp += log_half_student_t(lam, cfg_.tau);
      }
    }
  }
  return lp;
}

Eigen::VectorXd Model::transform(const Eigen::VectorXd& c) const {
  const auto& d = dims_;
  if (!c.allFinite()) throw NumericError("transform: non-finite constrained input");
  Eigen::VectorXd z(d.dim);
  for (int e = 0; e < d.E; ++e)
    for (int p = 0; p < d.P; ++p) {
      const double lo = design_.lower[p], hi = design_.upper[p];
      z[d.phi_index(e, p)] = logit((c[d.phi_index(e, p)] - lo) / (hi - lo));
    }
  z[d.off_sigma2] = std::log(c[d.off_sigma2]);
  for (int m = 0; m < d.M; ++m) {
    z[d.off_alpha + m] = c[d.off_alpha + m];
    z[d.off_theta + m] = logit(0.5 * (c[d.off_theta + m] + 1.0));
    z[d.off_sigma_gamma2 + m] = std::log(c[d.off_sigma_gamma2 + m]);
    // bounded scales map through a scaled logit so the unconstrained density
    // is smooth up to the cap (a log transform leaves a hard cliff there,
    // which wrecks leapfrog integration and step-size adaptation)
    z[d.off_sigma_nu2 + m] = logit(c[d.off_sigma_nu2 + m] / cfg_.sigma_nu2_max);
    if (d.K > 0) z[d.off_sigma_beta + m] = logit(c[d.off_sigma_beta + m] / cfg_.sigma_beta_max);
    for (int k = 0; k < d.K; ++k) {
      z[d.beta_index(m, k)] = c[d.beta_index(m, k)];
      z[d.lambda_index(m, k)] = std::log(c[d.lambda_index(m, k)]);
    }
    const double sg = std::sqrt(c[d.off_sigma_gamma2 + m]);
    for (int i = 0; i < d.N; ++i) z[d.gamma_index(i, m)] = c[d.gamma_index(i, m)] / sg;
    const double theta = c[d.off_theta + m];
    const double sn = std::sqrt(c[d.off_sigma_nu2 + m]);
    const double s1 = sn / std::sqrt(1.0 - theta * theta);
    for (int i = 0; i < d.N; ++i) {
      z[d.nu_index(i, 0, m)] = c[d.nu_index(i, 0, m)] / s1;
      for (int t = 1; t < d.T; ++t)
        z[d.nu_index(i, t, m)] =
            (c[d.nu_index(i, t, m)] - theta * c[d.nu_index(i, t - 1, m)]) / sn;
    }
  }
  if (!z.allFinite()) throw NumericError("transform: constrained input outside support");
  return z;
}

Eigen::VectorXd Model::untransform(const Eigen::VectorXd& z) const {
  const auto& d = dims_;
  Eigen::VectorXd c(d.dim);
  for (int e = 0; e < d.E; ++e)
    for (int p = 0; p < d.P; ++p) {
      const double lo = design_.lower[p], hi = design_.upper[p];
      c[d.phi_index(e, p)] = lo + (hi - lo) * sigmoid(z[d.phi_index(e, p)]);
    }
  c[d.off_sigma2] = std::exp(z[d.off_sigma2]);
  for (int m = 0; m < d.M; ++m) {
    c[d.off_alpha + m] = z[d.off_alpha + m];
    c[d.off_theta + m] = 2.0 * sigmoid(z[d.off_theta + m]) - 1.0;
    c[d.off_sigma_gamma2 + m] = std::exp(z[d.off_sigma_gamma2 + m]);
    c[d.off_sigma_nu2 + m] = cfg_.sigma_nu2_max * sigmoid(z[d.off_sigma_nu2 + m]);
    if (d.K > 0)
      c[d.off_sigma_beta + m] = cfg_.sigma_beta_max * sigmoid(z[d.off_sigma_beta + m]);
    for (int k = 0; k < d.K; ++k) {
      c[d.beta_index(m, k)] = z[d.beta_index(m, k)];
      c[d.lambda_index(m, k)] = std::exp(z[d.lambda_index(m, k)]);
    }
    const double sg = std::sqrt(c[d.off_sigma_gamma2 + m]);
    for (int i = 0; i < d.N; ++i) c[d.gamma_index(i, m)] = sg * z[d.gamma_index(i, m)];
    const double theta = c[d.off_theta + m];
    const double sn = std::sqrt(c[d.off_sigma_nu2 + m]);
    const double s1 = sn / std::sqrt(1.0 - theta * theta);
    for (int i = 0; i < d.N; ++i) {
      c[d.nu_index(i, 0, m)] = s1 * z[d.nu_index(i, 0, m)];
      for (int t = 1; t < d.T; ++t)
        c[d.nu_index(i, t, m)] =
            theta * c[d.nu_index(i, t - 1, m)] + sn * z[d.nu_index(i, t, m)];
    }
  }
  return c;
}

double Model::log_jacobian(const Eigen::VectorXd& z) const {
  const auto& d = dims_;
  double lj = 0.0;
  for (int e = 0; e < d.E; ++e)
    for (int p = 0; p < d.P; ++p) {
      const double zz = z[d.phi_index(e, p)];
      lj += std::log(design_.upper[p] - design_.lower[p]) - softplus(zz) - softplus(-zz);
    }
  lj += z[d.off_sigma2];
  for (int m = 0; m < d.M; ++m) {
    const double zt = z[d.off_theta + m];
    lj += std::log(2.0) - softplus(zt) - softplus(-zt);
    const double w = z[d.off_sigma_gamma2 + m];
    const double zv = z[d.off_sigma_nu2 + m];
    // log sigma_nu2 under the scaled-logit transform: log(cap * sigmoid(zv))
    const double v = std::log(cfg_.sigma_nu2_max) - softplus(-zv);
    lj += w + std::log(cfg_.sigma_nu2_max) - softplus(zv) - softplus(-zv);
    if (d.K > 0) {
      const double zb = z[d.off_sigma_beta + m];
      lj += std::log(cfg_.sigma_beta_max) - softplus(zb) - softplus(-zb);
    }
    for (int k = 0; k < d.K; ++k) lj += z[d.lambda_index(m, k)];
    // gamma = sigma_gamma * z, nu built from standardized innovations
    lj += d.N * 0.5 * w;
    const double theta = 2.0 * sigmoid(zt) - 1.0;
    lj += d.N * (d.T * 0.5 * v - 0.5 * std::log(1.0 - theta * theta));
  }
  return lj;
}

double Model::log_density_unconstrained(const Eigen::VectorXd& z) const {
  if (!z.allFinite()) return kNegInf;
  const double lp = log_joint(untransform(z));
  if (!std::isfinite(lp)) return kNegInf;
  return lp + log_jacobian(z);
}

double Model::value_and_grad(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
  const auto& d = dims_;
  grad.setZero(d.dim);
  if (!z.allFinite()) return kNegInf;
  const Eigen::VectorXd c = untransform(z);
  const double value = log_density_unconstrained(z);
  if (!std::isfinite(value)) return kNegInf;

  const double sigma2 = c[d.off_sigma2];
  const double tau = cfg_.tau;

  // per-group CAR factors, log-det gradients, residual scatter
  std::vector<CarFactor> factors(d.E);
  std::vector<Eigen::VectorXd> dlogdet(d.E);
  std::vector<Eigen::MatrixXd> scatter(d.E, Eigen::MatrixXd::Zero(d.M, d.M));
  std::vector<int> nt_count(d.E, 0);
  for (int e = 0; e < d.E; ++e) {
    Eigen::VectorXd phi(d.P);
    for (int p = 0; p < d.P; ++p) phi[p] = c[d.phi_index(e, p)];
    factors[e] = factor_car(phi, design_);
    dlogdet[e] = phi_logdet_gradient(factors[e], design_);
  }

  // likelihood pass: W holds (I - C_e) r_it rowwise
  Eigen::MatrixXd W(d.N * d.T, d.M);
  double quad_total = 0.0;
  for (int i = 0; i < d.N; ++i) {
    const int e = group_of(i);
    for (int t = 0; t < d.T; ++t) {
      const int row = data_.row(i, t);
      const Eigen::VectorXd r = data_.x.row(row).transpose() - mu_row(c, i, t);
      const Eigen::VectorXd w = factors[e].prec * r;
      W.row(row) = w.transpose();
      scatter[e].noalias() += r * r.transpose();
      quad_total += r.dot(w);
      ++nt_count[e];
    }
  }

  // phi blocks
  for (int e = 0; e < d.E; ++e)
    for (int p = 0; p < d.P; ++p) {
      const int j = d.phi_index(e, p);
      const double phi = c[j];
      double dphi = 0.5 * nt_count[e] * dlogdet[e][p] +
                    0.5 * scatter[e].cwiseProduct(design_.S[p]).sum() / sigma2 +
                    dlog_prior_phi(phi, p);
      const double s = sigmoid(z[j]);
      grad[j] = dphi * (design_.upper[p] - design_.lower[p]) * s * (1.0 - s) + (1.0 - 2.0 * s);
    }

  // sigma2 (log scale)
  grad[d.off_sigma2] = -0.5 * d.N * d.T * d.M + 0.5 * quad_total / sigma2 - (psi_ + 1.0) +
                       (psi_ - 1.0) / sigma2 + 1.0;

  for (int m = 0; m < d.M; ++m) {
    const double theta = c[d.off_theta + m];
    const double sg = std::sqrt(c[d.off_sigma_gamma2 + m]);
    const double sn2 = c[d.off_sigma_nu2 + m];
    const double sn = std::sqrt(sn2);
    const double s1 = sn / std::sqrt(1.0 - theta * theta);

    // alpha / beta_alpha and beta: linear mean terms
    double dalpha = 0.0;
    for (int i = 0; i < d.N; ++i)
      for (int t = 0; t < d.T; ++t) {
        const int row = data_.row(i, t);
        const double g = W(row, m) / sigma2;
        dalpha += d.treatment_mode ? g * drug_[row] : g;
      }
    grad[d.off_alpha + m] = dalpha;

    if (d.K > 0) {
      const double sb = c[d.off_sigma_beta + m];
      double du = 0.0;  // d/d(log sigma_beta) of the beta prior terms
      for (int k = 0; k < d.K; ++k) {
        const double beta = c[d.beta_index(m, k)];
        const double lam = c[d.lambda_index(m, k)];
        double db = -beta / (lam * lam * sb * sb);
        for (int i = 0; i < d.N; ++i)
          for (int t = 0; t < d.T; ++t) {
            const int row = data_.row(i, t);
            db += W(row, m) / sigma2 * y_(row, k);
          }
        grad[d.beta_index(m, k)] = db;
        const double ratio = beta * beta / (lam * lam * sb * sb);
        grad[d.lambda_index(m, k)] = ratio - (tau + 1.0) * lam * lam / (tau + lam * lam);
        du += ratio - 1.0;
      }
      // chain rule through sigma_beta = cap * sigmoid(zb), plus the
      // derivative of the transform's log-Jacobian
      const double sbs = sigmoid(z[d.off_sigma_beta + m]);
      grad[d.off_sigma_beta + m] = du * (1.0 - sbs) + (1.0 - 2.0 * sbs);
    }

    // gamma block and sigma_gamma2
    double dw = -1.0 + 0.1 / (sg * sg);
    for (int i = 0; i < d.N; ++i) {
      double gsum = 0.0;
      for (int t = 0; t < d.T; ++t) gsum += W(data_.row(i, t), m) / sigma2;
      grad[d.gamma_index(i, m)] = sg * gsum - z[d.gamma_index(i, m)];
      dw += 0.5 * gsum * c[d.gamma_index(i, m)];
    }
    grad[d.off_sigma_gamma2 + m] = dw;

    // nu block: adjoint pass for innovations, forward passes for theta and
    // log sigma_nu2 sensitivities
    double dtheta = 0.0;
    double dv = 0.0;  // d/d(log sigma_nu2) of the likelihood through nu
    for (int i = 0; i < d.N; ++i) {
      double adj = 0.0;
      for (int t = d.T - 1; t >= 0; --t) {
        const double g = W(data_.row(i, t), m) / sigma2;
        adj = g + theta * adj;
        grad[d.nu_index(i, t, m)] = (t == 0 ? s1 : sn) * adj - z[d.nu_index(i, t, m)];
      }
      double D = c[d.nu_index(i, 0, m)] * theta / (1.0 - theta * theta);
      double Ev = 0.5 * c[d.nu_index(i, 0, m)];
      {
        const double g = W(data_.row(i, 0), m) / sigma2;
        dtheta += g * D;
        dv += g * Ev;
      }
      for (int t = 1; t < d.T; ++t) {
        const double nu_prev = c[d.nu_index(i, t - 1, m)];
        const double nu_cur = c[d.nu_index(i, t, m)];
        D = nu_prev + theta * D;
        Ev = theta * Ev + 0.5 * (nu_cur - theta * nu_prev);
        const double g = W(data_.row(i, t), m) / sigma2;
        dtheta += g * D;
        dv += g * Ev;
      }
    }
    // chain rule through sigma_nu2 = cap * sigmoid(zv), plus the derivative
    // of the transform's log-Jacobian
    const double svs = sigmoid(z[d.off_sigma_nu2 + m]);
    grad[d.off_sigma_nu2 + m] = dv * (1.0 - svs) + (1.0 - 2.0 * svs);
    const double st = sigmoid(z[d.off_theta + m]);
    grad[d.off_theta + m] = dtheta * 2.0 * st * (1.0 - st) + (1.0 - 2.0 * st);
  }
  return value;
}

Eigen::VectorXd Model::loglik_rows(const Eigen::VectorXd& c) const {
  const auto& d = dims_;
  std::vector<CarFactor> factors(d.E);
  for (int e = 0; e < d.E; ++e) {
    Eigen::VectorXd phi(d.P);
    for (int p = 0; p < d.P; ++p) phi[p] = c[d.phi_index(e, p)];
    factors[e] = factor_car(phi, design_);
  }
  const double sigma2 = c[d.off_sigma2];
  Eigen::VectorXd ll(d.N * d.T);
  for (int i = 0; i < d.N; ++i)
    for (int t = 0; t < d.T; ++t)
      ll[data_.row(i, t)] = car_gaussian_logpdf(
          factors[group_of(i)], data_.x.row(data_.row(i, t)).transpose(), mu_row(c, i, t), sigma2);
  return ll;
}

}  // namespace icarh
