#include "icarh/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "icarh/errors.hpp"
#include "nlohmann/json.hpp"

namespace icarh {

void SimulationConfig::validate() const {
  if (N < 1 || T < 1 || M < 1 || K < 0 || P < 1)
    throw ValidationError("simulation config: dimensions must satisfy N,T,M,P >= 1 and K >= 0");
  if (!(pi_omega >= 0.0 && pi_omega <= 1.0))
    throw ValidationError("simulation config: pi_omega must lie in [0,1]");
  if (rho < 0.0) throw ValidationError("simulation config: rho must be >= 0");
  if (!(sigma_phi2 > 0.0)) throw ValidationError("simulation config: sigma_phi2 must be > 0");
  if (!(psi_sim > 0.0)) throw ValidationError("simulation config: psi_sim must be > 0");
  if (!(tau > 0.0)) throw ValidationError("simulation config: tau must be > 0");
  if (!(corruption_fraction >= 0.0 && corruption_fraction <= 1.0))
    throw ValidationError("simulation config: corruption_fraction must lie in [0,1]");
  double total = 0.0;
  for (const auto& [count, prob] : membership_density) {
    if (count < 0 || prob < 0.0)
      throw ValidationError("simulation config: membership_density entries must be nonnegative");
    total += prob;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    throw ValidationError("simulation config: membership_density must sum to 1");
}

PathwayGraph simulate_membership(int M, int P, const std::map<int, double>& density, Rng& rng) {
  if (P < 1) throw ValidationError("simulate_membership: P must be >= 1");
  std::vector<std::vector<int>> members(P);
  for (int m = 0; m < M; ++m) {
    // draw the pathway count for this metabolite from the density
    double u = rng.uniform();
    int count = 0;
    for (const auto& [c, prob] : density) {
      count = c;
      if (u < prob) break;
      u -= prob;
    }
    count = std::min(count, P);
    std::set<int> chosen;
    while (static_cast<int>(chosen.size()) < count)
      chosen.insert(static_cast<int>(rng.uniform_int(P)));
    for (int p : chosen) members[p].push_back(m);
  }
  // A_p = z_p z_p^T with zero diagonal: every member pair adjacent
  PathwayGraph g;
  for (int p = 0; p < P; ++p) {
    Pathway pw;
    pw.id = "p" + std::to_string(p + 1);
    pw.members = members[p];
    for (size_t a = 0; a < pw.members.size(); ++a)
      for (size_t b = a + 1; b < pw.members.size(); ++b)
        pw.edges.emplace_back(pw.members[a], pw.members[b]);
    g.pathways.push_back(std::move(pw));
  }
  return g;
}

void simulate_phi(const PathwayDesign& design, const SimulationConfig& cfg, Rng& rng,
                  Eigen::VectorXd& phi_controls, Eigen::VectorXd& phi_cases,
                  std::vector<bool>& omega) {
  const int P = design.P();
  phi_controls.resize(P);
  phi_cases.resize(P);
  omega.assign(P, false);
  const double sigma_phi = std::sqrt(cfg.sigma_phi2);
  for (int p = 0; p < P; ++p) {
    const double lo = design.lower[p], hi = design.upper[p];
    const bool perturbed = rng.uniform() < cfg.pi_omega;
    omega[p] = perturbed;
    if (perturbed) {
      phi_controls[p] = rng.truncated_normal(hi - cfg.rho, sigma_phi, 0.0, hi);
      phi_cases[p] = rng.truncated_normal(lo + cfg.rho, sigma_phi, lo, 0.0);
      // keep strictly inside the open interval
      const double eps = 1e-9 * (hi - lo);
      phi_controls[p] = std::min(std::max(phi_controls[p], lo + eps), hi - eps);
      phi_cases[p] = std::min(std::max(phi_cases[p], lo + eps), hi - eps);
    } else {
      // diffuse null, truncated so positive definiteness is never violated
      const double eps = 1e-9 * (hi - lo);
      double v = rng.truncated_normal(0.0, cfg.psi_sim, lo, hi);
      v = std::min(std::max(v, lo + eps), hi - eps);
      phi_controls[p] = v;
      phi_cases[p] = v;  // point mass at the controls value
    }
  }
}

Dataset simulate_dataset(const PathwayDesign& design, const Eigen::VectorXd& phi_controls,
                         const Eigen::VectorXd& phi_cases, const SimulationConfig& cfg, Rng& rng,
                         GroundTruth* truth) {
  cfg.validate();
  const int N = cfg.N, T = cfg.T, M = design.M, K = cfg.K;

  GroundTruth local;
  GroundTruth& gt = truth ? *truth : local;
  gt.phi_controls = phi_controls;
  gt.phi_cases = phi_cases;
  gt.sigma2 = 1.0;
  gt.alpha.resize(M);
  gt.theta.resize(M);
  gt.sigma_nu2.resize(M);
  gt.sigma_gamma2.resize(M);
  gt.sigma_beta = Eigen::VectorXd::Ones(M);
  gt.beta.resize(M, K);
  gt.lambda.resize(M, K);
  gt.gamma.resize(N, M);
  gt.nu.resize(N * T, M);

  for (int m = 0; m < M; ++m) {
    gt.alpha[m] = rng.normal();
    gt.theta[m] = rng.uniform(-0.6, 0.6);
    gt.sigma_nu2[m] = rng.inverse_gamma(3.0, 2.0);
    gt.sigma_gamma2[m] = rng.inverse_gamma(3.0, 2.0);
    for (int k = 0; k < K; ++k) {
      gt.lambda(m, k) = rng.half_student_t(cfg.tau);
      gt.beta(m, k) = rng.normal(0.0, gt.lambda(m, k) * gt.sigma_beta[m]);
    }
    for (int i = 0; i < N; ++i) gt.gamma(i, m) = rng.normal(0.0, std::sqrt(gt.sigma_gamma2[m]));
    const double stat_sd = std::sqrt(gt.sigma_nu2[m] / (1.0 - gt.theta[m] * gt.theta[m]));
    for (int i = 0; i < N; ++i) {
      gt.nu(i * T, m) = rng.normal(0.0, stat_sd);
      for (int t = 1; t < T; ++t)
        gt.nu(i * T + t, m) =
            gt.theta[m] * gt.nu(i * T + t - 1, m) + rng.normal(0.0, std::sqrt(gt.sigma_nu2[m]));
    }
  }

  Dataset d;
  d.N = N;
  d.T = T;
  d.M = M;
  d.K = K;
  d.x.resize(N * T, M);
  d.y.resize(N * T, K);
  for (int i = 0; i < N; ++i) {
    d.subject_ids.push_back("s" + std::to_string(i + 1));
    d.group.push_back(i < (N + 1) / 2 ? 0 : 1);  // first half cases, rest controls
  }
  for (int m = 0; m < M; ++m) d.metabolite_names.push_back("m" + std::to_string(m + 1));
  for (int k = 0; k < K; ++k) d.covariate_names.push_back("y" + std::to_string(k + 1));

  for (int r = 0; r < N * T; ++r)
    for (int k = 0; k < K; ++k) d.y(r, k) = rng.normal();

  const CarFactor f_cases = factor_car(phi_cases, design);
  const CarFactor f_controls = factor_car(phi_controls, design);
  const double sigma = std::sqrt(gt.sigma2);
  Eigen::VectorXd z(M), mu(M);
  for (int i = 0; i < N; ++i) {
    const CarFactor& f = d.group[i] == 0 ? f_cases : f_controls;
    for (int t = 0; t < T; ++t) {
      const int row = d.row(i, t);
      for (int m = 0; m < M; ++m) {
        mu[m] = gt.alpha[m] + gt.gamma(i, m) + gt.nu(row, m);
        for (int k = 0; k < K; ++k) mu[m] += d.y(row, k) * gt.beta(m, k);
      }
      for (int m = 0; m < M; ++m) z[m] = rng.normal();
      d.x.row(row) = (mu + sigma * f.llt.matrixU().solve(z)).transpose();
    }
  }
  return d;
}

PathwayGraph corrupt_design(const PathwayGraph& g, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ValidationError("corrupt_design: fraction must lie in [0,1]");
  const int P = g.P();
  PathwayGraph out = g;
  if (fraction == 0.0 || P == 0) return out;

  // select victims from the ORIGINAL memberships so reassigned metabolites
  // are not re-corrupted when their new pathway is processed
  struct Move {
    int from_pathway, metabolite;
    int to_pathway;  // -1: dropped from all pathways
  };
  std::vector<Move> moves;
  for (int p = 0; p < P; ++p) {
    const auto& members = g.pathways[p].members;
    const int n_remove = static_cast<int>(std::llround(fraction * members.size()));
    std::vector<int> order(members.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (int v = 0; v < n_remove; ++v) {
      Move mv;
      mv.from_pathway = p;
      mv.metabolite = members[order[v]];
      if (P > 1 && rng.uniform() < 0.5) {
        int q = static_cast<int>(rng.uniform_int(P - 1));
        if (q >= p) ++q;
        mv.to_pathway = q;
      } else {
        mv.to_pathway = -1;
      }
      moves.push_back(mv);
    }
  }
  for (const Move& mv : moves) {
    Pathway& from = out.pathways[mv.from_pathway];
    from.members.erase(std::remove(from.members.begin(), from.members.end(), mv.metabolite),
                       from.members.end());
    from.edges.erase(std::remove_if(from.edges.begin(), from.edges.end(),
                                    [&](const std::pair<int, int>& e) {
                                      return e.first == mv.metabolite ||
                                             e.second == mv.metabolite;
                                    }),
                     from.edges.end());
    if (mv.to_pathway >= 0) {
      Pathway& to = out.pathways[mv.to_pathway];
      if (std::find(to.members.begin(), to.members.end(), mv.metabolite) == to.members.end()) {
        for (int other : to.members) to.edges.emplace_back(other, mv.metabolite);
        to.members.push_back(mv.metabolite);
      }
    }
  }
  return out;
}

void write_truth_json(const GroundTruth& truth, const std::vector<std::string>& pathway_ids,
                      std::ostream& out) {
  nlohmann::json j;
  j["pathway_ids"] = pathway_ids;
  j["omega"] = truth.omega;
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  auto mat = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  j["phi_controls"] = vec(truth.phi_controls);
  j["phi_cases"] = vec(truth.phi_cases);
  j["alpha"] = vec(truth.alpha);
  j["theta"] = vec(truth.theta);
  j["sigma_nu2"] = vec(truth.sigma_nu2);
  j["sigma_gamma2"] = vec(truth.sigma_gamma2);
  j["sigma_beta"] = vec(truth.sigma_beta);
  j["sigma2"] = truth.sigma2;
  j["beta"] = mat(truth.beta);
  j["lambda"] = mat(truth.lambda);
  j["gamma"] = mat(truth.gamma);
  j["nu"] = mat(truth.nu);
  out << j.dump(2) << '\n';
}

std::vector<bool> read_truth_flags(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("truth JSON parse error: " + std::string(e.what()));
  }
  if (!j.contains("omega")) throw ValidationError("truth JSON lacks 'omega' flags");
  return j["omega"].get<std::vector<bool>>();
}

}  // namespace icarh
