#pragma once

#include <Eigen/Dense>
#include <sstream>
#include <string>
#include <vector>

#include "icarh/car_structure.hpp"
#include "icarh/data_model.hpp"
#include "icarh/model_core.hpp"
#include "icarh/rng.hpp"

namespace testutil {

// Random pathway graph over M metabolites: P pathways, each a random
// connected-ish subset with random edges among members.
inline icarh::PathwayGraph random_graph(int M, int P, icarh::Rng& rng) {
  icarh::PathwayGraph g;
  for (int p = 0; p < P; ++p) {
    icarh::Pathway pw;
    pw.id = "p" + std::to_string(p + 1);
    const int size = 2 + static_cast<int>(rng.uniform_int(std::max(1, M - 1)));
    std::vector<int> pool(M);
    for (int m = 0; m < M; ++m) pool[m] = m;
    for (int s = 0; s < std::min(size, M); ++s) {
      const int j = s + static_cast<int>(rng.uniform_int(M - s));
      std::swap(pool[s], pool[j]);
      pw.members.push_back(pool[s]);
    }
    std::sort(pw.members.begin(), pw.members.end());
    // chain through the members plus a few random chords
    for (size_t a = 1; a < pw.members.size(); ++a)
      pw.edges.emplace_back(pw.members[a - 1], pw.members[a]);
    for (size_t a = 0; a + 2 < pw.members.size(); ++a)
      if (rng.uniform() < 0.3) pw.edges.emplace_back(pw.members[a], pw.members[a + 2]);
    g.pathways.push_back(std::move(pw));
  }
  return g;
}

inline Eigen::VectorXd random_phi(const icarh::PathwayDesign& design, icarh::Rng& rng,
                                  double margin = 0.05) {
  Eigen::VectorXd phi(design.P());
  for (int p = 0; p < design.P(); ++p) {
    const double lo = design.lower[p], hi = design.upper[p];
    const double pad = margin * (hi - lo);
    phi[p] = rng.uniform(lo + pad, hi - pad);
  }
  return phi;
}

// Synthetic dataset with named variables and arbitrary values; groups split
// half cases / half controls when two_group is set.
inline icarh::Dataset random_dataset(int N, int T, int M, int K, icarh::Rng& rng,
                                     bool two_group = true) {
  icarh::Dataset d;
  d.N = N;
  d.T = T;
  d.M = M;
  d.K = K;
  d.x = Eigen::MatrixXd::NullaryExpr(N * T, M, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  d.y = Eigen::MatrixXd::NullaryExpr(N * T, K, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  for (int i = 0; i < N; ++i) {
    d.subject_ids.push_back("s" + std::to_string(i + 1));
    d.group.push_back(two_group && i >= (N + 1) / 2 ? 1 : 0);
  }
  for (int m = 0; m < M; ++m) d.metabolite_names.push_back("m" + std::to_string(m + 1));
  for (int k = 0; k < K; ++k) d.covariate_names.push_back("y" + std::to_string(k + 1));
  return d;
}

// Random in-support constrained parameter vector for a model.
inline Eigen::VectorXd random_constrained(const icarh::Model& model, icarh::Rng& rng) {
  const icarh::ModelDims& dims = model.dims();
  const icarh::PathwayDesign& design = model.design();
  Eigen::VectorXd s(dims.dim);
  for (int e = 0; e < dims.E; ++e)
    for (int p = 0; p < dims.P; ++p) {
      const double lo = design.lower[p], hi = design.upper[p];
      s[dims.phi_index(e, p)] = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
    }
  s[dims.off_sigma2] = rng.uniform(0.5, 2.0);
  for (int m = 0; m < dims.M; ++m) s[dims.off_alpha + m] = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < dims.N; ++i)
    for (int m = 0; m < dims.M; ++m) s[dims.gamma_index(i, m)] = 0.3 * rng.normal();
  for (int i = 0; i < dims.N; ++i)
    for (int t = 0; t < dims.T; ++t)
      for (int m = 0; m < dims.M; ++m) s[dims.nu_index(i, t, m)] = 0.3 * rng.normal();
  for (int m = 0; m < dims.M; ++m) s[dims.off_theta + m] = rng.uniform(-0.7, 0.7);
  for (int m = 0; m < dims.M; ++m)
    for (int k = 0; k < dims.K; ++k) {
      s[dims.beta_index(m, k)] = 0.5 * rng.normal();
      s[dims.lambda_index(m, k)] = rng.uniform(0.3, 2.0);
    }
  if (dims.K > 0)
    for (int m = 0; m < dims.M; ++m) s[dims.off_sigma_beta + m] = rng.uniform(0.5, 2.0);
  for (int m = 0; m < dims.M; ++m) s[dims.off_sigma_gamma2 + m] = rng.uniform(0.5, 2.0);
  for (int m = 0; m < dims.M; ++m) s[dims.off_sigma_nu2 + m] = rng.uniform(0.5, 2.0);
  return s;
}

inline std::string dataset_csv(const icarh::Dataset& d) {
  std::ostringstream out;
  icarh::write_dataset(d, out);
  return out.str();
}

}  // namespace testutil
