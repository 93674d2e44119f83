#include "icarh/car_structure.hpp"

#include <cmath>
#include <deque>
#include <ostream>

#include "icarh/errors.hpp"
#include "nlohmann/json.hpp"

namespace icarh {

void PathwayDesign::check_phi(const Eigen::VectorXd& phi) const {
  if (phi.size() != P()) throw ValidationError("phi has wrong length for design");
  for (int p = 0; p < P(); ++p)
    if (!(phi[p] > lower[p] && phi[p] < upper[p]))
      throw ValidationError("phi out of bounds for pathway '" + ids[p] + "'");
}

PathwayDesign build_pathway_design(const PathwayGraph& g, int M) {
  PathwayDesign d;
  d.M = M;
  const int P = g.P();
  for (const Pathway& pw : g.pathways) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(M, M);
    const int n = static_cast<int>(pw.members.size());
    if (n >= 2 && !pw.edges.empty()) {
      // BFS shortest paths on the within-pathway subgraph; metabolite indices
      // are global, adjacency lists are local to the pathway.
      std::vector<std::vector<int>> adj(n);
      auto local = [&](int global) {
        for (int i = 0; i < n; ++i)
          if (pw.members[i] == global) return i;
        return -1;
      };
      for (const auto& [a, b] : pw.edges) {
        const int la = local(a), lb = local(b);
        adj[la].push_back(lb);
        adj[lb].push_back(la);
      }
      for (int s = 0; s < n; ++s) {
        std::vector<int> dist(n, -1);
        std::deque<int> q{s};
        dist[s] = 0;
        while (!q.empty()) {
          const int u = q.front();
          q.pop_front();
          for (int v : adj[u])
            if (dist[v] < 0) {
              dist[v] = dist[u] + 1;
              q.push_back(v);
            }
        }
        for (int j = 0; j < n; ++j)
          if (j != s && dist[j] > 0)  // unreachable pairs keep weight 0
            A(pw.members[s], pw.members[j]) = 1.0 / dist[j];
      }
    }
    Eigen::VectorXd G = Eigen::VectorXd::Zero(M);
    for (int m = 0; m < M; ++m) {
      const int neighbors = (A.row(m).array() > 0.0).count();
      if (neighbors > 0) G[m] = 1.0 / neighbors;
    }
    Eigen::MatrixXd S = 0.5 * (G.asDiagonal() * A + A * G.asDiagonal());
    const bool inert = S.cwiseAbs().maxCoeff() == 0.0;
    double lo = -1.0, hi = 1.0;  // conventional interval for inert pathways
    if (!inert) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
      const double xi_min = es.eigenvalues().minCoeff();
      const double xi_max = es.eigenvalues().maxCoeff();
      lo = 1.0 / (P * xi_min);
      hi = 1.0 / (P * xi_max);
    }
    d.ids.push_back(pw.id);
    d.A.push_back(std::move(A));
    d.G.push_back(std::move(G));
    d.S.push_back(std::move(S));
    d.lower.push_back(lo);
    d.upper.push_back(hi);
    d.inert.push_back(inert);
  }
  return d;
}

Eigen::MatrixXd car_matrix(const Eigen::VectorXd& phi, const PathwayDesign& design) {
  design.check_phi(phi);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(design.M, design.M);
  for (int p = 0; p < design.P(); ++p) C += phi[p] * design.S[p];
  return C;
}

CarFactor factor_car(const Eigen::VectorXd& phi, const PathwayDesign& design) {
  CarFactor f;
  f.prec = Eigen::MatrixXd::Identity(design.M, design.M) - car_matrix(phi, design);
  f.llt.compute(f.prec);
  if (f.llt.info() != Eigen::Success)
    throw NumericError("I - C(phi) not positive definite at phi = [" + [&] {
      std::string s;
      for (int p = 0; p < phi.size(); ++p) s += (p ? ", " : "") + std::to_string(phi[p]);
      return s;
    }() + "]");
  f.logdet = 2.0 * f.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return f;
}

double car_gaussian_logpdf(const CarFactor& f, const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                           double sigma2) {
  if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
  const int M = static_cast<int>(x.size());
  const Eigen::VectorXd r = x - mu;
  const double quad = r.dot(f.prec * r) / sigma2;
  return 0.5 * f.logdet - 0.5 * M * std::log(sigma2) - 0.5 * M * std::log(2.0 * M_PI) - 0.5 * quad;
}

double car_gaussian_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                           const Eigen::VectorXd& phi, double sigma2, const PathwayDesign& design) {
  return car_gaussian_logpdf(factor_car(phi, design), x, mu, sigma2);
}

Eigen::VectorXd phi_logdet_gradient(const CarFactor& f, const PathwayDesign& design) {
  const Eigen::MatrixXd inv = f.llt.solve(Eigen::MatrixXd::Identity(design.M, design.M));
  Eigen::VectorXd grad(design.P());
  for (int p = 0; p < design.P(); ++p) grad[p] = -(inv.cwiseProduct(design.S[p])).sum();
  return grad;
}

Eigen::VectorXd phi_logdet_gradient(const Eigen::VectorXd& phi, const PathwayDesign& design) {
  return phi_logdet_gradient(factor_car(phi, design), design);
}

void write_design_report(const PathwayDesign& design, std::ostream& out) {
  nlohmann::json j;
  j["M"] = design.M;
  j["pathways"] = nlohmann::json::array();
  for (int p = 0; p < design.P(); ++p) {
    nlohmann::json jp;
    jp["id"] = design.ids[p];
    jp["inert"] = static_cast<bool>(design.inert[p]);
    jp["lower"] = design.lower[p];
    jp["upper"] = design.upper[p];
    auto dense = [](const Eigen::MatrixXd& m) {
      nlohmann::json rows = nlohmann::json::array();
      for (int r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
      }
      return rows;
    };
    jp["A"] = dense(design.A[p]);
    jp["G_diagonal"] = std::vector<double>(design.G[p].data(), design.G[p].data() + design.G[p].size());
    jp["S"] = dense(design.S[p]);
    j["pathways"].push_back(std::move(jp));
  }
  out << j.dump(2) << '\n';
}

}  // namespace icarh
