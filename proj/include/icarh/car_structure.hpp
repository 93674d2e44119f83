#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "icarh/data_model.hpp"

namespace icarh {

// Per-pathway CAR operators and admissible intervals for the
// spatial-dependence parameters phi_p. S_p is the symmetrized operator
// 0.5*(G_p A_p + A_p G_p); the interval (L_p, U_p) divides the reciprocal
// extreme eigenvalues of S_p by P so that any in-bounds phi keeps
// I - sum_p phi_p S_p positive definite.
struct PathwayDesign {
  int M = 0;
  std::vector<std::string> ids;
  std::vector<Eigen::MatrixXd> A;  // inverse shortest-path adjacency
  std::vector<Eigen::VectorXd> G;  // diagonal of reciprocal neighbor counts
  std::vector<Eigen::MatrixXd> S;  // symmetrized operator
  std::vector<double> lower, upper;
  std::vector<bool> inert;

  int P() const { return static_cast<int>(S.size()); }
  void check_phi(const Eigen::VectorXd& phi) const;  // throws on out-of-bounds
};

struct CarFactor {
  Eigen::MatrixXd prec;  // I - C(phi)
  Eigen::LLT<Eigen::MatrixXd> llt;
  double logdet = 0.0;  // log det (I - C)
};

PathwayDesign build_pathway_design(const PathwayGraph& g, int M);

Eigen::MatrixXd car_matrix(const Eigen::VectorXd& phi, const PathwayDesign& design);

// Factor I - C(phi); reused across the N*T observations sharing one phi.
CarFactor factor_car(const Eigen::VectorXd& phi, const PathwayDesign& design);

double car_gaussian_logpdf(const CarFactor& f, const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                           double sigma2);
double car_gaussian_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                           const Eigen::VectorXd& phi, double sigma2, const PathwayDesign& design);

// d/dphi_p log det(I - C(phi)) = -trace((I - C)^{-1} S_p)
Eigen::VectorXd phi_logdet_gradient(const Eigen::VectorXd& phi, const PathwayDesign& design);
Eigen::VectorXd phi_logdet_gradient(const CarFactor& f, const PathwayDesign& design);

void write_design_report(const PathwayDesign& design, std::ostream& out);

}  // namespace icarh
