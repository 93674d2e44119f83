#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace icarh {

// Log-density target on R^dim. constrain() maps an unconstrained point to
// the reported (named, constrained) coordinates; identity by default.
struct Posterior {
  virtual ~Posterior() = default;
  virtual int dim() const = 0;
  virtual double value_and_grad(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const = 0;
  virtual std::vector<std::string> parameter_names() const;
  virtual Eigen::VectorXd constrain(const Eigen::VectorXd& z) const { return z; }
  virtual Eigen::VectorXd init_center() const { return Eigen::VectorXd::Zero(dim()); }
};

struct SamplerConfig {
  int iterations = 2000;  // total, including warmup
  int warmup = 1000;
  int chains = 4;
  uint64_t seed = 1;
  int leapfrog_steps = 32;     // base trajectory length, jittered +-20%
  double target_accept = 0.8;
  double init_step_size = 0.1;
  int threads = 0;  // 0: one thread per chain
  bool gradient_self_check = true;
};

struct ChainStats {
  double mean_accept = 0.0;
  int divergences = 0;
  double step_size = 0.0;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;   // per chain: draws x dim, constrained
  std::vector<Eigen::VectorXd> logdens;  // per chain: draws
  std::vector<ChainStats> stats;

  int n_chains() const { return static_cast<int>(chains.size()); }
  int n_draws() const { return chains.empty() ? 0 : static_cast<int>(chains[0].rows()); }
  int index_of(const std::string& name) const;  // -1 if absent

  // pooled draws of one parameter, chain-major
  Eigen::VectorXd pooled(int column) const;
};

PosteriorDraws run_hmc(const Posterior& target, const SamplerConfig& cfg);

// One trajectory of leapfrog steps; advances (z, p) in place and returns the
// target value at the end point. Exposed for the reversibility and
// energy-scaling checks.
double hmc_leapfrog(const Posterior& target, Eigen::VectorXd& z, Eigen::VectorXd& p,
                    const Eigen::VectorXd& inv_mass, double eps, int steps);

struct ParameterDiagnostics {
  std::string name;
  double mean = 0.0, sd = 0.0;
  double q025 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q975 = 0.0;
  double rhat = 0.0;  // NaN when unavailable (single chain)
  double ess = 0.0;
  bool flagged = false;  // rhat > 1.05
};

std::vector<ParameterDiagnostics> diagnostics(const PosteriorDraws& draws);

// sorted-draw quantile with linear interpolation (R type 7)
double quantile(std::vector<double> values, double q);

void write_draws_csv(const PosteriorDraws& draws, std::ostream& out);
PosteriorDraws read_draws_csv(std::istream& in);
void write_summary_json(const PosteriorDraws& draws,
                        const std::vector<ParameterDiagnostics>& diag, std::ostream& out);

}  // namespace icarh
