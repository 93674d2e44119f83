#include "icarh/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "icarh/errors.hpp"
#include "icarh/rng.hpp"
#include "nlohmann/json.hpp"

namespace icarh {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDivergenceThreshold = 1000.0;  // energy error treated as divergent
}  // namespace

std::vector<std::string> Posterior::parameter_names() const {
  std::vector<std::string> names;
  for (int j = 0; j < dim(); ++j) names.push_back("param[" + std::to_string(j + 1) + "]");
  return names;
}

int PosteriorDraws::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

Eigen::VectorXd PosteriorDraws::pooled(int column) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n_chains()) * n_draws());
  Eigen::Index at = 0;
  for (const auto& ch : chains) {
    out.segment(at, ch.rows()) = ch.col(column);
    at += ch.rows();
  }
  return out;
}

// One trajectory of leapfrog steps; returns the target value at the end
// point (and leaves z, p at the end point). Exposed for the reversibility
// and energy-scaling checks.
double hmc_leapfrog(const Posterior& target, Eigen::VectorXd& z, Eigen::VectorXd& p,
                    const Eigen::VectorXd& inv_mass, double eps, int steps) {
  Eigen::VectorXd grad(target.dim());
  double value = target.value_and_grad(z, grad);
  for (int s = 0; s < steps; ++s) {
    if (!std::isfinite(value)) return kNegInf;
    p += 0.5 * eps * grad;
    z += eps * inv_mass.cwiseProduct(p);
    value = target.value_and_grad(z, grad);
    p += 0.5 * eps * grad;
  }
  return value;
}

namespace {

struct DualAveraging {
  double mu = 0.0, log_eps = 0.0, log_eps_bar = 0.0, h_bar = 0.0;
  double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  int count = 0;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    log_eps = std::log(eps);
    log_eps_bar = std::log(eps);
    h_bar = 0.0;
    count = 0;
  }
  void update(double accept_prob, double target) {
    ++count;
    const double eta = 1.0 / (count + t0);
    h_bar = (1.0 - eta) * h_bar + eta * (target - accept_prob);
    log_eps = mu - std::sqrt(static_cast<double>(count)) / gamma * h_bar;
    const double w = std::pow(static_cast<double>(count), -kappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
  }
};

// Warmup layout: a short step-size-only opening, expanding variance windows
// for the diagonal mass matrix, and a closing step-size-only buffer.
std::vector<int> mass_window_ends(int warmup) {
  std::vector<int> ends;
  if (warmup < 40) return ends;
  const int init_buf = std::max(1, static_cast<int>(0.15 * warmup));
  const int term_buf = std::max(1, static_cast<int>(0.10 * warmup));
  int start = init_buf;
  int width = 25;
  const int last = warmup - term_buf;
  while (start + width <= last) {
    // final window absorbs the remainder if doubling would overshoot
    if (start + 3 * width > last) {
      ends.push_back(last);
      return ends;
    }
    ends.push_back(start + width);
    start += width;
    width *= 2;
  }
  if (start < last) ends.push_back(last);
  return ends;
}

void self_check_gradient(const Posterior& target, const Eigen::VectorXd& z, Rng& rng) {
  Eigen::VectorXd grad(target.dim());
  const double v0 = target.value_and_grad(z, grad);
  if (!std::isfinite(v0)) throw NumericError("gradient self-check: non-finite density at init");
  const int n_checks = std::min(8, target.dim());
  Eigen::VectorXd scratch(target.dim());
  for (int c = 0; c < n_checks; ++c) {
    const int j = static_cast<int>(rng.uniform_int(target.dim()));
    const double h = 1e-5;
    Eigen::VectorXd zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    const double fd =
        (target.value_and_grad(zp, scratch) - target.value_and_grad(zm, scratch)) / (2.0 * h);
    const double tol = 5e-3 * std::max({1.0, std::fabs(fd), std::fabs(grad[j])});
    if (std::fabs(fd - grad[j]) > tol)
      throw NumericError("gradient self-check failed at coordinate " + std::to_string(j) +
                         ": analytic " + std::to_string(grad[j]) + " vs fd " + std::to_string(fd));
  }
}

struct ChainResult {
  Eigen::MatrixXd draws;
  Eigen::VectorXd logdens;
  ChainStats stats;
};

ChainResult run_chain(const Posterior& target, const SamplerConfig& cfg, int chain_index) {
  const int dim = target.dim();
  Rng rng(cfg.seed, static_cast<uint64_t>(chain_index));
  const int n_keep = cfg.iterations - cfg.warmup;

  // jittered initialization around the target-supplied center
  Eigen::VectorXd z(dim), grad(dim);
  double value = kNegInf;
  const Eigen::VectorXd center = target.init_center();
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (int j = 0; j < dim; ++j) z[j] = center[j] + rng.uniform(-1.0, 1.0);
    value = target.value_and_grad(z, grad);
    if (std::isfinite(value) && grad.allFinite()) break;
    value = kNegInf;
  }
  if (!std::isfinite(value))
    throw NumericError("chain " + std::to_string(chain_index) +
                       ": no finite density found after 100 init jitters");
  if (cfg.gradient_self_check) self_check_gradient(target, z, rng);

  Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(dim);
  double eps = cfg.init_step_size;
  DualAveraging da;
  da.restart(eps);

  const auto window_ends = mass_window_ends(cfg.warmup);
  size_t window_at = 0;
  Eigen::VectorXd acc_sum = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd acc_sq = Eigen::VectorXd::Zero(dim);
  int acc_n = 0;

  ChainResult out;
  out.draws.resize(n_keep, dim);
  out.logdens.resize(n_keep);
  double accept_sum = 0.0;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const bool warming = iter < cfg.warmup;
    const int lo = std::max(1, static_cast<int>(std::ceil(0.8 * cfg.leapfrog_steps)));
    const int hi = std::max(lo, static_cast<int>(std::floor(1.2 * cfg.leapfrog_steps)));
    const int steps = lo + static_cast<int>(rng.uniform_int(hi - lo + 1));

    Eigen::VectorXd p(dim);
    for (int j = 0; j < dim; ++j) p[j] = rng.normal() / std::sqrt(inv_mass[j]);
    const double h0 = -value + 0.5 * p.dot(inv_mass.cwiseProduct(p));

    Eigen::VectorXd z_new = z, p_new = p;
    const double value_new = hmc_leapfrog(target, z_new, p_new, inv_mass, eps, steps);
    double accept_prob = 0.0;
    bool divergent = true;
    if (std::isfinite(value_new)) {
      const double h1 = -value_new + 0.5 * p_new.dot(inv_mass.cwiseProduct(p_new));
      const double delta = h0 - h1;
      divergent = !std::isfinite(delta) || (h1 - h0) > kDivergenceThreshold;
      if (!divergent) accept_prob = std::min(1.0, std::exp(std::min(0.0, delta)));
      if (!divergent && std::log(rng.uniform()) < delta) {
        z = z_new;
        value = value_new;
      }
    }

    if (warming) {
      da.update(accept_prob, cfg.target_accept);
      eps = std::exp(da.log_eps);
      if (window_at < window_ends.size()) {
        acc_sum += z;
        acc_sq += z.cwiseProduct(z);
        ++acc_n;
        if (iter + 1 == window_ends[window_at]) {
          if (acc_n >= 5) {
            const Eigen::VectorXd mean = acc_sum / acc_n;
            Eigen::VectorXd var = acc_sq / acc_n - mean.cwiseProduct(mean);
            const double shrink = static_cast<double>(acc_n) / (acc_n + 5.0);
            var = var * shrink + Eigen::VectorXd::Constant(dim, 1e-3 * (5.0 / (acc_n + 5.0)));
            inv_mass = var.cwiseMax(1e-10);
            da.restart(eps);
          }
          acc_sum.setZero();
          acc_sq.setZero();
          acc_n = 0;
          ++window_at;
        }
      }
      if (iter + 1 == cfg.warmup) eps = std::exp(da.log_eps_bar);
    } else {
      const int k = iter - cfg.warmup;
      out.draws.row(k) = target.constrain(z).transpose();
      out.logdens[k] = value;
      accept_sum += accept_prob;
      if (divergent) ++out.stats.divergences;
    }
  }
  out.stats.mean_accept = n_keep > 0 ? accept_sum / n_keep : 0.0;
  out.stats.step_size = eps;
  return out;
}

}  // namespace

PosteriorDraws run_hmc(const Posterior& target, const SamplerConfig& cfg) {
  if (cfg.warmup > cfg.iterations) throw ValidationError("warmup must not exceed iterations");
  if (cfg.chains < 1) throw ValidationError("need at least one chain");

  std::vector<ChainResult> results(cfg.chains);
  std::vector<std::string> errors(cfg.chains);
  const int n_threads =
      cfg.threads > 0 ? std::min(cfg.threads, cfg.chains) : cfg.chains;
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= cfg.chains) return;
      try {
        results[c] = run_chain(target, cfg, c);
      } catch (const std::exception& e) {
        errors[c] = e.what();
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (int c = 0; c < cfg.chains; ++c)
    if (!errors[c].empty()) throw NumericError("chain " + std::to_string(c) + ": " + errors[c]);

  PosteriorDraws draws;
  draws.names = target.parameter_names();
  for (auto& r : results) {
    draws.chains.push_back(std::move(r.draws));
    draws.logdens.push_back(std::move(r.logdens));
    draws.stats.push_back(r.stats);
  }
  return draws;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double idx = q * (values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(idx));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = idx - lo;
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

namespace {

// split-chain autocovariance at a given lag, centered per sequence
double sequence_autocov(const Eigen::VectorXd& seq, int lag) {
  const int n = static_cast<int>(seq.size());
  const double mean = seq.mean();
  double s = 0.0;
  for (int t = 0; t + lag < n; ++t) s += (seq[t] - mean) * (seq[t + lag] - mean);
  return s / n;
}

}  // namespace

std::vector<ParameterDiagnostics> diagnostics(const PosteriorDraws& draws) {
  std::vector<ParameterDiagnostics> out;
  const int n_chains = draws.n_chains();
  const int n = draws.n_draws();
  if (n_chains == 0 || n == 0) return out;
  const bool rhat_available = n_chains >= 2 && n >= 4;

  for (size_t col = 0; col < draws.names.size(); ++col) {
    ParameterDiagnostics pd;
    pd.name = draws.names[col];
    const Eigen::VectorXd all = draws.pooled(static_cast<int>(col));
    pd.mean = all.mean();
    pd.sd = std::sqrt((all.array() - pd.mean).square().sum() / std::max<int>(1, all.size() - 1));
    std::vector<double> v(all.data(), all.data() + all.size());
    pd.q025 = quantile(v, 0.025);
    pd.q25 = quantile(v, 0.25);
    pd.q50 = quantile(v, 0.5);
    pd.q75 = quantile(v, 0.75);
    pd.q975 = quantile(v, 0.975);

    // split every chain in half
    std::vector<Eigen::VectorXd> splits;
    const int half = n / 2;
    for (const auto& ch : draws.chains) {
      if (half >= 2) {
        splits.push_back(ch.col(col).head(half));
        splits.push_back(ch.col(col).segment(half, half));
      } else {
        splits.push_back(ch.col(col));
      }
    }
    const int m = static_cast<int>(splits.size());
    const int len = static_cast<int>(splits[0].size());

    double grand = 0.0;
    for (const auto& s : splits) grand += s.mean();
    grand /= m;
    double w = 0.0, b = 0.0;
    for (const auto& s : splits) {
      const double mu = s.mean();
      w += (s.array() - mu).square().sum() / std::max(1, len - 1);
      b += (mu - grand) * (mu - grand);
    }
    w /= m;
    b = (m > 1) ? b * len / (m - 1) : 0.0;
    const double var_plus = (len - 1.0) / len * w + b / len;

    if (!rhat_available) {
      pd.rhat = std::numeric_limits<double>::quiet_NaN();
    } else if (w <= 0.0 || var_plus <= 0.0) {
      pd.rhat = 1.0;  // degenerate zero-variance convention
    } else {
      pd.rhat = std::sqrt(var_plus / w);
    }
    pd.flagged = std::isfinite(pd.rhat) && pd.rhat > 1.05;

    // ESS via Geyer initial monotone positive sequence on split chains
    if (var_plus <= 0.0) {
      pd.ess = static_cast<double>(m) * len;
    } else {
      std::vector<double> rho;
      double tau = 1.0;  // rho_0 contribution
      double prev_pair = std::numeric_limits<double>::infinity();
      for (int lag = 1; lag + 1 < len; lag += 2) {
        double acov_a = 0.0, acov_b = 0.0;
        for (const auto& s : splits) {
          acov_a += sequence_autocov(s, lag);
          acov_b += sequence_autocov(s, lag + 1);
        }
        acov_a /= m;
        acov_b /= m;
        const double rho_a = 1.0 - (w - acov_a) / var_plus;
        const double rho_b = 1.0 - (w - acov_b) / var_plus;
        double pair = rho_a + rho_b;
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);  // enforce monotone decrease
        prev_pair = pair;
        tau += 2.0 * pair;
        if (lag > len / 2) break;
      }
      pd.ess = static_cast<double>(m) * len / tau;
    }
    out.push_back(std::move(pd));
  }
  return out;
}

void write_draws_csv(const PosteriorDraws& draws, std::ostream& out) {
  out << "chain,iteration,parameter,value\n";
  char buf[64];
  for (int c = 0; c < draws.n_chains(); ++c)
    for (int it = 0; it < draws.n_draws(); ++it) {
      for (size_t j = 0; j < draws.names.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", draws.chains[c](it, j));
        out << (c + 1) << ',' << (it + 1) << ',' << draws.names[j] << ',' << buf << '\n';
      }
      std::snprintf(buf, sizeof buf, "%.17g", draws.logdens[c][it]);
      out << (c + 1) << ',' << (it + 1) << ",lp__," << buf << '\n';
    }
}

PosteriorDraws read_draws_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty draws file");
  PosteriorDraws draws;
  std::map<std::string, int> name_idx;
  // rows: (chain, iteration, parameter) -> value, collected then densified
  std::vector<std::tuple<int, int, int, double>> cells;  // chain, iter, param(-1 = lp__), value
  int max_chain = 0, max_iter = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // parameter names may contain commas (e.g. "beta[1,2]"): the name is
    // everything between the second comma and the last one
    const size_t c1 = line.find(',');
    const size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    const size_t c3 = line.rfind(',');
    if (c2 == std::string::npos || c3 <= c2)
      throw ValidationError("malformed draws CSV line: " + line);
    const std::string chain_s = line.substr(0, c1);
    const std::string iter_s = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string name = line.substr(c2 + 1, c3 - c2 - 1);
    const std::string value_s = line.substr(c3 + 1);
    const int chain = std::stoi(chain_s);
    const int iter = std::stoi(iter_s);
    const double value = std::stod(value_s);
    int pidx = -1;
    if (name != "lp__") {
      auto it = name_idx.find(name);
      if (it == name_idx.end()) {
        pidx = static_cast<int>(draws.names.size());
        name_idx[name] = pidx;
        draws.names.push_back(name);
      } else {
        pidx = it->second;
      }
    }
    cells.emplace_back(chain, iter, pidx, value);
    max_chain = std::max(max_chain, chain);
    max_iter = std::max(max_iter, iter);
  }
  const int dim = static_cast<int>(draws.names.size());
  draws.chains.assign(max_chain, Eigen::MatrixXd::Zero(max_iter, dim));
  draws.logdens.assign(max_chain, Eigen::VectorXd::Zero(max_iter));
  draws.stats.assign(max_chain, ChainStats{});
  for (const auto& [chain, iter, pidx, value] : cells) {
    if (pidx < 0)
      draws.logdens[chain - 1][iter - 1] = value;
    else
      draws.chains[chain - 1](iter - 1, pidx) = value;
  }
  return draws;
}

void write_summary_json(const PosteriorDraws& draws,
                        const std::vector<ParameterDiagnostics>& diag, std::ostream& out) {
  nlohmann::json j;
  j["n_chains"] = draws.n_chains();
  j["n_draws_per_chain"] = draws.n_draws();
  j["chains"] = nlohmann::json::array();
  for (const auto& s : draws.stats)
    j["chains"].push_back({{"mean_accept", s.mean_accept},
                           {"divergences", s.divergences},
                           {"step_size", s.step_size}});
  j["parameters"] = nlohmann::json::array();
  for (const auto& pd : diag) {
    nlohmann::json p{{"name", pd.name},       {"mean", pd.mean},   {"sd", pd.sd},
                     {"q2.5", pd.q025},       {"q25", pd.q25},     {"q50", pd.q50},
                     {"q75", pd.q75},         {"q97.5", pd.q975},  {"ess", pd.ess},
                     {"rhat_flagged", pd.flagged}};
    if (std::isfinite(pd.rhat))
      p["rhat"] = pd.rhat;
    else
      p["rhat"] = nullptr;  // unavailable with a single chain
    j["parameters"].push_back(std::move(p));
  }
  out << j.dump(2) << '\n';
}

}  // namespace icarh
