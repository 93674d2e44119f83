#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "icarh/analysis.hpp"
#include "icarh/errors.hpp"
#include "icarh/model_posterior.hpp"
#include "icarh/run_io.hpp"
#include "icarh/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

icarh::SimulationConfig parse_sim_config(const json& j, const std::string& origin) {
  icarh::SimulationConfig cfg;
  const std::set<std::string> known = {"N",    "T",         "M",       "K",
                                       "P",    "tau",       "pi_omega", "rho",
                                       "sigma_phi2", "psi_sim", "membership_density",
                                       "seed", "corruption_fraction"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw icarh::ValidationError(origin + ": unknown config field '" + it.key() + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("N", cfg.N);
  get("T", cfg.T);
  get("M", cfg.M);
  get("K", cfg.K);
  get("P", cfg.P);
  get("tau", cfg.tau);
  get("pi_omega", cfg.pi_omega);
  get("rho", cfg.rho);
  get("sigma_phi2", cfg.sigma_phi2);
  get("psi_sim", cfg.psi_sim);
  get("seed", cfg.seed);
  get("corruption_fraction", cfg.corruption_fraction);
  if (j.contains("membership_density")) {
    cfg.membership_density.clear();
    for (auto it = j["membership_density"].begin(); it != j["membership_density"].end(); ++it)
      cfg.membership_density[std::stoi(it.key())] = it.value().get<double>();
  }
  cfg.validate();
  return cfg;
}

json sim_config_json(const icarh::SimulationConfig& cfg) {
  json jd;
  for (const auto& [count, prob] : cfg.membership_density)
    jd[std::to_string(count)] = prob;
  return json{{"N", cfg.N},
              {"T", cfg.T},
              {"M", cfg.M},
              {"K", cfg.K},
              {"P", cfg.P},
              {"tau", cfg.tau},
              {"pi_omega", cfg.pi_omega},
              {"rho", cfg.rho},
              {"sigma_phi2", cfg.sigma_phi2},
              {"psi_sim", cfg.psi_sim},
              {"membership_density", jd},
              {"seed", cfg.seed},
              {"corruption_fraction", cfg.corruption_fraction}};
}

void prepare_out_dir(const std::string& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw icarh::ValidationError("output directory '" + dir +
                                 "' exists and is not empty (use --force to overwrite)");
  fs::create_directories(dir);
}

int run_simulate(const std::string& config_path, const std::string& out_dir, int replicates,
                 bool force, std::optional<uint64_t> seed_override) {
  icarh::SimulationConfig cfg = parse_sim_config(icarh::read_json_file(config_path), config_path);
  if (seed_override) cfg.seed = *seed_override;
  prepare_out_dir(out_dir, force);

  for (int rep = 0; rep < replicates; ++rep) {
    const std::string dir =
        replicates == 1 ? out_dir : (fs::path(out_dir) / ("rep" + std::to_string(rep + 1))).string();
    fs::create_directories(dir);
    icarh::ManifestBuilder manifest("simulate", cfg.seed);
    manifest.set_config(sim_config_json(cfg));

    icarh::Rng rng(cfg.seed, static_cast<uint64_t>(rep));
    icarh::PathwayGraph graph = icarh::simulate_membership(cfg.M, cfg.P, cfg.membership_density, rng);
    icarh::PathwayDesign design = icarh::build_pathway_design(graph, cfg.M);
    Eigen::VectorXd phi_controls, phi_cases;
    std::vector<bool> omega;
    icarh::simulate_phi(design, cfg, rng, phi_controls, phi_cases, omega);
    icarh::GroundTruth truth;
    icarh::Dataset data = icarh::simulate_dataset(design, phi_controls, phi_cases, cfg, rng, &truth);
    truth.omega = omega;

    const std::string data_path = (fs::path(dir) / "data.csv").string();
    const std::string pathway_path = (fs::path(dir) / "pathways.json").string();
    const std::string truth_path = (fs::path(dir) / "truth.json").string();
    icarh::write_dataset_file(data, data_path);
    if (cfg.corruption_fraction > 0.0) {
      const icarh::PathwayGraph corrupted =
          icarh::corrupt_design(graph, cfg.corruption_fraction, rng);
      icarh::write_pathways_file(corrupted, data, pathway_path);
      const std::string true_path = (fs::path(dir) / "pathways_true.json").string();
      icarh::write_pathways_file(graph, data, true_path);
      manifest.add_output("pathways_true", true_path);
    } else {
      icarh::write_pathways_file(graph, data, pathway_path);
    }
    {
      std::ofstream out(truth_path);
      std::vector<std::string> ids;
      for (const auto& p : graph.pathways) ids.push_back(p.id);
      icarh::write_truth_json(truth, ids, out);
    }
    manifest.add_output("data", data_path);
    manifest.add_output("pathways", pathway_path);
    manifest.add_output("truth", truth_path);
    manifest.write((fs::path(dir) / "manifest.json").string());
  }
  return 0;
}

struct FitOptions {
  std::string data_path, pathways_path, out_dir;
  double tau = 1.2;
  int iterations = 2000;
  int warmup = 1000;
  int chains = 4;
  uint64_t seed = 1;
  bool two_group = false;
  std::string treatment_covariate;
  std::string phi_prior = "beta";
  bool no_standardize = false;
  int leapfrog = 32;
  int threads = 0;
  bool force = false;
};

int env_threads() {
  const char* env = std::getenv("ICARH_THREADS");
  return env ? std::atoi(env) : 0;
}

int run_fit(const FitOptions& opt) {
  prepare_out_dir(opt.out_dir, opt.force);
  icarh::Dataset raw = icarh::load_dataset_file(opt.data_path);
  icarh::ScalingReport scaling;
  icarh::Dataset data = opt.no_standardize ? raw : icarh::standardize(raw, &scaling);
  icarh::PathwayGraph graph = icarh::load_pathways_file(opt.pathways_path, data);
  if (graph.dropped_members > 0)
    std::cerr << "warning: dropped " << graph.dropped_members
              << " pathway members not present in the dataset\n";
  icarh::PathwayDesign design = icarh::build_pathway_design(graph, data.M);

  icarh::ModelConfig mc;
  mc.tau = opt.tau;
  mc.two_group = opt.two_group;
  if (!opt.treatment_covariate.empty()) mc.treatment_covariate = opt.treatment_covariate;
  if (opt.phi_prior == "beta")
    mc.phi_prior = icarh::PhiPrior::Beta;
  else if (opt.phi_prior == "uniform")
    mc.phi_prior = icarh::PhiPrior::Uniform;
  else
    throw icarh::ValidationError("--phi-prior must be 'beta' or 'uniform'");
  icarh::Model model(data, design, mc);

  icarh::SamplerConfig sc;
  sc.iterations = opt.iterations;
  sc.warmup = opt.warmup;
  sc.chains = opt.chains;
  sc.seed = opt.seed;
  sc.leapfrog_steps = opt.leapfrog;
  sc.threads = opt.threads > 0 ? opt.threads : env_threads();

  icarh::ManifestBuilder manifest("fit", opt.seed);
  json config{{"tau", mc.tau},
              {"psi", model.psi()},
              {"iterations", sc.iterations},
              {"warmup", sc.warmup},
              {"chains", sc.chains},
              {"seed", sc.seed},
              {"leapfrog_steps", sc.leapfrog_steps},
              {"two_group", mc.two_group},
              {"treatment_covariate", opt.treatment_covariate},
              {"phi_prior", opt.phi_prior},
              {"standardize", !opt.no_standardize},
              {"kappa_density_normalized", true},
              {"beta_penalty_inverse_variance", true}};
  manifest.set_config(config);
  manifest.add_input("data", opt.data_path);
  manifest.add_input("pathways", opt.pathways_path);

  icarh::ModelPosterior target(model);
  icarh::PosteriorDraws draws = icarh::run_hmc(target, sc);
  const auto diag = icarh::diagnostics(draws);

  const std::string draws_path = (fs::path(opt.out_dir) / "draws.csv").string();
  {
    std::ofstream out(draws_path);
    icarh::write_draws_csv(draws, out);
  }
  const std::string summary_path = (fs::path(opt.out_dir) / "summary.json").string();
  {
    std::ofstream out(summary_path);
    icarh::write_summary_json(draws, diag, out);
  }
  // model_config.json lets diagnose/perturbation rebuild the model
  json mcj = config;
  mcj["data_path"] = fs::absolute(opt.data_path).string();
  mcj["pathways_path"] = fs::absolute(opt.pathways_path).string();
  mcj["N"] = data.N;
  mcj["T"] = data.T;
  mcj["M"] = data.M;
  mcj["K"] = data.K;
  mcj["P"] = design.P();
  {
    json ids = json::array();
    for (const auto& p : graph.pathways) ids.push_back(p.id);
    mcj["pathway_ids"] = ids;
  }
  if (!opt.no_standardize)
    mcj["scaling"] = {{"variable", scaling.variable}, {"mean", scaling.mean}, {"sd", scaling.sd}};
  const std::string mc_path = (fs::path(opt.out_dir) / "model_config.json").string();
  icarh::write_json_file(mcj, mc_path);

  // convergence warnings belong in the summary output, not the exit code
  int flagged = 0;
  for (const auto& pd : diag) flagged += pd.flagged;
  if (flagged > 0)
    std::cerr << "warning: " << flagged << " parameters with split R-hat > 1.05\n";
  for (int c = 0; c < draws.n_chains(); ++c) {
    const double rate =
        draws.n_draws() > 0 ? static_cast<double>(draws.stats[c].divergences) / draws.n_draws() : 0.0;
    if (rate > 0.2)
      std::cerr << "warning: chain " << (c + 1) << " divergence rate "
                << rate * 100.0 << "% exceeds 20%\n";
  }

  manifest.add_output("draws", draws_path);
  manifest.add_output("summary", summary_path);
  manifest.add_output("model_config", mc_path);
  manifest.write((fs::path(opt.out_dir) / "manifest.json").string());
  return 0;
}

// Rebuild (data, design, model) from a fit directory's model_config.json.
struct FitContext {
  icarh::Dataset data;
  icarh::PathwayGraph graph;
  icarh::PathwayDesign design;
  icarh::ModelConfig mc;
  std::unique_ptr<icarh::Model> model;
  icarh::PosteriorDraws draws;
  std::vector<std::string> pathway_ids;
  uint64_t seed = 0;
};

FitContext load_fit(const std::string& fit_dir) {
  const std::string mc_path = (fs::path(fit_dir) / "model_config.json").string();
  if (!fs::exists(mc_path))
    throw icarh::ValidationError("fit directory '" + fit_dir + "' lacks model_config.json");
  const json mcj = icarh::read_json_file(mc_path);
  FitContext ctx;
  icarh::Dataset raw = icarh::load_dataset_file(mcj["data_path"].get<std::string>());
  ctx.data = mcj["standardize"].get<bool>() ? icarh::standardize(raw) : raw;
  ctx.graph = icarh::load_pathways_file(mcj["pathways_path"].get<std::string>(), ctx.data);
  ctx.design = icarh::build_pathway_design(ctx.graph, ctx.data.M);
  ctx.mc.tau = mcj["tau"].get<double>();
  ctx.mc.two_group = mcj["two_group"].get<bool>();
  const std::string drug = mcj["treatment_covariate"].get<std::string>();
  if (!drug.empty()) ctx.mc.treatment_covariate = drug;
  ctx.mc.phi_prior =
      mcj["phi_prior"].get<std::string>() == "uniform" ? icarh::PhiPrior::Uniform : icarh::PhiPrior::Beta;
  ctx.model = std::make_unique<icarh::Model>(ctx.data, ctx.design, ctx.mc);
  ctx.pathway_ids = mcj["pathway_ids"].get<std::vector<std::string>>();
  ctx.seed = mcj["seed"].get<uint64_t>();

  const std::string draws_path = (fs::path(fit_dir) / "draws.csv").string();
  if (!fs::exists(draws_path))
    throw icarh::ValidationError("fit directory '" + fit_dir +
                                 "' lacks draws.csv (run `icarh fit` first)");
  std::ifstream in(draws_path);
  ctx.draws = icarh::read_draws_csv(in);
  return ctx;
}

int run_diagnose(const std::string& fit_dir, std::string out_dir, int thin,
                 std::vector<int> ppc_counts, int ppc_reps, uint64_t seed) {
  if (out_dir.empty()) out_dir = fit_dir;
  fs::create_directories(out_dir);
  FitContext ctx = load_fit(fit_dir);
  icarh::ManifestBuilder manifest("diagnose", seed);
  manifest.set_config({{"thin", thin}, {"ppc_replicates", ppc_reps}});

  const icarh::WaicResult w = icarh::waic(ctx.draws, *ctx.model, thin);
  json jw{{"waic", w.waic},
          {"lppd", w.lppd},
          {"p_waic", w.p_waic},
          {"pointwise_lppd", w.pointwise_lppd},
          {"pointwise_p_waic", w.pointwise_p_waic}};
  const std::string waic_path = (fs::path(out_dir) / "waic.json").string();
  icarh::write_json_file(jw, waic_path);
  manifest.add_output("waic", waic_path);

  if (ppc_counts.empty()) {
    // five evenly spaced counts up to M
    for (int s = 1; s <= 5; ++s) {
      const int c = std::max(2, ctx.data.M * s / 5);
      if (ppc_counts.empty() || ppc_counts.back() != c) ppc_counts.push_back(c);
    }
  }
  const icarh::PpcMadResult ppc =
      icarh::ppc_mad(ctx.draws, *ctx.model, ppc_counts, ppc_reps, seed);
  json jp{{"metabolite_counts", ppc.metabolite_counts},
          {"mad", ppc.mad},
          {"replicates", ppc.replicates},
          {"replicate_axis", "pooled N*T rows as exchangeable covariance replicates"}};
  const std::string ppc_path = (fs::path(out_dir) / "ppc_mad.json").string();
  icarh::write_json_file(jp, ppc_path);
  manifest.add_output("ppc_mad", ppc_path);

  const icarh::WhitenedResiduals res = icarh::whitened_residuals(ctx.draws, *ctx.model);
  json jr = json::array();
  for (size_t e = 0; e < res.group_label.size(); ++e) {
    const auto& r = res.residuals[e];
    double mean = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : r) mean += v;
    mean /= r.size();
    for (double v : r) {
      const double c = v - mean;
      m2 += c * c;
      m3 += c * c * c;
      m4 += c * c * c * c;
    }
    m2 /= r.size();
    m3 /= r.size();
    m4 /= r.size();
    jr.push_back({{"group", res.group_label[e]},
                  {"n", r.size()},
                  {"mean", mean},
                  {"sd", std::sqrt(m2)},
                  {"skewness", m3 / std::pow(m2, 1.5)},
                  {"excess_kurtosis", m4 / (m2 * m2) - 3.0}});
    const std::string qq_path =
        (fs::path(out_dir) / ("residual_qq_" + res.group_label[e] + ".csv")).string();
    std::ofstream out(qq_path);
    out << "theoretical,empirical\n";
    for (const auto& [th, emp] : res.qq[e]) out << th << ',' << emp << '\n';
    manifest.add_output("residual_qq_" + res.group_label[e], qq_path);
  }
  const std::string res_path = (fs::path(out_dir) / "residuals.json").string();
  icarh::write_json_file(jr, res_path);
  manifest.add_output("residuals", res_path);

  const auto effects = icarh::beta_summary(ctx.draws, *ctx.model);
  json jb = json::array();
  for (const auto& eff : effects)
    jb.push_back({{"m", eff.m},
                  {"k", eff.k},
                  {"mean", eff.mean},
                  {"ci_lower", eff.ci_lower},
                  {"ci_upper", eff.ci_upper},
                  {"selected", eff.selected},
                  {"kappa_mean", eff.kappa_mean},
                  {"kappa_q50", eff.kappa_q50}});
  const std::string beta_path = (fs::path(out_dir) / "beta_summary.json").string();
  icarh::write_json_file(jb, beta_path);
  manifest.add_output("beta_summary", beta_path);

  manifest.write((fs::path(out_dir) / "diagnose_manifest.json").string());
  return 0;
}

int run_perturbation(const std::string& fit_dir, const std::string& truth_path, double level,
                     std::string out_dir) {
  if (out_dir.empty()) out_dir = fit_dir;
  fs::create_directories(out_dir);
  FitContext ctx = load_fit(fit_dir);
  icarh::ManifestBuilder manifest("perturbation", ctx.seed);
  manifest.set_config({{"level", level}});

  icarh::PerturbationReport report =
      icarh::phi_difference_test(ctx.draws, ctx.pathway_ids, level);
  if (!truth_path.empty()) {
    std::ifstream in(truth_path);
    if (!in) throw icarh::IoError("cannot open truth file: " + truth_path);
    const std::vector<bool> omega = icarh::read_truth_flags(in);
    if (omega.size() != report.pathways.size())
      throw icarh::ValidationError("truth flags and pathway count differ");
    std::vector<double> scores;
    std::vector<bool> truth;
    for (size_t p = 0; p < omega.size(); ++p) {
      report.pathways[p].truth = omega[p];
      scores.push_back(report.pathways[p].score);
      truth.push_back(omega[p]);
    }
    auto [roc, auc] = icarh::roc_auc(scores, truth);
    report.roc = roc;
    report.auc = auc;
    const std::string roc_path = (fs::path(out_dir) / "roc.csv").string();
    std::ofstream out(roc_path);
    out << "fpr,tpr\n";
    for (const auto& [fpr, tpr] : roc) out << fpr << ',' << tpr << '\n';
    manifest.add_output("roc", roc_path);
  }
  json jp = json::array();
  for (const auto& pw : report.pathways) {
    json e{{"id", pw.id},          {"mean", pw.mean},   {"ci_lower", pw.ci_lower},
           {"ci_upper", pw.ci_upper}, {"score", pw.score}, {"perturbed", pw.perturbed}};
    if (pw.truth) e["truth"] = *pw.truth;
    jp.push_back(std::move(e));
  }
  json j{{"level", report.level}, {"statistic", "phi_controls - phi_cases"}, {"pathways", jp}};
  if (report.auc) j["auc"] = *report.auc;
  const std::string report_path = (fs::path(out_dir) / "perturbation.json").string();
  icarh::write_json_file(j, report_path);
  manifest.add_output("perturbation", report_path);
  manifest.write((fs::path(out_dir) / "perturbation_manifest.json").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iCARH: pathway-structured Bayesian analysis of time-course omics data"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "generate synthetic datasets");
  std::string sim_config, sim_out;
  int replicates = 1;
  bool sim_force = false;
  std::optional<uint64_t> sim_seed;
  sim->add_option("--config", sim_config, "simulation config JSON")->required();
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--replicates", replicates, "number of replicate datasets");
  sim->add_option("--seed", sim_seed, "override config seed");
  sim->add_flag("--force", sim_force, "overwrite non-empty output directory");

  auto* fit = app.add_subcommand("fit", "fit the model with HMC");
  FitOptions fo;
  fit->add_option("--data", fo.data_path, "long-format data CSV")->required();
  fit->add_option("--pathways", fo.pathways_path, "pathway JSON")->required();
  fit->add_option("--out", fo.out_dir, "output directory")->required();
  fit->add_option("--tau", fo.tau, "global sparsity (Student-t df)");
  fit->add_option("--iter", fo.iterations, "total HMC iterations (including warmup)");
  fit->add_option("--warmup", fo.warmup, "warmup iterations");
  fit->add_option("--chains", fo.chains, "number of chains");
  fit->add_option("--seed", fo.seed, "RNG seed");
  fit->add_flag("--two-group", fo.two_group, "group-specific phi (cases vs controls)");
  fit->add_option("--treatment-covariate", fo.treatment_covariate,
                  "covariate name used as drug profile (alpha_m = beta_alpha_m * y_drug)");
  fit->add_option("--phi-prior", fo.phi_prior, "phi prior: beta|uniform");
  fit->add_flag("--no-standardize", fo.no_standardize, "skip centering/scaling");
  fit->add_option("--leapfrog", fo.leapfrog, "base leapfrog steps per trajectory");
  fit->add_option("--threads", fo.threads, "max parallel chains (env ICARH_THREADS)");
  fit->add_flag("--force", fo.force, "overwrite non-empty output directory");

  auto* diag = app.add_subcommand("diagnose", "WAIC, PPC and residual checks for a fit");
  std::string diag_fit, diag_out;
  int diag_thin = 1, ppc_reps = 50;
  uint64_t diag_seed = 1;
  std::vector<int> ppc_counts;
  diag->add_option("--fit", diag_fit, "fit directory")->required();
  diag->add_option("--out", diag_out, "output directory (default: fit dir)");
  diag->add_option("--thin", diag_thin, "thinning for WAIC log-likelihood table");
  diag->add_option("--ppc-counts", ppc_counts, "metabolite counts for PPC MAD")->delimiter(',');
  diag->add_option("--ppc-reps", ppc_reps, "posterior-predictive replicates");
  diag->add_option("--seed", diag_seed, "RNG seed for replicates");

  auto* pert = app.add_subcommand("perturbation", "pathway perturbation report");
  std::string pert_fit, pert_truth, pert_out;
  double pert_level = 0.95;
  pert->add_option("--fit", pert_fit, "fit directory")->required();
  pert->add_option("--truth", pert_truth, "truth.json with omega flags (enables ROC/AUC)");
  pert->add_option("--level", pert_level, "credible level");
  pert->add_option("--out", pert_out, "output directory (default: fit dir)");

  auto* cal = app.add_subcommand("calibrate-tau", "choose tau from a target shrinkage level");
  double cal_target = 0.5, cal_sigma = 1.0;
  cal->add_option("--target", cal_target, "expected shrinkage proportion in (0,1)")->required();
  cal->add_option("--sigma-beta", cal_sigma, "global shrinkage scale");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(sim_config, sim_out, replicates, sim_force, sim_seed);
    if (fit->parsed()) return run_fit(fo);
    if (diag->parsed())
      return run_diagnose(diag_fit, diag_out, diag_thin, ppc_counts, ppc_reps, diag_seed);
    if (pert->parsed()) return run_perturbation(pert_fit, pert_truth, pert_level, pert_out);
    if (cal->parsed()) {
      std::printf("%.10g\n", icarh::calibrate_tau(cal_target, cal_sigma));
      return 0;
    }
  } catch (const icarh::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const icarh::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const icarh::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
