#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "risklab/csv.hpp"
#include "risklab/factor_model.hpp"
#include "risklab/harness.hpp"
#include "risklab/mog_model.hpp"
#include "risklab/spectral_model.hpp"
#include "risklab/verify.hpp"

namespace {

using namespace risklab;

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitConfigError = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'", 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write output file '" + path + "'");
  out << content;
}

struct CommonFlags {
  std::string config_path;
  std::string out_path;
  std::string in_path;
  std::uint64_t seed_override = 0;
  bool has_seed = false;
  int reps_override = 0;
};

ExperimentConfig load_config(CommonFlags& flags) {
  ExperimentConfig cfg = parse_config(read_file(flags.config_path));
  if (flags.has_seed) cfg.seed = flags.seed_override;
  if (flags.reps_override > 0) cfg.reps = flags.reps_override;
  if (!flags.out_path.empty()) cfg.path = flags.out_path;
  return cfg;
}

void print_banner(const ExperimentConfig& cfg) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "0x%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  std::cout << "seed = " << cfg.seed << "\nconfig_hash = " << hash << "\n";
}

double resolved_alpha(const ExperimentConfig& cfg) {
  if (cfg.alpha > 0.0) return cfg.alpha;
  return static_cast<double>(cfg.m) / static_cast<double>(cfg.n);
}

FactorPopulation factor_population(const ExperimentConfig& cfg) {
  return FactorPopulation::from_column_norms(
      cfg.d, Eigen::Map<const Vector>(cfg.col_norms.data(), cfg.col_norms.size()),
      Eigen::Map<const Vector>(cfg.beta.data(), cfg.beta.size()), cfg.sigma_nu);
}

LimitLaw law_for(const ExperimentConfig& cfg) {
  const double alpha = resolved_alpha(cfg);
  if (cfg.model == "spectral") return concrete_limit_law(cfg.d, cfg.k, alpha, cfg.sigma2);
  if (cfg.model == "factor") return factor_limit_law(factor_population(cfg), alpha);
  throw ConfigError("subcommand 'limit' supports the spectral and factor models", 0);
}

int cmd_limit(CommonFlags& flags) {
  const ExperimentConfig cfg = load_config(flags);
  print_banner(cfg);
  const LimitLaw law = law_for(cfg);
  std::cout << "constant = " << csv_number(law.constant) << "\n";
  for (std::size_t i = 0; i < law.components.size(); ++i)
    std::cout << "weight_" << i << " = " << csv_number(law.components[i].weight)
              << "  dof = " << law.components[i].dof << "\n";
  std::cout << "mean = " << csv_number(law.mean()) << "\n";
  if (!cfg.path.empty()) write_file(cfg.path, law_csv(law, cfg, cfg.seed));
  return kExitOk;
}

int cmd_interaction(CommonFlags& flags) {
  const ExperimentConfig cfg = load_config(flags);
  if (cfg.model != "mog")
    throw ConfigError("subcommand 'interaction' requires model = mog", 0);
  print_banner(cfg);
  const MixtureParams params = MixtureParams::axis_centers(cfg.k, cfg.d, cfg.separation);
  const GatingState gauge = make_gating(params);
  const SignalSpec signal = SignalSpec::block_preset(cfg.k, gauge.r_star);
  InteractionConfig icfg;
  icfg.n_fisher = cfg.n_fisher;
  icfg.n_proj = cfg.n_proj;
  icfg.n_eval = cfg.n_eval;
  icfg.seed = cfg.seed;
  const InteractionResult res = interaction_term_mc(params, signal, icfg);
  std::cout << "r_star = " << res.r_star << "\n";
  std::cout << "interaction = " << csv_number(res.value) << "\n";
  std::cout << "std_error = " << csv_number(res.std_error) << "\n";
  if (!cfg.path.empty()) {
    std::ostringstream csv;
    csv << csv_preamble(cfg, cfg.seed);
    csv << "interaction,std_error,r_star\n";
    csv << csv_number(res.value) << ',' << csv_number(res.std_error) << ',' << res.r_star << "\n";
    write_file(cfg.path, csv.str());
  }
  return kExitOk;
}

TwoStageResult simulate_for(const ExperimentConfig& cfg) {
  const long m = cfg.effective_m();
  if (cfg.model == "spectral") {
    const SpectralPopulation pop = SpectralPopulation::concrete_diagonal(cfg.d, cfg.k);
    return run_two_stage(pop, cfg.sigma2, m, cfg.n, cfg.reps, cfg.seed);
  }
  if (cfg.model == "factor") {
    return run_two_stage(factor_population(cfg), m, cfg.n, cfg.reps, cfg.seed);
  }
  throw ConfigError("subcommand 'simulate' supports the spectral and factor models", 0);
}

int cmd_simulate(CommonFlags& flags) {
  const ExperimentConfig cfg = load_config(flags);
  print_banner(cfg);
  const TwoStageResult result = simulate_for(cfg);
  double mean = 0.0;
  for (double v : result.sample.values) mean += v;
  mean /= std::max<std::size_t>(result.sample.values.size(), 1);
  std::cout << "replications = " << result.sample.values.size()
            << " (failed " << result.sample.failed << ")\n";
  std::cout << "mean_excess_scaled = " << csv_number(mean) << "\n";
  const std::string csv = simulate_csv(result, cfg, cfg.seed);
  if (!cfg.path.empty())
    write_file(cfg.path, csv);
  else
    std::cout << csv;
  return kExitOk;
}

int cmd_compare(CommonFlags& flags) {
  const ExperimentConfig cfg = load_config(flags);
  if (flags.in_path.empty()) throw ConfigError("compare requires --in <empirical csv>", 0);
  print_banner(cfg);
  EmpiricalSample sample;
  sample.model = cfg.model;
  sample.values = read_excess_column(read_file(flags.in_path));
  sample.m = cfg.effective_m();
  sample.n = cfg.n;
  sample.seed = cfg.seed;
  const LimitLaw law = law_for(cfg);
  const ComparisonReport report = compare(sample, law, cfg.law_mc, derive_stream(cfg.seed, 999));
  std::cout << "empirical_mean = " << csv_number(report.empirical_mean) << "\n"
            << "law_mean = " << csv_number(report.law_mean) << "\n"
            << "relative_mean_error = " << csv_number(report.relative_mean_error) << "\n"
            << "ks_distance = " << csv_number(report.ks_distance) << "\n"
            << "quantiles(10/50/90) = " << csv_number(report.q10) << " " << csv_number(report.q50)
            << " " << csv_number(report.q90) << "\n";
  if (!cfg.path.empty()) write_file(cfg.path, comparison_csv(report, cfg, cfg.seed));
  return kExitOk;
}

int cmd_verify(std::uint64_t seed) {
  std::cout << "seed = " << seed << "\n";
  const auto results = run_verification_suite(seed);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
    all = all && r.passed;
  }
  std::cout << (all ? "verification passed" : "verification FAILED") << "\n";
  return all ? kExitOk : kExitVerificationFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage pre-train/fine-tune risk laboratory"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::uint64_t verify_seed = 20240901;

  auto add_common = [&](CLI::App* cmd, bool with_in = false) {
    cmd->add_option("--config", flags.config_path, "config file")->required();
    cmd->add_option("--out", flags.out_path, "output CSV path (overrides [output] path)");
    cmd->add_option("--seed", flags.seed_override, "seed override")
        ->each([&](const std::string&) { flags.has_seed = true; });
    cmd->add_option("--reps", flags.reps_override, "replication-count override");
    if (with_in) cmd->add_option("--in", flags.in_path, "empirical CSV to compare")->required();
  };

  CLI::App* limit = app.add_subcommand("limit", "print the closed-form limit law");
  add_common(limit);
  CLI::App* interaction =
      app.add_subcommand("interaction", "Monte-Carlo interaction term for the mixture model");
  add_common(interaction);
  CLI::App* simulate = app.add_subcommand("simulate", "two-stage excess-risk simulation");
  add_common(simulate);
  CLI::App* compare_cmd = app.add_subcommand("compare", "empirical sample versus limit law");
  add_common(compare_cmd, true);
  CLI::App* verify = app.add_subcommand("verify", "run the invariant and oracle checks");
  verify->add_option("--seed", verify_seed, "seed for the verification suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (limit->parsed()) return cmd_limit(flags);
    if (interaction->parsed()) return cmd_interaction(flags);
    if (simulate->parsed()) return cmd_simulate(flags);
    if (compare_cmd->parsed()) return cmd_compare(flags);
    if (verify->parsed()) return cmd_verify(verify_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerificationFailure;
  }
  return kExitConfigError;
}
