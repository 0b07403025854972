// Command-line dispatch: twelve subcommands covering solvers, negotiation,
// inference, regulatory analyses, the Monte Carlo experiments, and fixture
// regeneration. Standard output carries machine-readable JSON/CSV summaries;
// progress goes to standard error. Exit codes: 0 success, 2 input error,
// 3 numerical failure, 4 I/O error.
#pragma once

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stabnet/core.hpp"
#include "stabnet/dataio.hpp"
#include "stabnet/errors.hpp"
#include "stabnet/firms.hpp"
#include "stabnet/inference.hpp"
#include "stabnet/negotiation.hpp"
#include "stabnet/regulator.hpp"
#include "stabnet/stability.hpp"
#include "stabnet/version.hpp"

namespace stabnet {
namespace cli {

constexpr const char* kOutDirEnv = "STABNET_OUT_DIR";

inline std::string resolve_out(const std::string& path) {
  if (path.empty()) return path;
  if (std::filesystem::path(path).is_absolute()) return path;
  if (const char* dir = std::getenv(kOutDirEnv); dir != nullptr && dir[0] != '\0') {
    return (std::filesystem::path(dir) / path).string();
  }
  return path;
}

inline std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::string cur;
  const auto flush = [&]() {
    const std::string token = detail::trim(cur);
    cur.clear();
    if (token.empty()) return;
    out.push_back(detail::parse_cell(token, 0, out.size()));
  };
  for (char c : text) {
    if (c == ',') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  if (out.empty()) throw InputError(what + ": empty list");
  return out;
}

inline std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (double v : parse_double_list(text, what)) {
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) throw InputError(what + ": expected integers");
    out.push_back(i);
  }
  return out;
}

// Prints the payload to stdout and, when an output path is set, writes the
// result file with the resolved config and library version embedded.
inline void emit_json(const nlohmann::json& payload, const nlohmann::json& config,
                      const std::string& out) {
  std::cout << payload.dump(2) << "\n";
  if (!out.empty()) write_result_json(resolve_out(out), config, payload);
}

inline void emit_csv(const std::string& csv, const nlohmann::json& config,
                     const std::string& out) {
  std::cout << csv;
  if (!out.empty()) write_result_csv(resolve_out(out), config, csv);
}

// --config support: a JSON object whose keys mirror long flag names provides
// defaults; flags given on the command line always win. Booleans inject bare
// flags, arrays inject comma-joined lists.
inline std::vector<std::string> apply_config_defaults(std::vector<std::string> tokens) {
  std::string config_path;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == "--config" && i + 1 < tokens.size()) {
      config_path = tokens[i + 1];
    } else if (tokens[i].rfind("--config=", 0) == 0) {
      config_path = tokens[i].substr(9);
    }
  }
  if (config_path.empty()) return tokens;
  nlohmann::json cfg;
  {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config file: " + config_path);
    try {
      cfg = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("config JSON: ") + e.what(), 0);
    }
  }
  if (!cfg.is_object()) throw ParseError("config file must hold a JSON object", 0);
  const auto given = [&](const std::string& flag) {
    for (const auto& tok : tokens) {
      if (tok == flag || tok.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) tokens.push_back(flag);
    } else if (value.is_string()) {
      tokens.push_back(flag + "=" + value.get<std::string>());
    } else if (value.is_number_integer()) {
      tokens.push_back(flag + "=" + std::to_string(value.get<long long>()));
    } else if (value.is_number()) {
      tokens.push_back(flag + "=" + detail::format_double(value.get<double>()));
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ",";
        if (v.is_string()) {
          joined += v.get<std::string>();
        } else if (v.is_number_integer()) {
          joined += std::to_string(v.get<long long>());
        } else if (v.is_number()) {
          joined += detail::format_double(v.get<double>());
        } else {
          throw ParseError("config key '" + key + "' has an unsupported array element", 0);
        }
      }
      tokens.push_back(flag + "=" + joined);
    } else {
      throw ParseError("config key '" + key + "' has an unsupported value type", 0);
    }
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each returns the process exit code.

inline int run_stable(const std::string& setting_path, double tol, const std::string& out) {
  const NetworkSetting s = load_setting(setting_path);
  const SolveOutcome outcome = solve_stable(s, tol);
  nlohmann::json config{{"command", "stable"}, {"setting", setting_path}, {"tol", tol}};
  emit_json(to_json(outcome), config, out);
  return outcome.status == SolveStatus::NoStablePoint ? 3 : 0;
}

inline int run_negotiate(const std::string& setting_path, double eta, double tol, int max_rounds,
                         const std::string& out) {
  const NetworkSetting s = load_setting(setting_path);
  double used_eta = eta;
  if (eta <= 0.0) {
    const RateCertificate cert = rate_certificate(s);
    if (!std::isfinite(cert.eta_star)) throw NumericalError("negotiate: eta* is not finite");
    used_eta = 0.9 * cert.eta_star;
  }
  const NegotiationTrace trace = run_negotiation(s, PriceMatrix(s.n), used_eta, tol, max_rounds);
  nlohmann::json config{{"command", "negotiate"}, {"setting", setting_path},
                        {"eta", used_eta},       {"eta_given", eta},
                        {"tol", tol},            {"max_rounds", max_rounds}};
  emit_json(to_json(trace), config, out);
  return trace.converged ? 0 : 3;
}

inline int run_eta_star(const std::string& setting_path, const std::string& out) {
  const NetworkSetting s = load_setting(setting_path);
  const RateCertificate cert = rate_certificate(s);
  nlohmann::json config{{"command", "eta-star"}, {"setting", setting_path}};
  emit_json(to_json(cert), config, out);
  return 0;
}

inline int run_infer(const std::string& manifest, const std::string& breakpoints, double nu,
                     double step, int max_iter, double tol, const std::string& out) {
  const NetworkSequence seq = load_snapshots(manifest);
  InferOptions opts;
  opts.step = step;
  opts.max_iter = max_iter;
  opts.tol = tol;
  nlohmann::json config{{"command", "infer"}, {"manifest", manifest}, {"nu", nu},
                        {"step", step},       {"max_iter", max_iter}, {"tol", tol},
                        {"breakpoints", breakpoints}};
  if (breakpoints.empty()) {
    const SigmaEstimate est = infer_sigma(seq, opts);
    emit_json(to_json(est), config, out);
    return est.converged ? 0 : 3;
  }
  const auto estimates =
      infer_sigma_piecewise(seq, parse_int_list(breakpoints, "breakpoints"), nu, opts);
  nlohmann::json segments = nlohmann::json::array();
  bool converged = true;
  for (const auto& est : estimates) {
    segments.push_back(to_json(est));
    converged = converged && est.converged;
  }
  emit_json(nlohmann::json{{"segments", segments}}, config, out);
  return converged ? 0 : 3;
}

inline int run_gradient(const std::string& setting_path, int k, int l, bool with_approx,
                        const std::string& out) {
  const NetworkSetting s = load_setting(setting_path);
  if (!s.shared_sigma()) throw InputError("gradient: setting must have a shared Sigma");
  const SensitivityTensor tensor = network_gradient(s.sigmas[0], k, l);
  nlohmann::json payload = to_json(tensor);
  if (with_approx) {
    payload["approx"] = matrix_values(
        network_gradient_approx(tensor.V, tensor.lambdas(tensor.lambdas.size() - 1), k, l));
  }
  nlohmann::json config{{"command", "gradient"}, {"setting", setting_path}, {"k", k}, {"l", l},
                        {"approx", with_approx}};
  emit_json(payload, config, out);
  return 0;
}

inline int run_source_detect_pair(const std::string& w_path, const std::string& wprime_path,
                                  const std::string& out) {
  const auto [ids_w, wmat] = detail::load_snapshot_csv(w_path);
  const auto [ids_p, pmat] = detail::load_snapshot_csv(wprime_path);
  if (ids_w != ids_p) throw InputError("source-detect: entity ids differ between files");
  const Network w = Network::from_dense(wmat);
  const Network wprime = Network::from_dense(pmat);
  const auto pair = source_detect(w, wprime, full_allowed(w.size()));
  nlohmann::json config{{"command", "source-detect"}, {"w", w_path}, {"wprime", wprime_path}};
  emit_json(nlohmann::json{{"pair", {pair.first, pair.second}}}, config, out);
  return 0;
}

inline int run_source_experiment(int n, double rho, double delta, const std::string& alphas,
                                 const std::string& epss, int trials, std::uint64_t seed,
                                 int workers, const std::string& out) {
  SourceGrid grid;
  grid.alphas = parse_double_list(alphas, "alphas");
  grid.epss = parse_double_list(epss, "epss");
  std::cerr << "source-detect: " << grid.alphas.size() * grid.epss.size() << " cells x " << trials
            << " trials\n";
  const auto table = source_detection_experiment(grid, n, rho, delta, trials, seed, workers);
  nlohmann::json config{{"command", "source-detect"},
                        {"n", n},
                        {"rho", rho},
                        {"delta", delta},
                        {"alphas", grid.alphas},
                        {"epss", grid.epss},
                        {"trials", trials},
                        {"seed", seed},
                        {"workers", workers}};
  emit_csv(to_csv(table), config, out);
  return 0;
}

inline int run_friction(const std::string& setting_path, double lambda, const std::string& out) {
  const NetworkSetting s = load_setting(setting_path);
  const FrictionOutcome outcome = friction_stable_point(s.M, lambda);
  nlohmann::json config{{"command", "friction"}, {"setting", setting_path}, {"lambda", lambda}};
  emit_json(to_json(outcome), config, out);
  return outcome.status == FrictionStatus::Stable ? 0 : 3;
}

inline int run_perturb(const std::string& setting_path, double c, const std::string& sigma_prime,
                       const std::string& out) {
  const NetworkSetting s = load_setting(setting_path);
  nlohmann::json config{{"command", "perturb"}, {"setting", setting_path}};
  if (!sigma_prime.empty()) {
    const auto [ids, mat] = detail::load_snapshot_csv(sigma_prime);
    const double stat = risk_trace_stat(s, mat);
    config["sigma_prime"] = sigma_prime;
    emit_json(nlohmann::json{{"trace_stat", stat}}, config, out);
    return 0;
  }
  config["c"] = c;
  const PerturbResult result = perturb_sigma_scalar(s, c);
  emit_json(to_json(result), config, out);
  return 0;
}

inline MeanNoiseMode parse_noise_mode(const std::string& text) {
  if (text == "shared-rows") return MeanNoiseMode::SharedRows;
  if (text == "per-entry") return MeanNoiseMode::PerEntry;
  if (text == "none") return MeanNoiseMode::None;
  throw InputError("noise-mode must be shared-rows, per-entry, or none");
}

inline int run_outlier(int n, int k, const std::string& sigmas, int trials, std::uint64_t seed,
                       const std::string& noise_mode, int workers, const std::string& out) {
  const auto sigma_list = parse_double_list(sigmas, "sigmas");
  std::cerr << "outlier: " << sigma_list.size() << " sigmas x " << trials << " trials (n=" << n
            << ")\n";
  const auto curve =
      outlier_experiment(n, k, sigma_list, trials, seed, parse_noise_mode(noise_mode), workers);
  nlohmann::json config{{"command", "outlier"}, {"n", n},
                        {"k", k},               {"sigmas", sigma_list},
                        {"trials", trials},     {"seed", seed},
                        {"noise_mode", noise_mode}, {"workers", workers}};
  emit_csv(to_csv(curve), config, out);
  return 0;
}

inline int run_exchange_check(int n, double sigma_noise, const std::string& pi_text, int trials,
                              std::uint64_t seed, const std::string& out) {
  CommunityModel model;
  model.k = 1;
  model.theta.assign(static_cast<std::size_t>(n), 0);
  model.f = MatrixXd::Ones(1, 1);
  model.g = MatrixXd::Ones(1, 1);
  model.h = VectorXd::Ones(1);
  model.sigma_noise = sigma_noise;
  std::vector<int> pi;
  if (pi_text.empty()) {
    for (int i = 0; i < n; ++i) pi.push_back(i);
    if (n >= 2) std::swap(pi[0], pi[1]);
  } else {
    pi = parse_int_list(pi_text, "pi");
  }
  const PermutationReport report = permutation_check(model, pi, trials, seed);
  nlohmann::json payload = to_json(report);
  payload["pass"] = report.max_abs_z < 4.0;
  nlohmann::json config{{"command", "exchange-check"}, {"n", n},
                        {"sigma_noise", sigma_noise},  {"pi", pi},
                        {"trials", trials},            {"seed", seed}};
  emit_json(payload, config, out);
  return 0;
}

inline int run_equiv_means(const std::string& setting_path, const std::string& gamma_prime_text,
                           const std::string& out) {
  const NetworkSetting s = load_setting(setting_path);
  const auto values = parse_double_list(gamma_prime_text, "gamma-prime");
  if (static_cast<int>(values.size()) != s.n) {
    throw InputError("gamma-prime must list one value per agent");
  }
  VectorXd gamma_prime(s.n);
  for (int i = 0; i < s.n; ++i) gamma_prime(i) = values[static_cast<std::size_t>(i)];
  const NetworkSetting dagger = equivalent_means(s, gamma_prime);

  NetworkSetting primed = s;
  primed.gamma = gamma_prime;
  const Network w_prime = solve_stable_shared(primed);
  const Network w_dagger = solve_stable_shared(dagger);
  const double dev = (w_prime.dense() - w_dagger.dense()).norm();
  nlohmann::json payload{{"setting", setting_to_json(dagger)}, {"round_trip_dev", dev}};
  nlohmann::json config{{"command", "equiv-means"},
                        {"setting", setting_path},
                        {"gamma_prime", values}};
  emit_json(payload, config, out);
  return 0;
}

// Regenerates the committed synthetic fixtures (deterministic).
inline int run_fixtures(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "snapshots", ec);

  // Two-firm worked example.
  {
    NetworkSetting s;
    s.n = 2;
    s.M.resize(2, 2);
    s.M << 0.0, 3.0, 1.0, 4.0;
    s.gamma = VectorXd::Ones(2);
    s.sigmas = {(MatrixXd(2, 2) << 1.0, 0.0, 0.0, 2.0).finished()};
    s.allowed = full_allowed(2);
    save_setting(s, (root / "two_firm.json").string());
  }

  // Synthetic returns with recorded ground-truth covariance.
  {
    const int n = 8, periods = 200;
    MatrixXd corr = MatrixXd::Constant(n, n, 0.3);
    corr.diagonal().setOnes();
    VectorXd sd(n);
    for (int i = 0; i < n; ++i) sd(i) = 0.05 + 0.01 * i;
    const MatrixXd sigma = sd.asDiagonal() * corr * sd.asDiagonal();
    Rng rng(11);
    const Eigen::LLT<MatrixXd> llt(sigma);
    const MatrixXd draws = llt.matrixL() * normal_matrix(rng, n, periods);
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("a" + std::to_string(i));
    write_text_file((root / "fixture_returns.csv").string(),
                    to_csv(draws.transpose(), ids));
    write_text_file((root / "fixture_returns_sigma.csv").string(), to_csv(sigma, ids));
  }

  // Snapshot sequence for the inference subcommand.
  {
    const int n = 4, big_t = 6;
    MatrixXd corr = MatrixXd::Constant(n, n, 0.3);
    corr.diagonal().setOnes();
    const NetworkSequence seq = generate_brownian_sequence(corr, big_t, 0.1, 7);
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("a" + std::to_string(i));
    nlohmann::json manifest;
    manifest["snapshots"] = nlohmann::json::array();
    for (int t = 0; t < big_t; ++t) {
      const std::string name = "snapshot_" + std::to_string(t) + ".csv";
      write_text_file((root / "snapshots" / name).string(),
                      to_csv(seq.snapshots[static_cast<std::size_t>(t)].dense(), ids));
      manifest["snapshots"].push_back(name);
    }
    manifest["mask"] = "full";
    write_text_file((root / "snapshots" / "manifest.json").string(), manifest.dump(2) + "\n");
  }
  std::cerr << "fixtures written to " << root.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

inline int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> tokens(argv + 1, argv + argc);
  try {
    tokens = apply_config_defaults(tokens);
  } catch (const IoError& e) {  // ParseError included: malformed files are I/O
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }

  CLI::App app{"stable financial contract networks: solvers and experiments"};
  app.require_subcommand(1);
  int code = 0;

  std::string setting_path, out, config_path;
  double tol = 1e-9;
  auto* stable = app.add_subcommand("stable", "solve a setting file for its stable point");
  stable->add_option("--setting", setting_path, "setting JSON path")->required();
  stable->add_option("--tol", tol, "rank tolerance");
  stable->add_option("--out", out, "result file path");
  stable->add_option("--config", config_path, "JSON config with flag defaults");
  stable->callback([&]() { code = run_stable(setting_path, tol, out); });

  double neg_eta = 0.0, neg_tol = 1e-10;
  int neg_rounds = 10000;
  auto* negotiate = app.add_subcommand("negotiate", "run damped pairwise negotiation");
  negotiate->add_option("--setting", setting_path, "setting JSON path")->required();
  negotiate->add_option("--eta", neg_eta, "dampening (default 0.9 * eta*)");
  negotiate->add_option("--tol", neg_tol, "convergence tolerance");
  negotiate->add_option("--max-rounds", neg_rounds, "round cap");
  negotiate->add_option("--out", out, "result file path");
  negotiate->add_option("--config", config_path, "JSON config with flag defaults");
  negotiate->callback([&]() { code = run_negotiate(setting_path, neg_eta, neg_tol, neg_rounds, out); });

  auto* eta_star = app.add_subcommand("eta-star", "compute the negotiation rate certificate");
  eta_star->add_option("--setting", setting_path, "setting JSON path")->required();
  eta_star->add_option("--out", out, "result file path");
  eta_star->add_option("--config", config_path, "JSON config with flag defaults");
  eta_star->callback([&]() { code = run_eta_star(setting_path, out); });

  std::string manifest, breakpoints;
  double nu = 0.0, infer_step = 0.0, infer_tol = 1e-12;
  int infer_iters = 5000;
  auto* infer = app.add_subcommand("infer", "estimate the covariance from network snapshots");
  infer->add_option("--manifest", manifest, "snapshot manifest JSON")->required();
  infer->add_option("--breakpoints", breakpoints, "comma-separated segment starts (1-based)");
  infer->add_option("--nu", nu, "fusion penalty weight");
  infer->add_option("--step", infer_step, "fixed trial step (default: exact line search)");
  infer->add_option("--max-iter", infer_iters, "iteration cap");
  infer->add_option("--tol", infer_tol, "relative objective decrease tolerance");
  infer->add_option("--out", out, "result file path");
  infer->add_option("--config", config_path, "JSON config with flag defaults");
  infer->callback([&]() {
    code = run_infer(manifest, breakpoints, nu, infer_step, infer_iters, infer_tol, out);
  });

  int grad_k = 0, grad_l = 0;
  bool grad_approx = false;
  auto* gradient = app.add_subcommand("gradient", "sensitivity of W to one mean entry");
  gradient->add_option("--setting", setting_path, "setting JSON path")->required();
  gradient->add_option("--k", grad_k, "target row (0-based)")->required();
  gradient->add_option("--l", grad_l, "target column (0-based)")->required();
  gradient->add_flag("--approx", grad_approx, "include the smallest-eigenpair approximation");
  gradient->add_option("--out", out, "result file path");
  gradient->add_option("--config", config_path, "JSON config with flag defaults");
  gradient->callback([&]() { code = run_gradient(setting_path, grad_k, grad_l, grad_approx, out); });

  std::string sd_w, sd_wprime, sd_alphas = "0,1,2,3,4", sd_epss = "0,1,100,1e6";
  int sd_n = 20, sd_trials = 200, sd_workers = 1;
  double sd_rho = 0.1, sd_delta = 0.1;
  std::uint64_t sd_seed = 42;
  auto* source = app.add_subcommand("source-detect",
                                    "attribute a belief change from two networks, or run the grid");
  source->add_option("--w", sd_w, "baseline network CSV");
  source->add_option("--wprime", sd_wprime, "changed network CSV");
  source->add_option("--n", sd_n, "agents (experiment mode)");
  source->add_option("--rho", sd_rho, "equicorrelation");
  source->add_option("--delta", sd_delta, "bump size");
  source->add_option("--alphas", sd_alphas, "comma-separated alpha grid");
  source->add_option("--epss", sd_epss, "comma-separated eps grid");
  source->add_option("--trials", sd_trials, "trials per cell");
  source->add_option("--seed", sd_seed, "rng seed");
  source->add_option("--workers", sd_workers, "parallel workers");
  source->add_option("--out", out, "result file path");
  source->add_option("--config", config_path, "JSON config with flag defaults");
  source->callback([&]() {
    if (!sd_w.empty() || !sd_wprime.empty()) {
      if (sd_w.empty() || sd_wprime.empty()) {
        throw InputError("source-detect: --w and --wprime must be given together");
      }
      code = run_source_detect_pair(sd_w, sd_wprime, out);
    } else {
      code = run_source_experiment(sd_n, sd_rho, sd_delta, sd_alphas, sd_epss, sd_trials, sd_seed,
                                   sd_workers, out);
    }
  });

  double fr_lambda = 0.0;
  auto* friction = app.add_subcommand("friction", "entrywise stable point under an l1 penalty"
                                                  " (Sigma = I, Gamma = I model)");
  friction->add_option("--setting", setting_path, "setting JSON path (M is used)")->required();
  friction->add_option("--lambda", fr_lambda, "friction level")->required();
  friction->add_option("--out", out, "result file path");
  friction->add_option("--config", config_path, "JSON config with flag defaults");
  friction->callback([&]() { code = run_friction(setting_path, fr_lambda, out); });

  double pt_c = 2.0;
  std::string pt_sigma_prime;
  auto* perturb = app.add_subcommand("perturb", "covariance scaling law / risk trace statistic");
  perturb->add_option("--setting", setting_path, "setting JSON path")->required();
  perturb->add_option("--c", pt_c, "scale factor for Sigma");
  perturb->add_option("--sigma-prime", pt_sigma_prime, "CSV with a dominating covariance");
  perturb->add_option("--out", out, "result file path");
  perturb->add_option("--config", config_path, "JSON config with flag defaults");
  perturb->callback([&]() { code = run_perturb(setting_path, pt_c, pt_sigma_prime, out); });

  int ol_n = 20, ol_k = 2, ol_trials = 500, ol_workers = 1;
  std::string ol_sigmas =
      "0.1,0.12915496650148839,0.16681005372000587,0.21544346900318834,0.27825594022071243,"
      "0.35938136638046259,0.46415888336127786,0.59948425031894089,0.77426368268112697,1";
  std::string ol_mode = "shared-rows";
  std::uint64_t ol_seed = 42;
  auto* outlier = app.add_subcommand("outlier", "outlier-detection success-rate curve");
  outlier->add_option("--n", ol_n, "agents");
  outlier->add_option("--k", ol_k, "communities");
  outlier->add_option("--sigmas", ol_sigmas, "comma-separated noise scales");
  outlier->add_option("--trials", ol_trials, "trials per sigma");
  outlier->add_option("--seed", ol_seed, "rng seed");
  outlier->add_option("--noise-mode", ol_mode, "shared-rows | per-entry | none");
  outlier->add_option("--workers", ol_workers, "parallel workers");
  outlier->add_option("--out", out, "result file path");
  outlier->add_option("--config", config_path, "JSON config with flag defaults");
  outlier->callback([&]() {
    code = run_outlier(ol_n, ol_k, ol_sigmas, ol_trials, ol_seed, ol_mode, ol_workers, out);
  });

  int ex_n = 6, ex_trials = 2000;
  double ex_sigma = 0.25;
  std::string ex_pi;
  std::uint64_t ex_seed = 42;
  auto* exchange = app.add_subcommand("exchange-check", "Monte Carlo exchangeability statistics");
  exchange->add_option("--n", ex_n, "agents (single community)");
  exchange->add_option("--sigma-noise", ex_sigma, "model noise scale");
  exchange->add_option("--pi", ex_pi, "comma-separated permutation (default: swap 0,1)");
  exchange->add_option("--trials", ex_trials, "model draws");
  exchange->add_option("--seed", ex_seed, "rng seed");
  exchange->add_option("--out", out, "result file path");
  exchange->add_option("--config", config_path, "JSON config with flag defaults");
  exchange->callback([&]() {
    code = run_exchange_check(ex_n, ex_sigma, ex_pi, ex_trials, ex_seed, out);
  });

  std::string em_gamma_prime;
  auto* equiv = app.add_subcommand("equiv-means", "risk-aversion / mean non-identifiability map");
  equiv->add_option("--setting", setting_path, "setting JSON path")->required();
  equiv->add_option("--gamma-prime", em_gamma_prime, "comma-separated new risk aversions")
      ->required();
  equiv->add_option("--out", out, "result file path");
  equiv->add_option("--config", config_path, "JSON config with flag defaults");
  equiv->callback([&]() { code = run_equiv_means(setting_path, em_gamma_prime, out); });

  std::string fx_dir = "fixtures";
  auto* fixtures = app.add_subcommand("fixtures", "regenerate the synthetic data fixtures");
  fixtures->add_option("--dir", fx_dir, "output directory");
  fixtures->add_option("--config", config_path, "JSON config with flag defaults");
  fixtures->callback([&]() { code = run_fixtures(fx_dir); });

  std::vector<const char*> cargv;
  cargv.push_back(argc > 0 ? argv[0] : "stabnet");
  for (const auto& tok : tokens) cargv.push_back(tok.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int cli_code = app.exit(e);
    return cli_code == 0 ? 0 : 2;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return code;
}

}  // namespace cli
}  // namespace stabnet
