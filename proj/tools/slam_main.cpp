// slam: joint estimation of binary loading structures and latent attribute
// profiles for structured latent attribute models, with simulation,
// two-stage multi-parameter estimation, evaluation, and replication runs.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <tuple>

#include <json.hpp>

#include "slam/datagen.hpp"
#include "slam/evaluate.hpp"
#include "slam/fit.hpp"
#include "slam/io.hpp"
#include "slam/parallel.hpp"
#include "slam/rng.hpp"
#include "slam/stage_two.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNoConvergence = 4;

int resolve_threads(int threads) {
  return threads <= 0 ? hardware_threads() : threads;
}

std::string out_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir.empty() ? "." : dir);
  return (fs::path(dir.empty() ? "." : dir) / name).string();
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << j.dump(2) << '\n';
}

// Config-file support: a flat JSON object whose keys are the long option
// names (dashes or underscores both accepted); command-line flags override.
json load_config(int argc, char** argv) {
  std::string path;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc)
      path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0)
      path = arg.substr(9);
  }
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  return j;
}

const json* cfg_find(const json& cfg, const std::string& key) {
  if (cfg.contains(key)) return &cfg.at(key);
  std::string alt = key;
  for (char& c : alt) c = c == '-' ? '_' : c;
  if (cfg.contains(alt)) return &cfg.at(alt);
  return nullptr;
}

template <typename T>
void get_config(const json& cfg, const std::string& key, T& value) {
  if (const json* found = cfg_find(cfg, key)) {
    try {
      value = found->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

SimModel parse_model(const std::string& s) {
  if (s == "dina") return SimModel::Dina;
  if (s == "dino") return SimModel::Dino;
  if (s == "gdina-weak") return SimModel::MultiWeak;
  if (s == "gdina-strong") return SimModel::MultiStrong;
  throw ConfigError("unknown model '" + s +
                    "' (expected dina|dino|gdina-weak|gdina-strong)");
}

QDesign parse_design(const std::string& s) {
  if (s == "blocks") return QDesign::Blocks;
  if (s == "example3") return QDesign::Example3;
  if (s == "single") return QDesign::SingleAttr;
  throw ConfigError("unknown design '" + s + "' (expected blocks|example3|single)");
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "adg-em") return Algorithm::AdgEm;
  if (s == "adg-saem") return Algorithm::AdgSaem;
  throw ConfigError("unknown algorithm '" + s + "' (expected adg-em|adg-saem)");
}

struct InitSpec {
  InitKind kind = InitKind::Random;
  bool cluster = false;
  double rate = 1.0 / 3.0;
  std::string warm_q, warm_a;
};

InitSpec parse_init(const std::string& s) {
  InitSpec spec;
  if (s == "random") return spec;
  if (s == "cluster") {
    spec.kind = InitKind::Warm;
    spec.cluster = true;
    return spec;
  }
  if (s.rfind("perturb:", 0) == 0) {
    spec.kind = InitKind::Perturb;
    try {
      spec.rate = std::stod(s.substr(8));
    } catch (...) {
      throw ConfigError("bad perturb rate in --init '" + s + "'");
    }
    return spec;
  }
  if (s.rfind("warm:", 0) == 0) {
    spec.kind = InitKind::Warm;
    std::string rest = s.substr(5);
    auto comma = rest.find(',');
    if (comma == std::string::npos)
      throw ConfigError("--init warm needs 'warm:QPATH,APATH'");
    spec.warm_q = rest.substr(0, comma);
    spec.warm_a = rest.substr(comma + 1);
    return spec;
  }
  throw ConfigError("unknown --init '" + s +
                    "' (expected cluster|random|perturb:RATE|warm:QPATH,APATH)");
}

void warn_anchor_pattern(
    const std::vector<std::pair<int, std::vector<std::uint8_t>>>& anchors, int k) {
  std::vector<int> covered(k, 0);
  bool zero_row = false;
  for (const auto& [row, values] : anchors) {
    int sum = 0;
    for (int c = 0; c < k; ++c) {
      covered[c] += values[c];
      sum += values[c];
    }
    zero_row = zero_row || sum == 0;
  }
  bool full = true;
  for (int c = 0; c < k; ++c) full = full && covered[c] > 0;
  if (zero_row) std::cerr << "warning: anchor set contains an all-zero row\n";
  if (!full)
    std::cerr << "warning: anchor rows do not cover every attribute; column "
                 "interpretations are only partially pinned\n";
}

// ---------------------------------------------------------------------------

struct CommonOpts {
  std::uint64_t seed = 1;
  int threads = 0;
  std::string output = ".";
};

struct SimulateOpts {
  int n = 1000, j = 1000, k = 7;
  std::string model = "dina", design = "blocks";
  double noise = 0.2, theta_lo = 0.2, theta_hi = 0.8, missing_rate = 0.0;
};

struct FitOpts {
  std::string responses;
  int k = 0;
  std::string algorithm = "adg-em";
  int gibbs_samples = 5;
  int max_iter = 100;
  int stable_iters = 3;
  double theta_tol = 1e-4;
  int max_restarts = 4;
  int multi_start = 1;
  std::string init = "cluster";
  std::string truth_q, truth_a;
  std::string anchors;
};

struct Stage2Opts {
  std::string responses;
  std::string q_hat = "Q_hat.csv";
  std::string a_hat = "A_hat.csv";
  std::string theta = "theta.csv";
  std::string screen = "main";
  double tau = std::numeric_limits<double>::quiet_NaN();
  int max_active = 4;
  int max_order = 3;
  int folds = 5;
  int grid_size = 30;
};

struct EvaluateOpts {
  std::string q_hat, a_hat, q_true, a_true;
  std::string theta;
  std::string bic_json;
};

struct ReplicateOpts {
  int replications = 20;
  bool stage2 = false;
};

SimConfig to_sim_config(const SimulateOpts& o, std::uint64_t seed) {
  SimConfig cfg;
  cfg.n = o.n;
  cfg.j = o.j;
  cfg.k = o.k;
  cfg.model = parse_model(o.model);
  cfg.design = parse_design(o.design);
  cfg.noise = o.noise;
  cfg.theta_lo = o.theta_lo;
  cfg.theta_hi = o.theta_hi;
  cfg.missing_rate = o.missing_rate;
  cfg.seed = seed;
  return cfg;
}

FitConfig to_fit_config(const FitOpts& o, const CommonOpts& common) {
  FitConfig cfg;
  cfg.algorithm = parse_algorithm(o.algorithm);
  cfg.gibbs_samples = o.gibbs_samples;
  cfg.max_iter = o.max_iter;
  cfg.stable_iters = o.stable_iters;
  cfg.theta_tol = o.theta_tol;
  cfg.max_restarts = o.max_restarts;
  cfg.multi_start = o.multi_start;
  cfg.seed = common.seed;
  cfg.threads = resolve_threads(common.threads);
  return cfg;
}

Stage2Config to_stage2_config(const Stage2Opts& o, std::uint64_t seed,
                              int threads) {
  Stage2Config cfg;
  if (o.screen == "main") {
    cfg.mode = ScreenMode::MainEffect;
    cfg.gap_rule = std::isnan(o.tau);
    cfg.tau = o.tau;
  } else if (o.screen == "all-effects") {
    cfg.mode = ScreenMode::AllEffects;
    if (std::isnan(o.tau)) throw ConfigError("--screen all-effects requires --tau");
    cfg.tau = o.tau;
  } else {
    throw ConfigError("unknown --screen '" + o.screen +
                      "' (expected main|all-effects)");
  }
  cfg.max_active = o.max_active;
  cfg.max_order = o.max_order;
  cfg.folds = o.folds;
  cfg.grid_size = o.grid_size;
  cfg.seed = seed;
  cfg.threads = threads;
  return cfg;
}

// ---------------------------------------------------------------------------

json sim_config_echo(const SimulateOpts& o, const CommonOpts& common) {
  return json{{"n", o.n},
              {"j", o.j},
              {"k", o.k},
              {"model", o.model},
              {"design", o.design},
              {"noise", o.noise},
              {"theta_lo", o.theta_lo},
              {"theta_hi", o.theta_hi},
              {"missing_rate", o.missing_rate},
              {"seed", common.seed}};
}

int cmd_simulate(const SimulateOpts& o, const CommonOpts& common) {
  SimData data = simulate(to_sim_config(o, common.seed));
  write_response_csv(out_path(common.output, "R.csv"), data.r);
  write_bit_csv(out_path(common.output, "Q_true.csv"), data.q);
  write_bit_csv(out_path(common.output, "A_true.csv"), data.a);
  write_json(out_path(common.output, "config.json"), sim_config_echo(o, common));
  return kExitOk;
}

int cmd_fit(const FitOpts& o, const CommonOpts& common) {
  ResponseMatrix r = read_response_csv(o.responses);
  FitConfig cfg = to_fit_config(o, common);
  InitSpec init = parse_init(o.init);
  cfg.init = init.kind;
  cfg.perturb_rate = init.rate;
  BitMatrix init_q, init_a;
  if (init.cluster) {
    std::tie(init_q, init_a) = cluster_warm_start(r, o.k);
    cfg.init_q = &init_q;
    cfg.init_a = &init_a;
  } else if (init.kind == InitKind::Warm) {
    init_q = read_bit_csv(init.warm_q);
    init_a = read_bit_csv(init.warm_a);
    cfg.init_q = &init_q;
    cfg.init_a = &init_a;
  } else if (init.kind == InitKind::Perturb) {
    fs::path base = fs::path(o.responses).parent_path();
    std::string qp = o.truth_q.empty() ? (base / "Q_true.csv").string() : o.truth_q;
    std::string ap = o.truth_a.empty() ? (base / "A_true.csv").string() : o.truth_a;
    init_q = read_bit_csv(qp);
    init_a = read_bit_csv(ap);
    cfg.init_q = &init_q;
    cfg.init_a = &init_a;
  }
  if (!o.anchors.empty()) {
    cfg.anchors = read_anchors_csv(o.anchors, o.k);
    warn_anchor_pattern(cfg.anchors, o.k);
  }

  FitResult res = fit(r, o.k, cfg);
  write_bit_csv(out_path(common.output, "Q_hat.csv"), res.q);
  write_bit_csv(out_path(common.output, "A_hat.csv"), res.a);
  write_theta_csv(out_path(common.output, "theta.csv"), res.theta);
  write_trace_csv(out_path(common.output, "trace.csv"), res.trace);
  json info{{"algorithm", o.algorithm},
            {"k", o.k},
            {"iterations", res.iterations},
            {"converged", res.converged},
            {"q_stable", res.q_stable},
            {"restarts_used", res.restarts_used},
            {"objective", res.trace.empty() ? 0.0 : res.trace.back().objective},
            {"seed", common.seed}};
  if (!res.converged)
    info["warning"] = "stopped at max_iter before meeting the convergence test";
  write_json(out_path(common.output, "fit.json"), info);
  return kExitOk;
}

json bic_json(const BicReport& b) {
  return json{{"loglik_two", b.loglik_two},
              {"loglik_multi", b.loglik_multi},
              {"k_two", b.k_two},
              {"k_multi", b.k_multi},
              {"n_obs", b.n_obs},
              {"bic_two", b.bic_two},
              {"bic_multi", b.bic_multi},
              {"winner", b.multi_wins ? "multi" : "two"}};
}

int cmd_stage2(const Stage2Opts& o, const CommonOpts& common) {
  ResponseMatrix r = read_response_csv(o.responses);
  BitMatrix q1 = read_bit_csv(o.q_hat);
  BitMatrix a_hat = read_bit_csv(o.a_hat);
  ItemParamsTwo theta1 = read_theta_csv(o.theta);
  Stage2Result res = run_stage_two(
      r, q1, a_hat, theta1,
      to_stage2_config(o, common.seed, resolve_threads(common.threads)));
  write_bit_csv(out_path(common.output, "Q_hat2.csv"), res.q2);
  write_theta_table_csv(out_path(common.output, "theta_multi.csv"), res.theta);
  write_json(out_path(common.output, "bic.json"), bic_json(res.bic));
  json items = json::array();
  for (std::size_t j = 0; j < res.paths.size(); ++j) {
    json entry{{"item", j},
               {"kept_stage1", res.kept_stage1[j] != 0},
               {"intercept_only", res.paths[j].intercept_only},
               {"selected_masks", res.paths[j].selected}};
    if (res.paths[j].chosen >= 0)
      entry["lambda"] = res.paths[j].lambdas[res.paths[j].chosen];
    items.push_back(std::move(entry));
  }
  write_json(out_path(common.output, "stage2.json"),
             json{{"screen", o.screen}, {"items", items}});
  return kExitOk;
}

json report_json(const EvalReport& rep) {
  json j{{"perm", rep.perm},
         {"q_exact", rep.q_exact},
         {"q_row_acc", rep.q_row_acc},
         {"q_entry_acc", rep.q_entry_acc},
         {"a_exact", rep.a_exact},
         {"a_row_acc", rep.a_row_acc},
         {"a_entry_acc", rep.a_entry_acc}};
  if (!std::isnan(rep.recon_err)) j["recon_err"] = rep.recon_err;
  if (!std::isnan(rep.bic)) j["bic"] = rep.bic;
  return j;
}

void write_report_csv(const std::string& path, const EvalReport& rep) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << "q_exact,q_row_acc,q_entry_acc,a_exact,a_row_acc,a_entry_acc,"
       "recon_err,bic,perm\n";
  f << (rep.q_exact ? 1 : 0) << ',' << format_double(rep.q_row_acc) << ','
    << format_double(rep.q_entry_acc) << ',' << (rep.a_exact ? 1 : 0) << ','
    << format_double(rep.a_row_acc) << ',' << format_double(rep.a_entry_acc)
    << ',' << (std::isnan(rep.recon_err) ? "NA" : format_double(rep.recon_err))
    << ',' << (std::isnan(rep.bic) ? "NA" : format_double(rep.bic)) << ',';
  for (std::size_t k = 0; k < rep.perm.size(); ++k)
    f << (k ? " " : "") << rep.perm[k];
  f << '\n';
}

int cmd_evaluate(const EvaluateOpts& o, const CommonOpts& common) {
  BitMatrix q_hat = read_bit_csv(o.q_hat);
  BitMatrix a_hat = read_bit_csv(o.a_hat);
  BitMatrix q_true = read_bit_csv(o.q_true);
  BitMatrix a_true = read_bit_csv(o.a_true);
  EvalReport rep = accuracy_report(q_hat, a_hat, q_true, a_true);
  if (!o.theta.empty()) {
    ItemParamsTwo theta = read_theta_csv(o.theta);
    BitMatrix ideal = ideal_response_matrix(q_true, a_true);
    rep.recon_err = recon_error(reconstruct(q_hat, a_hat, theta), ideal);
  }
  if (!o.bic_json.empty()) {
    std::ifstream f(o.bic_json);
    if (!f) throw DataError("cannot open: " + o.bic_json);
    json b;
    try {
      f >> b;
    } catch (const json::exception& e) {
      throw DataError(o.bic_json + ": " + e.what());
    }
    rep.bic = b.value("winner", "two") == "multi" ? b.value("bic_multi", 0.0)
                                                  : b.value("bic_two", 0.0);
  }
  write_json(out_path(common.output, "report.json"), report_json(rep));
  write_report_csv(out_path(common.output, "report.csv"), rep);
  return kExitOk;
}

struct RepOutcome {
  std::uint64_t seed = 0;
  bool converged = false, q_stable = false;
  int restarts = 0, iterations = 0;
  EvalReport rep;
  bool has_stage2 = false;
  EvalReport rep2;
  BicReport bic;
};

int cmd_replicate(const ReplicateOpts& o, const SimulateOpts& sim,
                  const FitOpts& fit_opts, const Stage2Opts& s2,
                  const CommonOpts& common) {
  if (o.replications < 1) throw ConfigError("need --replications >= 1");
  InitSpec init = parse_init(fit_opts.init);
  if (init.kind == InitKind::Warm && !init.cluster)
    throw ConfigError("file-based warm initialization is not available for "
                      "replicate; use cluster, random, or perturb");
  to_sim_config(sim, common.seed).validate();  // fail fast
  if (o.stage2)
    to_stage2_config(s2, common.seed, 1);  // validate screening options

  std::vector<RepOutcome> outcomes(o.replications);
  parallel_for(o.replications, resolve_threads(common.threads), [&](int begin,
                                                                    int end) {
    for (int rep_i = begin; rep_i < end; ++rep_i) {
      std::uint64_t rep_seed = derive_seed(common.seed, rep_i);
      SimConfig sc = to_sim_config(sim, rep_seed);
      SimData data = simulate(sc);

      CommonOpts rep_common{rep_seed, 1, common.output};
      FitConfig fc = to_fit_config(fit_opts, rep_common);
      fc.init = init.kind;
      fc.perturb_rate = init.rate;
      BitMatrix warm_q, warm_a;
      if (init.cluster) {
        std::tie(warm_q, warm_a) = cluster_warm_start(data.r, sc.k);
        fc.init_q = &warm_q;
        fc.init_a = &warm_a;
      } else if (init.kind == InitKind::Perturb) {
        fc.init_q = &data.q;
        fc.init_a = &data.a;
      }
      fc.threads = 1;  // replications are the parallel unit
      FitResult fit_res = fit(data.r, sc.k, fc);

      RepOutcome& out = outcomes[rep_i];
      out.seed = rep_seed;
      out.converged = fit_res.converged;
      out.q_stable = fit_res.q_stable;
      out.restarts = fit_res.restarts_used;
      out.iterations = fit_res.iterations;
      out.rep = accuracy_report(fit_res.q, fit_res.a, data.q, data.a);
      if (sc.model == SimModel::Dina || sc.model == SimModel::Dino) {
        BitMatrix ideal = ideal_response_matrix(data.q, data.a);
        out.rep.recon_err =
            recon_error(reconstruct(fit_res.q, fit_res.a, fit_res.theta), ideal);
      }
      if (o.stage2) {
        Stage2Result s2res = run_stage_two(data.r, fit_res.q, fit_res.a,
                                           fit_res.theta,
                                           to_stage2_config(s2, rep_seed, 1));
        out.has_stage2 = true;
        out.rep2 = accuracy_report(s2res.q2, fit_res.a, data.q, data.a);
        out.bic = s2res.bic;
      }
    }
  });

  {
    std::ofstream f(out_path(common.output, "replications.csv"), std::ios::binary);
    if (!f) throw DataError("cannot write replications.csv");
    f << "rep,seed,converged,q_stable,restarts,iterations,"
         "a_exact,a_row_acc,a_entry_acc,q_exact,q_row_acc,q_entry_acc,recon_err";
    if (o.stage2)
      f << ",q2_exact,q2_row_acc,q2_entry_acc,bic_two,bic_multi,bic_winner";
    f << '\n';
    for (int i = 0; i < o.replications; ++i) {
      const RepOutcome& out = outcomes[i];
      f << i << ',' << out.seed << ',' << (out.converged ? 1 : 0) << ','
        << (out.q_stable ? 1 : 0) << ',' << out.restarts << ',' << out.iterations
        << ',' << (out.rep.a_exact ? 1 : 0) << ','
        << format_double(out.rep.a_row_acc) << ','
        << format_double(out.rep.a_entry_acc) << ','
        << (out.rep.q_exact ? 1 : 0) << ',' << format_double(out.rep.q_row_acc)
        << ',' << format_double(out.rep.q_entry_acc) << ','
        << (std::isnan(out.rep.recon_err) ? "NA"
                                          : format_double(out.rep.recon_err));
      if (o.stage2)
        f << ',' << (out.rep2.q_exact ? 1 : 0) << ','
          << format_double(out.rep2.q_row_acc) << ','
          << format_double(out.rep2.q_entry_acc) << ','
          << format_double(out.bic.bic_two) << ','
          << format_double(out.bic.bic_multi) << ','
          << (out.bic.multi_wins ? "multi" : "two");
      f << '\n';
    }
  }

  {
    std::ofstream f(out_path(common.output, "table.csv"), std::ios::binary);
    if (!f) throw DataError("cannot write table.csv");
    f << "two_pow_k,J,N,reps,a_exact_count,a_row_acc,a_entry_acc,"
         "q_exact_count,q_row_acc,q_entry_acc";
    if (o.stage2) f << ",q2_exact_count,q2_row_acc,q2_entry_acc";
    f << '\n';
    long long a_exact = 0, q_exact = 0, q2_exact = 0;
    double a_row = 0, a_entry = 0, q_row = 0, q_entry = 0, q2_row = 0,
           q2_entry = 0;
    for (const RepOutcome& out : outcomes) {
      a_exact += out.rep.a_exact;
      q_exact += out.rep.q_exact;
      a_row += out.rep.a_row_acc;
      a_entry += out.rep.a_entry_acc;
      q_row += out.rep.q_row_acc;
      q_entry += out.rep.q_entry_acc;
      if (out.has_stage2) {
        q2_exact += out.rep2.q_exact;
        q2_row += out.rep2.q_row_acc;
        q2_entry += out.rep2.q_entry_acc;
      }
    }
    double reps = o.replications;
    f << (1LL << sim.k) << ',' << sim.j << ',' << sim.n << ',' << o.replications
      << ',' << a_exact << ',' << format_double(a_row / reps) << ','
      << format_double(a_entry / reps) << ',' << q_exact << ','
      << format_double(q_row / reps) << ',' << format_double(q_entry / reps);
    if (o.stage2)
      f << ',' << q2_exact << ',' << format_double(q2_row / reps) << ','
        << format_double(q2_entry / reps);
    f << '\n';
  }

  bool any_stable = false;
  for (const RepOutcome& out : outcomes) any_stable = any_stable || out.q_stable;
  return any_stable ? kExitOk : kExitNoConvergence;
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* cmd, CommonOpts& o, const json& cfg) {
  get_config(cfg, "seed", o.seed);
  get_config(cfg, "threads", o.threads);
  get_config(cfg, "output", o.output);
  cmd->add_option("--config", "JSON config file; flags override its values")
      ->type_name("PATH");
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--threads", o.threads, "worker threads (0 = auto)");
  cmd->add_option("--output", o.output, "output directory");
}

void add_sim_options(CLI::App* cmd, SimulateOpts& o, const json& cfg) {
  get_config(cfg, "n", o.n);
  get_config(cfg, "j", o.j);
  get_config(cfg, "k", o.k);
  get_config(cfg, "model", o.model);
  get_config(cfg, "design", o.design);
  get_config(cfg, "noise", o.noise);
  get_config(cfg, "theta-lo", o.theta_lo);
  get_config(cfg, "theta-hi", o.theta_hi);
  get_config(cfg, "missing-rate", o.missing_rate);
  cmd->add_option("--n", o.n, "subjects");
  cmd->add_option("--j", o.j, "items");
  cmd->add_option("--k", o.k, "attributes");
  cmd->add_option("--model", o.model, "dina|dino|gdina-weak|gdina-strong");
  cmd->add_option("--design", o.design, "blocks|example3|single");
  cmd->add_option("--noise", o.noise, "two-parameter noise (1-theta+ = theta-)");
  cmd->add_option("--theta-lo", o.theta_lo, "multi-parameter floor probability");
  cmd->add_option("--theta-hi", o.theta_hi, "multi-parameter ceiling probability");
  cmd->add_option("--missing-rate", o.missing_rate, "MCAR missingness rate");
}

void add_fit_options(CLI::App* cmd, FitOpts& o, const json& cfg, bool standalone) {
  get_config(cfg, "algorithm", o.algorithm);
  get_config(cfg, "gibbs-samples", o.gibbs_samples);
  get_config(cfg, "max-iter", o.max_iter);
  get_config(cfg, "stable-iters", o.stable_iters);
  get_config(cfg, "theta-tol", o.theta_tol);
  get_config(cfg, "max-restarts", o.max_restarts);
  get_config(cfg, "multi-start", o.multi_start);
  get_config(cfg, "init", o.init);
  cmd->add_option("--algorithm", o.algorithm, "adg-em|adg-saem");
  cmd->add_option("--gibbs-samples", o.gibbs_samples, "Gibbs samples per E step");
  cmd->add_option("--max-iter", o.max_iter, "iteration cap");
  cmd->add_option("--stable-iters", o.stable_iters,
                  "consecutive unchanged-Q iterations required");
  cmd->add_option("--theta-tol", o.theta_tol, "theta movement tolerance");
  cmd->add_option("--max-restarts", o.max_restarts,
                  "reseeded attempts when the run never stabilizes");
  cmd->add_option("--multi-start", o.multi_start,
                  "independent attempts per fit, best objective kept");
  cmd->add_option("--init", o.init,
                  "cluster|random|perturb:RATE|warm:QPATH,APATH");
  if (standalone) {
    get_config(cfg, "responses", o.responses);
    get_config(cfg, "k", o.k);
    get_config(cfg, "truth-q", o.truth_q);
    get_config(cfg, "truth-a", o.truth_a);
    get_config(cfg, "anchors", o.anchors);
    cmd->add_option("--responses", o.responses, "response matrix CSV")
        ->required(cfg_find(cfg, "responses") == nullptr);
    cmd->add_option("--k", o.k, "number of attributes")
        ->required(cfg_find(cfg, "k") == nullptr);
    cmd->add_option("--truth-q", o.truth_q,
                    "perturb base Q (default: Q_true.csv beside responses)");
    cmd->add_option("--truth-a", o.truth_a,
                    "perturb base A (default: A_true.csv beside responses)");
    cmd->add_option("--anchors", o.anchors,
                    "CSV of frozen rows: item_index,q_1,...,q_K");
  }
}

void add_stage2_options(CLI::App* cmd, Stage2Opts& o, const json& cfg,
                        bool standalone) {
  get_config(cfg, "screen", o.screen);
  get_config(cfg, "tau", o.tau);
  get_config(cfg, "max-active", o.max_active);
  get_config(cfg, "max-order", o.max_order);
  get_config(cfg, "folds", o.folds);
  get_config(cfg, "grid-size", o.grid_size);
  cmd->add_option("--screen", o.screen, "main|all-effects");
  cmd->add_option("--tau", o.tau,
                  "screening threshold (main mode: switches off the gap rule)");
  cmd->add_option("--max-active", o.max_active, "cap on attributes per item");
  cmd->add_option("--max-order", o.max_order,
                  "interaction order cap (all-effects)");
  cmd->add_option("--folds", o.folds, "cross-validation folds");
  cmd->add_option("--grid-size", o.grid_size, "penalty grid size");
  if (standalone) {
    get_config(cfg, "responses", o.responses);
    get_config(cfg, "q-hat", o.q_hat);
    get_config(cfg, "a-hat", o.a_hat);
    get_config(cfg, "theta", o.theta);
    cmd->add_option("--responses", o.responses, "response matrix CSV")
        ->required(cfg_find(cfg, "responses") == nullptr);
    cmd->add_option("--q-hat", o.q_hat, "stage-1 loading matrix CSV");
    cmd->add_option("--a-hat", o.a_hat, "stage-1 attribute matrix CSV");
    cmd->add_option("--theta", o.theta, "stage-1 item parameter CSV");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint estimation for structured latent attribute models"};
  app.require_subcommand(1);

  json cfg;
  try {
    cfg = load_config(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  SimulateOpts sim_opts;
  FitOpts fit_opts;
  Stage2Opts s2_opts;
  EvaluateOpts eval_opts;
  ReplicateOpts rep_opts;
  SimulateOpts rep_sim;
  FitOpts rep_fit;
  Stage2Opts rep_s2;
  CommonOpts common_sim, common_fit, common_s2, common_eval, common_rep;

  CLI::App* c_sim = app.add_subcommand("simulate", "generate synthetic data");
  add_sim_options(c_sim, sim_opts, cfg);
  add_common(c_sim, common_sim, cfg);

  CLI::App* c_fit = app.add_subcommand("fit", "two-parameter joint estimation");
  add_fit_options(c_fit, fit_opts, cfg, /*standalone=*/true);
  add_common(c_fit, common_fit, cfg);

  CLI::App* c_s2 = app.add_subcommand("stage2", "multi-parameter second stage");
  add_stage2_options(c_s2, s2_opts, cfg, /*standalone=*/true);
  add_common(c_s2, common_s2, cfg);

  CLI::App* c_eval = app.add_subcommand("evaluate", "permutation-aware accuracy");
  get_config(cfg, "q-hat", eval_opts.q_hat);
  get_config(cfg, "a-hat", eval_opts.a_hat);
  get_config(cfg, "q-true", eval_opts.q_true);
  get_config(cfg, "a-true", eval_opts.a_true);
  get_config(cfg, "theta", eval_opts.theta);
  get_config(cfg, "bic-json", eval_opts.bic_json);
  c_eval->add_option("--q-hat", eval_opts.q_hat, "estimated loading matrix")
      ->required(cfg_find(cfg, "q-hat") == nullptr);
  c_eval->add_option("--a-hat", eval_opts.a_hat, "estimated attribute matrix")
      ->required(cfg_find(cfg, "a-hat") == nullptr);
  c_eval->add_option("--q-true", eval_opts.q_true, "true loading matrix")
      ->required(cfg_find(cfg, "q-true") == nullptr);
  c_eval->add_option("--a-true", eval_opts.a_true, "true attribute matrix")
      ->required(cfg_find(cfg, "a-true") == nullptr);
  c_eval->add_option("--theta", eval_opts.theta,
                     "two-parameter theta CSV, enables reconstruction error");
  c_eval->add_option("--bic-json", eval_opts.bic_json,
                     "stage-2 BIC report to embed");
  add_common(c_eval, common_eval, cfg);

  CLI::App* c_rep =
      app.add_subcommand("replicate", "simulate/fit/evaluate replication tables");
  get_config(cfg, "replications", rep_opts.replications);
  get_config(cfg, "stage2", rep_opts.stage2);
  c_rep->add_option("--replications", rep_opts.replications,
                    "number of replications");
  c_rep->add_flag("--stage2", rep_opts.stage2,
                  "run the second stage per replication");
  add_sim_options(c_rep, rep_sim, cfg);
  add_fit_options(c_rep, rep_fit, cfg, /*standalone=*/false);
  add_stage2_options(c_rep, rep_s2, cfg, /*standalone=*/false);
  add_common(c_rep, common_rep, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim_opts, common_sim);
    if (c_fit->parsed()) return cmd_fit(fit_opts, common_fit);
    if (c_s2->parsed()) return cmd_stage2(s2_opts, common_s2);
    if (c_eval->parsed()) return cmd_evaluate(eval_opts, common_eval);
    if (c_rep->parsed())
      return cmd_replicate(rep_opts, rep_sim, rep_fit, rep_s2, common_rep);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
