#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "slicebf/baselines.hpp"
#include "slicebf/bf_engine.hpp"
#include "slicebf/calibration.hpp"
#include "slicebf/cli.hpp"
#include "slicebf/dataset.hpp"
#include "slicebf/error.hpp"
#include "slicebf/parallel.hpp"
#include "slicebf/permutation.hpp"
#include "slicebf/selection.hpp"
#include "slicebf/simulation.hpp"
#include "slicebf/table.hpp"

namespace slicebf {

namespace {

using nlohmann::json;

constexpr int kSchema = 1;

struct CommonOptions {
  std::string input;
  std::string response;
  std::string delimiter;
  std::string output;
  double alpha0 = 1.0;
  double lambda0 = 1.0;
  std::uint64_t seed = 0;
  unsigned jobs = default_jobs();
};

struct TestOptions {
  std::vector<std::string> covariates;
  std::vector<std::string> given;
  std::size_t permutations = 1000;
  std::vector<std::string> methods;
  std::string calibration;
  bool timing = false;
};

struct SelectOptions {
  std::vector<std::string> covariates;
  double b0 = 10.0;
  std::string stop_rule = "perm:0.05";
  std::size_t permutations = 1000;
  std::size_t max_steps = 10;
  int max_super_levels = 64;
};

struct SimulateOptions {
  std::string scenario;
  std::size_t n = 400;
  std::size_t reps = 500;
  std::string methods;
  std::optional<double> mu, sigma, theta, gamma, p0;
};

struct CalibrateOptions {
  int x_levels = 2;
  int z_levels = 1;
  std::vector<double> frequencies;
  std::vector<std::size_t> n_grid{100, 200, 400, 800};
  std::vector<double> b_grid{1.0, 3.0, 10.0, 30.0};
  std::size_t shuffles = 2000;
  double group_shift = 0.4;
  std::string table;
};

std::optional<char> parse_delimiter(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (s == "tab" || s == "\\t") return '\t';
  if (s == "comma") return ',';
  if (s.size() != 1) throw InputError("delimiter must be a single character, 'tab' or 'comma'");
  return s[0];
}

Hyperparams hyper_from(const CommonOptions& c) {
  Hyperparams h{c.alpha0, c.lambda0};
  h.validate();
  return h;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json report_json(const TestReport& r) {
  return json{{"method", r.method},       {"statistic", nullable(r.statistic)},
              {"p_value", nullable(r.p_value)}, {"df1", nullable(r.df1)},
              {"df2", nullable(r.df2)},   {"n_a", r.n_a},
              {"n_b", r.n_b}};
}

// Writes to the --output path when given, else to `out`.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
  if (!f) throw InputError("failed writing '" + path + "'");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TestReport run_baseline(const std::string& method, const SlicedDataset& d) {
  if (method == "anova") {
    return d.z_levels() == 1 ? anova_one_way(d.y(), d.x(), d.x_levels())
                             : anova_two_way(d.y(), d.x(), d.x_levels(), d.z(), d.z_levels());
  }
  if (method == "anova-interaction") {
    return anova_interaction(d.y(), d.x(), d.x_levels(), d.z(), d.z_levels());
  }
  if (method != "t" && method != "ranksum" && method != "ks" && method != "ad") {
    throw InputError("unknown method '" + method + "'");
  }
  if (d.x_levels() != 2 || d.z_levels() != 1) {
    throw InputError("method '" + method + "' needs a two-level covariate and no --given");
  }
  const auto a = d.responses_where_x(0);
  const auto b = d.responses_where_x(1);
  if (method == "t") return welch_t(a, b);
  if (method == "ranksum") return wilcoxon_rank_sum(a, b);
  if (method == "ks") return ks_two_sample(a, b);
  return anderson_darling_2sample(a, b);
}

void cmd_test(const CommonOptions& c, const TestOptions& o, std::ostream& out) {
  const Hyperparams hyper = hyper_from(c);
  const Table table = read_table(c.input, parse_delimiter(c.delimiter));
  const SlicedDataset d = load_table(table, c.response, o.covariates, o.given);

  const BfResult bf = bf_dynamic_program(d, hyper);
  json doc{{"schema", kSchema},
           {"command", "test"},
           {"input", c.input},
           {"response", c.response},
           {"covariates", o.covariates},
           {"given", o.given},
           {"n", bf.n},
           {"x_levels", bf.x_levels},
           {"z_levels", bf.z_levels},
           {"alpha0", hyper.alpha0},
           {"lambda0", hyper.lambda0},
           {"pi0", bf.pi0},
           {"log_bf", bf.log_bf},
           {"bf", nullable(std::exp(bf.log_bf))}};
  if (o.timing) doc["elapsed_seconds"] = bf.elapsed.count();

  const CalibrationTable calib = !o.calibration.empty() ? CalibrationTable::load(o.calibration)
                                 : calibration_path_from_env()
                                     ? CalibrationTable::load(*calibration_path_from_env())
                                     : CalibrationTable::builtin();
  if (const CalibrationEntry* e = calib.find(calibration_key(d, hyper))) {
    const double b = std::max(1.0, std::exp(bf.log_bf));
    doc["formula"] = {{"p_value", formula_pvalue(b, d.size(), e->constants)},
                      {"alpha", e->constants.alpha},
                      {"beta", e->constants.beta},
                      {"gamma", e->constants.gamma},
                      {"source", e->source}};
  } else {
    doc["formula"] = nullptr;
  }

  if (o.permutations > 0) {
    PermutationPlan plan;
    plan.replicates = o.permutations;
    plan.seed = c.seed;
    plan.jobs = c.jobs;
    const McPvalue mc = mc_pvalue(bf.log_bf, d, hyper, plan);
    doc["permutation"] = {{"replicates", o.permutations},
                          {"seed", c.seed},
                          {"exceed", mc.exceed},
                          {"p_value", mc.p_value}};
  } else {
    doc["permutation"] = nullptr;
  }

  json baselines = json::array();
  for (const auto& m : o.methods) baselines.push_back(report_json(run_baseline(m, d)));
  doc["baselines"] = baselines;
  emit(c.output, doc.dump(2) + "\n", out);
}

void cmd_select(const CommonOptions& c, const SelectOptions& o, std::ostream& out) {
  const Hyperparams hyper = hyper_from(c);
  SelectionConfig config;
  config.b0 = o.b0;
  config.stop = StopRule::parse(o.stop_rule);
  config.permutations = o.permutations;
  config.max_steps = o.max_steps;
  config.max_super_levels = o.max_super_levels;
  config.seed = c.seed;
  config.jobs = c.jobs;
  config.validate();

  const Table table = read_table(c.input, parse_delimiter(c.delimiter));
  std::vector<std::string> covariates = o.covariates;
  if (covariates.empty()) {
    table.column(c.response);
    for (const auto& h : table.header) {
      if (h != c.response) covariates.push_back(h);
    }
  }
  const CovariatePanel panel = load_panel(table, c.response, covariates);
  const SelectionTrace trace = select(panel, hyper, config);

  json doc{{"schema", kSchema},
           {"command", "select"},
           {"input", c.input},
           {"response", c.response},
           {"n", panel.observations()},
           {"alpha0", hyper.alpha0},
           {"lambda0", hyper.lambda0},
           {"b0", config.b0},
           {"stop_rule", config.stop.to_string()},
           {"permutations", config.permutations},
           {"max_steps", config.max_steps},
           {"max_super_levels", config.max_super_levels},
           {"seed", config.seed},
           {"trace", trace_to_json(trace, panel)}};
  emit(c.output, doc.dump(2) + "\n", out);
}

void cmd_simulate(const CommonOptions& c, const SimulateOptions& o, std::ostream& out) {
  const auto family = parse_family(o.scenario);
  if (!family) throw InputError("unknown scenario '" + o.scenario + "'");
  ExperimentConfig config;
  config.spec = ScenarioSpec::defaults(*family, o.n, c.seed);
  if (o.mu) config.spec.mu = *o.mu;
  if (o.sigma) config.spec.sigma = *o.sigma;
  if (o.theta) config.spec.theta = *o.theta;
  if (o.gamma) config.spec.gamma = *o.gamma;
  if (o.p0) config.spec.p0 = *o.p0;
  config.spec.validate();
  config.reps = o.reps;
  config.lambda0 = c.lambda0;
  config.jobs = c.jobs;
  const std::string methods =
      !o.methods.empty() ? o.methods : (is_two_sample(*family) ? "bf,t,ranksum,ks,ad" : "bf,anova");
  config.methods = parse_methods(methods);
  for (auto& m : config.methods) {
    if (m.method == Method::kBf && m.name == "bf") m.alpha0 = c.alpha0;
  }
  Hyperparams{c.alpha0, c.lambda0}.validate();

  const ExperimentResult result = run_experiment(config);

  std::ostringstream tsv;
  tsv << "method\treplicate\thypothesis\tscore\tp_value\n";
  for (const auto& r : result.rows) {
    tsv << r.method << '\t' << r.replicate << '\t' << r.hypothesis << '\t' << fmt_double(r.score)
        << '\t' << fmt_double(r.p_value) << '\n';
  }
  json summary = json::array();
  for (const auto& s : result.summary) {
    summary.push_back({{"method", s.method},
                       {"auc", s.auc},
                       {"reject_h1", s.reject_h1},
                       {"reject_h0", s.reject_h0}});
  }
  const ScenarioSpec& s = config.spec;
  json doc{{"schema", kSchema},
           {"command", "simulate"},
           {"scenario", family_name(s.family)},
           {"n", s.n},
           {"reps", config.reps},
           {"seed", c.seed},
           {"alpha0", c.alpha0},
           {"lambda0", c.lambda0},
           {"parameters",
            {{"mu", s.mu}, {"sigma", s.sigma}, {"theta", s.theta}, {"gamma", s.gamma}, {"p0", s.p0}}},
           {"summary", summary}};
  if (c.output.empty()) {
    out << tsv.str();
    return;
  }
  emit(c.output + ".tsv", tsv.str(), out);
  emit(c.output + ".json", doc.dump(2) + "\n", out);
  out << doc.dump(2) << "\n";
}

void cmd_calibrate(const CommonOptions& c, const CalibrateOptions& o, std::ostream& out) {
  const Hyperparams hyper = hyper_from(c);
  CalibrationDesign design;
  design.x_levels = o.x_levels;
  design.z_levels = o.z_levels;
  if (o.frequencies.empty()) {
    const auto cells = static_cast<std::size_t>(std::max(0, o.x_levels * o.z_levels));
    design.frequencies.assign(cells, cells ? 1.0 / static_cast<double>(cells) : 0.0);
  } else {
    design.frequencies = o.frequencies;
  }
  design.n_grid = o.n_grid;
  design.b_grid = o.b_grid;
  design.shuffles = o.shuffles;
  design.group_shift = o.group_shift;
  design.seed = c.seed;
  design.jobs = c.jobs;
  design.validate();

  const CalibrationRun run = run_calibration(design, hyper);
  CalibrationEntry entry;
  entry.key = {design.x_levels, design.z_levels, round_frequencies(design.frequencies), hyper.lambda0,
               hyper.alpha0};
  entry.constants = run.fit.constants;
  entry.source = "calibrate";
  entry.residual_rms = run.fit.residual_rms;

  json grid = json::array();
  for (const auto& p : run.grid) grid.push_back({{"b", p.b}, {"n", p.n}, {"rate", p.rate}});
  json doc{{"schema", kSchema},
           {"command", "calibrate"},
           {"x_levels", design.x_levels},
           {"z_levels", design.z_levels},
           {"frequencies", entry.key.frequencies},
           {"alpha0", hyper.alpha0},
           {"lambda0", hyper.lambda0},
           {"shuffles", design.shuffles},
           {"seed", design.seed},
           {"grid", grid},
           {"constants",
            {{"alpha", entry.constants.alpha},
             {"beta", entry.constants.beta},
             {"gamma", entry.constants.gamma}}},
           {"residual_rms", entry.residual_rms}};

  std::string table_path = o.table;
  if (table_path.empty()) {
    if (const auto env = calibration_path_from_env()) table_path = env->string();
  }
  if (!table_path.empty()) {
    CalibrationTable t = std::filesystem::exists(table_path) ? CalibrationTable::load(table_path)
                                                             : CalibrationTable::builtin();
    t.upsert(entry);
    t.save(table_path);
    doc["table"] = table_path;
  }
  emit(c.output, doc.dump(2) + "\n", out);
}

void add_common(CLI::App* app, CommonOptions& c, bool needs_input) {
  if (needs_input) {
    app->add_option("input", c.input, "CSV/TSV file with a header row")->required();
    app->add_option("--response,-y", c.response, "Response column")->required();
    app->add_option("--delimiter", c.delimiter,
                    "Field delimiter: a character, 'tab' or 'comma' (default from extension)");
  }
  app->add_option("--alpha0", c.alpha0, "Dirichlet concentration")->capture_default_str();
  app->add_option("--lambda0", c.lambda0, "Slicing-prior exponent")->capture_default_str();
  app->add_option("--jobs,-j", c.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--output,-o", c.output, "Output path (default: stdout)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayes factor tests of dependence between categorical covariates and a continuous response"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "slicebf 1.0.0");

  CommonOptions test_c, select_c, sim_c, cal_c;
  TestOptions test_o;
  SelectOptions select_o;
  SimulateOptions sim_o;
  CalibrateOptions cal_o;

  CLI::App* test = app.add_subcommand("test", "Bayes factor test of X against Y, optionally given Z");
  add_common(test, test_c, true);
  test->add_option("--covariate,-x", test_o.covariates,
                   "Covariate column(s); several are jointly encoded")
      ->required()
      ->delimiter(',')->allow_extra_args(false);
  test->add_option("--given,-z", test_o.given, "Group column(s) to condition on")->delimiter(',')->allow_extra_args(false);
  test->add_option("--permutations,-B", test_o.permutations,
                   "Shuffles for the Monte Carlo p-value (0 disables)")
      ->capture_default_str();
  test->add_option("--seed", test_c.seed, "RNG seed")->capture_default_str();
  test->add_option("--methods", test_o.methods,
                   "Baseline tests: t, ranksum, ks, ad, anova, anova-interaction")
      ->delimiter(',')->allow_extra_args(false);
  test->add_option("--calibration", test_o.calibration,
                   "Calibration table JSON (default: $SLICEBF_CALIBRATION or built-in)");
  test->add_flag("--timing", test_o.timing, "Include elapsed time in the output");

  CLI::App* sel = app.add_subcommand("select", "Screening and forward stepwise selection");
  add_common(sel, select_c, true);
  sel->add_option("--covariates,-x", select_o.covariates, "Candidate columns (default: all but the response)")
      ->delimiter(',')->allow_extra_args(false);
  sel->add_option("--b0", select_o.b0, "Screening BF threshold")->capture_default_str();
  sel->add_option("--stop-rule", select_o.stop_rule, "perm:<p-cutoff> or bf:<b2>[,<b3>...]")
      ->capture_default_str();
  sel->add_option("--permutations,-B", select_o.permutations, "Shuffles per stepwise test")
      ->capture_default_str();
  sel->add_option("--max-steps", select_o.max_steps, "Largest selected set")->capture_default_str();
  sel->add_option("--max-super-levels", select_o.max_super_levels,
                  "Cap on the levels of the conditioning super variable")
      ->capture_default_str();
  sel->add_option("--seed", select_c.seed, "RNG seed")->capture_default_str();

  CLI::App* sim = app.add_subcommand(
      "simulate",
      "Simulation experiment. TSV columns: method, replicate, hypothesis (1 alternative, 0 null), "
      "score, p_value. With --output PREFIX writes PREFIX.tsv and PREFIX.json (AUC summary).");
  add_common(sim, sim_c, false);
  sim->add_option("--scenario", sim_o.scenario, "s1..s4 or case1..case6")->required();
  sim->add_option("--seed", sim_c.seed, "RNG seed")->required();
  sim->add_option("--n", sim_o.n, "Sample size")->capture_default_str();
  sim->add_option("--reps", sim_o.reps, "Replicates per arm")->capture_default_str();
  sim->add_option("--methods", sim_o.methods, "bf, bf:<alpha0>, t, ranksum, ks, ad, anova");
  sim->add_option("--mu", sim_o.mu, "Effect size");
  sim->add_option("--sigma", sim_o.sigma, "Scale of the X = 1 group (s2)");
  sim->add_option("--theta", sim_o.theta, "Mixture weight (s3, s4)");
  sim->add_option("--gamma", sim_o.gamma, "Heteroscedasticity (case5, case6)");
  sim->add_option("--p0", sim_o.p0, "Pr(X = 1 | Z = 0) for the conditional cases");

  CLI::App* cal = app.add_subcommand("calibrate", "Fit the empirical p-value formula by shuffling");
  add_common(cal, cal_c, false);
  cal->add_option("--x-levels", cal_o.x_levels)->capture_default_str();
  cal->add_option("--z-levels", cal_o.z_levels)->capture_default_str();
  cal->add_option("--frequencies", cal_o.frequencies,
                  "Configuration frequencies, index z * |X| + x (default uniform)")
      ->delimiter(',')->allow_extra_args(false);
  cal->add_option("--n-grid", cal_o.n_grid)->delimiter(',')->allow_extra_args(false)->capture_default_str();
  cal->add_option("--b-grid", cal_o.b_grid)->delimiter(',')->allow_extra_args(false)->capture_default_str();
  cal->add_option("--shuffles", cal_o.shuffles, "Shuffles per sample size")->capture_default_str();
  cal->add_option("--group-shift", cal_o.group_shift, "Response shift per Z level")->capture_default_str();
  cal->add_option("--seed", cal_c.seed, "RNG seed")->capture_default_str();
  cal->add_option("--table", cal_o.table,
                  "Calibration table to update (default: $SLICEBF_CALIBRATION if set)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (test->parsed()) {
      cmd_test(test_c, test_o, out);
    } else if (sel->parsed()) {
      cmd_select(select_c, select_o, out);
    } else if (sim->parsed()) {
      cmd_simulate(sim_c, sim_o, out);
    } else if (cal->parsed()) {
      cmd_calibrate(cal_c, cal_o, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace slicebf
