// mnngp: F_q tables, maxout NNGP kernels, GP inference and validation suites.
//
// Exit codes: 0 success, 2 usage, 3 file format, 4 conditioning,
// 5 validation failure, 6 other numerical error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mnngp/errors.hpp"
#include "mnngp/experiment.hpp"
#include "mnngp/fq_table.hpp"
#include "mnngp/kernel.hpp"
#include "mnngp/matrix_io.hpp"
#include "mnngp/validation.hpp"

using namespace mnngp;

namespace {

enum Exit { kOk = 0, kUsage = 2, kFormat = 3, kConditioning = 4, kValidation = 5, kNumerical = 6 };

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << text;
  if (!out) throw FormatError(path + ": write failed");
}

// ---------------------------------------------------------------- table

struct TableBuildArgs {
  int q = 2;
  int n_rho = 1001;
  double r_max = 8.0;
  int n_grid = 2001;
  std::string scheme = "product";
  std::string out;
};

int table_build(const TableBuildArgs& a) {
  if (a.n_rho < 2) throw UsageError("--n-rho must be >= 2");
  const FqTable t = build_table(a.q, a.n_rho, QuadratureGrid(a.r_max, a.n_grid), parse_scheme(a.scheme));
  save_table(t, a.out);
  std::printf("wrote %s: q=%d n_rho=%d r_max=%g n_grid=%d scheme=%s\n", a.out.c_str(), a.q, a.n_rho,
              a.r_max, a.n_grid, a.scheme.c_str());
  return kOk;
}

struct TableCheckArgs {
  std::string table;
  double threshold = 1e-3;
  std::string out_csv;
};

int table_check(const TableCheckArgs& a) {
  const FqTable t = load_table(a.table);
  if (t.q() != 2) throw UsageError("table check compares against the closed form and needs q=2");
  std::string csv = "rho,table,closed_form,abs_diff\n";
  double worst = 0.0;
  for (int i = 0; i < t.n_rho(); ++i) {
    const double rho = t.rhos()[i];
    const double exact = closed_form_f2(rho);
    const double diff = std::abs(t.values()[i] - exact);
    worst = std::max(worst, diff);
    csv += format_real17(rho) + ',' + format_real17(t.values()[i]) + ',' + format_real17(exact) +
           ',' + format_real17(diff) + '\n';
  }
  if (!a.out_csv.empty()) write_text(a.out_csv, csv);
  const bool ok = worst <= a.threshold;
  std::printf("%s max |table - closed form| = %.3e (threshold %.3e)\n", ok ? "PASS" : "FAIL", worst,
              a.threshold);
  return ok ? kOk : kValidation;
}

// ---------------------------------------------------------------- kernel

struct KernelArgs {
  std::string table;
  KernelParams params;
  std::string x;
  std::string y;
  std::string out;
};

int kernel_cmd(const KernelArgs& a) {
  a.params.validate();
  const FqTable t = load_table(a.table);
  if (t.q() != a.params.q) {
    throw UsageError("table has q=" + std::to_string(t.q()) + " but --q " + std::to_string(a.params.q));
  }
  const Matrix X = load_matrix_csv(a.x);
  const KernelMatrix K = a.y.empty() ? kernel_matrix(X, a.params, t)
                                     : kernel_matrix(X, load_matrix_csv(a.y), a.params, t);
  save_matrix_csv(K.values, a.out);
  std::printf("wrote %s (%ld x %ld)\n", a.out.c_str(), static_cast<long>(K.values.rows()),
              static_cast<long>(K.values.cols()));
  return kOk;
}

// ---------------------------------------------------------------- infer / gridsearch

void print_cell(const CellResult& c, std::FILE* f) {
  std::fprintf(f, "cell %zu q=%d depth=%d sigma_b2=%.4g sigma_w2=%.4g", c.cell.index, c.cell.q,
               c.cell.depth, c.cell.sigma_b2, c.cell.sigma_w2);
  if (!c.ok) {
    std::fprintf(f, " failed: %s\n", c.error.c_str());
    return;
  }
  if (c.mean_val) std::fprintf(f, " val=%.4f", *c.mean_val);
  if (c.mean_test) std::fprintf(f, " test=%.4f", *c.mean_test);
  std::fprintf(f, "\n");
}

struct InferArgs {
  std::string config;
  std::optional<std::string> dataset;
  std::vector<std::string> train_images, train_labels, test_images, test_labels;
  std::optional<std::size_t> n_train, n_val, n_test;
  std::optional<int> repeats;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> table;
  std::optional<int> q, depth;
  std::optional<double> sigma_b2, sigma_w2, noise0;
  std::optional<std::string> out;
};

int infer_cmd(const InferArgs& a) {
  ExperimentConfig c = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
  auto& d = c.dataset;
  if (a.dataset) d.kind = *a.dataset;
  if (!a.train_images.empty()) d.train_images = a.train_images;
  if (!a.train_labels.empty()) d.train_labels = a.train_labels;
  if (!a.test_images.empty()) d.test_images = a.test_images;
  if (!a.test_labels.empty()) d.test_labels = a.test_labels;
  if (a.n_train) d.n_train = *a.n_train;
  if (a.n_val) d.n_val = *a.n_val;
  if (a.n_test) d.n_test = *a.n_test;
  if (a.repeats) d.repeats = *a.repeats;
  if (a.seed) c.seed = *a.seed;
  if (a.noise0) c.noise0 = *a.noise0;
  if (a.out) c.output = *a.out;
  if (a.q) c.grid.q = {*a.q};
  if (a.depth) c.grid.depth = {*a.depth};
  if (a.sigma_b2) c.grid.sigma_b2 = {*a.sigma_b2};
  if (a.sigma_w2) c.grid.sigma_w2 = {*a.sigma_w2};
  if (a.table) c.table.paths[c.grid.q.front()] = *a.table;
  if (c.grid.size() != 1) {
    throw UsageError("infer needs exactly one (q, depth, sigma_b2, sigma_w2); the grid has " +
                     std::to_string(c.grid.size()) + " cells");
  }
  if (c.output.empty()) throw UsageError("--out is required");
  c.validate();
  const LoadedData data = load_data(d);
  TableProvider tables(c.table);
  const GridCell cell = enumerate_cells(c.grid).front();
  const CellResult r = evaluate_cell(cell, data, d, tables.get(cell.q), c.noise0, c.seed);
  write_text(c.output, infer_report_json(c, r));
  print_cell(r, stdout);
  if (!r.ok) return kConditioning;
  return kOk;
}

struct GridArgs {
  std::string config;
  std::size_t budget = 0;
  std::optional<std::string> out;
  std::string out_csv;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  std::optional<double> noise0;
};

int gridsearch_cmd(const GridArgs& a) {
  ExperimentConfig c = load_config(a.config);
  if (a.out) c.output = *a.out;
  if (a.seed) c.seed = *a.seed;
  if (a.repeats) c.dataset.repeats = *a.repeats;
  if (a.noise0) c.noise0 = *a.noise0;
  if (c.output.empty()) throw UsageError("--out is required");
  c.validate();
  const LoadedData data = load_data(c.dataset);
  TableProvider tables(c.table);
  const GridReport report = run_gridsearch(c, data, tables, a.budget, Execution::parallel,
                                           [](const CellResult& r) { print_cell(r, stderr); });
  write_text(c.output, gridsearch_report_json(report));
  std::string csv_path = a.out_csv;
  if (csv_path.empty()) csv_path = std::filesystem::path(c.output).replace_extension(".csv").string();
  if (csv_path == c.output) csv_path += ".csv";
  write_text(csv_path, ranked_csv(report));
  std::printf("%zu cells evaluated; ranked table in %s\n", report.cells.size(), csv_path.c_str());
  if (!report.ranking.empty() && report.cells[report.ranking.front()].score()) {
    std::printf("best: ");
    print_cell(report.cells[report.ranking.front()], stdout);
  }
  return kOk;
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  std::string suite = "properties";
  std::string table;
  double threshold = 1e-3;
  std::int64_t mc_samples = 10'000'000;
  int width = 2048;
  int reference_width = 128;
  long networks = 20000;
  int seeds = 5;
  std::string estimator = "conditional";
  bool serial = false;
};

int validate_cmd(const ValidateArgs& a) {
  TableCache tables(QuadratureGrid::high_accuracy(), a.serial ? Execution::serial : Execution::parallel);
  if (!a.table.empty()) tables.insert(load_table(a.table));
  std::vector<SuiteReport> reports;
  auto run = [&](const std::string& s) {
    if (s == "fq") {
      FqSuiteOptions o;
      o.threshold = a.threshold;
      o.mc_samples = a.mc_samples;
      reports.push_back(validate_fq(tables, o));
    } else if (s == "prop1") {
      Prop1Options o;
      o.threshold = a.threshold;
      reports.push_back(validate_prop1(tables, o));
    } else if (s == "theorem1") {
      Theorem1Options o;
      o.width = a.width;
      o.reference_width = a.reference_width;
      o.n_networks = a.networks;
      o.n_seeds = a.seeds;
      if (a.estimator == "sampled") {
        o.estimator = OutputEstimator::sampled;
      } else if (a.estimator != "conditional") {
        throw UsageError("--estimator must be sampled or conditional");
      }
      reports.push_back(validate_theorem1(tables, o));
    } else if (s == "jitter") {
      reports.push_back(validate_jitter());
    } else if (s == "properties") {
      PropertyOptions o;
      o.mc_samples = a.mc_samples;
      reports.push_back(validate_properties(tables, o));
    }
    std::fputs(reports.back().format().c_str(), stdout);
    std::fflush(stdout);
  };
  if (a.suite == "all") {
    for (const char* s : {"fq", "prop1", "theorem1", "jitter", "properties"}) run(s);
  } else {
    run(a.suite);
  }
  for (const auto& r : reports) {
    if (!r.passed()) return kValidation;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maxout-network NNGP kernels: F_q tables, kernels, GP inference, validation"};
  app.require_subcommand(1);

  auto* table = app.add_subcommand("table", "Build or check F_q lookup tables");
  table->require_subcommand(1);
  TableBuildArgs tb;
  auto* build = table->add_subcommand("build", "Tabulate F_q on a uniform rho grid");
  build->add_option("--q", tb.q, "Maxout rank")->default_val(2)->check(CLI::PositiveNumber);
  build->add_option("--n-rho", tb.n_rho, "Number of rho nodes")->default_val(1001);
  build->add_option("--r-max", tb.r_max, "Quadrature half-width")->default_val(8.0);
  build->add_option("--n-grid", tb.n_grid, "Quadrature nodes per axis")->default_val(2001);
  build->add_option("--scheme", tb.scheme, "product | ratio")
      ->default_val("product")
      ->check(CLI::IsMember({"product", "ratio"}));
  build->add_option("--out", tb.out, "Output table path")->required();

  TableCheckArgs tc;
  auto* check = table->add_subcommand("check", "Compare a q=2 table with the closed form");
  check->add_option("--table", tc.table, "Table path")->required();
  check->add_option("--threshold", tc.threshold, "Largest allowed |diff|")->default_val(1e-3);
  check->add_option("--out-csv", tc.out_csv, "CSV of rho, table, closed form, |diff|");

  KernelArgs ka;
  auto* kernel = app.add_subcommand("kernel", "Evaluate the depth-L kernel matrix");
  kernel->add_option("--table", ka.table, "F_q table")->required();
  kernel->add_option("--q", ka.params.q)->required();
  kernel->add_option("--depth", ka.params.depth)->required();
  kernel->add_option("--sigma-b2", ka.params.sigma_b2)->required();
  kernel->add_option("--sigma-w2", ka.params.sigma_w2)->required();
  kernel->add_option("--x", ka.x, "CSV of input rows")->required();
  kernel->add_option("--y", ka.y, "Second CSV of input rows (default: X)");
  kernel->add_option("--out", ka.out, "Output CSV")->required();

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Split, kernel, posterior mean, accuracy");
  infer->add_option("--config", ia.config, "JSON config; flags override it");
  infer->add_option("--dataset", ia.dataset)->check(CLI::IsMember({"mnist", "cifar10", "csv"}));
  infer->add_option("--train-images", ia.train_images)->expected(1, -1);
  infer->add_option("--train-labels", ia.train_labels)->expected(1, -1);
  infer->add_option("--test-images", ia.test_images)->expected(1, -1);
  infer->add_option("--test-labels", ia.test_labels)->expected(1, -1);
  infer->add_option("--n-train", ia.n_train);
  infer->add_option("--n-val", ia.n_val);
  infer->add_option("--n-test", ia.n_test, "Use the first N test points (0 = all)");
  infer->add_option("--repeats", ia.repeats);
  infer->add_option("--seed", ia.seed);
  infer->add_option("--table", ia.table, "F_q table (built when absent)");
  infer->add_option("--q", ia.q);
  infer->add_option("--depth", ia.depth);
  infer->add_option("--sigma-b2", ia.sigma_b2);
  infer->add_option("--sigma-w2", ia.sigma_w2);
  infer->add_option("--noise0", ia.noise0);
  infer->add_option("--out", ia.out, "JSON report");

  GridArgs ga;
  auto* grid = app.add_subcommand("gridsearch", "Rank hyperparameter cells by mean accuracy");
  grid->add_option("--config", ga.config, "JSON config")->required();
  grid->add_option("--budget", ga.budget, "Evaluate only the first B cells (0 = all)");
  grid->add_option("--out", ga.out, "JSON report");
  grid->add_option("--out-csv", ga.out_csv, "Ranked CSV (default: report path with .csv)");
  grid->add_option("--seed", ga.seed);
  grid->add_option("--repeats", ga.repeats);
  grid->add_option("--noise0", ga.noise0);

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Run an invariant suite");
  validate->add_option("suite", va.suite, "fq | prop1 | theorem1 | jitter | properties | all")
      ->default_val("properties")
      ->check(CLI::IsMember({"fq", "prop1", "theorem1", "jitter", "properties", "all"}));
  validate->add_option("--table", va.table, "Use this table instead of building one");
  validate->add_option("--threshold", va.threshold, "fq / prop1 tolerance")->default_val(1e-3);
  validate->add_option("--mc-samples", va.mc_samples)->default_val(10'000'000);
  validate->add_option("--width", va.width)->default_val(2048);
  validate->add_option("--reference-width", va.reference_width)->default_val(128);
  validate->add_option("--networks", va.networks)->default_val(20000);
  validate->add_option("--seeds", va.seeds)->default_val(5);
  validate->add_option("--estimator", va.estimator, "conditional | sampled")->default_val("conditional");
  validate->add_flag("--serial", va.serial, "Disable OpenMP");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (build->parsed()) return table_build(tb);
    if (check->parsed()) return table_check(tc);
    if (kernel->parsed()) return kernel_cmd(ka);
    if (infer->parsed()) return infer_cmd(ia);
    if (grid->parsed()) return gridsearch_cmd(ga);
    if (validate->parsed()) return validate_cmd(va);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kFormat;
  } catch (const ConditioningError& e) {
    std::fprintf(stderr, "conditioning error: %s\n", e.what());
    return kConditioning;
  } catch (const ValidationFailure& e) {
    std::fprintf(stderr, "validation failure: %s\n", e.what());
    return kValidation;
  } catch (const DegenerateInputError& e) {
    std::fprintf(stderr, "degenerate input (row %ld): %s\n", e.row(), e.what());
    return kNumerical;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  }
  return kUsage;
}
