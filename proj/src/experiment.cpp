#include "mnngp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mnngp/errors.hpp"
#include "mnngp/gp_regression.hpp"
#include "mnngp/matrix_io.hpp"

namespace mnngp {

using Json = nlohmann::ordered_json;

GridSpec GridSpec::published() {
  GridSpec g;
  g.q = {2, 3, 4};
  g.depth = {1, 5, 9, 13, 17, 21};
  for (int i = 1; i <= 29; i += 4) g.sigma_b2.push_back(2.0 * i / 29.0);
  for (int i = 0; i <= 28; i += 4) g.sigma_w2.push_back(0.1 + 49.0 * i / 290.0);
  return g;
}

void ExperimentConfig::validate() const {
  const auto& d = dataset;
  if (d.kind != "mnist" && d.kind != "cifar10" && d.kind != "csv") {
    throw UsageError("dataset kind must be mnist, cifar10 or csv, got '" + d.kind + "'");
  }
  if (d.repeats < 1) throw UsageError("repeats must be >= 1");
  if (d.n_train < 1) throw UsageError("n_train must be >= 1");
  if (grid.q.empty() || grid.depth.empty() || grid.sigma_b2.empty() || grid.sigma_w2.empty()) {
    throw UsageError("every grid set must be nonempty");
  }
  for (int q : grid.q) {
    for (int depth : grid.depth) {
      for (double sb : grid.sigma_b2) {
        for (double sw : grid.sigma_w2) KernelParams{q, depth, sb, sw}.validate();
      }
    }
  }
  if (!(noise0 >= 0.0) || !std::isfinite(noise0)) throw UsageError("noise0 must be finite and >= 0");
  if (table.n_rho < 2 || table.n_grid < 3 || !(table.r_max > 0.0)) {
    throw UsageError("table build parameters out of range");
  }
}

// ---------------------------------------------------------------- JSON

namespace {

Json config_json(const ExperimentConfig& c) {
  Json tables = Json::object();
  for (const auto& [q, path] : c.table.paths) tables[std::to_string(q)] = path;
  return Json{
      {"dataset",
       {{"kind", c.dataset.kind},
        {"train_images", c.dataset.train_images},
        {"train_labels", c.dataset.train_labels},
        {"test_images", c.dataset.test_images},
        {"test_labels", c.dataset.test_labels},
        {"n_train", c.dataset.n_train},
        {"n_val", c.dataset.n_val},
        {"n_test", c.dataset.n_test},
        {"repeats", c.dataset.repeats}}},
      {"grid",
       {{"q", c.grid.q},
        {"depth", c.grid.depth},
        {"sigma_b2", c.grid.sigma_b2},
        {"sigma_w2", c.grid.sigma_w2}}},
      {"table",
       {{"paths", tables},
        {"n_rho", c.table.n_rho},
        {"r_max", c.table.r_max},
        {"n_grid", c.table.n_grid},
        {"scheme", std::string(to_string(c.table.scheme))}}},
      {"noise0", c.noise0},
      {"seed", c.seed},
      {"output", c.output},
  };
}

// Walks one JSON object, rejecting keys nobody asked for.
class Reader {
public:
  Reader(const Json& obj, std::string where, const std::string& source)
      : obj_(obj), where_(std::move(where)), source_(source) {
    if (!obj_.is_object()) fail(where_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const Json::exception& e) {
      fail(where_ + "." + key, e.what());
    }
  }

  // A single string is accepted where a list of paths is expected.
  void get_paths(const char* key, std::vector<std::string>& out) {
    seen_.push_back(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_string()) {
      out = {it->get<std::string>()};
      return;
    }
    try {
      out = it->get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
      fail(where_ + "." + key, e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.push_back(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        fail(where_ + "." + key, "unknown key");
      }
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw FormatError(source_ + ": " + key + ": " + why);
  }

private:
  const Json& obj_;
  std::string where_;
  const std::string& source_;
  std::vector<std::string> seen_;
};

}  // namespace

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

ExperimentConfig config_from_json(std::string_view text, const std::string& source) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(source + ": " + e.what());
  }
  ExperimentConfig c;
  Reader top(root, "config", source);
  if (const Json* d = top.child("dataset")) {
    Reader r(*d, "dataset", source);
    r.get("kind", c.dataset.kind);
    r.get_paths("train_images", c.dataset.train_images);
    r.get_paths("train_labels", c.dataset.train_labels);
    r.get_paths("test_images", c.dataset.test_images);
    r.get_paths("test_labels", c.dataset.test_labels);
    r.get("n_train", c.dataset.n_train);
    r.get("n_val", c.dataset.n_val);
    r.get("n_test", c.dataset.n_test);
    r.get("repeats", c.dataset.repeats);
    r.finish();
  }
  if (const Json* g = top.child("grid")) {
    Reader r(*g, "grid", source);
    r.get("q", c.grid.q);
    r.get("depth", c.grid.depth);
    r.get("sigma_b2", c.grid.sigma_b2);
    r.get("sigma_w2", c.grid.sigma_w2);
    r.finish();
  }
  if (const Json* t = top.child("table")) {
    Reader r(*t, "table", source);
    if (const Json* paths = r.child("paths")) {
      if (!paths->is_object()) r.fail("table.paths", "expected an object of q -> path");
      for (const auto& [key, value] : paths->items()) {
        int q = 0;
        try {
          std::size_t used = 0;
          q = std::stoi(key, &used);
          if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
          r.fail("table.paths." + key, "key must be an integer q");
        }
        if (!value.is_string()) r.fail("table.paths." + key, "expected a path string");
        c.table.paths[q] = value.get<std::string>();
      }
    }
    r.get("n_rho", c.table.n_rho);
    r.get("r_max", c.table.r_max);
    r.get("n_grid", c.table.n_grid);
    std::string scheme(to_string(c.table.scheme));
    r.get("scheme", scheme);
    try {
      c.table.scheme = parse_scheme(scheme);
    } catch (const std::exception& e) {
      r.fail("table.scheme", e.what());
    }
    r.finish();
  }
  top.get("noise0", c.noise0);
  top.get("seed", c.seed);
  top.get("output", c.output);
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str(), path);
}

// ---------------------------------------------------------------- grid

std::vector<GridCell> enumerate_cells(const GridSpec& grid, std::size_t budget) {
  std::vector<GridCell> cells;
  cells.reserve(grid.size());
  for (int q : grid.q) {
    for (int depth : grid.depth) {
      for (double sb : grid.sigma_b2) {
        for (double sw : grid.sigma_w2) {
          if (budget > 0 && cells.size() == budget) return cells;
          cells.push_back({cells.size(), q, depth, sb, sw});
        }
      }
    }
  }
  return cells;
}

LoadedData load_data(const DatasetSpec& spec) {
  auto one = [](const std::vector<std::string>& v, const char* what) -> const std::string& {
    if (v.size() != 1) throw UsageError(std::string("exactly one ") + what + " path required");
    return v.front();
  };
  auto paths = [](const std::vector<std::string>& v) {
    return std::vector<std::filesystem::path>(v.begin(), v.end());
  };
  LoadedData data;
  const bool has_test = !spec.test_images.empty();
  if (spec.kind == "mnist") {
    data.pool = load_mnist(one(spec.train_images, "train-images"), one(spec.train_labels, "train-labels"));
    if (has_test) {
      data.test = load_mnist(one(spec.test_images, "test-images"), one(spec.test_labels, "test-labels"));
    }
  } else if (spec.kind == "cifar10") {
    data.pool = load_cifar10(paths(spec.train_images));
    if (has_test) data.test = load_cifar10(paths(spec.test_images));
  } else if (spec.kind == "csv") {
    data.pool = load_dataset_csv(one(spec.train_images, "train-images"));
    if (has_test) {
      data.test = load_dataset_csv(one(spec.test_images, "test-images"));
      const int c = std::max(data.pool.n_classes, data.test->n_classes);
      data.pool.n_classes = c;
      data.test->n_classes = c;
    }
  } else {
    throw UsageError("unknown dataset kind '" + spec.kind + "'");
  }
  if (data.test && data.test->dim() != data.pool.dim()) {
    throw FormatError("test inputs have dimension " + std::to_string(data.test->dim()) +
                      ", training inputs " + std::to_string(data.pool.dim()));
  }
  if (data.test && spec.n_test > 0) {
    const std::size_t n = std::min<std::size_t>(spec.n_test, data.test->size());
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    data.test = data.test->subset(rows, "first " + std::to_string(n));
  }
  return data;
}

const FqTable& TableProvider::get(int q) {
  if (auto it = tables_.find(q); it != tables_.end()) return *it->second;
  std::unique_ptr<FqTable> table;
  if (auto it = spec_.paths.find(q); it != spec_.paths.end()) {
    table = std::make_unique<FqTable>(load_table(it->second));
    if (table->q() != q) {
      throw UsageError("table " + it->second + " has q=" + std::to_string(table->q()) +
                       ", expected q=" + std::to_string(q));
    }
  } else {
    table = std::make_unique<FqTable>(build_table(
        q, spec_.n_rho, QuadratureGrid(spec_.r_max, spec_.n_grid), spec_.scheme, exec_));
  }
  return *tables_.emplace(q, std::move(table)).first->second;
}

// ---------------------------------------------------------------- pipeline

CellResult evaluate_cell(const GridCell& cell, const LoadedData& data, const DatasetSpec& spec,
                         const FqTable& table, double noise0, std::uint64_t seed, Execution exec) {
  if (table.q() != cell.q) {
    throw UsageError("table q=" + std::to_string(table.q()) + " but cell q=" + std::to_string(cell.q));
  }
  const KernelParams params{cell.q, cell.depth, cell.sigma_b2, cell.sigma_w2};
  params.validate();
  CellResult out;
  out.cell = cell;
  const std::uint64_t cell_seed = derive_seed(seed, cell.index);
  double val_sum = 0.0;
  double test_sum = 0.0;
  for (int r = 0; r < spec.repeats; ++r) {
    RepeatResult rep;
    rep.repeat = r;
    rep.seed = derive_seed(cell_seed, static_cast<std::uint64_t>(r));
    try {
      const auto [train, val] = split(data.pool, spec.n_train, spec.n_val, rep.seed);
      const Matrix K = kernel_matrix(train.inputs, params, table, exec).values;
      const JitteredCholesky factor = solve_with_jitter(K, noise0);
      const Matrix alpha = factor.solve(encode_targets(train.labels, data.pool.n_classes));
      rep.noise_used = factor.noise_used();
      rep.escalations = factor.escalations();
      if (val.size() > 0) {
        const Matrix mean = kernel_matrix(val.inputs, train.inputs, params, table, exec).values * alpha;
        rep.val_accuracy = accuracy(predict_classes(mean), val.labels);
        val_sum += *rep.val_accuracy;
      }
      if (data.test) {
        const Matrix mean =
            kernel_matrix(data.test->inputs, train.inputs, params, table, exec).values * alpha;
        rep.test_accuracy = accuracy(predict_classes(mean), data.test->labels);
        test_sum += *rep.test_accuracy;
      }
    } catch (const ConditioningError& e) {
      out.ok = false;
      out.error = e.what();
    } catch (const DegenerateInputError& e) {
      out.ok = false;
      out.error = e.what();
    } catch (const DomainError& e) {
      out.ok = false;
      out.error = e.what();
    }
    out.repeats.push_back(rep);
    if (!out.ok) break;
  }
  if (out.ok) {
    if (spec.n_val > 0) out.mean_val = val_sum / spec.repeats;
    if (data.test) out.mean_test = test_sum / spec.repeats;
  }
  return out;
}

GridReport run_gridsearch(const ExperimentConfig& config, const LoadedData& data,
                          TableProvider& tables, std::size_t budget, Execution exec,
                          const CellCallback& progress) {
  config.validate();
  GridReport report;
  report.config = config;
  report.budget = budget;
  for (const GridCell& cell : enumerate_cells(config.grid, budget)) {
    report.cells.push_back(evaluate_cell(cell, data, config.dataset, tables.get(cell.q),
                                         config.noise0, config.seed, exec));
    if (progress) progress(report.cells.back());
  }
  report.ranking.resize(report.cells.size());
  for (std::size_t i = 0; i < report.ranking.size(); ++i) report.ranking[i] = i;
  std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](std::size_t a, std::size_t b) {
    const auto sa = report.cells[a].score();
    const auto sb = report.cells[b].score();
    if (sa && sb) return *sa > *sb;
    return sa.has_value() && !sb.has_value();
  });
  return report;
}

namespace {

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

int max_escalations(const CellResult& c) {
  int m = 0;
  for (const auto& r : c.repeats) m = std::max(m, r.escalations);
  return m;
}

Json cell_json(const CellResult& c) {
  Json reps = Json::array();
  for (const RepeatResult& r : c.repeats) {
    reps.push_back({{"repeat", r.repeat},
                    {"seed", r.seed},
                    {"validation_accuracy", optional_json(r.val_accuracy)},
                    {"test_accuracy", optional_json(r.test_accuracy)},
                    {"noise_used", r.noise_used},
                    {"escalations", r.escalations}});
  }
  Json j{{"index", c.cell.index},
         {"q", c.cell.q},
         {"depth", c.cell.depth},
         {"sigma_b2", c.cell.sigma_b2},
         {"sigma_w2", c.cell.sigma_w2},
         {"status", c.ok ? "ok" : "failed"},
         {"mean_validation_accuracy", optional_json(c.mean_val)},
         {"mean_test_accuracy", optional_json(c.mean_test)},
         {"max_escalations", max_escalations(c)},
         {"repeats", reps}};
  if (!c.ok) j["error"] = c.error;
  return j;
}

std::string opt_csv(const std::optional<double>& v) { return v ? format_real17(*v) : ""; }

}  // namespace

std::string gridsearch_report_json(const GridReport& report) {
  Json cells = Json::array();
  for (const CellResult& c : report.cells) cells.push_back(cell_json(c));
  Json ranking = Json::array();
  for (std::size_t i : report.ranking) ranking.push_back(report.cells[i].cell.index);
  Json best = nullptr;
  if (!report.ranking.empty() && report.cells[report.ranking.front()].score()) {
    best = cell_json(report.cells[report.ranking.front()]);
  }
  Json j{{"command", "gridsearch"},
         {"config", config_json(report.config)},
         {"budget", report.budget > 0 ? Json(report.budget) : Json(nullptr)},
         {"n_cells", report.cells.size()},
         {"cells", cells},
         {"ranking", ranking},
         {"best", best}};
  return j.dump(2) + "\n";
}

std::string infer_report_json(const ExperimentConfig& config, const CellResult& cell) {
  Json j{{"command", "infer"}, {"config", config_json(config)}, {"cell", cell_json(cell)}};
  return j.dump(2) + "\n";
}

std::string ranked_csv(const GridReport& report) {
  std::ostringstream out;
  out << "rank,index,q,depth,sigma_b2,sigma_w2,status,mean_val_accuracy,mean_test_accuracy,"
         "max_escalations\n";
  for (std::size_t r = 0; r < report.ranking.size(); ++r) {
    const CellResult& c = report.cells[report.ranking[r]];
    out << r + 1 << ',' << c.cell.index << ',' << c.cell.q << ',' << c.cell.depth << ','
        << format_real17(c.cell.sigma_b2) << ',' << format_real17(c.cell.sigma_w2) << ','
        << (c.ok ? "ok" : "failed") << ',' << opt_csv(c.mean_val) << ',' << opt_csv(c.mean_test)
        << ',' << max_escalations(c) << '\n';
  }
  return out.str();
}

}  // namespace mnngp
