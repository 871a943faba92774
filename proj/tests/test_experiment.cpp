#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "mnngp/errors.hpp"
#include "mnngp/experiment.hpp"
#include "test_support.hpp"

using namespace mnngp;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path dir = fs::temp_directory_path() / ("mnngp_exp_" + std::to_string(std::random_device{}()));
  fs::path csv;

  Fixture() {
    fs::create_directories(dir);
    csv = dir / "blobs.csv";
    std::ofstream out(csv);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < 60; ++i) {
      const int label = i % 2;
      out << label;
      for (int j = 0; j < 4; ++j) out << ',' << (label ? 1.0 : -1.0) + u(rng);
      out << '\n';
    }
  }
  ~Fixture() { fs::remove_all(dir); }

  ExperimentConfig config() const {
    ExperimentConfig c;
    c.dataset.kind = "csv";
    c.dataset.train_images = {csv.string()};
    c.dataset.n_train = 30;
    c.dataset.n_val = 20;
    c.dataset.repeats = 3;
    c.grid = {{2}, {3}, {0.1}, {1.5}};
    c.seed = 9;
    return c;
  }
};

}  // namespace

TEST_CASE("default grid matches the published sets") {
  const GridSpec g = GridSpec::published();
  CHECK(g.size() == 1152);
  CHECK(g.q == std::vector<int>{2, 3, 4});
  CHECK(g.depth == std::vector<int>{1, 5, 9, 13, 17, 21});
  REQUIRE(g.sigma_b2.size() == 8);
  REQUIRE(g.sigma_w2.size() == 8);
  CHECK(g.sigma_b2.front() == doctest::Approx(2.0 / 29.0));
  CHECK(g.sigma_b2.back() == 2.0);
  CHECK(g.sigma_w2.front() == 0.1);
  CHECK(g.sigma_w2[1] == doctest::Approx(0.78).epsilon(0.01));
  CHECK(g.sigma_w2.back() == doctest::Approx(4.83).epsilon(0.001));
  CHECK(g.sigma_b2[1] == doctest::Approx(0.34).epsilon(0.02));
}

TEST_CASE("cell enumeration order and budget") {
  const auto cells = enumerate_cells(GridSpec::published());
  REQUIRE(cells.size() == 1152);
  CHECK(cells[0].q == 2);
  CHECK(cells[1].sigma_w2 == GridSpec::published().sigma_w2[1]);
  CHECK(cells[8].sigma_b2 == GridSpec::published().sigma_b2[1]);
  CHECK(cells[64].depth == 5);
  CHECK(cells.back().q == 4);
  for (std::size_t i = 0; i < cells.size(); ++i) CHECK(cells[i].index == i);
  const auto first = enumerate_cells(GridSpec::published(), 16);
  REQUIRE(first.size() == 16);
  CHECK(first[15].sigma_w2 == cells[15].sigma_w2);
}

TEST_CASE("config JSON round trip and strictness") {
  ExperimentConfig c;
  c.dataset.kind = "mnist";
  c.dataset.train_images = {"a", "b"};
  c.table.paths[3] = "t3.txt";
  c.seed = 0xFFFFFFFFFFFFFFF0ULL;
  c.noise0 = 1e-9;
  const std::string text = config_to_json(c);
  const ExperimentConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(back.seed == c.seed);
  CHECK(back.table.paths.at(3) == "t3.txt");

  const ExperimentConfig partial = config_from_json(R"({"dataset": {"train_images": "x.csv"}, "seed": 4})");
  CHECK(partial.dataset.train_images == std::vector<std::string>{"x.csv"});
  CHECK(partial.grid.size() == 1152);
  CHECK(partial.dataset.repeats == 5);

  CHECK_THROWS_AS(config_from_json(R"({"sed": 4})"), FormatError);
  CHECK_THROWS_AS(config_from_json(R"({"grid": {"q": "two"}})"), FormatError);
  CHECK_THROWS_AS(config_from_json(R"({"table": {"paths": {"x": "t"}}})"), FormatError);
  CHECK_THROWS_AS(config_from_json("{"), FormatError);
  try {
    config_from_json(R"({"dataset": {"n_trian": 3}})", "cfg.json");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("dataset.n_trian") != std::string::npos);
    CHECK(std::string(e.what()).find("cfg.json") != std::string::npos);
  }

  ExperimentConfig bad = c;
  bad.grid.depth.clear();
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.dataset.repeats = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.dataset.kind = "svhn";
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("cell evaluation is deterministic and matches a one-cell grid") {
  Fixture f;
  const ExperimentConfig c = f.config();
  const LoadedData data = load_data(c.dataset);
  const FqTable table = testing_support::closed_form_table(501);
  const GridCell cell = enumerate_cells(c.grid).front();
  const CellResult a = evaluate_cell(cell, data, c.dataset, table, c.noise0, c.seed);
  const CellResult b = evaluate_cell(cell, data, c.dataset, table, c.noise0, c.seed, Execution::serial);
  CHECK(infer_report_json(c, a) == infer_report_json(c, b));
  REQUIRE(a.ok);
  CHECK(a.repeats.size() == 3);
  CHECK(*a.mean_val == 1.0);
  CHECK_FALSE(a.mean_test.has_value());
  CHECK(a.repeats[0].seed == derive_seed(derive_seed(9, 0), 0));

  ExperimentConfig cg = c;
  cg.table.n_rho = 201;
  cg.table.n_grid = 401;
  TableProvider tables(cg.table);
  const GridReport report = run_gridsearch(cg, data, tables);
  const auto grid_json = nlohmann::json::parse(gridsearch_report_json(report));
  const auto infer_json = nlohmann::json::parse(
      infer_report_json(cg, evaluate_cell(cell, data, c.dataset, tables.get(2), c.noise0, c.seed)));
  CHECK(grid_json["cells"][0] == infer_json["cell"]);
  CHECK(grid_json["best"] == infer_json["cell"]);
  CHECK(grid_json["config"] == infer_json["config"]);
}

TEST_CASE("failed cells are recorded, ranked last, and do not abort") {
  Fixture f;
  ExperimentConfig c = f.config();
  c.noise0 = 0.0;
  c.grid.sigma_b2 = {0.1, 0.5};
  LoadedData data = load_data(c.dataset);
  const FqTable table = testing_support::closed_form_table(501);
  const GridCell good = enumerate_cells(c.grid)[1];
  LoadedData flat = data;
  flat.pool.inputs.setConstant(0.3);
  const CellResult failed = evaluate_cell(good, flat, c.dataset, table, 0.0, c.seed);
  CHECK_FALSE(failed.ok);
  CHECK_FALSE(failed.score().has_value());
  CHECK(failed.repeats.size() == 1);
  const auto j = nlohmann::json::parse(infer_report_json(c, failed));
  CHECK(j["cell"]["status"] == "failed");
  CHECK(j["cell"]["mean_validation_accuracy"].is_null());
  CHECK(j["cell"]["error"].get<std::string>().find("Cholesky") != std::string::npos);

  GridReport report;
  report.config = c;
  report.cells = {failed, evaluate_cell(good, data, c.dataset, table, 1e-10, c.seed)};
  report.cells[0].cell.index = 0;
  report.ranking = {1, 0};
  const std::string csv = ranked_csv(report);
  CHECK(csv.find("1,1,2,3") != std::string::npos);
  CHECK(csv.find("2,0,2,3") != std::string::npos);
  CHECK(csv.find("failed,,,") != std::string::npos);
}

TEST_CASE("table provider checks q and caches") {
  Fixture f;
  const fs::path path = f.dir / "t2.txt";
  save_table(testing_support::closed_form_table(101), path);
  TableSpec spec;
  spec.paths[3] = path.string();
  TableProvider wrong(spec);
  CHECK_THROWS_AS(wrong.get(3), UsageError);
  spec.paths = {{2, path.string()}};
  TableProvider right(spec);
  const FqTable& t = right.get(2);
  CHECK(&t == &right.get(2));
  CHECK(t.n_rho() == 101);

  ExperimentConfig c = f.config();
  const LoadedData data = load_data(c.dataset);
  const GridCell cell{0, 3, 1, 0.1, 1.0};
  CHECK_THROWS_AS(evaluate_cell(cell, data, c.dataset, t, 1e-10, 0), UsageError);
}

TEST_CASE("datasets with a test set") {
  Fixture f;
  ExperimentConfig c = f.config();
  c.dataset.test_images = {f.csv.string()};
  c.dataset.n_test = 10;
  c.dataset.n_val = 0;
  const LoadedData data = load_data(c.dataset);
  REQUIRE(data.test.has_value());
  CHECK(data.test->size() == 10);
  const CellResult r = evaluate_cell(enumerate_cells(c.grid).front(), data, c.dataset,
                                     testing_support::closed_form_table(501), c.noise0, c.seed);
  CHECK_FALSE(r.mean_val.has_value());
  CHECK(r.mean_test.has_value());
  CHECK(r.score() == r.mean_test);

  c.dataset.kind = "mnist";
  c.dataset.train_labels.clear();
  CHECK_THROWS_AS(load_data(c.dataset), UsageError);
}
