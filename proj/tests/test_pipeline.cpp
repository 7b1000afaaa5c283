// SPDX-License-Identifier: Apache-2.0
//
// mr-lscm -- measurement-report-driven localized statistical channel modeling
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mrlscm/pipeline.hpp"

// Covered tests:
// - Predicted-location CSV: exact round trip, header and row-order rejection
// - True-location extraction and unlabeled-sample rejection
// - Localization smoke run: shapes, supervision subset, holdout error
//   definition, bitwise determinism
// - Full pipeline on true locations: metric presence, trace length,
//   repeat-run JSON equality
// - Artifact persistence: file set, reload equality, byte determinism
// - Method dispatch for the grid baselines and solver overrides; invalid
//   method and solver combinations rejected
// - Stage-tagged error propagation
// - Sweep spec parsing (inline scenario, scenario file, localization
//   overrides), row layout, agreement with single runs, CSV table shape
// - Sweep with localization enabled fills the distance error per fraction

using namespace mrlscm;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

Scenario small_scenario(std::uint64_t seed, int n_calls, int samples_per_call, int n_test_calls) {
    ScenarioOptions opt;
    opt.grid = build_angular_grid(-90.0, 90.0, 6.0, -90.0, 265.0, 15.0);  // coarse grid keeps tests fast
    Scenario sc = generate_scenario({60.0, -100.0, 260.0, 100.0}, 3, 2, seed, opt);
    sc.traffic.n_calls = n_calls;
    sc.traffic.samples_per_call = samples_per_call;
    sc.traffic.n_test_calls = n_test_calls;
    sc.traffic.shadowing_db = 2.0;
    sc.traffic.missing = MissingPolicy::none();
    return sc;
}

TrainConfig small_train_config() {
    TrainConfig tc;
    tc.k = 4;
    tc.epochs = 40;
    tc.hidden_widths = {16, 32};
    tc.label_fraction = 0.5;
    tc.seed = 11;
    return tc;
}

MRSample located_sample(double x, double y, bool labeled) {
    MRSample s;
    s.timestamp = 0.0;
    s.call_id = "c";
    s.serving_cell_id = "cell-0";
    s.serving_rsrp.setConstant(2, -80.0);
    s.serving_mask.setOnes(2);
    s.neighbor_rsrp.resize(0, 2);
    s.neighbor_mask.resize(0, 2);
    s.is_labeled = labeled;
    if (labeled) s.true_location = {x, y};
    s.validate();
    return s;
}

}  // namespace

TEST_CASE("predicted-location csv round trips exactly") {
    Rng rng(3);
    Eigen::MatrixXd locs(17, 2);
    for (Eigen::Index i = 0; i < locs.rows(); ++i) {
        locs(i, 0) = rng.uniform(-500.0, 500.0);
        locs(i, 1) = i % 4 == 0 ? static_cast<double>(i) : rng.uniform(-500.0, 500.0);
    }
    auto path = tmp_path("mrlscm_locs_rt.csv");
    write_locations_csv(locs, path);
    Eigen::MatrixXd back = read_locations_csv(path);
    REQUIRE(back.rows() == locs.rows());
    REQUIRE(back == locs);

    std::string first_line = slurp(path).substr(0, slurp(path).find('\n'));
    REQUIRE(first_line == "sample_index,pred_x,pred_y");
    std::filesystem::remove(path);
}

TEST_CASE("predicted-location csv rejects malformed input") {
    auto path = tmp_path("mrlscm_locs_bad.csv");
    {
        std::ofstream os(path);
        os << "a,b,c\n0,1,2\n";
    }
    REQUIRE_THROWS_WITH(read_locations_csv(path), Catch::Matchers::ContainsSubstring("bad location header"));
    {
        std::ofstream os(path);
        os << "sample_index,pred_x,pred_y\n0,1,2\n2,3,4\n";
    }
    REQUIRE_THROWS_WITH(read_locations_csv(path), Catch::Matchers::ContainsSubstring("sample index out of order"));
    {
        std::ofstream os(path);
        os << "sample_index,pred_x,pred_y\n0,1\n";
    }
    REQUIRE_THROWS_WITH(read_locations_csv(path), Catch::Matchers::ContainsSubstring("bad field count"));
    REQUIRE_THROWS_AS(read_locations_csv(tmp_path("mrlscm_locs_missing.csv")), std::runtime_error);
    REQUIRE_THROWS_AS(write_locations_csv(Eigen::MatrixXd::Zero(2, 3), path), std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("true locations are extracted row by row") {
    std::vector<MRSample> samples = {located_sample(1.0, 2.0, true), located_sample(-3.5, 0.25, true)};
    Eigen::MatrixXd t = true_locations(samples);
    REQUIRE(t.rows() == 2);
    REQUIRE(t(0, 0) == 1.0);
    REQUIRE(t(0, 1) == 2.0);
    REQUIRE(t(1, 0) == -3.5);
    REQUIRE(t(1, 1) == 0.25);

    samples.push_back(located_sample(0.0, 0.0, false));
    REQUIRE_THROWS_AS(true_locations(samples), std::invalid_argument);
}

TEST_CASE("localization predicts every sample and scores the holdout") {
    Scenario sc = small_scenario(21, 4, 8, 2);
    Dataset ds = generate_dataset(sc, 5);
    REQUIRE(ds.train.size() == 32);

    TrainConfig tc = small_train_config();
    LocalizationResult res = localize_samples(ds.train, tc);
    REQUIRE(res.locations.rows() == 32);
    REQUIRE(res.locations.cols() == 2);
    REQUIRE(res.locations.allFinite());
    REQUIRE(res.labeled.size() == 16);
    REQUIRE(std::is_sorted(res.labeled.begin(), res.labeled.end()));
    REQUIRE(!res.loss_trace.empty());
    for (double v : res.loss_trace) REQUIRE(std::isfinite(v));

    // the reported error is the mean over exactly the unsupervised samples
    std::vector<char> supervised(32, 0);
    for (int i : res.labeled) supervised[static_cast<size_t>(i)] = 1;
    std::vector<int> holdout;
    for (int i = 0; i < 32; ++i)
        if (!supervised[static_cast<size_t>(i)]) holdout.push_back(i);
    REQUIRE(holdout.size() == 16);
    REQUIRE(res.mean_distance_error_m ==
            mean_distance_error(res.locations, true_locations(ds.train), holdout));

    LocalizationResult again = localize_samples(ds.train, tc);
    REQUIRE(again.locations == res.locations);
    REQUIRE(again.labeled == res.labeled);
    REQUIRE(again.mean_distance_error_m == res.mean_distance_error_m);

    // with every sample supervised the error falls back to the labeled set
    tc.label_fraction = 1.0;
    LocalizationResult full = localize_samples(ds.train, tc);
    REQUIRE(full.labeled.size() == 32);
    REQUIRE(full.mean_distance_error_m ==
            mean_distance_error(full.locations, true_locations(ds.train), full.labeled));
}

TEST_CASE("pipeline on true locations fills both error metrics") {
    PipelineConfig cfg;
    cfg.scenario = small_scenario(33, 6, 10, 3);
    cfg.seed = 5;
    cfg.use_true_locations = true;
    cfg.method = "joint";
    cfg.k = 3;
    cfg.c = 3;
    cfg.iterations = 3;

    PipelineResult res = run_pipeline(cfg);
    REQUIRE(res.data.train.size() == 60);
    REQUIRE(res.data.test.size() == 30);
    REQUIRE(res.labeled.empty());
    REQUIRE(res.locations == true_locations(res.data.train));
    REQUIRE(res.model.model.k == 3);
    REQUIRE(res.model.report.trace.size() == 4);
    REQUIRE(res.report.train_mae_db.has_value());
    REQUIRE(res.report.test_mae_db.has_value());
    REQUIRE(!res.report.mean_distance_error_m.has_value());
    REQUIRE(*res.report.train_mae_db >= 0.0);
    REQUIRE(*res.report.train_mae_db < 30.0);
    REQUIRE(*res.report.test_mae_db < 40.0);

    PipelineResult again = run_pipeline(cfg);
    REQUIRE(model_file_to_json(again.model).dump() == model_file_to_json(res.model).dump());
    REQUIRE(eval_report_to_json(again.report).dump() == eval_report_to_json(res.report).dump());
}

TEST_CASE("pipeline artifacts are complete, reloadable, and deterministic") {
    PipelineConfig cfg;
    cfg.scenario = small_scenario(33, 4, 8, 2);
    cfg.seed = 7;
    cfg.use_true_locations = true;
    cfg.method = "kmeans-location";
    cfg.k = 3;
    cfg.c = 2;

    const std::string dir_a = tmp_path("mrlscm_pipe_a");
    const std::string dir_b = tmp_path("mrlscm_pipe_b");
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
    cfg.artifact_dir = dir_a;
    PipelineResult res = run_pipeline(cfg);
    cfg.artifact_dir = dir_b;
    run_pipeline(cfg);

    const std::vector<std::string> names = {"scenario.json", "train.csv", "test.csv", "A.bin",
                                            "Aprime.bin",    "locs.csv",  "model.json", "report.json"};
    for (const auto& name : names) {
        const auto pa = dir_a + "/" + name;
        INFO(name);
        REQUIRE(std::filesystem::exists(pa));
        REQUIRE(slurp(pa) == slurp(dir_b + "/" + name));
    }

    ModelFile back = load_model(dir_a + "/model.json");
    REQUIRE(model_file_to_json(back).dump() == model_file_to_json(res.model).dump());
    REQUIRE(read_locations_csv(dir_a + "/locs.csv") == res.locations);
    REQUIRE(read_csv(dir_a + "/train.csv").size() == res.data.train.size());
    Scenario sc_back = load_scenario(dir_a + "/scenario.json");
    REQUIRE(sc_back.digest() == cfg.scenario.digest());

    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("grid methods dispatch to the matching baseline") {
    Scenario sc = small_scenario(44, 5, 8, 2);
    Dataset ds = generate_dataset(sc, 9);
    Eigen::MatrixXd locations = true_locations(ds.train);

    PipelineConfig cfg;
    cfg.scenario = sc;
    cfg.seed = 9;
    cfg.use_true_locations = true;
    cfg.c = 2;

    cfg.method = "uniform";
    cfg.width = 80.0;
    auto [mf_u, rep_u] = fit_and_eval(cfg, ds, locations);
    auto expected = baseline_uniform_grid(locations, 80.0);
    REQUIRE(mf_u.model.assignment == expected);
    REQUIRE(mf_u.model.k == *std::max_element(expected.begin(), expected.end()) + 1);
    REQUIRE(mf_u.report.trace.empty());
    REQUIRE(rep_u.test_mae_db.has_value());

    cfg.method = "kmeans-location";
    cfg.k = 4;
    auto [mf_l, rep_l] = fit_and_eval(cfg, ds, locations);
    REQUIRE(mf_l.model.k == 4);
    REQUIRE(mf_l.model.assignment == baseline_kmeans_location(locations, 4, derive_seed(9, "fit")));

    cfg.method = "kmeans-rsrp";
    auto [mf_r, rep_r] = fit_and_eval(cfg, ds, locations);
    REQUIRE(mf_r.model.k == 4);
    REQUIRE(mf_r.model.assignment == baseline_kmeans_rsrp(ds.train, 4, derive_seed(9, "fit")));

    // an explicit solver reaches the spectrum stage
    cfg.method = "uniform";
    cfg.solver = "nnomp";
    auto [mf_n, rep_n] = fit_and_eval(cfg, ds, locations);
    REQUIRE(mf_n.model.assignment == expected);
    for (const auto& e : mf_n.model.aps) REQUIRE(e.x.minCoeff() >= 0.0);
}

TEST_CASE("invalid configurations are rejected with a stage tag") {
    PipelineConfig cfg;
    cfg.scenario = small_scenario(44, 4, 8, 2);
    cfg.use_true_locations = true;

    cfg.method = "voronoi";
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.method = "joint";
    cfg.solver = "wnomp";
    REQUIRE_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("geometry-weighted"));
    cfg.solver = "lasso";
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);

    // k larger than the training set fails inside the fit stage
    cfg.solver.clear();
    cfg.method = "kmeans-location";
    cfg.k = 10000;
    REQUIRE_THROWS_WITH(run_pipeline(cfg), Catch::Matchers::ContainsSubstring("pipeline stage 'fit'"));
}

TEST_CASE("sweep spec parses inline scenarios and overrides") {
    Scenario sc = small_scenario(55, 4, 8, 2);
    json j;
    j["scenario"] = scenario_to_json(sc);
    j["seeds"] = {1, 2};
    j["label_fractions"] = {0.25};
    j["use_true_locations"] = true;
    j["c"] = 3;
    j["iterations"] = 2;
    j["localization"] = {{"epochs", 50}, {"k", 3}};
    j["methods"] = json::array({json{{"method", "joint"}, {"k", {2, 3}}},
                                json{{"method", "uniform"}, {"width", {70.0}}, {"solver", "nnomp"}}});

    SweepSpec spec = sweep_spec_from_json(j);
    REQUIRE(spec.scenario.digest() == sc.digest());
    REQUIRE(spec.seeds == std::vector<std::uint64_t>{1, 2});
    REQUIRE(spec.use_true_locations);
    REQUIRE(spec.base.c == 3);
    REQUIRE(spec.base.iterations == 2);
    REQUIRE(spec.base.localization.epochs == 50);
    REQUIRE(spec.base.localization.k == 3);
    REQUIRE(spec.base.localization.gamma == 0.5);
    REQUIRE(spec.methods.size() == 2);
    REQUIRE(spec.methods[0].params == std::vector<double>{2.0, 3.0});
    REQUIRE(spec.methods[1].solver == "nnomp");

    json no_methods = j;
    no_methods["methods"] = json::array();
    REQUIRE_THROWS_AS(sweep_spec_from_json(no_methods), std::invalid_argument);
    json empty_params = j;
    empty_params["methods"][0]["k"] = json::array();
    REQUIRE_THROWS_AS(sweep_spec_from_json(empty_params), std::invalid_argument);

    auto sc_path = tmp_path("mrlscm_sweep_scenario.json");
    save_scenario(sc, sc_path);
    json by_path = j;
    by_path.erase("scenario");
    by_path["scenario_path"] = sc_path;
    REQUIRE(sweep_spec_from_json(by_path).scenario.digest() == sc.digest());
    std::filesystem::remove(sc_path);
}

TEST_CASE("sweep rows cover every cell and match single runs") {
    Scenario sc = small_scenario(55, 4, 8, 2);
    json j;
    j["scenario"] = scenario_to_json(sc);
    j["seeds"] = {1, 2};
    j["label_fractions"] = {0.25};
    j["use_true_locations"] = true;
    j["c"] = 2;
    j["iterations"] = 2;
    j["methods"] = json::array({json{{"method", "joint"}, {"k", {2, 3}}},
                                json{{"method", "uniform"}, {"width", {70.0}}}});
    SweepSpec spec = sweep_spec_from_json(j);

    auto rows = run_sweep(spec);
    REQUIRE(rows.size() == 6);
    REQUIRE(rows[0].method == "joint");
    REQUIRE(rows[0].param == 2.0);
    REQUIRE(rows[0].seed == 1);
    REQUIRE(rows[1].param == 3.0);
    REQUIRE(rows[2].method == "uniform");
    REQUIRE(rows[2].param == 70.0);
    REQUIRE(rows[3].seed == 2);
    for (const auto& r : rows) {
        REQUIRE(r.label_fraction == 0.25);
        REQUIRE(r.report.test_mae_db.has_value());
        REQUIRE(!r.report.mean_distance_error_m.has_value());
    }

    // a sweep cell reproduces a standalone pipeline run bit for bit
    PipelineConfig cfg = spec.base;
    cfg.seed = 2;
    cfg.method = "joint";
    cfg.k = 3;
    PipelineResult single = run_pipeline(cfg);
    REQUIRE(rows[4].report.test_mae_db == single.report.test_mae_db);
    REQUIRE(rows[4].report.train_mae_db == single.report.train_mae_db);

    auto csv_path = tmp_path("mrlscm_sweep.csv");
    write_sweep_csv(rows, csv_path);
    std::ifstream is(csv_path);
    std::string line;
    REQUIRE(std::getline(is, line));
    REQUIRE(line == "method,solver,param,seed,label_fraction,train_mae_db,test_mae_db,mean_distance_error_m");
    int data_lines = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++data_lines;
        REQUIRE(std::count(line.begin(), line.end(), ',') == 7);
        REQUIRE(line.back() == ',');  // distance error column is empty here
    }
    REQUIRE(data_lines == 6);
    std::filesystem::remove(csv_path);
}

TEST_CASE("sweep with localization records the distance error per fraction") {
    Scenario sc = small_scenario(66, 4, 8, 2);
    json j;
    j["scenario"] = scenario_to_json(sc);
    j["seeds"] = {1};
    j["label_fractions"] = {0.5, 1.0};
    j["c"] = 2;
    j["localization"] = {{"epochs", 30}, {"k", 3}, {"hidden_widths", {8, 16}}};
    j["methods"] = json::array({json{{"method", "uniform"}, {"width", {100.0}}}});
    SweepSpec spec = sweep_spec_from_json(j);

    auto rows = run_sweep(spec);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].label_fraction == 0.5);
    REQUIRE(rows[1].label_fraction == 1.0);
    for (const auto& r : rows) {
        REQUIRE(r.report.mean_distance_error_m.has_value());
        REQUIRE(*r.report.mean_distance_error_m >= 0.0);
        REQUIRE(r.report.test_mae_db.has_value());
    }
}
