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

// End-to-end pipeline: synthetic data generation, hypergraph localization,
// grid construction, and evaluation, with artifact persistence and flat
// sweep tables. Every stage derives its randomness from the top-level seed.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mrlscm/evaluation.hpp"
#include "mrlscm/hgnn.hpp"
#include "mrlscm/synth_data.hpp"

namespace mrlscm {

/// True planar locations of the samples, one row each.
inline Eigen::MatrixXd true_locations(const std::vector<MRSample>& samples) {
    Eigen::MatrixXd t(static_cast<Eigen::Index>(samples.size()), 2);
    for (size_t i = 0; i < samples.size(); ++i) {
        if (!samples[i].is_labeled) throw std::invalid_argument("true_locations: sample without a location");
        t.row(static_cast<Eigen::Index>(i)) = samples[i].true_location;
    }
    return t;
}

/// locs.csv: one predicted location per sample in dataset order.
inline void write_locations_csv(const Eigen::MatrixXd& locations, const std::string& path) {
    if (locations.cols() != 2) throw std::invalid_argument("write_locations_csv: location shape mismatch");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_locations_csv: cannot open " + path);
    os << "sample_index,pred_x,pred_y\n";
    for (Eigen::Index i = 0; i < locations.rows(); ++i)
        os << i << "," << detail::format_double(locations(i, 0)) << "," << detail::format_double(locations(i, 1))
           << "\n";
    if (!os) throw std::runtime_error("write_locations_csv: write failed for " + path);
}

inline Eigen::MatrixXd read_locations_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_locations_csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || detail::split_csv_line(line) != std::vector<std::string>{"sample_index", "pred_x", "pred_y"})
        throw std::runtime_error(path + ": bad location header");
    std::vector<Eigen::Vector2d> rows;
    size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 3) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad field count");
        if (detail::parse_double(fields[0], path, line_no) != static_cast<double>(rows.size()))
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": sample index out of order");
        rows.emplace_back(detail::parse_double(fields[1], path, line_no),
                          detail::parse_double(fields[2], path, line_no));
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), 2);
    for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i];
    return out;
}

/// Localization output: predicted locations for every sample plus the
/// supervision subset and the held-out mean distance error.
struct LocalizationResult {
    Eigen::MatrixXd locations;
    std::vector<int> labeled;
    double mean_distance_error_m = 0.0;
    std::vector<double> loss_trace;
    HgnnParams params;
};

/// Trains the hypergraph localizer on a deterministic label subset and
/// predicts every sample's location. The error is measured on the samples
/// outside the supervision set (or on all of them when none are held out).
inline LocalizationResult localize_samples(const std::vector<MRSample>& samples, const TrainConfig& cfg) {
    cfg.validate();
    const auto h = build_hypergraph(samples, cfg.k, cfg.gamma, cfg.tau);
    const Eigen::MatrixXd features = stacked_features(samples);
    const Eigen::MatrixXd truth = true_locations(samples);

    LocalizationResult out;
    out.labeled = select_labeled(samples, cfg.label_fraction, derive_seed(cfg.seed, "labels"));
    auto trained = train<float>(h, features, truth, out.labeled, cfg);
    out.locations = predict(h, features, trained.params);
    out.loss_trace = std::move(trained.loss_trace);
    out.params = trained.params.cast<double>();

    std::vector<char> supervised(samples.size(), 0);
    for (int i : out.labeled) supervised[static_cast<size_t>(i)] = 1;
    std::vector<int> holdout;
    for (size_t i = 0; i < samples.size(); ++i)
        if (!supervised[i]) holdout.push_back(static_cast<int>(i));
    out.mean_distance_error_m =
        mean_distance_error(out.locations, truth, holdout.empty() ? out.labeled : holdout);
    return out;
}

/// One full run: scenario, seed, localization settings, and grid method.
struct PipelineConfig {
    Scenario scenario;
    std::uint64_t seed = 1;
    TrainConfig localization;
    bool use_true_locations = false;
    std::string method = "joint";  // joint | uniform | kmeans-location | kmeans-rsrp
    std::string solver;            // spectrum solver; empty picks the method default
    int k = 8;                     // grid count for joint and k-means methods
    double width = 25.0;           // cell width in meters for the uniform method
    int c = 6;
    double beta = 1.0;
    int iterations = 15;
    double sigma_theta = 10.0;
    double sigma_phi = 10.0;
    std::string artifact_dir;  // when nonempty, every stage output lands here

    void validate() const {
        if (method != "joint" && method != "uniform" && method != "kmeans-location" && method != "kmeans-rsrp")
            throw std::invalid_argument("pipeline: unknown method '" + method + "'");
        if (method == "joint" && !solver.empty() && solver != "gm")
            throw std::invalid_argument("pipeline: the joint method always fits geometry-weighted spectra");
        if (!solver.empty() && solver != "gm" && solver != "nnomp" && solver != "wnomp")
            throw std::invalid_argument("pipeline: unknown solver '" + solver + "'");
    }
};

struct PipelineResult {
    Dataset data;
    Eigen::MatrixXd locations;  // locations the grids were built from
    std::vector<int> labeled;   // supervision subset (empty with true locations)
    ModelFile model;
    EvalReport report;
};

namespace detail {

template <typename F>
auto pipeline_stage(const char* stage, F&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("pipeline stage '") + stage + "': " + e.what());
    }
}

}  // namespace detail

/// Grid construction for one method, shared by the pipeline and the CLI.
/// Only the method and numeric knobs of `cfg` are read; the fit seed is
/// passed explicitly.
inline ModelFile fit_grid_model(const std::vector<MRSample>& samples, const Eigen::MatrixXd& locations,
                                const MeasurementMatrix& a, const AngularGrid& grid,
                                const Eigen::Vector3d& bs_location, const PipelineConfig& cfg,
                                std::uint64_t seed) {
    cfg.validate();
    ModelFile mf;
    if (cfg.method == "joint") {
        FitOptions opt;
        opt.k = cfg.k;
        opt.c = cfg.c;
        opt.beta = cfg.beta;
        opt.iterations = cfg.iterations;
        opt.sigma_theta = cfg.sigma_theta;
        opt.sigma_phi = cfg.sigma_phi;
        opt.seed = seed;
        auto [model, report] = fit_joint(samples, locations, a, grid, bs_location, opt);
        mf.model = std::move(model);
        mf.report = std::move(report);
    } else {
        std::vector<int> assignment;
        if (cfg.method == "uniform") {
            assignment = baseline_uniform_grid(locations, cfg.width);
        } else if (cfg.method == "kmeans-location") {
            assignment = baseline_kmeans_location(locations, cfg.k, seed);
        } else {
            assignment = baseline_kmeans_rsrp(samples, cfg.k, seed);
        }
        const std::string solver = cfg.solver.empty() ? "wnomp" : cfg.solver;
        mf.model = build_grid_model(samples, locations, assignment, a, grid, bs_location, solver, cfg.c,
                                    cfg.beta, cfg.sigma_theta, cfg.sigma_phi);
    }
    mf.train_locations = locations;
    return mf;
}

/// Builds the grid model from prepared data and locations, then scores it.
/// The report's distance error is left to the caller.
inline std::pair<ModelFile, EvalReport> fit_and_eval(const PipelineConfig& cfg, const Dataset& ds,
                                                     const Eigen::MatrixXd& locations) {
    cfg.validate();
    ModelFile mf = detail::pipeline_stage("fit", [&] {
        return fit_grid_model(ds.train, locations, ds.matrix_train, cfg.scenario.grid, cfg.scenario.bs_location,
                              cfg, derive_seed(cfg.seed, "fit"));
    });

    EvalReport report;
    detail::pipeline_stage("eval", [&] {
        const auto train_summary = train_mae(mf.model, ds.train, ds.matrix_train);
        report.train_mae_db = train_summary.mae_db;
        report.train_grids = train_summary.per_grid;
        report.train_skipped_grids = train_summary.skipped_grids;

        const Eigen::MatrixXd test_truth = true_locations(ds.test);
        const auto test_summary = test_mae(mf.model, ds.test, test_truth, locations, ds.matrix_test);
        report.test_mae_db = test_summary.mae_db;
        report.test_grids = test_summary.per_grid;
        report.test_skipped_grids = test_summary.skipped_grids;
        report.validate();
        return 0;
    });
    return {std::move(mf), std::move(report)};
}

/// gen -> localize -> fit -> eval; persists every intermediate artifact when
/// an artifact directory is set. Fully reproducible from (config, seed).
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    PipelineResult out;
    detail::pipeline_stage("gen", [&] {
        out.data = generate_dataset(cfg.scenario, cfg.seed);
        return 0;
    });

    if (cfg.use_true_locations) {
        detail::pipeline_stage("localize", [&] {
            out.locations = true_locations(out.data.train);
            return 0;
        });
    } else {
        auto loc = detail::pipeline_stage("localize", [&] {
            TrainConfig tc = cfg.localization;
            tc.seed = derive_seed(cfg.seed, "hgnn");
            return localize_samples(out.data.train, tc);
        });
        out.locations = std::move(loc.locations);
        out.labeled = std::move(loc.labeled);
        out.report.mean_distance_error_m = loc.mean_distance_error_m;
    }

    auto [mf, report] = fit_and_eval(cfg, out.data, out.locations);
    report.mean_distance_error_m = out.report.mean_distance_error_m;
    out.model = std::move(mf);
    out.report = std::move(report);

    if (!cfg.artifact_dir.empty()) {
        detail::pipeline_stage("persist", [&] {
            namespace fs = std::filesystem;
            fs::create_directories(cfg.artifact_dir);
            const auto at = [&](const char* name) { return (fs::path(cfg.artifact_dir) / name).string(); };
            save_scenario(cfg.scenario, at("scenario.json"));
            write_csv(out.data.train, at("train.csv"));
            write_csv(out.data.test, at("test.csv"));
            write_matrix_bin(at("A.bin"), out.data.matrix_train);
            write_matrix_bin(at("Aprime.bin"), out.data.matrix_test);
            write_locations_csv(out.locations, at("locs.csv"));
            save_model(out.model, at("model.json"));
            save_json(eval_report_to_json(out.report), at("report.json"));
            return 0;
        });
    }
    return out;
}

/// Partial TrainConfig overrides from JSON; absent keys keep the defaults.
inline TrainConfig train_config_from_json(const json& j, TrainConfig base = {}) {
    base.gamma = j.value("gamma", base.gamma);
    base.k = j.value("k", base.k);
    base.tau = j.value("tau", base.tau);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.epochs = j.value("epochs", base.epochs);
    base.momentum = j.value("momentum", base.momentum);
    base.label_fraction = j.value("label_fraction", base.label_fraction);
    if (j.contains("hidden_widths")) base.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
    base.activation = j.value("activation", base.activation);
    base.plateau_window = j.value("plateau_window", base.plateau_window);
    base.plateau_tol = j.value("plateau_tol", base.plateau_tol);
    base.validate();
    return base;
}

/// One grid method swept over its size parameter (K, or width for uniform).
struct SweepMethod {
    std::string method;
    std::string solver;
    std::vector<double> params;
};

struct SweepSpec {
    Scenario scenario;
    std::vector<std::uint64_t> seeds = {1};
    std::vector<double> label_fractions = {0.1};
    bool use_true_locations = false;
    std::vector<SweepMethod> methods;
    PipelineConfig base;  // c, beta, iterations, sigma, localization defaults
};

inline SweepSpec sweep_spec_from_json(const json& j) {
    SweepSpec spec;
    if (j.contains("scenario_path")) {
        spec.scenario = load_scenario(j.at("scenario_path").get<std::string>());
    } else {
        spec.scenario = scenario_from_json(j.at("scenario"));
    }
    if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("label_fractions")) spec.label_fractions = j.at("label_fractions").get<std::vector<double>>();
    spec.use_true_locations = j.value("use_true_locations", false);
    spec.base.scenario = spec.scenario;
    spec.base.use_true_locations = spec.use_true_locations;
    spec.base.c = j.value("c", spec.base.c);
    spec.base.beta = j.value("beta", spec.base.beta);
    spec.base.iterations = j.value("iterations", spec.base.iterations);
    spec.base.sigma_theta = j.value("sigma_theta", spec.base.sigma_theta);
    spec.base.sigma_phi = j.value("sigma_phi", spec.base.sigma_phi);
    if (j.contains("localization")) spec.base.localization = train_config_from_json(j.at("localization"));
    for (const auto& mj : j.at("methods")) {
        SweepMethod m;
        m.method = mj.at("method").get<std::string>();
        m.solver = mj.value("solver", std::string());
        const char* key = m.method == "uniform" ? "width" : "k";
        for (const auto& p : mj.at(key)) m.params.push_back(p.get<double>());
        if (m.params.empty()) throw std::invalid_argument("sweep spec: method '" + m.method + "' has no parameters");
        spec.methods.push_back(std::move(m));
    }
    if (spec.methods.empty()) throw std::invalid_argument("sweep spec: no methods");
    if (spec.seeds.empty() || spec.label_fractions.empty())
        throw std::invalid_argument("sweep spec: empty seed or label-fraction list");
    return spec;
}

struct SweepRow {
    std::string method;
    std::string solver;
    double param = 0.0;
    std::uint64_t seed = 0;
    double label_fraction = 0.0;
    EvalReport report;
};

/// Runs every (seed, label fraction, method, parameter) cell. Generation and
/// localization are shared across the methods of one (seed, fraction) pair.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
    std::vector<SweepRow> rows;
    for (std::uint64_t seed : spec.seeds) {
        PipelineConfig cell = spec.base;
        cell.seed = seed;
        Dataset ds = detail::pipeline_stage("gen", [&] { return generate_dataset(spec.scenario, seed); });
        for (double fraction : spec.label_fractions) {
            Eigen::MatrixXd locations;
            double mde = 0.0;
            bool have_mde = false;
            if (spec.use_true_locations) {
                locations = true_locations(ds.train);
            } else {
                auto loc = detail::pipeline_stage("localize", [&] {
                    TrainConfig tc = spec.base.localization;
                    tc.label_fraction = fraction;
                    tc.seed = derive_seed(seed, "hgnn");
                    return localize_samples(ds.train, tc);
                });
                locations = std::move(loc.locations);
                mde = loc.mean_distance_error_m;
                have_mde = true;
            }
            for (const auto& method : spec.methods) {
                for (double param : method.params) {
                    cell.method = method.method;
                    cell.solver = method.solver;
                    if (method.method == "uniform") {
                        cell.width = param;
                    } else {
                        cell.k = static_cast<int>(param);
                    }
                    auto [mf, report] = fit_and_eval(cell, ds, locations);
                    if (have_mde) report.mean_distance_error_m = mde;
                    SweepRow row;
                    row.method = method.method;
                    row.solver = method.solver;
                    row.param = param;
                    row.seed = seed;
                    row.label_fraction = fraction;
                    row.report = std::move(report);
                    rows.push_back(std::move(row));
                }
            }
        }
    }
    return rows;
}

/// Flat table for plotting: one row per sweep cell.
inline void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_sweep_csv: cannot open " + path);
    os << "method,solver,param,seed,label_fraction,train_mae_db,test_mae_db,mean_distance_error_m\n";
    for (const auto& r : rows) {
        os << r.method << "," << r.solver << "," << detail::format_double(r.param) << "," << r.seed << ","
           << detail::format_double(r.label_fraction) << ",";
        auto field = [&](const std::optional<double>& v) {
            if (v) os << detail::format_double(*v);
        };
        field(r.report.train_mae_db);
        os << ",";
        field(r.report.test_mae_db);
        os << ",";
        field(r.report.mean_distance_error_m);
        os << "\n";
    }
    if (!os) throw std::runtime_error("write_sweep_csv: write failed for " + path);
}

}  // namespace mrlscm
