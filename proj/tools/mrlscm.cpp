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

// Command surface. Every subcommand reads and writes the documented file
// formats; exit code 0 means all stages succeeded.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mrlscm/pipeline.hpp"

namespace {

using namespace mrlscm;

std::vector<double> parse_components(const std::string& text, size_t n, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ',')) {
        size_t used = 0;
        out.push_back(std::stod(field, &used));
        if (used != field.size()) throw CLI::ValidationError(flag, "bad number '" + field + "'");
    }
    if (out.size() != n)
        throw CLI::ValidationError(flag, "expected " + std::to_string(n) + " comma-separated values");
    return out;
}

Eigen::Vector2d parse_vec2(const std::string& text, const std::string& flag) {
    auto v = parse_components(text, 2, flag);
    return {v[0], v[1]};
}

Eigen::Vector3d parse_vec3(const std::string& text, const std::string& flag) {
    auto v = parse_components(text, 3, flag);
    return {v[0], v[1], v[2]};
}

// ybar.csv: per-beam masked mean received power in linear milliwatt plus the
// count of reports the mean was taken over (0 marks a fully missing beam).
std::pair<Eigen::VectorXd, Eigen::VectorXi> read_ybar_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(is, line) ||
        detail::split_csv_line(line) != std::vector<std::string>{"beam", "mean_linear_mw", "valid"})
        throw std::runtime_error(path + ": expected header beam,mean_linear_mw,valid");
    std::vector<double> mean;
    std::vector<int> valid;
    size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 3) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad field count");
        if (detail::parse_double(fields[0], path, line_no) != static_cast<double>(mean.size()))
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": beam index out of order");
        mean.push_back(detail::parse_double(fields[1], path, line_no));
        valid.push_back(static_cast<int>(detail::parse_double(fields[2], path, line_no)));
        if (mean.back() < 0.0 || valid.back() < 0)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": negative power or count");
    }
    if (mean.empty()) throw std::runtime_error(path + ": no beams");
    Eigen::VectorXd y(static_cast<Eigen::Index>(mean.size()));
    Eigen::VectorXi v(static_cast<Eigen::Index>(valid.size()));
    for (size_t i = 0; i < mean.size(); ++i) {
        y(static_cast<Eigen::Index>(i)) = mean[i];
        v(static_cast<Eigen::Index>(i)) = valid[i];
    }
    return {std::move(y), std::move(v)};
}

void write_aps_csv(const ApsEstimate& est, const AngularGrid& grid, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "angle_index,tilt_deg,azimuth_deg,power_linear\n";
    std::vector<int> support = est.support;
    std::sort(support.begin(), support.end());
    for (int j : support)
        os << j << "," << detail::format_double(grid.tilt_of(j)) << "," << detail::format_double(grid.azimuth_of(j))
           << "," << detail::format_double(est.x(j)) << "\n";
    if (!os) throw std::runtime_error("write failed for " + path);
}

void add_matrix_command(CLI::App& app) {
    auto cmd = app.add_subcommand("matrix", "Build the beam response matrix for a channel config");
    auto config = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--config", *config, "channel config JSON (antenna, codebook, angular grid)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", *out, "output matrix file")->required();
    cmd->callback([config, out] {
        ChannelConfig cfg = channel_config_from_json(load_json(*config));
        MeasurementMatrix mat = build_measurement_matrix(cfg.antenna, cfg.codebook, cfg.grid);
        write_matrix_bin(*out, mat);
        std::cout << "wrote " << *out << " (" << mat.m() << " beams x " << mat.n_a() << " angles)\n";
    });
}

void add_gen_command(CLI::App& app) {
    auto cmd = app.add_subcommand("gen", "Generate a synthetic measurement report dataset");
    struct Args {
        std::string scenario, out, out_test, out_matrix, out_matrix_test;
        std::uint64_t seed = 1;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--scenario", a->scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a->out, "training report CSV")->required();
    cmd->add_option("--out-test", a->out_test, "test report CSV")->required();
    cmd->add_option("--seed", a->seed, "dataset seed");
    cmd->add_option("--out-matrix", a->out_matrix, "also write the training beam matrix");
    cmd->add_option("--out-matrix-test", a->out_matrix_test, "also write the test beam matrix");
    cmd->callback([a] {
        Scenario sc = load_scenario(a->scenario);
        Dataset ds = generate_dataset(sc, a->seed);
        write_csv(ds.train, a->out);
        write_csv(ds.test, a->out_test);
        if (!a->out_matrix.empty()) write_matrix_bin(a->out_matrix, ds.matrix_train);
        if (!a->out_matrix_test.empty()) write_matrix_bin(a->out_matrix_test, ds.matrix_test);
        std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size() << " test reports\n";
    });
}

void add_localize_command(CLI::App& app) {
    auto cmd = app.add_subcommand("localize", "Predict sample locations with the hypergraph network");
    struct Args {
        std::string train, out, checkpoint;
        TrainConfig tc;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--train", a->train, "training report CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--label-fraction", a->tc.label_fraction, "fraction of labeled samples used as supervision");
    cmd->add_option("--k", a->tc.k, "neighbour count for beam hyperedges");
    cmd->add_option("--gamma", a->tc.gamma, "beam-distance mix weight");
    cmd->add_option("--tau", a->tc.tau, "time window in seconds");
    cmd->add_option("--epochs", a->tc.epochs, "training epoch budget");
    cmd->add_option("--learning-rate", a->tc.learning_rate, "gradient step size");
    cmd->add_option("--seed", a->tc.seed, "training seed");
    cmd->add_option("--out", a->out, "predicted location CSV")->required();
    cmd->add_option("--checkpoint", a->checkpoint, "also save the trained parameters");
    cmd->callback([a] {
        auto samples = read_csv(a->train);
        LocalizationResult res = localize_samples(samples, a->tc);
        write_locations_csv(res.locations, a->out);
        if (!a->checkpoint.empty()) save_checkpoint(res.params, a->checkpoint);
        std::cout << "supervised " << res.labeled.size() << "/" << samples.size()
                  << " samples, holdout mean distance error " << detail::format_double(res.mean_distance_error_m)
                  << " m\n";
    });
}

void add_aps_command(CLI::App& app) {
    auto cmd = app.add_subcommand("aps", "Recover a sparse angular power spectrum from beam means");
    struct Args {
        std::string matrix, ybar, config, out;
        std::string centroid = "0,0";
        std::string bs = "0,0,25";
        std::string solver = "gm";
        int c = 6;
        double sigma_theta = 10.0, sigma_phi = 10.0;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--matrix", a->matrix, "beam response matrix")->required()->check(CLI::ExistingFile);
    cmd->add_option("--ybar", a->ybar, "per-beam mean CSV (beam,mean_linear_mw,valid)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--config", a->config, "channel config JSON naming the angular grid")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--centroid", a->centroid, "grid centroid as x,y (geometry-weighted solver)");
    cmd->add_option("--bs", a->bs, "base station location as x,y,height");
    cmd->add_option("--c", a->c, "sparsity budget");
    cmd->add_option("--solver", a->solver, "gm | nnomp | wnomp");
    cmd->add_option("--sigma-theta", a->sigma_theta, "tilt kernel width in degrees");
    cmd->add_option("--sigma-phi", a->sigma_phi, "azimuth kernel width in degrees");
    cmd->add_option("--out", a->out, "spectrum CSV")->required();
    cmd->callback([a] {
        MeasurementMatrix mat = read_matrix_bin(a->matrix);
        ChannelConfig cfg = channel_config_from_json(load_json(a->config));
        if (cfg.grid.n_a() != mat.n_a())
            throw std::runtime_error("config grid has " + std::to_string(cfg.grid.n_a()) +
                                     " angles but the matrix has " + std::to_string(mat.n_a()));
        auto [y, valid] = read_ybar_csv(a->ybar);
        if (y.size() != mat.m())
            throw std::runtime_error("ybar lists " + std::to_string(y.size()) + " beams but the matrix has " +
                                     std::to_string(mat.m()));
        Eigen::VectorXi mask = (valid.array() > 0).cast<int>().matrix();

        ApsEstimate est;
        if (a->solver == "gm") {
            GeometryPrior prior;
            prior.grid_centroid = parse_vec2(a->centroid, "--centroid");
            prior.bs_location = parse_vec3(a->bs, "--bs");
            prior.sigma_theta = a->sigma_theta;
            prior.sigma_phi = a->sigma_phi;
            est = gm_nnomp(y, mask, mat, cfg.grid, prior, a->c);
        } else if (a->solver == "nnomp") {
            est = nnomp(y, mask, mat, a->c);
        } else if (a->solver == "wnomp") {
            est = wnomp(y, mask, mat, a->c);
        } else {
            throw CLI::ValidationError("--solver", "must be gm, nnomp, or wnomp");
        }
        write_aps_csv(est, cfg.grid, a->out);
        std::cout << "selected " << est.support.size() << " angles, residual "
                  << detail::format_double(est.residual_norm) << "\n";
    });
}

void add_fit_command(CLI::App& app) {
    auto cmd = app.add_subcommand("fit", "Cluster reports into grids and fit per-grid spectra");
    struct Args {
        std::string train, locs, matrix, config, out;
        std::string bs = "0,0,25";
        PipelineConfig cfg;
        bool use_true_locations = false;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--train", a->train, "training report CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--locs", a->locs, "predicted location CSV from localize")->check(CLI::ExistingFile);
    cmd->add_flag("--use-true-locations", a->use_true_locations, "take locations from the report labels");
    cmd->add_option("--matrix", a->matrix, "beam response matrix")->required()->check(CLI::ExistingFile);
    cmd->add_option("--config", a->config, "channel config JSON naming the angular grid")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--bs", a->bs, "base station location as x,y,height");
    cmd->add_option("--method", a->cfg.method, "joint | uniform | kmeans-location | kmeans-rsrp");
    cmd->add_option("--solver", a->cfg.solver, "spectrum solver for the baseline methods");
    cmd->add_option("--k", a->cfg.k, "grid count");
    cmd->add_option("--width", a->cfg.width, "cell width in meters for the uniform method");
    cmd->add_option("--c", a->cfg.c, "sparsity budget per grid");
    cmd->add_option("--beta", a->cfg.beta, "location term weight");
    cmd->add_option("--iters", a->cfg.iterations, "alternating fit rounds");
    cmd->add_option("--sigma-theta", a->cfg.sigma_theta, "tilt kernel width in degrees");
    cmd->add_option("--sigma-phi", a->cfg.sigma_phi, "azimuth kernel width in degrees");
    cmd->add_option("--seed", a->cfg.seed, "fit seed");
    cmd->add_option("--out", a->out, "model JSON")->required();
    cmd->callback([a] {
        if (a->locs.empty() && !a->use_true_locations)
            throw CLI::ValidationError("--locs", "required unless --use-true-locations is set");
        auto samples = read_csv(a->train);
        Eigen::MatrixXd locations =
            a->use_true_locations ? true_locations(samples) : read_locations_csv(a->locs);
        if (locations.rows() != static_cast<Eigen::Index>(samples.size()))
            throw std::runtime_error("location rows do not match the report count");
        MeasurementMatrix mat = read_matrix_bin(a->matrix);
        ChannelConfig cfg = channel_config_from_json(load_json(a->config));
        if (cfg.grid.n_a() != mat.n_a())
            throw std::runtime_error("config grid does not match the matrix columns");
        ModelFile mf = fit_grid_model(samples, locations, mat, cfg.grid, parse_vec3(a->bs, "--bs"), a->cfg,
                                      a->cfg.seed);
        save_model(mf, a->out);
        std::cout << "fit " << mf.model.k << " grids over " << samples.size() << " reports, wrote " << a->out
                  << "\n";
    });
}

void add_eval_command(CLI::App& app) {
    auto cmd = app.add_subcommand("eval", "Score a fitted model on held-out reports");
    struct Args {
        std::string model, test, matrix_test, train, matrix, out;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--model", a->model, "model JSON from fit")->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", a->test, "test report CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--matrix-test", a->matrix_test, "beam response matrix of the test codebook")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--train", a->train, "training report CSV (adds the training error)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--matrix", a->matrix, "training beam matrix (with --train)")->check(CLI::ExistingFile);
    cmd->add_option("--out", a->out, "report JSON")->required();
    cmd->callback([a] {
        if (a->train.empty() != a->matrix.empty())
            throw CLI::ValidationError("--train", "needs --matrix and vice versa");
        ModelFile mf = load_model(a->model);
        auto test = read_csv(a->test);
        MeasurementMatrix a_test = read_matrix_bin(a->matrix_test);

        EvalReport report;
        const auto test_summary = test_mae(mf.model, test, true_locations(test), mf.train_locations, a_test);
        report.test_mae_db = test_summary.mae_db;
        report.test_grids = test_summary.per_grid;
        report.test_skipped_grids = test_summary.skipped_grids;
        if (!a->train.empty()) {
            auto train = read_csv(a->train);
            const auto train_summary = train_mae(mf.model, train, read_matrix_bin(a->matrix));
            report.train_mae_db = train_summary.mae_db;
            report.train_grids = train_summary.per_grid;
            report.train_skipped_grids = train_summary.skipped_grids;
        }
        report.validate();
        save_json(eval_report_to_json(report), a->out);
        std::cout << "test MAE " << detail::format_double(*report.test_mae_db) << " dB over "
                  << report.test_grids.size() << " grids, wrote " << a->out << "\n";
    });
}

void add_sweep_command(CLI::App& app) {
    auto cmd = app.add_subcommand("sweep", "Run a grid of pipeline configurations");
    auto spec = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--spec", *spec, "sweep spec JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", *out, "result table CSV")->required();
    cmd->callback([spec, out] {
        SweepSpec parsed = sweep_spec_from_json(load_json(*spec));
        auto rows = run_sweep(parsed);
        write_sweep_csv(rows, *out);
        std::cout << "wrote " << rows.size() << " rows to " << *out << "\n";
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"measurement-report-driven localized statistical channel modeling"};
    app.require_subcommand(1);
    add_matrix_command(app);
    add_gen_command(app);
    add_localize_command(app);
    add_aps_command(app);
    add_fit_command(app);
    add_eval_command(app);
    add_sweep_command(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "mrlscm: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
