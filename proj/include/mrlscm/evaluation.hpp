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

// Model evaluation: nearest-training-sample test-grid assignment, masked
// dB-domain mean absolute RSRP error, and JSON persistence for fitted grid
// models and evaluation reports.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrlscm/grid_builder.hpp"
#include "mrlscm/io_json.hpp"

namespace mrlscm {

/// Each test sample goes to the grid owning its nearest training sample
/// (squared planar distance); exact ties resolve to the lowest grid index.
inline std::vector<int> assign_test_grids(const Eigen::MatrixXd& test_locations,
                                          const Eigen::MatrixXd& train_locations,
                                          const std::vector<int>& train_assignment, int k) {
    if (k < 1) throw std::invalid_argument("assign_test_grids: need at least one grid");
    if (test_locations.cols() != 2 || train_locations.cols() != 2)
        throw std::invalid_argument("assign_test_grids: location shape mismatch");
    if (train_locations.rows() != static_cast<Eigen::Index>(train_assignment.size()))
        throw std::invalid_argument("assign_test_grids: training assignment size mismatch");
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int g : train_assignment) {
        if (g < 0 || g >= k) throw std::invalid_argument("assign_test_grids: grid index out of range");
        ++counts[static_cast<size_t>(g)];
    }
    for (int g = 0; g < k; ++g)
        if (counts[static_cast<size_t>(g)] == 0)
            throw std::invalid_argument("assign_test_grids: grid " + std::to_string(g) + " has no training samples");

    std::vector<int> out(static_cast<size_t>(test_locations.rows()), 0);
    std::vector<double> dmin(static_cast<size_t>(k));
    for (Eigen::Index i = 0; i < test_locations.rows(); ++i) {
        std::fill(dmin.begin(), dmin.end(), std::numeric_limits<double>::infinity());
        for (Eigen::Index j = 0; j < train_locations.rows(); ++j) {
            const double d = (test_locations.row(i) - train_locations.row(j)).squaredNorm();
            auto& slot = dmin[static_cast<size_t>(train_assignment[static_cast<size_t>(j)])];
            slot = std::min(slot, d);
        }
        int best = 0;
        for (int g = 1; g < k; ++g)
            if (dmin[static_cast<size_t>(g)] < dmin[static_cast<size_t>(best)]) best = g;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

/// One populated grid's contribution to the error average.
struct GridMaeStat {
    int grid = 0;
    int samples = 0;
    double mae_db = 0.0;
};

/// K-average of per-grid mean absolute dB errors; grids without samples are
/// dropped from the average and counted instead.
struct MaeSummary {
    double mae_db = 0.0;
    std::vector<GridMaeStat> per_grid;
    int skipped_grids = 0;
};

namespace detail {

/// Mean absolute error in dB between per-grid predicted RSRP and the
/// measured beams: per sample, masked beams are skipped and the beam count
/// shrinks accordingly; samples average within grids, grids average equally.
inline MaeSummary masked_mae(const std::vector<ApsEstimate>& aps, int k, const std::vector<int>& assignment,
                             const std::vector<MRSample>& samples, const MeasurementMatrix& a) {
    if (static_cast<int>(aps.size()) != k) throw std::invalid_argument("masked_mae: spectrum count mismatch");
    if (assignment.size() != samples.size()) throw std::invalid_argument("masked_mae: assignment size mismatch");
    if (samples.empty()) throw std::invalid_argument("masked_mae: no samples");

    Eigen::MatrixXd pred_db(a.m(), k);
    {
        const Eigen::MatrixXd pred = grid_predictions(a, aps);
        for (Eigen::Index b = 0; b < pred.rows(); ++b)
            for (int g = 0; g < k; ++g) pred_db(b, g) = linear_to_dbm(std::max(pred(b, g), kMissingLinear));
    }

    std::vector<double> grid_sum(static_cast<size_t>(k), 0.0);
    std::vector<int> grid_count(static_cast<size_t>(k), 0);
    for (size_t i = 0; i < samples.size(); ++i) {
        const MRSample& s = samples[i];
        if (s.m() != a.m()) throw std::invalid_argument("masked_mae: beam count mismatch");
        const int g = assignment[i];
        if (g < 0 || g >= k) throw std::invalid_argument("masked_mae: grid index out of range");
        double abs_sum = 0.0;
        int valid = 0;
        for (int b = 0; b < s.m(); ++b) {
            if (s.serving_mask(b) == 0) continue;
            abs_sum += std::abs(pred_db(b, g) - s.serving_rsrp(b));
            ++valid;
        }
        grid_sum[static_cast<size_t>(g)] += abs_sum / static_cast<double>(valid);
        ++grid_count[static_cast<size_t>(g)];
    }

    MaeSummary out;
    double total = 0.0;
    for (int g = 0; g < k; ++g) {
        if (grid_count[static_cast<size_t>(g)] == 0) {
            ++out.skipped_grids;
            continue;
        }
        GridMaeStat stat;
        stat.grid = g;
        stat.samples = grid_count[static_cast<size_t>(g)];
        stat.mae_db = grid_sum[static_cast<size_t>(g)] / static_cast<double>(stat.samples);
        total += stat.mae_db;
        out.per_grid.push_back(stat);
    }
    out.mae_db = total / static_cast<double>(out.per_grid.size());
    return out;
}

}  // namespace detail

inline MaeSummary train_mae(const GridModel& model, const std::vector<MRSample>& samples,
                            const MeasurementMatrix& a) {
    return detail::masked_mae(model.aps, model.k, model.assignment, samples, a);
}

inline MaeSummary test_mae(const GridModel& model, const std::vector<MRSample>& test_samples,
                           const std::vector<int>& test_assignment, const MeasurementMatrix& a_prime) {
    return detail::masked_mae(model.aps, model.k, test_assignment, test_samples, a_prime);
}

inline MaeSummary test_mae(const GridModel& model, const std::vector<MRSample>& test_samples,
                           const Eigen::MatrixXd& test_locations, const Eigen::MatrixXd& train_locations,
                           const MeasurementMatrix& a_prime) {
    const auto assignment = assign_test_grids(test_locations, train_locations, model.assignment, model.k);
    return test_mae(model, test_samples, assignment, a_prime);
}

/// Fitted model plus everything needed to evaluate it later: the training
/// locations feed the test-grid assignment, the report documents the fit.
struct ModelFile {
    GridModel model;
    Eigen::MatrixXd train_locations;
    FitReport report;
};

inline json model_file_to_json(const ModelFile& f) {
    f.model.validate();
    if (f.train_locations.rows() != static_cast<Eigen::Index>(f.model.assignment.size()) ||
        f.train_locations.cols() != 2)
        throw std::invalid_argument("model_file_to_json: training location shape mismatch");
    if (static_cast<int>(f.model.aps.size()) != f.model.k)
        throw std::invalid_argument("model_file_to_json: spectrum count mismatch");

    json grids = json::array();
    for (int g = 0; g < f.model.k; ++g) {
        const auto& est = f.model.aps[static_cast<size_t>(g)];
        json aps = json::array();
        for (int j : est.support) aps.push_back(json::array({j, est.x(j)}));
        grids.push_back(json{{"centroid", {f.model.centroids(g, 0), f.model.centroids(g, 1)}}, {"aps", aps}});
    }
    json locs = json::array();
    for (Eigen::Index i = 0; i < f.train_locations.rows(); ++i)
        locs.push_back(json::array({f.train_locations(i, 0), f.train_locations(i, 1)}));
    json trace = json::array();
    for (const auto& s : f.report.trace)
        trace.push_back(json{{"data_term", s.data_term},
                             {"location_term", s.location_term},
                             {"total", s.total},
                             {"nonempty_grids", s.nonempty_grids}});
    return json{{"k", f.model.k},
                {"beta", f.model.beta},
                {"n_a", f.model.aps.empty() ? 0 : static_cast<int>(f.model.aps.front().x.size())},
                {"assignments", f.model.assignment},
                {"grids", grids},
                {"train_locations", locs},
                {"objective_trace", trace},
                {"iterations", f.report.iterations},
                {"reseed_events", f.report.reseed_events}};
}

inline ModelFile model_file_from_json(const json& j) {
    ModelFile f;
    f.model.k = j.at("k");
    f.model.beta = j.at("beta");
    const int n_a = j.at("n_a");
    f.model.assignment = j.at("assignments").get<std::vector<int>>();
    const auto& grids = j.at("grids");
    if (static_cast<int>(grids.size()) != f.model.k)
        throw std::invalid_argument("model_file_from_json: grid count mismatch");
    f.model.centroids.resize(f.model.k, 2);
    f.model.aps.resize(static_cast<size_t>(f.model.k));
    for (int g = 0; g < f.model.k; ++g) {
        const auto& gj = grids.at(static_cast<size_t>(g));
        f.model.centroids(g, 0) = gj.at("centroid").at(0);
        f.model.centroids(g, 1) = gj.at("centroid").at(1);
        auto& est = f.model.aps[static_cast<size_t>(g)];
        est.x = Eigen::VectorXd::Zero(n_a);
        for (const auto& pair : gj.at("aps")) {
            const int idx = pair.at(0);
            const double power = pair.at(1);
            if (idx < 0 || idx >= n_a) throw std::invalid_argument("model_file_from_json: angle index out of range");
            if (!(power >= 0.0)) throw std::invalid_argument("model_file_from_json: negative power");
            est.x(idx) = power;
            est.support.push_back(idx);
        }
    }
    const auto& locs = j.at("train_locations");
    f.train_locations.resize(static_cast<Eigen::Index>(locs.size()), 2);
    for (Eigen::Index i = 0; i < f.train_locations.rows(); ++i) {
        f.train_locations(i, 0) = locs.at(static_cast<size_t>(i)).at(0);
        f.train_locations(i, 1) = locs.at(static_cast<size_t>(i)).at(1);
    }
    for (const auto& sj : j.value("objective_trace", json::array())) {
        FitIterationStat s;
        s.data_term = sj.at("data_term");
        s.location_term = sj.at("location_term");
        s.total = sj.at("total");
        s.nonempty_grids = sj.at("nonempty_grids");
        f.report.trace.push_back(s);
    }
    f.report.iterations = j.value("iterations", 0);
    f.report.reseed_events = j.value("reseed_events", 0);
    f.model.validate();
    if (f.train_locations.rows() != static_cast<Eigen::Index>(f.model.assignment.size()))
        throw std::invalid_argument("model_file_from_json: training location count mismatch");
    return f;
}

inline void save_model(const ModelFile& f, const std::string& path) { save_json(model_file_to_json(f), path); }
inline ModelFile load_model(const std::string& path) { return model_file_from_json(load_json(path)); }

/// Scalar metrics plus per-grid diagnostics of one evaluation run. Fields
/// stay absent until the corresponding data was actually evaluated.
struct EvalReport {
    std::optional<double> train_mae_db;
    std::optional<double> test_mae_db;
    std::optional<double> mean_distance_error_m;
    std::vector<GridMaeStat> train_grids;
    std::vector<GridMaeStat> test_grids;
    int train_skipped_grids = 0;
    int test_skipped_grids = 0;

    void validate() const {
        for (const auto& v : {train_mae_db, test_mae_db, mean_distance_error_m})
            if (v && !(std::isfinite(*v) && *v >= 0.0))
                throw std::runtime_error("EvalReport: metric must be finite and nonnegative");
    }
};

inline json eval_report_to_json(const EvalReport& r) {
    r.validate();
    auto stats = [](const std::vector<GridMaeStat>& v) {
        json out = json::array();
        for (const auto& s : v)
            out.push_back(json{{"grid", s.grid}, {"samples", s.samples}, {"mae_db", s.mae_db}});
        return out;
    };
    json j = json::object();
    if (r.train_mae_db) j["train_mae_db"] = *r.train_mae_db;
    if (r.test_mae_db) j["test_mae_db"] = *r.test_mae_db;
    if (r.mean_distance_error_m) j["mean_distance_error_m"] = *r.mean_distance_error_m;
    j["train_grids"] = stats(r.train_grids);
    j["test_grids"] = stats(r.test_grids);
    j["train_skipped_grids"] = r.train_skipped_grids;
    j["test_skipped_grids"] = r.test_skipped_grids;
    return j;
}

}  // namespace mrlscm
