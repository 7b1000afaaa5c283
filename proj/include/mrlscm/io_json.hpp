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
//
// JSON (de)serialization for configuration and scenario files. Kept apart
// from the numeric headers so they stay free of the JSON dependency.

#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "mrlscm/channel_model.hpp"
#include "mrlscm/synth_data.hpp"

namespace mrlscm {

using nlohmann::json;

inline json antenna_to_json(const AntennaConfig& a) {
    return json{{"n_x", a.n_x},
                {"n_y", a.n_y},
                {"d_x", a.d_x},
                {"d_y", a.d_y},
                {"carrier_wavelength", a.carrier_wavelength},
                {"tx_power_mw", a.tx_power},
                {"gain", a.gain_tag}};
}

inline AntennaConfig antenna_from_json(const json& j) {
    AntennaConfig a;
    a.n_x = j.value("n_x", 1);
    a.n_y = j.value("n_y", 1);
    a.d_x = j.value("d_x", 0.5);
    a.d_y = j.value("d_y", 0.5);
    a.carrier_wavelength = j.value("carrier_wavelength", 0.1);
    a.tx_power = j.value("tx_power_mw", 1.0);
    a.gain_tag = j.value("gain", "isotropic");
    if (a.gain_tag == "isotropic") {
        a.gain_pattern = nullptr;
    } else if (a.gain_tag == "parabolic") {
        a.gain_pattern = parabolic_gain_pattern();
    } else {
        throw std::invalid_argument("antenna_from_json: unknown gain pattern '" + a.gain_tag + "'");
    }
    a.validate();
    return a;
}

inline json grid_to_json(const AngularGrid& g) {
    auto triple = [](const std::vector<double>& v) {
        double step = v.size() > 1 ? (v.back() - v.front()) / static_cast<double>(v.size() - 1) : 1.0;
        return json::array({v.front(), v.back(), step});
    };
    return json{{"tilt", triple(g.tilts)}, {"azimuth", triple(g.azimuths)}};
}

inline AngularGrid grid_from_json(const json& j) {
    auto t = j.at("tilt");
    auto a = j.at("azimuth");
    return build_angular_grid(t.at(0), t.at(1), t.at(2), a.at(0), a.at(1), a.at(2));
}

/// Codebooks serialize as raw per-beam phase matrices; a hand-written config
/// may instead give "pointing" angles for steered beams.
inline json codebook_to_json(const BeamCodebook& cb) {
    json beams = json::array();
    for (const auto& ph : cb.phases) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < ph.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < ph.cols(); ++c) row.push_back(ph(r, c));
            rows.push_back(row);
        }
        beams.push_back(rows);
    }
    return json{{"phases", beams}};
}

inline BeamCodebook codebook_from_json(const json& j, const AntennaConfig& antenna) {
    if (j.contains("pointing")) {
        std::vector<std::pair<double, double>> pointing;
        for (const auto& p : j.at("pointing")) pointing.emplace_back(p.at(0), p.at(1));
        return steered_codebook(antenna, pointing);
    }
    BeamCodebook cb;
    for (const auto& beam : j.at("phases")) {
        Eigen::MatrixXd ph(beam.size(), beam.at(0).size());
        for (Eigen::Index r = 0; r < ph.rows(); ++r)
            for (Eigen::Index c = 0; c < ph.cols(); ++c) ph(r, c) = beam.at(r).at(c);
        cb.phases.push_back(std::move(ph));
    }
    if (cb.beam_count() == 0) throw std::invalid_argument("codebook_from_json: empty codebook");
    return cb;
}

/// Inputs of build_measurement_matrix as one config file.
struct ChannelConfig {
    AntennaConfig antenna;
    AngularGrid grid;
    BeamCodebook codebook;
};

inline ChannelConfig channel_config_from_json(const json& j) {
    ChannelConfig c;
    c.antenna = antenna_from_json(j.at("antenna"));
    c.grid = grid_from_json(j.at("grid"));
    c.codebook = codebook_from_json(j.at("codebook"), c.antenna);
    return c;
}

inline json channel_config_to_json(const ChannelConfig& c) {
    return json{{"antenna", antenna_to_json(c.antenna)},
                {"grid", grid_to_json(c.grid)},
                {"codebook", codebook_to_json(c.codebook)}};
}

inline json scenario_to_json(const Scenario& sc) {
    json regions = json::array();
    for (const auto& r : sc.regions) {
        json aps = json::array();
        for (Eigen::Index i = 0; i < r.aps.size(); ++i)
            if (r.aps(i) != 0.0) aps.push_back(json::array({static_cast<int>(i), r.aps(i)}));
        regions.push_back(json{{"center", {r.center.x(), r.center.y()}}, {"radius", r.radius}, {"aps", aps}});
    }
    json neighbors = json::array();
    for (const auto& nb : sc.neighbors) {
        json offs = json::array();
        for (Eigen::Index b = 0; b < nb.beam_offsets_db.size(); ++b) offs.push_back(nb.beam_offsets_db(b));
        neighbors.push_back(json{{"cell_id", nb.cell_id},
                                 {"location", {nb.location.x(), nb.location.y(), nb.location.z()}},
                                 {"eirp_dbm", nb.eirp_dbm},
                                 {"pathloss_exp", nb.pathloss_exp},
                                 {"beam_offsets_db", offs}});
    }
    const auto& t = sc.traffic;
    return json{{"bs", json{{"location", {sc.bs_location.x(), sc.bs_location.y(), sc.bs_location.z()}},
                            {"cell_id", sc.serving_cell_id}}},
                {"area", {sc.area.x0, sc.area.y0, sc.area.x1, sc.area.y1}},
                {"antenna", antenna_to_json(sc.antenna)},
                {"grid", grid_to_json(sc.grid)},
                {"codebook_train", codebook_to_json(sc.codebook_train)},
                {"codebook_test", codebook_to_json(sc.codebook_test)},
                {"regions", regions},
                {"neighbors", neighbors},
                {"traffic", json{{"n_calls", t.n_calls},
                                 {"n_test_calls", t.n_test_calls},
                                 {"samples_per_call", t.samples_per_call},
                                 {"speed", t.speed},
                                 {"report_period", t.report_period},
                                 {"shadowing_db", t.shadowing_db},
                                 {"missing", json{{"threshold_dbm", t.missing.threshold_dbm},
                                                  {"p_weak", t.missing.p_weak},
                                                  {"p_random", t.missing.p_random},
                                                  {"neighbor_p_weak", t.missing.neighbor_p_weak},
                                                  {"neighbor_p_random", t.missing.neighbor_p_random}}}}},
                {"seed", sc.rng_seed}};
}

inline Scenario scenario_from_json(const json& j) {
    Scenario sc;
    const auto& bs = j.at("bs");
    sc.bs_location = Eigen::Vector3d(bs.at("location").at(0).get<double>(), bs.at("location").at(1).get<double>(),
                                     bs.at("location").at(2).get<double>());
    sc.serving_cell_id = bs.value("cell_id", "cell-0");
    const auto& a = j.at("area");
    sc.area = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>(), a.at(3).get<double>()};
    sc.area.validate();
    sc.antenna = antenna_from_json(j.at("antenna"));
    sc.grid = grid_from_json(j.at("grid"));
    sc.codebook_train = codebook_from_json(j.at("codebook_train"), sc.antenna);
    sc.codebook_test = codebook_from_json(j.at("codebook_test"), sc.antenna);
    for (const auto& rj : j.at("regions")) {
        Region r;
        r.center = Eigen::Vector2d(rj.at("center").at(0).get<double>(), rj.at("center").at(1).get<double>());
        r.radius = rj.at("radius");
        r.aps = Eigen::VectorXd::Zero(sc.grid.n_a());
        for (const auto& e : rj.at("aps")) {
            int idx = e.at(0);
            double p = e.at(1);
            if (idx < 0 || idx >= sc.grid.n_a())
                throw std::invalid_argument("scenario_from_json: APS index out of range");
            if (!(p >= 0.0)) throw std::invalid_argument("scenario_from_json: negative APS power");
            r.aps(idx) = p;
        }
        sc.regions.push_back(std::move(r));
    }
    if (sc.regions.empty()) throw std::invalid_argument("scenario_from_json: no regions");
    for (const auto& nj : j.value("neighbors", json::array())) {
        NeighborBS nb;
        nb.cell_id = nj.at("cell_id");
        nb.location = Eigen::Vector3d(nj.at("location").at(0).get<double>(), nj.at("location").at(1).get<double>(),
                                      nj.at("location").at(2).get<double>());
        nb.eirp_dbm = nj.at("eirp_dbm");
        nb.pathloss_exp = nj.at("pathloss_exp");
        const auto& offs = nj.at("beam_offsets_db");
        nb.beam_offsets_db.resize(offs.size());
        for (Eigen::Index b = 0; b < nb.beam_offsets_db.size(); ++b) nb.beam_offsets_db(b) = offs.at(b);
        sc.neighbors.push_back(std::move(nb));
    }
    if (j.contains("traffic")) {
        const auto& tj = j.at("traffic");
        auto& t = sc.traffic;
        t.n_calls = tj.value("n_calls", t.n_calls);
        t.n_test_calls = tj.value("n_test_calls", t.n_test_calls);
        t.samples_per_call = tj.value("samples_per_call", t.samples_per_call);
        t.speed = tj.value("speed", t.speed);
        t.report_period = tj.value("report_period", t.report_period);
        t.shadowing_db = tj.value("shadowing_db", t.shadowing_db);
        if (tj.contains("missing")) {
            const auto& mj = tj.at("missing");
            auto& mp = t.missing;
            mp.threshold_dbm = mj.value("threshold_dbm", mp.threshold_dbm);
            mp.p_weak = mj.value("p_weak", mp.p_weak);
            mp.p_random = mj.value("p_random", mp.p_random);
            mp.neighbor_p_weak = mj.value("neighbor_p_weak", mp.neighbor_p_weak);
            mp.neighbor_p_random = mj.value("neighbor_p_random", mp.neighbor_p_random);
            mp.validate();
        }
    }
    sc.rng_seed = j.value("seed", 0ull);
    return sc;
}

inline json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_json: cannot open " + path);
    json j;
    is >> j;
    return j;
}

inline void save_json(const json& j, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_json: cannot open " + path);
    os << j.dump(2) << "\n";
    if (!os) throw std::runtime_error("save_json: write failed for " + path);
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_json(load_json(path)); }
inline void save_scenario(const Scenario& sc, const std::string& path) { save_json(scenario_to_json(sc), path); }

}  // namespace mrlscm
