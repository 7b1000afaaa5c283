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
// Synthetic ground-truth scenarios and measurement-report rendering. A
// scenario fixes a planar service area, a region partition with one sparse
// angular power spectrum per region, neighbor base stations, and the beam
// codebooks in effect before and after a parameter adjustment. Rendering
// pushes trajectories through y = A x plus log-normal shadowing and a
// missing-value policy, which gives every estimator in this library a known
// ground truth to be tested against.

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mrlscm/channel_model.hpp"
#include "mrlscm/common.hpp"
#include "mrlscm/mr_data.hpp"

namespace mrlscm {

struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    bool contains(const Eigen::Vector2d& p) const {
        return p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1;
    }
    void validate() const {
        if (!(x1 > x0) || !(y1 > y0)) throw std::invalid_argument("Rect: empty area");
    }
};

/// Disc-shaped locale with its ground-truth angular power spectrum. Where
/// discs overlap, the nearest center wins, so large radii make the regions
/// behave as cells of the centers' nearest-neighbor partition.
struct Region {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double radius = 0.0;
    Eigen::VectorXd aps;  // length n_a, >= 0, sparse

    bool contains(const Eigen::Vector2d& p) const { return (p - center).norm() <= radius; }
};

/// Neighbor cell rendered with a plain distance power law instead of a full
/// dictionary; neighbors only serve as extra positioning features.
struct NeighborBS {
    std::string cell_id;
    Eigen::Vector3d location = Eigen::Vector3d::Zero();  // x, y, h meters
    double eirp_dbm = -5.0;                              // dBm at 1 m
    double pathloss_exp = 3.5;
    Eigen::VectorXd beam_offsets_db;                     // length M

    double rsrp_dbm(const Eigen::Vector2d& p, int beam) const {
        double d = std::max(1.0, (p - location.head<2>()).norm());
        return eirp_dbm - 10.0 * pathloss_exp * std::log10(d) + beam_offsets_db(beam);
    }
};

/// Probability model for dropped beams. Beams whose value falls below
/// threshold_dbm are dropped with the weak probability, the rest with the
/// random probability; neighbor beams get their own (typically higher) pair.
struct MissingPolicy {
    double threshold_dbm = -100.0;
    double p_weak = 0.0;
    double p_random = 0.0;
    double neighbor_p_weak = 0.0;
    double neighbor_p_random = 0.0;

    static MissingPolicy none() { return {}; }
    static MissingPolicy typical() { return {-100.0, 0.5, 0.05, 0.85, 0.25}; }

    void validate() const {
        for (double p : {p_weak, p_random, neighbor_p_weak, neighbor_p_random})
            if (!(p >= 0.0) || !(p <= 1.0)) throw std::invalid_argument("MissingPolicy: probabilities must be in [0,1]");
    }
};

/// Trajectory, shadowing, and missing-value parameters stored with the
/// scenario so a dataset can be regenerated from the scenario file alone.
struct TrafficModel {
    int n_calls = 60;
    int n_test_calls = 15;
    int samples_per_call = 40;
    double speed = 1.5;          // m/s
    double report_period = 1.0;  // s
    double shadowing_db = 4.0;
    MissingPolicy missing = MissingPolicy::typical();
};

struct Scenario {
    Eigen::Vector3d bs_location = {0.0, 0.0, 25.0};
    std::string serving_cell_id = "cell-0";
    Rect area;
    AntennaConfig antenna;
    AngularGrid grid;
    BeamCodebook codebook_train;
    BeamCodebook codebook_test;
    std::vector<Region> regions;
    std::vector<NeighborBS> neighbors;
    TrafficModel traffic;
    std::uint64_t rng_seed = 0;

    int region_index_of(const Eigen::Vector2d& p) const {
        int best = -1;
        double best_d = 0.0;
        for (size_t k = 0; k < regions.size(); ++k) {
            if (!regions[k].contains(p)) continue;
            double d = (p - regions[k].center).squaredNorm();
            if (best < 0 || d < best_d) {
                best = static_cast<int>(k);
                best_d = d;
            }
        }
        if (best < 0) throw std::runtime_error("Scenario: position outside every region");
        return best;
    }

    const Region& region_of(const Eigen::Vector2d& p) const {
        return regions[static_cast<size_t>(region_index_of(p))];
    }

    std::string digest() const {
        std::string s;
        detail::digest_append(s, bs_location.x());
        detail::digest_append(s, bs_location.y());
        detail::digest_append(s, bs_location.z());
        detail::digest_append(s, area.x0);
        detail::digest_append(s, area.y1);
        s += std::to_string(regions.size()) + ";" + std::to_string(neighbors.size()) + ";";
        for (const auto& r : regions) {
            detail::digest_append(s, r.center.x());
            detail::digest_append(s, r.center.y());
            detail::digest_append(s, r.aps.sum());
        }
        s += std::to_string(rng_seed);
        return hex_digest(fnv1a(s));
    }
};

/// Optional knobs for generate_scenario; zero-initialized members fall back
/// to library defaults.
struct ScenarioOptions {
    Eigen::Vector3d bs_location = {0.0, 0.0, 25.0};
    int n_neighbors = 8;
    AntennaConfig antenna;                                    // default: 4 x 8 half-wavelength array
    AngularGrid grid;                                         // default: tilts -90..90 by 2, azimuths -90..265 by 5
    std::vector<std::pair<double, double>> pointing_train;    // default: 8 beams fanned over tilt
    std::vector<std::pair<double, double>> pointing_test;     // default: shifted fan
    double dominant_power_1e2m = 1e-11;                       // linear APS power of the direct path at 100 m
    double dominant_power_exp = 2.5;                          // distance falloff exponent of that power
};

/// Deterministic scenario factory. Region centers are spread by farthest
/// point sampling; each region gets one dominant path at the angle of its
/// center as seen from the BS plus c_true - 1 weaker paths at random grid
/// angles.
inline Scenario generate_scenario(const Rect& area, int n_regions, int c_true, std::uint64_t seed,
                                  const ScenarioOptions& opt = {}) {
    area.validate();
    if (n_regions < 1 || c_true < 1) throw std::invalid_argument("generate_scenario: counts must be >= 1");

    Scenario sc;
    sc.area = area;
    sc.rng_seed = seed;
    sc.bs_location = opt.bs_location;
    sc.antenna = opt.antenna;
    if (sc.antenna.n_x == 1 && sc.antenna.n_y == 1) {
        sc.antenna.n_x = 4;
        sc.antenna.n_y = 8;
    }
    sc.grid = opt.grid.n_a() > 0 ? opt.grid : build_angular_grid(-90.0, 90.0, 2.0, -90.0, 265.0, 5.0);

    auto fan = [](double tilt0, double az) {
        std::vector<std::pair<double, double>> p;
        for (int b = 0; b < 8; ++b) p.emplace_back(tilt0 + 16.0 * b, az);
        return p;
    };
    sc.codebook_train = steered_codebook(sc.antenna, opt.pointing_train.empty() ? fan(-56.0, 14.0) : opt.pointing_train);
    sc.codebook_test = steered_codebook(sc.antenna, opt.pointing_test.empty() ? fan(-52.0, 18.0) : opt.pointing_test);
    const int m = sc.codebook_train.beam_count();
    if (sc.codebook_test.beam_count() != m)
        throw std::invalid_argument("generate_scenario: train and test codebooks must share the beam count");

    // Spread region centers: a deterministic candidate pool, then greedy
    // farthest-point selection.
    Rng rng(derive_seed(seed, "region-centers"));
    std::vector<Eigen::Vector2d> cand(static_cast<size_t>(std::max(64, 16 * n_regions)));
    for (auto& c : cand) c = {rng.uniform(area.x0, area.x1), rng.uniform(area.y0, area.y1)};
    std::vector<Eigen::Vector2d> centers = {cand[0]};
    while (static_cast<int>(centers.size()) < n_regions) {
        size_t best = 0;
        double best_d = -1.0;
        for (size_t i = 0; i < cand.size(); ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) d = std::min(d, (cand[i] - c).squaredNorm());
            if (d > best_d) {
                best_d = d;
                best = i;
            }
        }
        centers.push_back(cand[best]);
    }

    const double cover_radius = 2.0 * std::hypot(area.width(), area.height());

    Rng aps_rng(derive_seed(seed, "region-aps"));
    for (int k = 0; k < n_regions; ++k) {
        Region r;
        r.center = centers[static_cast<size_t>(k)];
        r.radius = cover_radius;
        r.aps = Eigen::VectorXd::Zero(sc.grid.n_a());

        const auto ang = relative_angle_deg(sc.bs_location.x(), sc.bs_location.y(), sc.bs_location.z(),
                                            r.center.x(), r.center.y());
        int ti = 0, aj = 0;
        for (int i = 1; i < sc.grid.n_v(); ++i)
            if (std::abs(sc.grid.tilts[static_cast<size_t>(i)] - ang.theta) <
                std::abs(sc.grid.tilts[static_cast<size_t>(ti)] - ang.theta))
                ti = i;
        for (int j = 1; j < sc.grid.n_h(); ++j)
            if (std::abs(wrap_deg(sc.grid.azimuths[static_cast<size_t>(j)] - ang.phi)) <
                std::abs(wrap_deg(sc.grid.azimuths[static_cast<size_t>(aj)] - ang.phi)))
                aj = j;
        const double dist = (r.center - sc.bs_location.head<2>()).norm();
        const double p_dom = opt.dominant_power_1e2m * std::pow(100.0 / dist, opt.dominant_power_exp);
        r.aps(sc.grid.flat_index(ti, aj)) = p_dom;

        for (int s = 1; s < c_true; ++s) {
            int idx;
            do {
                idx = static_cast<int>(aps_rng.below(static_cast<std::uint64_t>(sc.grid.n_a())));
            } while (r.aps(idx) > 0.0);
            r.aps(idx) = aps_rng.uniform(0.05, 0.3) * p_dom;
        }
        sc.regions.push_back(std::move(r));
    }

    Rng nb_rng(derive_seed(seed, "neighbors"));
    const double mx = 0.25 * area.width(), my = 0.25 * area.height();
    for (int n = 0; n < opt.n_neighbors; ++n) {
        NeighborBS nb;
        nb.cell_id = "ncell-" + std::to_string(n + 1);
        nb.location = {nb_rng.uniform(area.x0 - mx, area.x1 + mx), nb_rng.uniform(area.y0 - my, area.y1 + my), 25.0};
        nb.beam_offsets_db.resize(m);
        for (int b = 0; b < m; ++b) nb.beam_offsets_db(b) = nb_rng.uniform(-6.0, 0.0);
        sc.neighbors.push_back(std::move(nb));
    }
    return sc;
}

struct TrajectoryPoint {
    double t;
    Eigen::Vector2d p;
};

struct Trajectory {
    std::string call_id;
    std::vector<TrajectoryPoint> points;
};

/// Random-waypoint walks inside the scenario area. Consecutive reports are
/// report_period apart and at most speed * report_period meters apart.
inline std::vector<Trajectory> simulate_trajectories(const Scenario& sc, int n_calls, int samples_per_call,
                                                     double speed, double report_period, std::uint64_t seed) {
    if (n_calls < 1 || samples_per_call < 1) throw std::invalid_argument("simulate_trajectories: counts must be >= 1");
    if (!(speed >= 0.0) || !(report_period > 0.0))
        throw std::invalid_argument("simulate_trajectories: need speed >= 0 and report_period > 0");
    sc.area.validate();

    std::vector<Trajectory> out;
    out.reserve(static_cast<size_t>(n_calls));
    for (int c = 0; c < n_calls; ++c) {
        Rng rng(derive_seed(seed, "call-" + std::to_string(c)));
        Trajectory tr;
        tr.call_id = "call-" + std::to_string(c);
        Eigen::Vector2d p = {rng.uniform(sc.area.x0, sc.area.x1), rng.uniform(sc.area.y0, sc.area.y1)};
        Eigen::Vector2d waypoint = {rng.uniform(sc.area.x0, sc.area.x1), rng.uniform(sc.area.y0, sc.area.y1)};
        const double step = speed * report_period;
        for (int k = 0; k < samples_per_call; ++k) {
            tr.points.push_back({k * report_period, p});
            double remaining = step;
            while (remaining > 0.0) {
                double to_wp = (waypoint - p).norm();
                if (to_wp <= remaining) {
                    p = waypoint;
                    remaining -= to_wp;
                    waypoint = {rng.uniform(sc.area.x0, sc.area.x1), rng.uniform(sc.area.y0, sc.area.y1)};
                    if (to_wp == 0.0) break;
                } else {
                    p += (waypoint - p) * (remaining / to_wp);
                    remaining = 0.0;
                }
            }
        }
        out.push_back(std::move(tr));
    }
    return out;
}

/// Renders measurement reports along the trajectories: serving beams from
/// y = A x of the local region plus per-beam log-normal shadowing, neighbor
/// beams from the neighbor power law, then the missing-value policy. Beams
/// at or below the -140 dBm floor are always dropped. Every rendered sample
/// keeps its true location; at least one serving beam always survives (the
/// strongest is restored if the policy dropped everything).
inline std::vector<MRSample> render_samples(const Scenario& sc, const std::vector<Trajectory>& trajectories,
                                            const MeasurementMatrix& a, double shadowing_db,
                                            const MissingPolicy& missing, std::uint64_t seed) {
    if (!(shadowing_db >= 0.0)) throw std::invalid_argument("render_samples: shadowing must be >= 0");
    missing.validate();
    const int m = a.m();
    for (const auto& nb : sc.neighbors)
        if (nb.beam_offsets_db.size() != m)
            throw std::invalid_argument("render_samples: neighbor beam offsets do not match beam count");

    const int q = static_cast<int>(sc.neighbors.size());
    std::vector<MRSample> out;
    for (size_t ti = 0; ti < trajectories.size(); ++ti) {
        const auto& tr = trajectories[ti];
        Rng rng(derive_seed(seed, "render-" + tr.call_id));
        for (const auto& pt : tr.points) {
            const Region& reg = sc.region_of(pt.p);
            const Eigen::VectorXd y_lin = expected_rsrp(a, reg.aps);

            MRSample s;
            s.timestamp = pt.t;
            s.call_id = tr.call_id;
            s.serving_cell_id = sc.serving_cell_id;
            s.serving_rsrp.setConstant(m, kMissingDbm);
            s.serving_mask.setZero(m);
            s.neighbor_rsrp.setConstant(q, m, kMissingDbm);
            s.neighbor_mask.setZero(q, m);
            s.is_labeled = true;
            s.true_location = pt.p;

            int best_beam = -1;
            double best_dbm = kMissingDbm;
            for (int b = 0; b < m; ++b) {
                if (y_lin(b) <= kMissingLinear) continue;
                double v = linear_to_dbm(y_lin(b)) + shadowing_db * (shadowing_db > 0.0 ? rng.normal() : 0.0);
                if (v <= kMissingDbm) continue;
                if (best_beam < 0 || v > best_dbm) {
                    best_beam = b;
                    best_dbm = v;
                }
                double p_drop = v < missing.threshold_dbm ? missing.p_weak : missing.p_random;
                if (rng.uniform() < p_drop) continue;
                s.serving_rsrp(b) = v;
                s.serving_mask(b) = 1;
            }
            if (s.serving_mask.maxCoeff() < 1) {
                if (best_beam < 0) throw std::runtime_error("render_samples: no measurable serving beam");
                s.serving_rsrp(best_beam) = best_dbm;
                s.serving_mask(best_beam) = 1;
            }

            for (int n = 0; n < q; ++n)
                for (int b = 0; b < m; ++b) {
                    double v = sc.neighbors[static_cast<size_t>(n)].rsrp_dbm(pt.p, b) +
                               shadowing_db * (shadowing_db > 0.0 ? rng.normal() : 0.0);
                    if (v <= kMissingDbm) continue;
                    double p_drop = v < missing.threshold_dbm ? missing.neighbor_p_weak : missing.neighbor_p_random;
                    if (rng.uniform() < p_drop) continue;
                    s.neighbor_rsrp(n, b) = v;
                    s.neighbor_mask(n, b) = 1;
                }
            s.validate();
            out.push_back(std::move(s));
        }
    }
    return out;
}

/// Renders the train side with the pre-adjustment codebook and the test side
/// with the post-adjustment codebook on fresh trajectories.
inline Dataset generate_dataset(const Scenario& sc, std::uint64_t seed) {
    Dataset ds;
    ds.matrix_train = build_measurement_matrix(sc.antenna, sc.codebook_train, sc.grid);
    ds.matrix_test = build_measurement_matrix(sc.antenna, sc.codebook_test, sc.grid);
    ds.scenario_digest = sc.digest();
    const auto& t = sc.traffic;
    auto train_tr = simulate_trajectories(sc, t.n_calls, t.samples_per_call, t.speed, t.report_period,
                                          derive_seed(seed, "train-trajectories"));
    auto test_tr = simulate_trajectories(sc, t.n_test_calls, t.samples_per_call, t.speed, t.report_period,
                                         derive_seed(seed, "test-trajectories"));
    ds.train = render_samples(sc, train_tr, ds.matrix_train, t.shadowing_db, t.missing, derive_seed(seed, "train-render"));
    ds.test = render_samples(sc, test_tr, ds.matrix_test, t.shadowing_db, t.missing, derive_seed(seed, "test-render"));
    return ds;
}

}  // namespace mrlscm
