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

// Joint grid construction and per-grid angular-power-spectrum estimation:
// alternates mask-aware nearest-neighbour grid assignment, location centroid
// updates, and sparse per-grid spectrum fits. Also provides the uniform-grid
// and k-means baseline constructions.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mrlscm/mr_data.hpp"
#include "mrlscm/sparse_recovery.hpp"

namespace mrlscm {

/// Per-beam mean of the valid linear powers within one grid. Beams with no
/// valid observation carry count 0 and a zero mean.
struct MaskedRsrp {
    Eigen::VectorXd mean_linear;
    Eigen::VectorXi valid_count;

    Eigen::VectorXi mask() const {
        Eigen::VectorXi m(valid_count.size());
        for (Eigen::Index b = 0; b < valid_count.size(); ++b) m(b) = valid_count(b) > 0 ? 1 : 0;
        return m;
    }
};

/// Grid construction result: a partition of the samples, one location
/// centroid, one mean RSRP vector, and one sparse spectrum per grid.
struct GridModel {
    int k = 0;
    double beta = 1.0;
    std::vector<int> assignment;        // per sample grid index
    Eigen::MatrixXd centroids;          // k x 2
    std::vector<MaskedRsrp> mean_rsrp;  // k entries
    std::vector<ApsEstimate> aps;       // k entries

    void validate() const {
        if (k < 1) throw std::invalid_argument("GridModel: need at least one grid");
        if (!(beta >= 0.0)) throw std::invalid_argument("GridModel: beta must be >= 0");
        for (int g : assignment)
            if (g < 0 || g >= k) throw std::invalid_argument("GridModel: assignment index out of range");
        if (centroids.rows() != k || centroids.cols() != 2)
            throw std::invalid_argument("GridModel: centroid shape mismatch");
    }
};

/// Objective summary of one alternation round.
struct FitIterationStat {
    double data_term = 0.0;      // sum_k (1/|G_k|) sum_i |m_i o (A x_k - y_i)|^2
    double location_term = 0.0;  // beta * sum_k (1/|G_k|) sum_i |centroid_k - p_i|^2
    double total = 0.0;
    int nonempty_grids = 0;
};

struct FitReport {
    std::vector<FitIterationStat> trace;  // one entry per spectrum-fit round
    int iterations = 0;                   // reassignment rounds performed
    int reseed_events = 0;                // samples moved into emptied grids

    void validate() const {
        for (const auto& s : trace)
            if (!std::isfinite(s.data_term) || !std::isfinite(s.location_term) || !std::isfinite(s.total))
                throw std::runtime_error("FitReport: non-finite objective");
    }
};

/// Linear-power view of a sample's serving-cell beams; masked beams are zero.
inline std::pair<Eigen::VectorXd, Eigen::VectorXi> serving_linear(const MRSample& s) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(s.serving_rsrp.size());
    for (Eigen::Index b = 0; b < s.serving_rsrp.size(); ++b)
        if (s.serving_mask(b) != 0) y(b) = dbm_to_linear(s.serving_rsrp(b));
    return {y, s.serving_mask};
}

/// Mask-aware distance between a sample and a grid's predicted RSRP, in
/// linear power: (sum(m)/M) * |m o (predicted - y)|_2. An all-zero mask
/// yields zero.
inline double valid_distance(const Eigen::VectorXd& y_lin, const Eigen::VectorXi& mask,
                             const Eigen::VectorXd& predicted) {
    const Eigen::Index m = y_lin.size();
    if (mask.size() != m || predicted.size() != m)
        throw std::invalid_argument("valid_distance: length mismatch");
    double sq = 0.0;
    int valid = 0;
    for (Eigen::Index b = 0; b < m; ++b) {
        if (mask(b) == 0) continue;
        const double d = predicted(b) - y_lin(b);
        sq += d * d;
        ++valid;
    }
    return (static_cast<double>(valid) / static_cast<double>(m)) * std::sqrt(sq);
}

inline double valid_distance(const Eigen::VectorXd& y_lin, const Eigen::VectorXi& mask,
                             const MeasurementMatrix& a, const Eigen::VectorXd& x) {
    if (x.size() != a.n_a()) throw std::invalid_argument("valid_distance: spectrum length mismatch");
    return valid_distance(y_lin, mask, a.a * x);
}

namespace detail {

/// Predicted beam powers per grid, using only the spectrum supports.
inline Eigen::MatrixXd grid_predictions(const MeasurementMatrix& a, const std::vector<ApsEstimate>& aps) {
    Eigen::MatrixXd pred = Eigen::MatrixXd::Zero(a.m(), static_cast<Eigen::Index>(aps.size()));
    for (size_t k = 0; k < aps.size(); ++k)
        for (int j : aps[k].support) pred.col(static_cast<Eigen::Index>(k)) += a.a.col(j) * aps[k].x(j);
    return pred;
}

/// Assignment criterion of sample i against grid k given its prediction.
inline double assignment_cost(const Eigen::VectorXd& y_lin, const Eigen::VectorXi& mask,
                              const Eigen::VectorXd& predicted, const Eigen::Vector2d& centroid,
                              const Eigen::Vector2d& location, double beta) {
    return valid_distance(y_lin, mask, predicted) + beta * (centroid - location).norm();
}

}  // namespace detail

/// Nearest-neighbour grid assignment: each sample goes to the grid whose
/// predicted RSRP plus location-weighted criterion is smallest; ties break
/// to the lowest grid index.
inline std::vector<int> assign_grids(const std::vector<MRSample>& samples, const Eigen::MatrixXd& locations,
                                     const MeasurementMatrix& a, const GridModel& model) {
    model.validate();
    if (locations.rows() != static_cast<Eigen::Index>(samples.size()) || locations.cols() != 2)
        throw std::invalid_argument("assign_grids: location shape mismatch");
    if (static_cast<int>(model.aps.size()) != model.k)
        throw std::invalid_argument("assign_grids: spectrum count mismatch");
    const Eigen::MatrixXd pred = detail::grid_predictions(a, model.aps);

    std::vector<int> assignment(samples.size(), 0);
    for (size_t i = 0; i < samples.size(); ++i) {
        auto [y, mask] = serving_linear(samples[i]);
        const Eigen::Vector2d p = locations.row(static_cast<Eigen::Index>(i)).transpose();
        int best = 0;
        double best_cost = std::numeric_limits<double>::infinity();
        for (int k = 0; k < model.k; ++k) {
            const double cost =
                detail::assignment_cost(y, mask, pred.col(k), model.centroids.row(k).transpose(), p, model.beta);
            if (cost < best_cost) {
                best = k;
                best_cost = cost;
            }
        }
        assignment[i] = best;
    }
    return assignment;
}

/// Per-grid arithmetic mean of the locations. Every grid must be populated.
inline Eigen::MatrixXd update_centroids(const std::vector<int>& assignment, const Eigen::MatrixXd& locations,
                                        int k) {
    if (locations.rows() != static_cast<Eigen::Index>(assignment.size()) || locations.cols() != 2)
        throw std::invalid_argument("update_centroids: location shape mismatch");
    Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(k, 2);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (size_t i = 0; i < assignment.size(); ++i) {
        const int g = assignment[i];
        if (g < 0 || g >= k) throw std::invalid_argument("update_centroids: assignment index out of range");
        centroids.row(g) += locations.row(static_cast<Eigen::Index>(i));
        ++counts(g);
    }
    for (int g = 0; g < k; ++g) {
        if (counts(g) == 0) throw std::invalid_argument("update_centroids: grid " + std::to_string(g) + " is empty");
        centroids.row(g) /= static_cast<double>(counts(g));
    }
    return centroids;
}

/// Per-beam mean of the valid linear powers across the given members.
inline MaskedRsrp grid_mean_rsrp(const std::vector<MRSample>& samples, const std::vector<int>& members) {
    if (members.empty()) throw std::invalid_argument("grid_mean_rsrp: empty grid");
    const int m = samples.at(static_cast<size_t>(members.front())).m();
    MaskedRsrp out;
    out.mean_linear = Eigen::VectorXd::Zero(m);
    out.valid_count = Eigen::VectorXi::Zero(m);
    for (int i : members) {
        const MRSample& s = samples.at(static_cast<size_t>(i));
        if (s.m() != m) throw std::invalid_argument("grid_mean_rsrp: beam count mismatch");
        for (int b = 0; b < m; ++b) {
            if (s.serving_mask(b) == 0) continue;
            out.mean_linear(b) += dbm_to_linear(s.serving_rsrp(b));
            ++out.valid_count(b);
        }
    }
    for (int b = 0; b < m; ++b)
        if (out.valid_count(b) > 0) out.mean_linear(b) /= static_cast<double>(out.valid_count(b));
    return out;
}

namespace detail {

/// k-means++ seeding plus Lloyd refinement over caller-defined centers.
/// init_center(c, i) seeds center c from sample i; dist(i, c) scores sample
/// i against center c; rebuild(c, members) recomputes center c. Emptied
/// clusters are re-seeded with the sample of worst current cost.
template <typename InitCenter, typename Dist, typename Rebuild>
std::vector<int> kmeanspp_lloyd(int n, int k, Rng& rng, InitCenter&& init_center, Dist&& dist,
                                Rebuild&& rebuild) {
    if (k < 1) throw std::invalid_argument("kmeans: need at least one cluster");
    if (k > n) throw std::invalid_argument("kmeans: more clusters than samples");

    // seeding: first center uniform, then proportional to squared distance
    std::vector<char> chosen(static_cast<size_t>(n), 0);
    {
        const int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        init_center(0, first);
        chosen[static_cast<size_t>(first)] = 1;
    }
    Eigen::VectorXd d2(n);
    for (int i = 0; i < n; ++i) {
        const double d = dist(i, 0);
        d2(i) = d * d;
    }
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i)
            if (!chosen[static_cast<size_t>(i)]) total += d2(i);
        int pick = -1;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            for (int i = 0; i < n; ++i) {
                if (chosen[static_cast<size_t>(i)]) continue;
                r -= d2(i);
                pick = i;
                if (r <= 0.0) break;
            }
        } else {
            for (int i = 0; i < n && pick < 0; ++i)
                if (!chosen[static_cast<size_t>(i)]) pick = i;
        }
        init_center(c, pick);
        chosen[static_cast<size_t>(pick)] = 1;
        for (int i = 0; i < n; ++i) {
            const double d = dist(i, c);
            d2(i) = std::min(d2(i), d * d);
        }
    }

    // Lloyd rounds with deterministic tie breaking
    auto reassign = [&](std::vector<int>& assignment) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = dist(i, 0);
            for (int c = 1; c < k; ++c) {
                const double d = dist(i, c);
                if (d < best_d) {
                    best = c;
                    best_d = d;
                }
            }
            if (best != assignment[static_cast<size_t>(i)]) {
                assignment[static_cast<size_t>(i)] = best;
                changed = true;
            }
        }
        return changed;
    };
    // re-seed empties with the worst-cost sample of a populated cluster
    auto repair = [&](std::vector<int>& assignment) {
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (int g : assignment) ++counts[static_cast<size_t>(g)];
        for (int c = 0; c < k; ++c) {
            while (counts[static_cast<size_t>(c)] == 0) {
                int worst = -1;
                double worst_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    if (counts[static_cast<size_t>(assignment[static_cast<size_t>(i)])] < 2) continue;
                    const double d = dist(i, assignment[static_cast<size_t>(i)]);
                    if (d > worst_d) {
                        worst = i;
                        worst_d = d;
                    }
                }
                if (worst < 0) throw std::runtime_error("kmeans: cannot repopulate an empty cluster");
                --counts[static_cast<size_t>(assignment[static_cast<size_t>(worst)])];
                assignment[static_cast<size_t>(worst)] = c;
                ++counts[static_cast<size_t>(c)];
            }
        }
    };

    std::vector<int> assignment(static_cast<size_t>(n), 0);
    reassign(assignment);
    for (int round = 0; round < 100; ++round) {
        repair(assignment);
        std::vector<std::vector<int>> members(static_cast<size_t>(k));
        for (int i = 0; i < n; ++i) members[static_cast<size_t>(assignment[static_cast<size_t>(i)])].push_back(i);
        for (int c = 0; c < k; ++c) rebuild(c, members[static_cast<size_t>(c)]);
        if (!reassign(assignment)) break;
    }
    repair(assignment);
    return assignment;
}

/// Mask-aware linear-power distance between a sample and a masked mean
/// vector, in the same scaled form as valid_distance; only beams valid on
/// both sides contribute.
inline double masked_center_distance(const Eigen::VectorXd& y, const Eigen::VectorXi& mask,
                                     const MaskedRsrp& center) {
    const Eigen::Index m = y.size();
    double sq = 0.0;
    int valid = 0;
    for (Eigen::Index b = 0; b < m; ++b) {
        if (mask(b) == 0 || center.valid_count(b) == 0) continue;
        const double d = y(b) - center.mean_linear(b);
        sq += d * d;
        ++valid;
    }
    return (static_cast<double>(valid) / static_cast<double>(m)) * std::sqrt(sq);
}

}  // namespace detail

/// k-means++ and Lloyd refinement in the joint (RSRP, location) space:
/// distance = masked linear RSRP distance + beta * location distance.
inline std::vector<int> init_kmeanspp(const std::vector<MRSample>& samples, const Eigen::MatrixXd& locations,
                                      int k, double beta, std::uint64_t seed) {
    const int n = static_cast<int>(samples.size());
    if (n < 1) throw std::invalid_argument("init_kmeanspp: no samples");
    if (locations.rows() != n || locations.cols() != 2)
        throw std::invalid_argument("init_kmeanspp: location shape mismatch");
    if (!(beta >= 0.0)) throw std::invalid_argument("init_kmeanspp: beta must be >= 0");

    std::vector<Eigen::VectorXd> ys(static_cast<size_t>(n));
    std::vector<Eigen::VectorXi> masks(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto [y, mask] = serving_linear(samples[static_cast<size_t>(i)]);
        ys[static_cast<size_t>(i)] = std::move(y);
        masks[static_cast<size_t>(i)] = mask;
    }

    std::vector<MaskedRsrp> center_rsrp(static_cast<size_t>(k));
    Eigen::MatrixXd center_loc(k, 2);
    auto init_center = [&](int c, int i) {
        MaskedRsrp r;
        r.mean_linear = ys[static_cast<size_t>(i)];
        r.valid_count = masks[static_cast<size_t>(i)];
        center_rsrp[static_cast<size_t>(c)] = std::move(r);
        center_loc.row(c) = locations.row(i);
    };
    auto dist = [&](int i, int c) {
        const double d_loc = (locations.row(i) - center_loc.row(c)).norm();
        return detail::masked_center_distance(ys[static_cast<size_t>(i)], masks[static_cast<size_t>(i)],
                                              center_rsrp[static_cast<size_t>(c)]) +
               beta * d_loc;
    };
    auto rebuild = [&](int c, const std::vector<int>& members) {
        center_rsrp[static_cast<size_t>(c)] = grid_mean_rsrp(samples, members);
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        for (int i : members) mean += locations.row(i).transpose();
        center_loc.row(c) = (mean / static_cast<double>(members.size())).transpose();
    };

    Rng rng(derive_seed(seed, "grid-init"));
    return detail::kmeanspp_lloyd(n, k, rng, init_center, dist, rebuild);
}

/// Options for the alternating fit.
struct FitOptions {
    int k = 1;                  // grid count
    int c = 6;                  // path budget per grid spectrum
    double beta = 1.0;          // location regularization weight
    int iterations = 15;        // reassignment rounds; 0 fits the initialization once
    double sigma_theta = 10.0;  // geometric kernel widths, degrees
    double sigma_phi = 10.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (k < 1) throw std::invalid_argument("fit options: need at least one grid");
        if (c < 1) throw std::invalid_argument("fit options: path budget must be >= 1");
        if (!(beta >= 0.0)) throw std::invalid_argument("fit options: beta must be >= 0");
        if (iterations < 0) throw std::invalid_argument("fit options: negative iteration count");
        if (!(sigma_theta > 0.0) || !(sigma_phi > 0.0))
            throw std::invalid_argument("fit options: kernel widths must be > 0");
    }
};

/// Observation points for the alternation: right after the raw
/// nearest-neighbour assignment (before empty grids are repaired), and right
/// after the centroid update.
enum class FitPhase { after_assignment, after_centroid_update };
using FitObserver = std::function<void(int iteration, FitPhase, const GridModel&)>;

namespace detail {

inline std::vector<std::vector<int>> grid_members(const std::vector<int>& assignment, int k) {
    std::vector<std::vector<int>> members(static_cast<size_t>(k));
    for (size_t i = 0; i < assignment.size(); ++i)
        members[static_cast<size_t>(assignment[i])].push_back(static_cast<int>(i));
    return members;
}

}  // namespace detail

/// Alternating grid construction and spectrum estimation. Each round fits
/// one spectrum per grid from the grid's mean RSRP with the geometric prior
/// anchored at the grid centroid, then reassigns samples and updates the
/// centroids. Emptied grids are re-seeded with the worst-cost sample before
/// the next fit.
inline std::pair<GridModel, FitReport> fit_joint(const std::vector<MRSample>& samples,
                                                 const Eigen::MatrixXd& locations, const MeasurementMatrix& a,
                                                 const AngularGrid& grid, const Eigen::Vector3d& bs_location,
                                                 const FitOptions& opt, const FitObserver& observer = {}) {
    opt.validate();
    const int n = static_cast<int>(samples.size());
    if (n < 1) throw std::invalid_argument("fit_joint: no samples");
    if (locations.rows() != n || locations.cols() != 2)
        throw std::invalid_argument("fit_joint: location shape mismatch");

    GridModel model;
    model.k = opt.k;
    model.beta = opt.beta;
    model.assignment = init_kmeanspp(samples, locations, opt.k, opt.beta, opt.seed);
    model.centroids = update_centroids(model.assignment, locations, opt.k);
    model.mean_rsrp.resize(static_cast<size_t>(opt.k));
    model.aps.resize(static_cast<size_t>(opt.k));

    FitReport report;

    for (int round = 0;; ++round) {
        // per-grid mean RSRP and spectrum fit
        const auto members = detail::grid_members(model.assignment, opt.k);
        for (int k = 0; k < opt.k; ++k) {
            model.mean_rsrp[static_cast<size_t>(k)] = grid_mean_rsrp(samples, members[static_cast<size_t>(k)]);
            GeometryPrior prior;
            prior.grid_centroid = model.centroids.row(k).transpose();
            prior.bs_location = bs_location;
            prior.sigma_theta = opt.sigma_theta;
            prior.sigma_phi = opt.sigma_phi;
            model.aps[static_cast<size_t>(k)] = gm_nnomp(model.mean_rsrp[static_cast<size_t>(k)].mean_linear,
                                                         model.mean_rsrp[static_cast<size_t>(k)].mask(), a, grid,
                                                         prior, opt.c);
        }

        // objective of the current state
        {
            const Eigen::MatrixXd pred = detail::grid_predictions(a, model.aps);
            FitIterationStat stat;
            Eigen::VectorXd data_k = Eigen::VectorXd::Zero(opt.k);
            Eigen::VectorXd loc_k = Eigen::VectorXd::Zero(opt.k);
            for (int i = 0; i < n; ++i) {
                const int g = model.assignment[static_cast<size_t>(i)];
                auto [y, mask] = serving_linear(samples[static_cast<size_t>(i)]);
                double sq = 0.0;
                for (Eigen::Index b = 0; b < y.size(); ++b) {
                    if (mask(b) == 0) continue;
                    const double d = pred(b, g) - y(b);
                    sq += d * d;
                }
                data_k(g) += sq;
                loc_k(g) += (model.centroids.row(g) - locations.row(i)).squaredNorm();
            }
            for (int k = 0; k < opt.k; ++k) {
                const auto sz = members[static_cast<size_t>(k)].size();
                if (sz == 0) continue;
                stat.data_term += data_k(k) / static_cast<double>(sz);
                stat.location_term += opt.beta * loc_k(k) / static_cast<double>(sz);
                ++stat.nonempty_grids;
            }
            stat.total = stat.data_term + stat.location_term;
            report.trace.push_back(stat);
        }

        if (round >= opt.iterations) break;
        ++report.iterations;

        // nearest-neighbour reassignment against the fresh spectra
        std::vector<int> next = assign_grids(samples, locations, a, model);
        if (observer) {
            GridModel snapshot = model;
            snapshot.assignment = next;
            observer(round, FitPhase::after_assignment, snapshot);
        }

        // repair emptied grids with the worst-cost samples
        {
            std::vector<int> counts(static_cast<size_t>(opt.k), 0);
            for (int g : next) ++counts[static_cast<size_t>(g)];
            const Eigen::MatrixXd pred = detail::grid_predictions(a, model.aps);
            std::vector<double> cost(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                auto [y, mask] = serving_linear(samples[static_cast<size_t>(i)]);
                const int g = next[static_cast<size_t>(i)];
                cost[static_cast<size_t>(i)] =
                    detail::assignment_cost(y, mask, pred.col(g), model.centroids.row(g).transpose(),
                                            locations.row(i).transpose(), opt.beta);
            }
            for (int k = 0; k < opt.k; ++k) {
                while (counts[static_cast<size_t>(k)] == 0) {
                    int worst = -1;
                    for (int i = 0; i < n; ++i) {
                        if (counts[static_cast<size_t>(next[static_cast<size_t>(i)])] < 2) continue;
                        if (worst < 0 || cost[static_cast<size_t>(i)] > cost[static_cast<size_t>(worst)]) worst = i;
                    }
                    if (worst < 0) throw std::runtime_error("fit_joint: cannot repopulate an empty grid");
                    --counts[static_cast<size_t>(next[static_cast<size_t>(worst)])];
                    next[static_cast<size_t>(worst)] = k;
                    ++counts[static_cast<size_t>(k)];
                    cost[static_cast<size_t>(worst)] = -std::numeric_limits<double>::infinity();
                    ++report.reseed_events;
                }
            }
        }

        model.assignment = std::move(next);
        model.centroids = update_centroids(model.assignment, locations, opt.k);
        if (observer) observer(round, FitPhase::after_centroid_update, model);
    }

    report.validate();
    model.validate();
    return {std::move(model), std::move(report)};
}

/// Axis-aligned square cells anchored at the bounding-box corner; cells
/// without samples are dropped and the survivors renumbered row-major.
inline std::vector<int> baseline_uniform_grid(const Eigen::MatrixXd& locations, double width) {
    if (!(width > 0.0)) throw std::invalid_argument("uniform grid: width must be > 0");
    if (locations.rows() < 1 || locations.cols() != 2)
        throw std::invalid_argument("uniform grid: location shape mismatch");
    const double x0 = locations.col(0).minCoeff();
    const double y0 = locations.col(1).minCoeff();
    std::vector<std::pair<long, long>> cells(static_cast<size_t>(locations.rows()));
    std::map<std::pair<long, long>, int> ids;
    for (Eigen::Index i = 0; i < locations.rows(); ++i) {
        cells[static_cast<size_t>(i)] = {static_cast<long>(std::floor((locations(i, 0) - x0) / width)),
                                         static_cast<long>(std::floor((locations(i, 1) - y0) / width))};
        ids.emplace(cells[static_cast<size_t>(i)], 0);
    }
    int next_id = 0;
    for (auto& kv : ids) kv.second = next_id++;
    std::vector<int> assignment(static_cast<size_t>(locations.rows()));
    for (Eigen::Index i = 0; i < locations.rows(); ++i)
        assignment[static_cast<size_t>(i)] = ids.at(cells[static_cast<size_t>(i)]);
    return assignment;
}

/// Plain k-means over locations (squared Euclidean, k-means++ seeding).
inline std::vector<int> baseline_kmeans_location(const Eigen::MatrixXd& locations, int k, std::uint64_t seed) {
    const int n = static_cast<int>(locations.rows());
    if (locations.cols() != 2) throw std::invalid_argument("kmeans location: location shape mismatch");
    Eigen::MatrixXd centers(k, 2);
    auto init_center = [&](int c, int i) { centers.row(c) = locations.row(i); };
    auto dist = [&](int i, int c) { return (locations.row(i) - centers.row(c)).norm(); };
    auto rebuild = [&](int c, const std::vector<int>& members) {
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        for (int i : members) mean += locations.row(i).transpose();
        centers.row(c) = (mean / static_cast<double>(members.size())).transpose();
    };
    Rng rng(derive_seed(seed, "kmeans-location"));
    return detail::kmeanspp_lloyd(n, k, rng, init_center, dist, rebuild);
}

/// k-means over the serving-cell beams with the mask-aware linear distance.
inline std::vector<int> baseline_kmeans_rsrp(const std::vector<MRSample>& samples, int k, std::uint64_t seed) {
    const int n = static_cast<int>(samples.size());
    if (n < 1) throw std::invalid_argument("kmeans rsrp: no samples");
    std::vector<Eigen::VectorXd> ys(static_cast<size_t>(n));
    std::vector<Eigen::VectorXi> masks(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto [y, mask] = serving_linear(samples[static_cast<size_t>(i)]);
        ys[static_cast<size_t>(i)] = std::move(y);
        masks[static_cast<size_t>(i)] = mask;
    }
    std::vector<MaskedRsrp> centers(static_cast<size_t>(k));
    auto init_center = [&](int c, int i) {
        MaskedRsrp r;
        r.mean_linear = ys[static_cast<size_t>(i)];
        r.valid_count = masks[static_cast<size_t>(i)];
        centers[static_cast<size_t>(c)] = std::move(r);
    };
    auto dist = [&](int i, int c) {
        return detail::masked_center_distance(ys[static_cast<size_t>(i)], masks[static_cast<size_t>(i)],
                                              centers[static_cast<size_t>(c)]);
    };
    auto rebuild = [&](int c, const std::vector<int>& members) {
        centers[static_cast<size_t>(c)] = grid_mean_rsrp(samples, members);
    };
    Rng rng(derive_seed(seed, "kmeans-rsrp"));
    return detail::kmeanspp_lloyd(n, k, rng, init_center, dist, rebuild);
}

/// Completes a fixed assignment into a grid model: centroids, mean RSRP, and
/// one spectrum per grid from the requested solver ("gm", "nnomp", or
/// "wnomp"); "gm" anchors its prior at the grid centroid.
inline GridModel build_grid_model(const std::vector<MRSample>& samples, const Eigen::MatrixXd& locations,
                                  const std::vector<int>& assignment, const MeasurementMatrix& a,
                                  const AngularGrid& grid, const Eigen::Vector3d& bs_location,
                                  const std::string& solver, int c, double beta = 1.0, double sigma_theta = 10.0,
                                  double sigma_phi = 10.0) {
    if (assignment.size() != samples.size()) throw std::invalid_argument("build_grid_model: assignment size mismatch");
    int k = 0;
    for (int g : assignment) k = std::max(k, g + 1);
    GridModel model;
    model.k = k;
    model.beta = beta;
    model.assignment = assignment;
    model.centroids = update_centroids(assignment, locations, k);
    model.mean_rsrp.resize(static_cast<size_t>(k));
    model.aps.resize(static_cast<size_t>(k));
    const auto members = detail::grid_members(assignment, k);
    for (int g = 0; g < k; ++g) {
        model.mean_rsrp[static_cast<size_t>(g)] = grid_mean_rsrp(samples, members[static_cast<size_t>(g)]);
        const Eigen::VectorXd& y = model.mean_rsrp[static_cast<size_t>(g)].mean_linear;
        const Eigen::VectorXi mask = model.mean_rsrp[static_cast<size_t>(g)].mask();
        if (solver == "gm") {
            GeometryPrior prior;
            prior.grid_centroid = model.centroids.row(g).transpose();
            prior.bs_location = bs_location;
            prior.sigma_theta = sigma_theta;
            prior.sigma_phi = sigma_phi;
            model.aps[static_cast<size_t>(g)] = gm_nnomp(y, mask, a, grid, prior, c);
        } else if (solver == "nnomp") {
            model.aps[static_cast<size_t>(g)] = nnomp(y, mask, a, c);
        } else if (solver == "wnomp") {
            model.aps[static_cast<size_t>(g)] = wnomp(y, mask, a, c);
        } else {
            throw std::invalid_argument("build_grid_model: unknown solver '" + solver + "'");
        }
    }
    model.validate();
    return model;
}

}  // namespace mrlscm
