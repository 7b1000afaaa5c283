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
// Sparse nonnegative APS estimation from an averaged multi-beam RSRP
// vector. The main estimator augments orthogonal matching pursuit with a
// geometric angular weight on column selection and an inequality bound on
// what the estimate may predict for missing beams. Plain NNOMP and a
// norm-balanced WNOMP are provided as baselines. All arithmetic is in the
// linear power domain; dB enters only at the metric boundary.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <string>
#include <vector>

#include "mrlscm/channel_model.hpp"
#include "mrlscm/common.hpp"

namespace mrlscm {

/// Geometric prior for column selection: the grid centroid seen from the BS
/// defines a preferred direction; sigma_theta and sigma_phi control how fast
/// the weight decays away from it.
struct GeometryPrior {
    Eigen::Vector2d grid_centroid = Eigen::Vector2d::Zero();
    Eigen::Vector3d bs_location = Eigen::Vector3d::Zero();  // x, y, h
    double sigma_theta = 10.0;                              // degrees
    double sigma_phi = 10.0;                                // degrees

    void validate() const {
        if (!(sigma_theta > 0.0) || !(sigma_phi > 0.0))
            throw std::invalid_argument("GeometryPrior: kernel widths must be > 0");
    }
};

struct ApsEstimate {
    Eigen::VectorXd x;                  // length n_a, >= 0
    std::vector<int> support;           // indices of nonzeros of x
    double residual_norm = 0.0;         // over valid beams, linear power
    std::vector<double> residual_trace; // residual norm after each refit
};

/// Bearing and elevation of the grid centroid as seen from the BS, degrees.
inline RelativeAngle relative_angle(const GeometryPrior& prior) {
    prior.validate();
    return relative_angle_deg(prior.bs_location.x(), prior.bs_location.y(), prior.bs_location.z(),
                              prior.grid_centroid.x(), prior.grid_centroid.y());
}

/// RBF weight per grid angle: w = exp(-(dt/sigma_theta)^2 - (da/sigma_phi)^2)
/// with dt the tilt offset from the bearing and da the azimuth offset from
/// the elevation, wrapped to (-180, 180].
inline Eigen::VectorXd geometric_weights(const GeometryPrior& prior, const AngularGrid& grid) {
    const auto ang = relative_angle(prior);
    Eigen::VectorXd w(grid.n_a());
    for (int a = 0; a < grid.n_a(); ++a) {
        const double dt = grid.tilt_of(a) - ang.theta;
        const double da = wrap_deg(grid.azimuth_of(a) - ang.phi);
        w(a) = std::exp(-(dt * dt) / (prior.sigma_theta * prior.sigma_theta) -
                        (da * da) / (prior.sigma_phi * prior.sigma_phi));
    }
    return w;
}

namespace detail {

/// Least squares min |a z - y| subject to c z = d, by the nullspace method.
/// Small dense systems only; rank handled through SVD.
inline Eigen::VectorXd equality_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                              const Eigen::MatrixXd& c, const Eigen::VectorXd& d) {
    const Eigen::Index n = a.cols();
    if (c.rows() == 0) {
        return a.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU | Eigen::ComputeFullV);
    svd.setThreshold(1e-12);
    const Eigen::Index rank = svd.rank();
    Eigen::VectorXd z_p = svd.solve(d);  // min-norm particular solution
    if (rank >= n) return z_p;
    Eigen::MatrixXd null_basis = svd.matrixV().rightCols(n - rank);
    Eigen::MatrixXd an = a * null_basis;
    Eigen::VectorXd w = an.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y - a * z_p);
    return z_p + null_basis * w;
}

}  // namespace detail

/// Nonnegative least squares with an upper bound on the rows without
/// observations: minimizes |a_obs z - y_obs|_2^2 subject to z >= 0 and
/// a_miss z <= y_min entrywise. Solved by a primal active-set method; z = 0
/// is always feasible for y_min >= 0. Active bounds are returned as exact
/// zeros.
inline Eigen::VectorXd constrained_nnls(const Eigen::MatrixXd& a_obs, const Eigen::VectorXd& y_obs,
                                        const Eigen::MatrixXd& a_miss, double y_min) {
    const int n = static_cast<int>(a_obs.cols());
    const int mc = static_cast<int>(a_miss.rows());
    if (a_obs.rows() < 1 || n < 1) throw std::invalid_argument("constrained_nnls: need at least one row and column");
    if (y_obs.size() != a_obs.rows()) throw std::invalid_argument("constrained_nnls: y_obs length mismatch");
    if (mc > 0 && a_miss.cols() != n) throw std::invalid_argument("constrained_nnls: a_miss column mismatch");
    if (mc > 0 && !(y_min >= 0.0)) throw std::invalid_argument("constrained_nnls: y_min must be >= 0");

    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    std::vector<char> bound_active(static_cast<size_t>(n), 1);
    std::vector<char> lin_active(static_cast<size_t>(mc), 0);

    const double scale = std::max(1.0, (2.0 * a_obs.transpose() * y_obs).cwiseAbs().maxCoeff());
    const double tol_mult = 1e-10 * scale;
    const double tol_step = 1e-13;
    const int max_iter = 50 * (n + mc + 1);

    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<int> free_idx, act_rows;
        for (int k = 0; k < n; ++k)
            if (!bound_active[static_cast<size_t>(k)]) free_idx.push_back(k);
        for (int r = 0; r < mc; ++r)
            if (lin_active[static_cast<size_t>(r)]) act_rows.push_back(r);

        Eigen::VectorXd zhat = Eigen::VectorXd::Zero(n);
        if (!free_idx.empty()) {
            Eigen::MatrixXd a_f(a_obs.rows(), free_idx.size());
            for (size_t j = 0; j < free_idx.size(); ++j) a_f.col(static_cast<Eigen::Index>(j)) = a_obs.col(free_idx[j]);
            Eigen::MatrixXd c_f(act_rows.size(), free_idx.size());
            for (size_t r = 0; r < act_rows.size(); ++r)
                for (size_t j = 0; j < free_idx.size(); ++j) c_f(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = a_miss(act_rows[r], free_idx[j]);
            Eigen::VectorXd d = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(act_rows.size()), y_min);
            Eigen::VectorXd zf = detail::equality_least_squares(a_f, y_obs, c_f, d);
            for (size_t j = 0; j < free_idx.size(); ++j) zhat(free_idx[j]) = zf(static_cast<Eigen::Index>(j));
        }

        const Eigen::VectorXd delta = zhat - z;
        if (delta.cwiseAbs().maxCoeff() <= tol_step * std::max(1.0, z.cwiseAbs().maxCoeff())) {
            // stationary on the working set; check multipliers
            Eigen::VectorXd grad = 2.0 * a_obs.transpose() * (a_obs * z - y_obs);
            Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(act_rows.size()));
            if (!act_rows.empty() && !free_idx.empty()) {
                Eigen::MatrixXd ct(free_idx.size(), act_rows.size());
                Eigen::VectorXd gf(static_cast<Eigen::Index>(free_idx.size()));
                for (size_t j = 0; j < free_idx.size(); ++j) {
                    gf(static_cast<Eigen::Index>(j)) = grad(free_idx[j]);
                    for (size_t r = 0; r < act_rows.size(); ++r)
                        ct(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(r)) = a_miss(act_rows[r], free_idx[j]);
                }
                mu = ct.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(-gf);
            }
            int worst = -1;
            bool worst_is_bound = true;
            double worst_val = -tol_mult;
            for (int k = 0; k < n; ++k) {
                if (!bound_active[static_cast<size_t>(k)]) continue;
                double lambda = grad(k);
                for (size_t r = 0; r < act_rows.size(); ++r) lambda += a_miss(act_rows[r], k) * mu(static_cast<Eigen::Index>(r));
                if (lambda < worst_val) {
                    worst_val = lambda;
                    worst = k;
                    worst_is_bound = true;
                }
            }
            for (size_t r = 0; r < act_rows.size(); ++r) {
                if (mu(static_cast<Eigen::Index>(r)) < worst_val) {
                    worst_val = mu(static_cast<Eigen::Index>(r));
                    worst = act_rows[r];
                    worst_is_bound = false;
                }
            }
            if (worst < 0) return z;  // KKT holds
            if (worst_is_bound)
                bound_active[static_cast<size_t>(worst)] = 0;
            else
                lin_active[static_cast<size_t>(worst)] = 0;
            continue;
        }

        // step toward zhat, stopping at the first blocking constraint
        double alpha = 1.0;
        int block = -1;
        bool block_is_bound = true;
        for (int k = 0; k < n; ++k) {
            if (bound_active[static_cast<size_t>(k)] || delta(k) >= -tol_step) continue;
            double ak = z(k) / -delta(k);
            if (ak < alpha) {
                alpha = ak;
                block = k;
                block_is_bound = true;
            }
        }
        for (int r = 0; r < mc; ++r) {
            if (lin_active[static_cast<size_t>(r)]) continue;
            double s = a_miss.row(r) * delta;
            if (s <= tol_step) continue;
            double ar = (y_min - a_miss.row(r) * z) / s;
            if (ar < alpha) {
                alpha = ar;
                block = r;
                block_is_bound = false;
            }
        }
        z += std::max(0.0, alpha) * delta;
        if (block < 0) {
            z = zhat;  // full step
        } else if (block_is_bound) {
            z(block) = 0.0;
            bound_active[static_cast<size_t>(block)] = 1;
        } else {
            lin_active[static_cast<size_t>(block)] = 1;
        }
        for (int k = 0; k < n; ++k)
            if (bound_active[static_cast<size_t>(k)]) z(k) = 0.0;
    }
    throw std::runtime_error("constrained_nnls: active-set iteration cap reached");
}

namespace detail {

enum class SelectionRule { weighted, plain, norm_balanced };

inline ApsEstimate omp_core(const Eigen::VectorXd& y_lin, const Eigen::VectorXi& mask, const MeasurementMatrix& a,
                            int c, const Eigen::VectorXd* weights, SelectionRule rule, bool missing_bound) {
    const int m = a.m();
    const int n = a.n_a();
    if (c < 1) throw std::invalid_argument("omp: path budget must be >= 1");
    if (y_lin.size() != m || mask.size() != m) throw std::invalid_argument("omp: vector length mismatch");
    if (mask.maxCoeff() < 1) throw std::invalid_argument("omp: need at least one valid beam");
    if (weights && (weights->size() != n || !(weights->minCoeff() >= 0.0)))
        throw std::invalid_argument("omp: weight vector invalid");

    Eigen::VectorXd col_norms(n);
    for (int i = 0; i < n; ++i) {
        col_norms(i) = a.a.col(i).norm();
        if (!(col_norms(i) > 0.0)) throw std::invalid_argument("omp: matrix has an all-zero column");
    }

    std::vector<int> obs_rows, miss_rows;
    for (int b = 0; b < m; ++b) (mask(b) != 0 ? obs_rows : miss_rows).push_back(b);
    double y_min = std::numeric_limits<double>::infinity();
    Eigen::VectorXd y_obs(static_cast<Eigen::Index>(obs_rows.size()));
    for (size_t r = 0; r < obs_rows.size(); ++r) {
        double v = y_lin(obs_rows[r]);
        if (!(v > 0.0)) throw std::invalid_argument("omp: valid beams must carry positive linear power");
        y_obs(static_cast<Eigen::Index>(r)) = v;
        y_min = std::min(y_min, v);
    }
    Eigen::MatrixXd a_obs(obs_rows.size(), n), a_miss(miss_rows.size(), n);
    for (size_t r = 0; r < obs_rows.size(); ++r) a_obs.row(static_cast<Eigen::Index>(r)) = a.a.row(obs_rows[r]);
    for (size_t r = 0; r < miss_rows.size(); ++r) a_miss.row(static_cast<Eigen::Index>(r)) = a.a.row(miss_rows[r]);
    const Eigen::MatrixXd empty_miss(0, n);
    const Eigen::MatrixXd& bound_rows = missing_bound ? a_miss : empty_miss;

    // residual lives on the valid rows only
    Eigen::VectorXd r_obs = y_obs;
    const double norm_sum = col_norms.sum();

    ApsEstimate est;
    est.x = Eigen::VectorXd::Zero(n);
    std::vector<char> in_support(static_cast<size_t>(n), 0);
    std::vector<int> support;

    const int max_iter = 4 * c + 16;
    for (int iter = 0; iter < max_iter; ++iter) {
        const Eigen::VectorXd corr = (a_obs.transpose() * r_obs).cwiseQuotient(col_norms);
        double corr_norm = corr.norm();

        int q = -1;
        double best = 0.0;
        for (int i = 0; i < n; ++i) {
            if (in_support[static_cast<size_t>(i)]) continue;
            double score;
            switch (rule) {
                case SelectionRule::weighted: score = (*weights)(i)*corr(i); break;
                case SelectionRule::plain: score = corr(i); break;
                case SelectionRule::norm_balanced:
                    if (corr_norm <= 0.0) { score = col_norms(i) / norm_sum; }
                    else { score = corr(i) / corr_norm + col_norms(i) / norm_sum; }
                    break;
            }
            if (q < 0 || score > best) {
                q = i;
                best = score;
            }
        }
        if (q < 0) break;  // support already covers every column

        std::vector<int> trial = support;
        trial.push_back(q);
        std::sort(trial.begin(), trial.end());

        Eigen::MatrixXd a_s(a_obs.rows(), static_cast<Eigen::Index>(trial.size()));
        Eigen::MatrixXd g_s(bound_rows.rows(), static_cast<Eigen::Index>(trial.size()));
        for (size_t j = 0; j < trial.size(); ++j) {
            a_s.col(static_cast<Eigen::Index>(j)) = a_obs.col(trial[j]);
            if (g_s.rows() > 0) g_s.col(static_cast<Eigen::Index>(j)) = bound_rows.col(trial[j]);
        }
        Eigen::VectorXd z = constrained_nnls(a_s, y_obs, g_s, y_min);

        est.x.setZero();
        std::vector<int> new_support;
        for (size_t j = 0; j < trial.size(); ++j)
            if (z(static_cast<Eigen::Index>(j)) > 0.0) {
                est.x(trial[j]) = z(static_cast<Eigen::Index>(j));
                new_support.push_back(trial[j]);
            }
        const bool stalled = new_support == support;  // refit dropped the new column, nothing changed
        support = std::move(new_support);
        std::fill(in_support.begin(), in_support.end(), 0);
        for (int i : support) in_support[static_cast<size_t>(i)] = 1;

        r_obs = y_obs - a_obs * est.x;
        est.residual_trace.push_back(r_obs.norm());

        if (static_cast<int>(support.size()) >= c) break;
        if (stalled) break;
        // termination test on the refreshed residual, unweighted correlations
        const Eigen::VectorXd corr2 = (a_obs.transpose() * r_obs).cwiseQuotient(col_norms);
        double worst = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i)
            if (!in_support[static_cast<size_t>(i)]) worst = std::max(worst, corr2(i));
        if (worst < 0.0) break;
    }

    est.support = support;
    est.residual_norm = r_obs.norm();
    return est;
}

}  // namespace detail

/// Geometry- and missing-value-aware estimator: column selection weighted by
/// geometric_weights, coefficients from the bound-constrained NNLS.
inline ApsEstimate gm_nnomp(const Eigen::VectorXd& y_lin, const Eigen::VectorXi& mask, const MeasurementMatrix& a,
                            const Eigen::VectorXd& weights, int c) {
    return detail::omp_core(y_lin, mask, a, c, &weights, detail::SelectionRule::weighted, true);
}

inline ApsEstimate gm_nnomp(const Eigen::VectorXd& y_lin, const Eigen::VectorXi& mask, const MeasurementMatrix& a,
                            const AngularGrid& grid, const GeometryPrior& prior, int c) {
    if (grid.n_a() != a.n_a()) throw std::invalid_argument("gm_nnomp: grid does not match matrix columns");
    const Eigen::VectorXd w = geometric_weights(prior, grid);
    return gm_nnomp(y_lin, mask, a, w, c);
}

/// Baseline: unweighted selection, plain NNLS on the valid rows.
inline ApsEstimate nnomp(const Eigen::VectorXd& y_lin, const Eigen::VectorXi& mask, const MeasurementMatrix& a,
                         int c) {
    return detail::omp_core(y_lin, mask, a, c, nullptr, detail::SelectionRule::plain, false);
}

/// Baseline: selection balances residual correlation against column
/// magnitude share; plain NNLS on the valid rows.
inline ApsEstimate wnomp(const Eigen::VectorXd& y_lin, const Eigen::VectorXi& mask, const MeasurementMatrix& a,
                         int c) {
    return detail::omp_core(y_lin, mask, a, c, nullptr, detail::SelectionRule::norm_balanced, false);
}

}  // namespace mrlscm
