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

// Distance-aware hypergraph over measurement-report samples: one hyperedge
// family links beam-space nearest neighbours, the other links samples of
// the same call within a time window.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrlscm/mr_data.hpp"

namespace mrlscm {

struct HypergraphIncidence {
    int n_vertices = 0;
    std::vector<std::vector<int>> edges_beam;  // one per vertex: itself + k nearest
    std::vector<std::vector<int>> edges_time;  // one per vertex: same-call time window

    int n_edges() const { return static_cast<int>(edges_beam.size() + edges_time.size()); }

    void validate() const {
        if (n_vertices <= 0) throw std::invalid_argument("hypergraph: no vertices");
        auto check_family = [&](const std::vector<std::vector<int>>& family, const char* name) {
            for (const auto& e : family) {
                if (e.empty()) throw std::invalid_argument(std::string("hypergraph: empty ") + name + " hyperedge");
                for (int v : e)
                    if (v < 0 || v >= n_vertices)
                        throw std::invalid_argument(std::string("hypergraph: ") + name + " vertex index out of range");
            }
        };
        check_family(edges_beam, "beam");
        check_family(edges_time, "time");
    }
};

// Serving and neighbor beams of one sample stacked into a single vector;
// invalid entries carry the missing sentinel so every sample has the same
// layout.
inline Eigen::VectorXd stacked_rsrp(const MRSample& s) {
    const int m = s.m();
    const int q = s.q();
    Eigen::VectorXd r(m + q * m);
    for (int b = 0; b < m; ++b) r(b) = s.serving_mask(b) != 0 ? s.serving_rsrp(b) : kMissingDbm;
    for (int n = 0; n < q; ++n)
        for (int b = 0; b < m; ++b)
            r(m + n * m + b) = s.neighbor_mask(n, b) != 0 ? s.neighbor_rsrp(n, b) : kMissingDbm;
    return r;
}

inline Eigen::MatrixXd stacked_features(const std::vector<MRSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("stacked_features: no samples");
    Eigen::VectorXd first = stacked_rsrp(samples.front());
    Eigen::MatrixXd f(static_cast<Eigen::Index>(samples.size()), first.size());
    f.row(0) = first;
    for (size_t i = 1; i < samples.size(); ++i) {
        Eigen::VectorXd r = stacked_rsrp(samples[i]);
        if (r.size() != first.size()) throw std::invalid_argument("stacked_features: inconsistent beam layout");
        f.row(static_cast<Eigen::Index>(i)) = r;
    }
    return f;
}

// Mixture of Euclidean and cosine distances between stacked RSRP vectors.
inline double beam_space_distance(const Eigen::VectorXd& r_i, const Eigen::VectorXd& r_j, double gamma) {
    if (r_i.size() != r_j.size()) throw std::invalid_argument("beam_space_distance: size mismatch");
    if (r_i.size() == 0) throw std::invalid_argument("beam_space_distance: empty vectors");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("beam_space_distance: gamma outside [0,1]");
    if (r_i == r_j) return 0.0;
    const double euclid = (r_i - r_j).norm();
    if (gamma == 1.0) return euclid;
    const double ni = r_i.norm();
    const double nj = r_j.norm();
    if (ni == 0.0 || nj == 0.0)
        throw std::invalid_argument("beam_space_distance: cosine term undefined for a zero vector");
    const double c = std::clamp(r_i.dot(r_j) / (ni * nj), -1.0, 1.0);
    return gamma * euclid + (1.0 - gamma) * (1.0 - c);
}

// One hyperedge per vertex: the vertex plus its k nearest neighbours in
// beam space. Ties resolve toward the lower vertex index.
inline std::vector<std::vector<int>> build_beam_hyperedges(const Eigen::MatrixXd& features, int k, double gamma) {
    const int n = static_cast<int>(features.rows());
    if (n == 0) throw std::invalid_argument("build_beam_hyperedges: no vertices");
    if (k < 1) throw std::invalid_argument("build_beam_hyperedges: k must be at least 1");
    if (k >= n) throw std::invalid_argument("build_beam_hyperedges: k must be below the vertex count");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("build_beam_hyperedges: gamma outside [0,1]");

    // pairwise terms from one Gram product
    Eigen::MatrixXd gram = features * features.transpose();
    Eigen::VectorXd sq = gram.diagonal();
    if (gamma < 1.0 && sq.minCoeff() <= 0.0)
        throw std::invalid_argument("build_beam_hyperedges: cosine term undefined for a zero vector");

    std::vector<std::vector<int>> edges(static_cast<size_t>(n));
    std::vector<std::pair<double, int>> order(static_cast<size_t>(n - 1));
    for (int v = 0; v < n; ++v) {
        size_t t = 0;
        for (int u = 0; u < n; ++u) {
            if (u == v) continue;
            const double e2 = std::max(0.0, sq(v) + sq(u) - 2.0 * gram(v, u));
            double d = gamma * std::sqrt(e2);
            if (gamma < 1.0) {
                const double c = std::clamp(gram(v, u) / std::sqrt(sq(v) * sq(u)), -1.0, 1.0);
                d += (1.0 - gamma) * (1.0 - c);
            }
            order[t++] = {d, u};
        }
        std::partial_sort(order.begin(), order.begin() + k, order.end());
        auto& e = edges[static_cast<size_t>(v)];
        e.resize(static_cast<size_t>(k) + 1);
        e[0] = v;
        for (int j = 0; j < k; ++j) e[static_cast<size_t>(j) + 1] = order[static_cast<size_t>(j)].second;
        std::sort(e.begin(), e.end());
    }
    return edges;
}

inline std::vector<std::vector<int>> build_beam_hyperedges(const std::vector<MRSample>& samples, int k,
                                                           double gamma) {
    return build_beam_hyperedges(stacked_features(samples), k, gamma);
}

// One hyperedge per vertex: all samples of the same call whose timestamps
// lie within tau seconds. An infinite tau keeps whole calls together.
inline std::vector<std::vector<int>> build_temporal_hyperedges(const std::vector<MRSample>& samples, double tau) {
    if (samples.empty()) throw std::invalid_argument("build_temporal_hyperedges: no samples");
    if (!(tau > 0.0)) throw std::invalid_argument("build_temporal_hyperedges: tau must be positive");

    std::map<std::string, std::vector<int>> calls;
    for (size_t i = 0; i < samples.size(); ++i) calls[samples[i].call_id].push_back(static_cast<int>(i));

    std::vector<std::vector<int>> edges(samples.size());
    for (auto& [call, members] : calls) {
        std::sort(members.begin(), members.end(), [&](int a, int b) {
            const double ta = samples[static_cast<size_t>(a)].timestamp;
            const double tb = samples[static_cast<size_t>(b)].timestamp;
            return ta != tb ? ta < tb : a < b;
        });
        for (size_t p = 0; p < members.size(); ++p) {
            const int v = members[p];
            const double tv = samples[static_cast<size_t>(v)].timestamp;
            auto& e = edges[static_cast<size_t>(v)];
            for (int u : members)
                if (std::abs(samples[static_cast<size_t>(u)].timestamp - tv) <= tau) e.push_back(u);
            std::sort(e.begin(), e.end());
        }
    }
    return edges;
}

inline HypergraphIncidence build_hypergraph(const std::vector<MRSample>& samples, int k, double gamma,
                                            double tau) {
    HypergraphIncidence h;
    h.n_vertices = static_cast<int>(samples.size());
    Eigen::MatrixXd f = stacked_features(samples);
    h.edges_beam = build_beam_hyperedges(f, k, gamma);
    h.edges_time = build_temporal_hyperedges(samples, tau);
    h.validate();
    return h;
}

}  // namespace mrlscm
