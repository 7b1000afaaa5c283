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

// Semi-supervised hypergraph-convolution regressor that predicts sample
// locations from stacked multi-cell RSRP features. Each layer averages
// vertex features into hyperedges, applies a learned per-family weight,
// averages back into vertices and passes the result through a linear map.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrlscm/channel_model.hpp"
#include "mrlscm/hypergraph.hpp"
#include "mrlscm/io_json.hpp"

namespace mrlscm {

template <typename S>
using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecS = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct HgnnParamsT {
    std::vector<MatS<S>> thetas;  // layer maps, each out-width x in-width
    S w1 = S(0);                  // beam-edge weight logit
    S w2 = S(0);                  // time-edge weight logit
    std::string activation = "leaky_relu";

    // invertible conditioning applied around the raw forward pass
    VecS<S> feature_shift;  // empty = identity
    VecS<S> feature_scale;
    Eigen::Matrix<S, 2, 1> label_shift = Eigen::Matrix<S, 2, 1>::Zero();
    S label_scale = S(1);

    int input_width() const {
        return thetas.empty() ? 0 : static_cast<int>(thetas.front().cols());
    }

    void validate() const {
        if (thetas.empty()) throw std::invalid_argument("hgnn params: no layers");
        for (size_t l = 0; l + 1 < thetas.size(); ++l)
            if (thetas[l + 1].cols() != thetas[l].rows())
                throw std::invalid_argument("hgnn params: inconsistent layer widths");
        if (thetas.back().rows() != 2) throw std::invalid_argument("hgnn params: output width must be 2");
        if (activation != "leaky_relu" && activation != "identity")
            throw std::invalid_argument("hgnn params: unknown activation '" + activation + "'");
        if (feature_shift.size() != feature_scale.size())
            throw std::invalid_argument("hgnn params: conditioning vectors disagree");
        if (feature_shift.size() != 0 && feature_shift.size() != thetas.front().cols())
            throw std::invalid_argument("hgnn params: conditioning width mismatch");
        if (!(static_cast<double>(label_scale) > 0.0))
            throw std::invalid_argument("hgnn params: label scale must be positive");
    }

    template <typename T>
    HgnnParamsT<T> cast() const {
        HgnnParamsT<T> out;
        out.thetas.reserve(thetas.size());
        for (const auto& t : thetas) out.thetas.push_back(t.template cast<T>());
        out.w1 = static_cast<T>(w1);
        out.w2 = static_cast<T>(w2);
        out.activation = activation;
        out.feature_shift = feature_shift.template cast<T>();
        out.feature_scale = feature_scale.template cast<T>();
        out.label_shift = label_shift.template cast<T>();
        out.label_scale = static_cast<T>(label_scale);
        return out;
    }
};

using HgnnParams = HgnnParamsT<double>;

struct TrainConfig {
    double gamma = 0.5;  // beam-distance mix weight
    int k = 8;           // neighbour count for beam hyperedges
    double tau = 3.0;    // time window in seconds
    double learning_rate = 3e-3;
    int epochs = 2000;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    double label_fraction = 0.1;
    std::vector<int> hidden_widths = {200, 1000};
    std::string activation = "leaky_relu";
    // stop once the loss improved by less than plateau_tol (relative) over
    // plateau_window epochs; zero disables the early stop
    int plateau_window = 50;
    double plateau_tol = 1e-6;

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("train config: gamma outside [0,1]");
        if (k < 1) throw std::invalid_argument("train config: k must be at least 1");
        if (!(tau > 0.0)) throw std::invalid_argument("train config: tau must be positive");
        if (!(learning_rate >= 0.0)) throw std::invalid_argument("train config: negative learning rate");
        if (epochs < 0) throw std::invalid_argument("train config: negative epoch count");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train config: momentum outside [0,1)");
        if (!(label_fraction > 0.0 && label_fraction <= 1.0))
            throw std::invalid_argument("train config: label fraction outside (0,1]");
        if (plateau_window < 0 || !(plateau_tol >= 0.0))
            throw std::invalid_argument("train config: bad plateau settings");
        for (int w : hidden_widths)
            if (w < 1) throw std::invalid_argument("train config: hidden width below 1");
    }
};

namespace detail {

template <typename S>
S sigmoid(S v) {
    return S(1) / (S(1) + std::exp(-v));
}

}  // namespace detail

template <typename S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One hyperedge family in compressed form: edge membership and, per
// vertex, the incident edges of this family.
template <typename S>
struct HgnnFamilyOps {
    int n_edges = 0;
    std::vector<int> edge_start;  // n_edges + 1 offsets into members
    std::vector<int> members;
    std::vector<S> edge_inv;      // reciprocal edge sizes
    std::vector<int> vert_start;  // n_vertices + 1 offsets into incident
    std::vector<int> incident;    // family-local edge ids per vertex
};

// Precomputed mean operators of the incidence structure.
template <typename S>
struct HgnnWorkspace {
    int n_vertices = 0;
    int n_edges = 0;
    HgnnFamilyOps<S> beam;
    HgnnFamilyOps<S> time;
    VecS<S> inv_degree;  // reciprocal incident-edge counts over both families
};

namespace detail {

template <typename S>
HgnnFamilyOps<S> build_family(const std::vector<std::vector<int>>& family, int n, std::vector<int>& degree) {
    HgnnFamilyOps<S> f;
    f.n_edges = static_cast<int>(family.size());
    f.edge_start.assign(static_cast<size_t>(f.n_edges) + 1, 0);
    for (int e = 0; e < f.n_edges; ++e) {
        const auto& edge = family[static_cast<size_t>(e)];
        std::vector<int> sorted = edge;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw std::invalid_argument("hgnn workspace: duplicate vertex inside a hyperedge");
        f.edge_start[static_cast<size_t>(e) + 1] = f.edge_start[static_cast<size_t>(e)] +
                                                   static_cast<int>(edge.size());
        for (int v : sorted) {
            f.members.push_back(v);
            ++degree[static_cast<size_t>(v)];
        }
        f.edge_inv.push_back(S(1) / static_cast<S>(edge.size()));
    }
    // invert: edges incident to each vertex, in ascending edge order
    std::vector<int> counts(static_cast<size_t>(n), 0);
    for (int v : f.members) ++counts[static_cast<size_t>(v)];
    f.vert_start.assign(static_cast<size_t>(n) + 1, 0);
    for (int v = 0; v < n; ++v) f.vert_start[static_cast<size_t>(v) + 1] = f.vert_start[static_cast<size_t>(v)] + counts[static_cast<size_t>(v)];
    f.incident.resize(f.members.size());
    std::vector<int> cursor(f.vert_start.begin(), f.vert_start.end() - 1);
    for (int e = 0; e < f.n_edges; ++e)
        for (int j = f.edge_start[static_cast<size_t>(e)]; j < f.edge_start[static_cast<size_t>(e) + 1]; ++j)
            f.incident[static_cast<size_t>(cursor[static_cast<size_t>(f.members[static_cast<size_t>(j)])]++)] = e;
    return f;
}

}  // namespace detail

template <typename S>
HgnnWorkspace<S> build_workspace(const HypergraphIncidence& h) {
    h.validate();
    HgnnWorkspace<S> ws;
    ws.n_vertices = h.n_vertices;
    ws.n_edges = h.n_edges();
    std::vector<int> degree(static_cast<size_t>(h.n_vertices), 0);
    ws.beam = detail::build_family<S>(h.edges_beam, h.n_vertices, degree);
    ws.time = detail::build_family<S>(h.edges_time, h.n_vertices, degree);
    ws.inv_degree.resize(h.n_vertices);
    for (int v = 0; v < h.n_vertices; ++v) {
        if (degree[static_cast<size_t>(v)] == 0)
            throw std::invalid_argument("hgnn workspace: vertex without any incident hyperedge");
        ws.inv_degree(v) = S(1) / static_cast<S>(degree[static_cast<size_t>(v)]);
    }
    return ws;
}

namespace detail {

// Forward trace plus reusable scratch. Buffers keep their storage across
// repeated passes of identical shape, so per-epoch allocation cost vanishes.
template <typename S>
struct HgnnTrace {
    std::vector<MatR<S>> xs;  // layer inputs
    std::vector<MatR<S>> ga;  // per layer: beam-family means of the layer operand
    std::vector<MatR<S>> gb;  // per layer: time-family means of the layer operand
    std::vector<MatR<S>> op;  // per layer: gated means (narrow input) or linear images (narrow output)
    std::vector<MatR<S>> z;   // per layer: pre-activations
    std::vector<MatR<S>> me1, me2, dz, dop, dme, dx;  // scratch
};

// The mean aggregation mixes rows, the parameter map mixes columns, so they
// commute. Aggregating on the narrower side of each layer is cheaper.
template <typename S>
bool aggregate_after_map(const HgnnParamsT<S>& p, size_t l) {
    return p.thetas[l].rows() < p.thetas[l].cols();
}

// me row e = mean of member rows of x
template <typename S>
void family_edge_mean(const HgnnFamilyOps<S>& f, const MatR<S>& x, MatR<S>& me) {
    me.setZero(f.n_edges, x.cols());
    for (int e = 0; e < f.n_edges; ++e) {
        auto row = me.row(e);
        for (int j = f.edge_start[static_cast<size_t>(e)]; j < f.edge_start[static_cast<size_t>(e) + 1]; ++j)
            row += x.row(f.members[static_cast<size_t>(j)]);
        row *= f.edge_inv[static_cast<size_t>(e)];
    }
}

// acc row v = inv_degree(v) * sum of incident edge rows of me
template <typename S>
void family_vertex_mean(const HgnnFamilyOps<S>& f, const VecS<S>& inv_degree, const MatR<S>& me, MatR<S>& acc) {
    acc.setZero(inv_degree.size(), me.cols());
    for (int v = 0; v < static_cast<int>(inv_degree.size()); ++v) {
        auto row = acc.row(v);
        for (int j = f.vert_start[static_cast<size_t>(v)]; j < f.vert_start[static_cast<size_t>(v) + 1]; ++j)
            row += me.row(f.incident[static_cast<size_t>(j)]);
        row *= inv_degree(v);
    }
}

// adjoint of the two mean stages: dx += scale * edge_meanT vertex_meanT dmv
template <typename S>
void family_backward(const HgnnFamilyOps<S>& f, const VecS<S>& inv_degree, S scale, const MatR<S>& dmv,
                     MatR<S>& dme, MatR<S>& dx) {
    dme.setZero(f.n_edges, dmv.cols());
    Eigen::Matrix<S, 1, Eigen::Dynamic> tmp(dmv.cols());
    for (int v = 0; v < static_cast<int>(inv_degree.size()); ++v) {
        if (f.vert_start[static_cast<size_t>(v)] == f.vert_start[static_cast<size_t>(v) + 1]) continue;
        tmp = (scale * inv_degree(v)) * dmv.row(v);
        for (int j = f.vert_start[static_cast<size_t>(v)]; j < f.vert_start[static_cast<size_t>(v) + 1]; ++j)
            dme.row(f.incident[static_cast<size_t>(j)]) += tmp;
    }
    for (int e = 0; e < f.n_edges; ++e) {
        tmp = f.edge_inv[static_cast<size_t>(e)] * dme.row(e);
        for (int j = f.edge_start[static_cast<size_t>(e)]; j < f.edge_start[static_cast<size_t>(e) + 1]; ++j)
            dx.row(f.members[static_cast<size_t>(j)]) += tmp;
    }
}

// Both-family gated mean of x into ga/gb; gb stays zero without time edges.
template <typename S>
void gated_means(const HgnnWorkspace<S>& ws, const MatR<S>& x, MatR<S>& me1, MatR<S>& me2, MatR<S>& ga,
                 MatR<S>& gb) {
    family_edge_mean(ws.beam, x, me1);
    family_vertex_mean(ws.beam, ws.inv_degree, me1, ga);
    if (ws.time.n_edges > 0) {
        family_edge_mean(ws.time, x, me2);
        family_vertex_mean(ws.time, ws.inv_degree, me2, gb);
    } else {
        gb.setZero(ws.n_vertices, x.cols());
    }
}

template <typename S>
MatS<S> forward_core(const HgnnWorkspace<S>& ws, const HgnnParamsT<S>& p, const MatS<S>& x_in,
                     HgnnTrace<S>* trace) {
    p.validate();
    if (static_cast<int>(x_in.rows()) != ws.n_vertices)
        throw std::invalid_argument("hgnn forward: feature row count mismatch");
    if (x_in.cols() != p.thetas.front().cols())
        throw std::invalid_argument("hgnn forward: feature width mismatch");

    const S s1 = sigmoid(p.w1);
    const S s2 = sigmoid(p.w2);
    const size_t layers = p.thetas.size();
    const bool use_leaky = p.activation == "leaky_relu";

    HgnnTrace<S> local;
    HgnnTrace<S>& t = trace ? *trace : local;
    t.xs.resize(layers + 1);
    t.ga.resize(layers);
    t.gb.resize(layers);
    t.op.resize(layers);
    t.z.resize(layers);
    t.me1.resize(layers);
    t.me2.resize(layers);

    t.xs[0] = x_in;
    for (size_t l = 0; l < layers; ++l) {
        if (aggregate_after_map(p, l)) {
            t.op[l].noalias() = t.xs[l] * p.thetas[l].transpose();
            gated_means(ws, t.op[l], t.me1[l], t.me2[l], t.ga[l], t.gb[l]);
            t.z[l] = s1 * t.ga[l] + s2 * t.gb[l];
        } else {
            gated_means(ws, t.xs[l], t.me1[l], t.me2[l], t.ga[l], t.gb[l]);
            t.op[l] = s1 * t.ga[l] + s2 * t.gb[l];
            t.z[l].noalias() = t.op[l] * p.thetas[l].transpose();
        }
        if (l + 1 < layers && use_leaky)
            t.xs[l + 1] = (t.z[l].array().max(S(0)) + S(0.01) * t.z[l].array().min(S(0))).matrix();
        else
            t.xs[l + 1] = t.z[l];
    }
    return t.xs[layers];
}

template <typename S>
struct HgnnGrads {
    std::vector<MatS<S>> thetas;
    S w1 = S(0);
    S w2 = S(0);
};

template <typename S>
HgnnGrads<S> backward_core(const HgnnWorkspace<S>& ws, const HgnnParamsT<S>& p, HgnnTrace<S>& t,
                           const MatS<S>& d_out) {
    const size_t layers = p.thetas.size();
    const bool use_leaky = p.activation == "leaky_relu";
    const S s1 = sigmoid(p.w1);
    const S s2 = sigmoid(p.w2);

    HgnnGrads<S> g;
    g.thetas.resize(layers);
    S ds1 = S(0);
    S ds2 = S(0);

    t.dz.resize(layers);
    t.dop.resize(layers);
    t.dme.resize(layers);
    t.dx.resize(layers + 1);
    t.dx[layers] = d_out;
    for (size_t l = layers; l-- > 0;) {
        const MatR<S>* dzp = &t.dx[l + 1];
        if (l + 1 < layers && use_leaky) {
            t.dz[l].resize(t.z[l].rows(), t.z[l].cols());
            const S* zp = t.z[l].data();
            const S* up = t.dx[l + 1].data();
            S* op = t.dz[l].data();
            const Eigen::Index total = t.dz[l].size();
            // integer blend vectorizes; a floating select would keep a branch
            using U = std::conditional_t<sizeof(S) == 4, std::uint32_t, std::uint64_t>;
            for (Eigen::Index i = 0; i < total; ++i) {
                const U m = zp[i] > S(0) ? ~U(0) : U(0);
                const U a = std::bit_cast<U>(up[i]);
                const U b = std::bit_cast<U>(S(0.01) * up[i]);
                op[i] = std::bit_cast<S>((a & m) | (b & ~m));
            }
            dzp = &t.dz[l];
        }
        const MatR<S>& dz = *dzp;
        if (aggregate_after_map(p, l)) {
            ds1 += dz.cwiseProduct(t.ga[l]).sum();
            ds2 += dz.cwiseProduct(t.gb[l]).sum();
            t.dop[l].setZero(ws.n_vertices, dz.cols());
            family_backward(ws.beam, ws.inv_degree, s1, dz, t.dme[l], t.dop[l]);
            if (ws.time.n_edges > 0) family_backward(ws.time, ws.inv_degree, s2, dz, t.dme[l], t.dop[l]);
            g.thetas[l] = t.dop[l].transpose() * t.xs[l];
            if (l > 0) t.dx[l].noalias() = t.dop[l] * p.thetas[l];
        } else {
            g.thetas[l] = dz.transpose() * t.op[l];
            t.dop[l].noalias() = dz * p.thetas[l];
            ds1 += t.dop[l].cwiseProduct(t.ga[l]).sum();
            ds2 += t.dop[l].cwiseProduct(t.gb[l]).sum();
            if (l > 0) {
                t.dx[l].setZero(ws.n_vertices, t.dop[l].cols());
                family_backward(ws.beam, ws.inv_degree, s1, t.dop[l], t.dme[l], t.dx[l]);
                if (ws.time.n_edges > 0) family_backward(ws.time, ws.inv_degree, s2, t.dop[l], t.dme[l], t.dx[l]);
            }
        }
    }
    g.w1 = ds1 * s1 * (S(1) - s1);
    g.w2 = ds2 * s2 * (S(1) - s2);
    return g;
}

}  // namespace detail

// Raw convolution stack: no feature or label conditioning applied.
template <typename S>
MatS<S> hgnn_forward(const HgnnWorkspace<S>& ws, const MatS<S>& features, const HgnnParamsT<S>& params) {
    return detail::forward_core<S>(ws, params, features, nullptr);
}

template <typename S>
MatS<S> hgnn_forward(const HypergraphIncidence& h, const MatS<S>& features, const HgnnParamsT<S>& params) {
    auto ws = build_workspace<S>(h);
    return detail::forward_core<S>(ws, params, features, nullptr);
}

template <typename S>
S hgnn_loss(const MatS<S>& pred, const MatS<S>& labels, const std::vector<int>& labeled) {
    if (labeled.empty()) throw std::invalid_argument("hgnn loss: empty labeled set");
    if (pred.rows() != labels.rows() || pred.cols() != 2 || labels.cols() != 2)
        throw std::invalid_argument("hgnn loss: shape mismatch");
    S acc = S(0);
    for (int i : labeled) {
        if (i < 0 || i >= static_cast<int>(pred.rows()))
            throw std::invalid_argument("hgnn loss: labeled index out of range");
        acc += (pred.row(i) - labels.row(i)).squaredNorm();
    }
    return acc / static_cast<S>(labeled.size());
}

template <typename S>
HgnnParamsT<S> init_params(int input_width, const std::vector<int>& hidden_widths, std::uint64_t seed,
                           const std::string& activation = "leaky_relu") {
    if (input_width < 1) throw std::invalid_argument("hgnn init: input width below 1");
    std::vector<int> widths;
    widths.push_back(input_width);
    for (int w : hidden_widths) {
        if (w < 1) throw std::invalid_argument("hgnn init: hidden width below 1");
        widths.push_back(w);
    }
    widths.push_back(2);

    HgnnParamsT<S> p;
    p.activation = activation;
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
        Rng rng(derive_seed(seed, "theta-" + std::to_string(l)));
        const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
        MatS<S> theta(widths[l + 1], widths[l]);
        for (Eigen::Index r = 0; r < theta.rows(); ++r)
            for (Eigen::Index c = 0; c < theta.cols(); ++c)
                theta(r, c) = static_cast<S>(rng.uniform(-bound, bound));
        p.thetas.push_back(std::move(theta));
    }
    p.validate();
    return p;
}

template <typename S>
struct TrainResultT {
    HgnnParamsT<S> params;
    std::vector<double> loss_trace;  // loss in raw label units, one entry per epoch run
};

// Full-batch gradient descent with momentum on the layer maps and the two
// hyperedge-family logits. Features are standardized per dimension and
// labels centred on the labeled set and scaled to unit spread; both
// transforms are stored in the returned parameters.
template <typename S>
TrainResultT<S> train(const HypergraphIncidence& h, const Eigen::MatrixXd& features,
                      const Eigen::MatrixXd& labels, const std::vector<int>& labeled, const TrainConfig& cfg) {
    cfg.validate();
    if (labeled.empty()) throw std::invalid_argument("hgnn train: empty labeled set");
    if (features.rows() != h.n_vertices || labels.rows() != h.n_vertices || labels.cols() != 2)
        throw std::invalid_argument("hgnn train: shape mismatch");
    for (int i : labeled)
        if (i < 0 || i >= h.n_vertices) throw std::invalid_argument("hgnn train: labeled index out of range");

    auto ws = build_workspace<S>(h);

    // feature standardization (degenerate columns pass through unscaled)
    Eigen::VectorXd f_shift = features.colwise().mean();
    Eigen::VectorXd f_scale(features.cols());
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
        const double sd = std::sqrt((features.col(c).array() - f_shift(c)).square().mean());
        f_scale(c) = sd > 1e-12 ? sd : 1.0;
    }
    MatS<S> x = ((features.rowwise() - f_shift.transpose()).array().rowwise() /
                 f_scale.transpose().array())
                    .matrix()
                    .template cast<S>();

    // label conditioning: centre on the labeled centroid, isotropic scale
    Eigen::Vector2d l_shift = Eigen::Vector2d::Zero();
    for (int i : labeled) l_shift += labels.row(i).transpose();
    l_shift /= static_cast<double>(labeled.size());
    double spread = 0.0;
    for (int i : labeled) spread += (labels.row(i).transpose() - l_shift).squaredNorm();
    spread = std::sqrt(spread / (2.0 * static_cast<double>(labeled.size())));
    const double l_scale = spread > 1e-9 ? spread : 1.0;
    MatS<S> y = ((labels.rowwise() - l_shift.transpose()) / l_scale).template cast<S>();

    HgnnParamsT<S> params = init_params<S>(static_cast<int>(features.cols()), cfg.hidden_widths, cfg.seed,
                                           cfg.activation);
    params.feature_shift = f_shift.cast<S>();
    params.feature_scale = f_scale.cast<S>();
    params.label_shift = l_shift.cast<S>();
    params.label_scale = static_cast<S>(l_scale);

    std::vector<MatS<S>> vel;
    vel.reserve(params.thetas.size());
    for (const auto& t : params.thetas) vel.push_back(MatS<S>::Zero(t.rows(), t.cols()));
    S vw1 = S(0);
    S vw2 = S(0);

    const S lr = static_cast<S>(cfg.learning_rate);
    const S mom = static_cast<S>(cfg.momentum);
    const double raw_factor = l_scale * l_scale;

    TrainResultT<S> result;
    result.loss_trace.reserve(static_cast<size_t>(cfg.epochs));
    detail::HgnnTrace<S> trace;
    MatS<S> d_out;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        MatS<S> out = detail::forward_core<S>(ws, params, x, &trace);
        const double loss = static_cast<double>(hgnn_loss<S>(out, y, labeled)) * raw_factor;
        if (!std::isfinite(loss))
            throw std::runtime_error("hgnn training diverged at epoch " + std::to_string(epoch));
        result.loss_trace.push_back(loss);

        d_out.setZero(out.rows(), 2);
        const S inv = S(2) / static_cast<S>(labeled.size());
        for (int i : labeled) d_out.row(i) = inv * (out.row(i) - y.row(i));
        auto grads = detail::backward_core<S>(ws, params, trace, d_out);

        for (size_t l = 0; l < params.thetas.size(); ++l) {
            vel[l] = mom * vel[l] - lr * grads.thetas[l];
            params.thetas[l] += vel[l];
        }
        vw1 = mom * vw1 - lr * grads.w1;
        vw2 = mom * vw2 - lr * grads.w2;
        params.w1 += vw1;
        params.w2 += vw2;

        if (cfg.plateau_window > 0 && cfg.plateau_tol > 0.0 &&
            static_cast<int>(result.loss_trace.size()) > cfg.plateau_window) {
            const double before = result.loss_trace[result.loss_trace.size() - 1 -
                                                    static_cast<size_t>(cfg.plateau_window)];
            if (before - loss <= cfg.plateau_tol * std::max(1.0, before)) break;
        }
    }

    result.params = std::move(params);
    return result;
}

// Forward pass through the stored conditioning: locations in raw units.
template <typename S>
Eigen::MatrixXd predict(const HypergraphIncidence& h, const Eigen::MatrixXd& features,
                        const HgnnParamsT<S>& params) {
    params.validate();
    auto ws = build_workspace<S>(h);
    MatS<S> x = features.template cast<S>();
    if (params.feature_shift.size() != 0) {
        if (params.feature_shift.size() != features.cols())
            throw std::invalid_argument("hgnn predict: conditioning width mismatch");
        x = (x.rowwise() - params.feature_shift.transpose()).array().rowwise() /
            params.feature_scale.transpose().array();
    }
    MatS<S> out = detail::forward_core<S>(ws, params, std::move(x), nullptr);
    Eigen::MatrixXd raw = out.template cast<double>() * static_cast<double>(params.label_scale);
    raw.rowwise() += params.label_shift.template cast<double>().transpose();
    if (!raw.allFinite()) throw std::runtime_error("hgnn predict: non-finite output");
    return raw;
}

inline double mean_distance_error(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
                                  const std::vector<int>& index_set) {
    if (index_set.empty()) throw std::invalid_argument("mean_distance_error: empty index set");
    if (pred.rows() != truth.rows() || pred.cols() != 2 || truth.cols() != 2)
        throw std::invalid_argument("mean_distance_error: shape mismatch");
    double acc = 0.0;
    for (int i : index_set) {
        if (i < 0 || i >= static_cast<int>(pred.rows()))
            throw std::invalid_argument("mean_distance_error: index out of range");
        acc += (pred.row(i) - truth.row(i)).norm();
    }
    return acc / static_cast<double>(index_set.size());
}

// Mean location of the k nearest labeled samples in beam space.
inline Eigen::MatrixXd knn_baseline(const Eigen::MatrixXd& labeled_features,
                                    const Eigen::MatrixXd& labeled_locations,
                                    const Eigen::MatrixXd& query_features, int k, double gamma) {
    const int nl = static_cast<int>(labeled_features.rows());
    if (k < 1 || k > nl) throw std::invalid_argument("knn_baseline: need at least k labeled samples");
    if (labeled_locations.rows() != nl || labeled_locations.cols() != 2)
        throw std::invalid_argument("knn_baseline: location shape mismatch");
    if (query_features.cols() != labeled_features.cols())
        throw std::invalid_argument("knn_baseline: feature width mismatch");

    Eigen::MatrixXd out(query_features.rows(), 2);
    std::vector<std::pair<double, int>> order(static_cast<size_t>(nl));
    for (Eigen::Index qi = 0; qi < query_features.rows(); ++qi) {
        Eigen::VectorXd q = query_features.row(qi);
        for (int j = 0; j < nl; ++j)
            order[static_cast<size_t>(j)] = {beam_space_distance(q, labeled_features.row(j), gamma), j};
        std::partial_sort(order.begin(), order.begin() + k, order.end());
        Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
        for (int j = 0; j < k; ++j) mean += labeled_locations.row(order[static_cast<size_t>(j)].second);
        out.row(qi) = mean / static_cast<double>(k);
    }
    return out;
}

inline Eigen::MatrixXd knn_baseline(const std::vector<MRSample>& labeled, const std::vector<MRSample>& queries,
                                    int k, double gamma) {
    for (const auto& s : labeled)
        if (!s.is_labeled) throw std::invalid_argument("knn_baseline: reference sample without a location");
    Eigen::MatrixXd lf = stacked_features(labeled);
    Eigen::MatrixXd ll(static_cast<Eigen::Index>(labeled.size()), 2);
    for (size_t i = 0; i < labeled.size(); ++i) ll.row(static_cast<Eigen::Index>(i)) = labeled[i].true_location;
    return knn_baseline(lf, ll, stacked_features(queries), k, gamma);
}

// Deterministic subset of the labeled samples used as supervision.
inline std::vector<int> select_labeled(const std::vector<MRSample>& samples, double fraction,
                                       std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("select_labeled: fraction outside (0,1]");
    std::vector<int> pool;
    for (size_t i = 0; i < samples.size(); ++i)
        if (samples[i].is_labeled) pool.push_back(static_cast<int>(i));
    if (pool.empty()) throw std::invalid_argument("select_labeled: no labeled samples");

    Rng rng(derive_seed(seed, "label-select"));
    for (size_t i = pool.size(); i > 1; --i)
        std::swap(pool[i - 1], pool[rng.below(i)]);
    size_t take = static_cast<size_t>(std::llround(fraction * static_cast<double>(pool.size())));
    take = std::clamp<size_t>(take, 1, pool.size());
    pool.resize(take);
    std::sort(pool.begin(), pool.end());
    return pool;
}

// Checkpoint: flat little-endian binary of the parameter tensors plus a
// JSON sidecar describing names and shapes.
inline void save_checkpoint(const HgnnParams& params, const std::string& path) {
    params.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");

    nlohmann::json tensors = nlohmann::json::array();
    auto add = [&](const std::string& name, const Eigen::MatrixXd& m) {
        tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) detail::put_f64le(out, m(r, c));
    };
    for (size_t l = 0; l < params.thetas.size(); ++l) add("theta" + std::to_string(l), params.thetas[l]);
    add("w1", Eigen::MatrixXd::Constant(1, 1, params.w1));
    add("w2", Eigen::MatrixXd::Constant(1, 1, params.w2));
    add("feature_shift", params.feature_shift);
    add("feature_scale", params.feature_scale);
    add("label_shift", params.label_shift);
    add("label_scale", Eigen::MatrixXd::Constant(1, 1, params.label_scale));
    if (!out) throw std::runtime_error("short write on checkpoint '" + path + "'");
    out.close();

    nlohmann::json side;
    side["activation"] = params.activation;
    side["tensors"] = tensors;
    save_json(side, path + ".json");
}

inline HgnnParams load_checkpoint(const std::string& path) {
    nlohmann::json side = load_json(path + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    HgnnParams params;
    params.activation = side.at("activation").get<std::string>();
    size_t offset = 0;
    auto take = [&](Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                if (offset + 8 > bytes.size()) throw std::runtime_error("checkpoint '" + path + "' truncated");
                std::uint64_t u = 0;
                for (int i = 0; i < 8; ++i)
                    u |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + static_cast<size_t>(i)]))
                         << (8 * i);
                double v;
                std::memcpy(&v, &u, 8);
                m(r, c) = v;
                offset += 8;
            }
        return m;
    };
    for (const auto& t : side.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        Eigen::MatrixXd m = take(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
        auto expect_column = [&](Eigen::Index rows) {
            if (m.cols() != 1 || (rows >= 0 && m.rows() != rows))
                throw std::runtime_error("checkpoint '" + path + "': bad shape for '" + name + "'");
        };
        if (name.rfind("theta", 0) == 0) {
            params.thetas.push_back(std::move(m));
        } else if (name == "w1") {
            expect_column(1);
            params.w1 = m(0, 0);
        } else if (name == "w2") {
            expect_column(1);
            params.w2 = m(0, 0);
        } else if (name == "feature_shift") {
            expect_column(-1);
            params.feature_shift = m;
        } else if (name == "feature_scale") {
            expect_column(-1);
            params.feature_scale = m;
        } else if (name == "label_shift") {
            expect_column(2);
            params.label_shift = m;
        } else if (name == "label_scale") {
            expect_column(1);
            params.label_scale = m(0, 0);
        } else {
            throw std::runtime_error("checkpoint '" + path + "': unknown tensor '" + name + "'");
        }
    }
    if (offset != bytes.size()) throw std::runtime_error("checkpoint '" + path + "' has trailing bytes");
    params.validate();
    return params;
}

}  // namespace mrlscm
