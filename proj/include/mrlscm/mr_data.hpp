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
// Measurement report samples and their CSV serialization. Missing beams are
// stored as the -140 dBm sentinel with mask 0 and serialized as a literal
// `x` token.

#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrlscm/channel_model.hpp"
#include "mrlscm/common.hpp"

namespace mrlscm {

/// One measurement report: multi-beam RSRP from the serving cell plus Q
/// neighbor cells, connection identifiers, and an optional true location.
struct MRSample {
    double timestamp = 0.0;  // seconds
    std::string call_id;
    std::string serving_cell_id;
    Eigen::VectorXd serving_rsrp;   // dBm, length M
    Eigen::VectorXi serving_mask;   // 1 = measured, 0 = missing
    Eigen::MatrixXd neighbor_rsrp;  // Q x M dBm
    Eigen::MatrixXi neighbor_mask;  // Q x M
    bool is_labeled = false;
    Eigen::Vector2d true_location = Eigen::Vector2d::Zero();  // planar meters

    int m() const { return static_cast<int>(serving_rsrp.size()); }
    int q() const { return static_cast<int>(neighbor_rsrp.rows()); }

    void validate() const {
        if (serving_mask.size() != serving_rsrp.size())
            throw std::invalid_argument("MRSample: serving mask length mismatch");
        if (neighbor_mask.rows() != neighbor_rsrp.rows() || neighbor_mask.cols() != neighbor_rsrp.cols())
            throw std::invalid_argument("MRSample: neighbor mask shape mismatch");
        if (neighbor_rsrp.size() > 0 && neighbor_rsrp.cols() != serving_rsrp.size())
            throw std::invalid_argument("MRSample: neighbor beam count differs from serving");
        if (serving_mask.size() == 0 || serving_mask.maxCoeff() < 1)
            throw std::invalid_argument("MRSample: need at least one valid serving beam");
        auto check = [](double v, int msk) {
            if (msk != 0 && msk != 1) throw std::invalid_argument("MRSample: mask entries must be 0 or 1");
            if ((msk == 0) != (v == kMissingDbm))
                throw std::invalid_argument("MRSample: mask/sentinel mismatch");
        };
        for (Eigen::Index i = 0; i < serving_rsrp.size(); ++i) check(serving_rsrp(i), serving_mask(i));
        for (Eigen::Index i = 0; i < neighbor_rsrp.size(); ++i) check(neighbor_rsrp(i), neighbor_mask(i));
    }
};

/// Train/test split plus the measurement matrices in effect for each side.
struct Dataset {
    std::vector<MRSample> train;
    std::vector<MRSample> test;
    MeasurementMatrix matrix_train;
    MeasurementMatrix matrix_test;
    std::string scenario_digest;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& field, const std::string& path, size_t line) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw std::runtime_error(path + ":" + std::to_string(line) + ": cannot parse number '" + field + "'");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

/// Writes samples in the tabular layout: Time, gNodeBCellID, CallID, M
/// serving-beam columns, Q*M neighbor-beam columns, LocX, LocY. Missing
/// beams become `x`; unlabeled rows leave the location fields empty.
inline void write_csv(const std::vector<MRSample>& samples, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_csv: cannot open " + path);
    int m = samples.empty() ? 0 : samples.front().m();
    int q = samples.empty() ? 0 : samples.front().q();
    for (const auto& s : samples) {
        s.validate();
        if (s.m() != m || s.q() != q) throw std::invalid_argument("write_csv: inconsistent beam or cell counts");
    }
    os << "Time,gNodeBCellID,CallID";
    for (int b = 1; b <= m; ++b) os << ",ServingBeam" << b;
    for (int n = 1; n <= q; ++n)
        for (int b = 1; b <= m; ++b) os << ",Neighbor" << n << "Beam" << b;
    os << ",LocX,LocY\n";

    auto cell = [&](double v, int msk) {
        if (msk == 0)
            os << ",x";
        else
            os << "," << detail::format_double(v);
    };
    for (const auto& s : samples) {
        os << detail::format_double(s.timestamp) << "," << s.serving_cell_id << "," << s.call_id;
        for (int b = 0; b < m; ++b) cell(s.serving_rsrp(b), s.serving_mask(b));
        for (int n = 0; n < q; ++n)
            for (int b = 0; b < m; ++b) cell(s.neighbor_rsrp(n, b), s.neighbor_mask(n, b));
        if (s.is_labeled)
            os << "," << detail::format_double(s.true_location.x()) << ","
               << detail::format_double(s.true_location.y()) << "\n";
        else
            os << ",,\n";
    }
    if (!os) throw std::runtime_error("write_csv: write failed for " + path);
}

/// Reads the layout produced by write_csv. Beam and neighbor counts are
/// deduced from the header; a sample is labeled iff both location fields
/// are nonempty.
inline std::vector<MRSample> read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error(path + ":1: missing header");
    auto header = detail::split_csv_line(line);
    int m = 0, q = 0;
    for (const auto& h : header) {
        if (h.rfind("ServingBeam", 0) == 0) ++m;
        if (h.rfind("Neighbor", 0) == 0) ++q;
    }
    if (m == 0) throw std::runtime_error(path + ":1: no serving beam columns");
    if (q % m != 0) throw std::runtime_error(path + ":1: neighbor columns not a multiple of beam count");
    q /= m;
    const size_t expect = 3 + static_cast<size_t>(m) * (1 + static_cast<size_t>(q)) + 2;
    if (header.size() != expect) throw std::runtime_error(path + ":1: unexpected column count");

    std::vector<MRSample> out;
    size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != expect)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(expect) + " fields, got " + std::to_string(f.size()));
        MRSample s;
        s.timestamp = detail::parse_double(f[0], path, lineno);
        s.serving_cell_id = f[1];
        s.call_id = f[2];
        s.serving_rsrp.resize(m);
        s.serving_mask.resize(m);
        s.neighbor_rsrp.resize(q, m);
        s.neighbor_mask.resize(q, m);
        auto beam = [&](const std::string& field, double& v, int& msk) {
            if (field == "x") {
                v = kMissingDbm;
                msk = 0;
            } else {
                v = detail::parse_double(field, path, lineno);
                msk = 1;
            }
        };
        size_t col = 3;
        for (int b = 0; b < m; ++b, ++col) beam(f[col], s.serving_rsrp(b), s.serving_mask(b));
        for (int n = 0; n < q; ++n)
            for (int b = 0; b < m; ++b, ++col) {
                double v;
                int msk;
                beam(f[col], v, msk);
                s.neighbor_rsrp(n, b) = v;
                s.neighbor_mask(n, b) = msk;
            }
        const std::string& lx = f[col];
        const std::string& ly = f[col + 1];
        if (!lx.empty() && !ly.empty()) {
            s.is_labeled = true;
            s.true_location = {detail::parse_double(lx, path, lineno), detail::parse_double(ly, path, lineno)};
        } else if (lx.empty() != ly.empty()) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": half-specified location");
        }
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace mrlscm
