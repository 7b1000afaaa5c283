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
// Angular grid, beam codebooks, and the measurement matrix A that maps a
// nonnegative angular power spectrum to expected multi-beam RSRP (y = A x).

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mrlscm/common.hpp"

namespace mrlscm {

/// Uniform planar array description. Antenna spacings are expressed in
/// carrier wavelengths, so the wavelength itself never enters the phase
/// terms.
struct AntennaConfig {
    int n_x = 1;
    int n_y = 1;
    double d_x = 0.5;                  // spacing along x, in wavelengths
    double d_y = 0.5;                  // spacing along y, in wavelengths
    double carrier_wavelength = 0.1;   // meters, informational
    double tx_power = 1.0;             // linear mW
    std::function<double(double, double)> gain_pattern;  // (tilt_deg, az_deg) -> linear gain; empty = isotropic
    std::string gain_tag = "isotropic";

    int n_antennas() const { return n_x * n_y; }

    double gain(double tilt_deg, double az_deg) const {
        return gain_pattern ? gain_pattern(tilt_deg, az_deg) : 1.0;
    }

    void validate() const {
        if (n_x < 1 || n_y < 1) throw std::invalid_argument("AntennaConfig: antenna counts must be >= 1");
        if (!(d_x > 0.0) || !(d_y > 0.0)) throw std::invalid_argument("AntennaConfig: spacings must be > 0");
        if (!(tx_power > 0.0)) throw std::invalid_argument("AntennaConfig: tx_power must be > 0");
    }
};

/// 3GPP-style parabolic element pattern (optional preset; linear gain).
inline std::function<double(double, double)> parabolic_gain_pattern(double theta_3db_deg = 65.0,
                                                                    double phi_3db_deg = 65.0,
                                                                    double backlobe_db = 30.0) {
    return [=](double tilt_deg, double az_deg) {
        double at = 12.0 * (tilt_deg / theta_3db_deg) * (tilt_deg / theta_3db_deg);
        double ap = 12.0 * (az_deg / phi_3db_deg) * (az_deg / phi_3db_deg);
        double a_db = std::min(at + ap, backlobe_db);
        return std::pow(10.0, -a_db / 10.0);
    };
}

/// Discretized tilt x azimuth angle grid. Flat index a = i*n_h + j for tilt
/// index i and azimuth index j (both 0-based).
struct AngularGrid {
    std::vector<double> tilts;     // degrees, strictly increasing
    std::vector<double> azimuths;  // degrees, strictly increasing

    int n_v() const { return static_cast<int>(tilts.size()); }
    int n_h() const { return static_cast<int>(azimuths.size()); }
    int n_a() const { return n_v() * n_h(); }

    int flat_index(int i, int j) const { return i * n_h() + j; }
    double tilt_of(int a) const { return tilts[static_cast<size_t>(a / n_h())]; }
    double azimuth_of(int a) const { return azimuths[static_cast<size_t>(a % n_h())]; }
};

/// Inclusive arithmetic progressions over tilt and azimuth.
inline AngularGrid build_angular_grid(double tilt_start, double tilt_stop, double tilt_step,
                                      double az_start, double az_stop, double az_step) {
    auto progression = [](double start, double stop, double step, const char* what) {
        if (!(step > 0.0)) throw std::invalid_argument(std::string("build_angular_grid: non-positive ") + what + " step");
        if (stop < start) throw std::invalid_argument(std::string("build_angular_grid: ") + what + " stop < start");
        int count = static_cast<int>(std::floor((stop - start) / step + 1e-9)) + 1;
        std::vector<double> v(static_cast<size_t>(count));
        for (int k = 0; k < count; ++k) v[static_cast<size_t>(k)] = start + k * step;
        return v;
    };
    AngularGrid g;
    g.tilts = progression(tilt_start, tilt_stop, tilt_step, "tilt");
    g.azimuths = progression(az_start, az_stop, az_step, "azimuth");
    return g;
}

/// Per-beam phase offsets, one n_x x n_y matrix of radians per beam.
struct BeamCodebook {
    std::vector<Eigen::MatrixXd> phases;

    int beam_count() const { return static_cast<int>(phases.size()); }
};

/// Unit-modulus array response at (tilt, azimuth); entry index (x-1)*n_y + (y-1)
/// for antennas x in [1..n_x], y in [1..n_y].
inline Eigen::VectorXcd array_response(const AntennaConfig& cfg, double tilt_deg, double az_deg) {
    cfg.validate();
    if (!std::isfinite(tilt_deg) || !std::isfinite(az_deg))
        throw std::invalid_argument("array_response: angles must be finite");
    const double ct_sp = std::cos(deg2rad(tilt_deg)) * std::sin(deg2rad(az_deg));
    const double st = std::sin(deg2rad(tilt_deg));
    Eigen::VectorXcd resp(cfg.n_antennas());
    const double two_pi = 2.0 * std::numbers::pi;
    for (int x = 1; x <= cfg.n_x; ++x) {
        for (int y = 1; y <= cfg.n_y; ++y) {
            double phase = -two_pi * (cfg.d_x * x * ct_sp + cfg.d_y * y * st);
            resp((x - 1) * cfg.n_y + (y - 1)) = std::polar(1.0, phase);
        }
    }
    return resp;
}

/// Conjugate-phase beams steered at the given (tilt, azimuth) pointing angles.
inline BeamCodebook steered_codebook(const AntennaConfig& cfg,
                                     const std::vector<std::pair<double, double>>& pointing_deg) {
    cfg.validate();
    if (pointing_deg.empty()) throw std::invalid_argument("steered_codebook: need at least one beam");
    BeamCodebook cb;
    cb.phases.reserve(pointing_deg.size());
    const double two_pi = 2.0 * std::numbers::pi;
    for (auto [tilt, az] : pointing_deg) {
        const double ct_sp = std::cos(deg2rad(tilt)) * std::sin(deg2rad(az));
        const double st = std::sin(deg2rad(tilt));
        Eigen::MatrixXd ph(cfg.n_x, cfg.n_y);
        for (int x = 1; x <= cfg.n_x; ++x)
            for (int y = 1; y <= cfg.n_y; ++y)
                ph(x - 1, y - 1) = two_pi * (cfg.d_x * x * ct_sp + cfg.d_y * y * st);
        cb.phases.push_back(std::move(ph));
    }
    return cb;
}

/// M x N_A dictionary of nonnegative beamforming gains.
struct MeasurementMatrix {
    Eigen::MatrixXd a;
    std::string config_digest;

    int m() const { return static_cast<int>(a.rows()); }
    int n_a() const { return static_cast<int>(a.cols()); }
};

namespace detail {

inline void digest_append(std::string& s, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g;", v);
    s += buf;
}

inline std::string config_digest_of(const AntennaConfig& cfg, const BeamCodebook& cb, const AngularGrid& grid) {
    std::string s;
    s.reserve(1024);
    s += "nx" + std::to_string(cfg.n_x) + "ny" + std::to_string(cfg.n_y) + ";";
    digest_append(s, cfg.d_x);
    digest_append(s, cfg.d_y);
    digest_append(s, cfg.tx_power);
    s += cfg.gain_tag + ";";
    for (const auto& ph : cb.phases)
        for (Eigen::Index i = 0; i < ph.size(); ++i) digest_append(s, ph(i));
    for (double t : grid.tilts) digest_append(s, t);
    for (double a : grid.azimuths) digest_append(s, a);
    return hex_digest(fnv1a(s));
}

}  // namespace detail

/// A[m, a] = P * g(angle_a) * |sum_{x,y} e^{j phi_m(x,y)} resp_a(x,y)|^2.
/// Columns are independent; the per-column summation order is fixed.
inline MeasurementMatrix build_measurement_matrix(const AntennaConfig& cfg, const BeamCodebook& cb,
                                                  const AngularGrid& grid) {
    cfg.validate();
    if (cb.beam_count() < 1) throw std::invalid_argument("build_measurement_matrix: empty codebook");
    for (const auto& ph : cb.phases)
        if (ph.rows() != cfg.n_x || ph.cols() != cfg.n_y)
            throw std::invalid_argument("build_measurement_matrix: codebook phase dimensions do not match antenna counts");

    const int m = cb.beam_count();
    const int n_a = grid.n_a();
    // Precompute beam precoder entries in the same flat order as array_response.
    std::vector<Eigen::VectorXcd> w(static_cast<size_t>(m));
    for (int b = 0; b < m; ++b) {
        const auto& ph = cb.phases[static_cast<size_t>(b)];
        Eigen::VectorXcd wb(cfg.n_antennas());
        for (int x = 1; x <= cfg.n_x; ++x)
            for (int y = 1; y <= cfg.n_y; ++y)
                wb((x - 1) * cfg.n_y + (y - 1)) = std::polar(1.0, ph(x - 1, y - 1));
        w[static_cast<size_t>(b)] = std::move(wb);
    }

    MeasurementMatrix out;
    out.a.resize(m, n_a);
    for (int a = 0; a < n_a; ++a) {
        const double tilt = grid.tilt_of(a);
        const double az = grid.azimuth_of(a);
        const Eigen::VectorXcd resp = array_response(cfg, tilt, az);
        const double pg = cfg.tx_power * cfg.gain(tilt, az);
        if (!(pg >= 0.0)) throw std::invalid_argument("build_measurement_matrix: negative gain");
        for (int b = 0; b < m; ++b) {
            std::complex<double> s{0.0, 0.0};
            const auto& wb = w[static_cast<size_t>(b)];
            for (int i = 0; i < resp.size(); ++i) s += wb(i) * resp(i);
            out.a(b, a) = pg * std::norm(s);
        }
    }
    out.config_digest = detail::config_digest_of(cfg, cb, grid);
    return out;
}

/// y = A x for a nonnegative angular power spectrum x.
inline Eigen::VectorXd expected_rsrp(const MeasurementMatrix& mat, const Eigen::VectorXd& aps) {
    if (aps.size() != mat.n_a())
        throw std::invalid_argument("expected_rsrp: APS length does not match matrix columns");
    for (Eigen::Index i = 0; i < aps.size(); ++i)
        if (!(aps(i) >= 0.0)) throw std::invalid_argument("expected_rsrp: APS entries must be >= 0");
    return mat.a * aps;
}

// --- binary matrix format: u32le M, u32le N_A, then row-major f64le -------

namespace detail {

inline void put_u32le(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

inline std::uint32_t get_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64le(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline double get_f64le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace detail

inline void write_matrix_bin(const std::string& path, const MeasurementMatrix& mat) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_matrix_bin: cannot open " + path);
    detail::put_u32le(os, static_cast<std::uint32_t>(mat.m()));
    detail::put_u32le(os, static_cast<std::uint32_t>(mat.n_a()));
    for (int r = 0; r < mat.m(); ++r)
        for (int c = 0; c < mat.n_a(); ++c) detail::put_f64le(os, mat.a(r, c));
    if (!os) throw std::runtime_error("write_matrix_bin: write failed for " + path);
}

inline MeasurementMatrix read_matrix_bin(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_matrix_bin: cannot open " + path);
    const std::uint32_t m = detail::get_u32le(is);
    const std::uint32_t n_a = detail::get_u32le(is);
    if (!is) throw std::runtime_error("read_matrix_bin: truncated header in " + path);
    MeasurementMatrix out;
    out.a.resize(m, n_a);
    for (std::uint32_t r = 0; r < m; ++r)
        for (std::uint32_t c = 0; c < n_a; ++c) out.a(r, c) = detail::get_f64le(is);
    if (!is) throw std::runtime_error("read_matrix_bin: truncated payload in " + path);
    out.config_digest = "file-" + std::to_string(m) + "x" + std::to_string(n_a);
    return out;
}

}  // namespace mrlscm
