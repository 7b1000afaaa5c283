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

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mrlscm {

/// Sentinel stored in place of missing beam measurements (dBm).
inline constexpr double kMissingDbm = -140.0;

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wrap an angle difference in degrees to (-180, 180].
inline double wrap_deg(double d) {
    d = std::fmod(d, 360.0);
    if (d <= -180.0) d += 360.0;
    if (d > 180.0) d -= 360.0;
    return d;
}

/// dBm -> linear power in mW.
inline double dbm_to_linear(double dbm) { return std::pow(10.0, dbm / 10.0); }

/// Linear power in mW -> dBm. Requires a strictly positive input.
inline double linear_to_dbm(double mw) {
    if (!(mw > 0.0))
        throw std::invalid_argument("linear_to_dbm: power must be > 0 mW, got " + std::to_string(mw));
    return 10.0 * std::log10(mw);
}

/// Linear power of the missing-value sentinel (1e-14 mW).
inline const double kMissingLinear = dbm_to_linear(kMissingDbm);

/// splitmix64 step; used to derive independent seed streams from one seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic sub-seed for a named stage of a seeded computation.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t state = seed ^ h;
    return splitmix64(state);
}

/// FNV-1a over a string; used for config digests.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex_digest(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<size_t>(i)] = digits[h & 0xf];
    return out;
}

/// Small deterministic generator on top of splitmix64. Identical output on
/// every platform, unlike the standard distributions.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    /// uniform in [0, 1)
    double uniform() { return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53; }

    /// uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return splitmix64(state) % n; }

    /// standard normal via Box-Muller
    double normal() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
};

/// Angles of a point seen from an elevated base station: theta is the planar
/// bearing atan2(y - y_bs, x - x_bs), phi the downward angle to the ground
/// plane, both in degrees.
struct RelativeAngle {
    double theta;
    double phi;
};

inline RelativeAngle relative_angle_deg(double bs_x, double bs_y, double bs_h, double px, double py) {
    const double dx = px - bs_x;
    const double dy = py - bs_y;
    const double planar = std::sqrt(dx * dx + dy * dy);
    if (!(planar > 0.0)) throw std::invalid_argument("relative_angle: zero planar distance");
    return {rad2deg(std::atan2(dy, dx)), rad2deg(std::atan(bs_h / planar))};
}

}  // namespace mrlscm
