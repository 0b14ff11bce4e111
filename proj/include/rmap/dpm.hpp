#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "rmap/geometry.hpp"
#include "rmap/tensor.hpp"

// Dominant-path ground truth. Pathloss of a path is
//   (P_L)_dB = 20 log10(4 pi / lambda) + 10 p log10(l)
//            + sum_i f(phi_i, i) + sum_j t_j - Omega
// with f(phi, i) = material_scale * |phi| summed and capped per path. The
// per-receiver value is the minimum over 8-neighbor grid paths, found by a
// label-setting search that keeps Pareto-optimal (length, turn-penalty,
// wall-loss) labels per (cell, incoming-direction) state, so the concave
// length term is handled exactly.
//
// 2.5D rule: an obstacle interacts with the ray only where its height
// reaches the blocking threshold. Inside the multi-target search the
// threshold is min(h_tx, h_rx), a conservative envelope of the linearly
// interpolated ray height; single-path queries re-evaluate their crossings
// against the interpolated ray.

namespace rmap::dpm {

struct SimConfig {
    double frequency_hz = 5.9e9;
    double pathloss_exponent = 2.0;
    double tx_power_dbm = 23.0;
    double bandwidth_hz = 10e6;
    double noise_density_dbm_per_hz = -174.0;
    double noise_figure_db = 0.0;
    double waveguiding_db = 0.0;          // Omega
    double max_pathloss_db = -25.0;       // M1, the dataset maximum of L = -(P_L)
    double interaction_cap_db = 35.0;     // per-path cap on summed turn penalties
    std::vector<float> rx_heights_m = default_heights();

    double wavelength_m() const { return 299792458.0 / frequency_hz; }
    // 0.5 m .. 2.0 m in 0.1 m steps (16 planes).
    static std::vector<float> default_heights();
};

struct PathInteraction {
    double angle_rad = 0.0;        // |direction change|
    double scale_db_per_rad = 0.0; // material penalty scale
};

struct DominantPath {
    std::vector<std::pair<std::int32_t, std::int32_t>> cells;  // (y, x), tx first
    double length_m = 0.0;
    std::vector<PathInteraction> interactions;
    std::vector<double> wall_losses_db;  // per crossing, in path order
};

// (P_L)_dB of one path; the length term clamps l to one pixel so a
// co-located receiver stays finite.
double pathloss_along_path(const DominantPath& path, const SimConfig& cfg,
                           double pixel_m = 0.08);

double compute_noise_floor_dbm(const SimConfig& cfg);

struct Thresholds {
    double l_thr_db;
    double l_trnc_db;
};
// L_thr = N_flr - P_Tx; L_trnc = (5 L_thr - M1) / 4.
Thresholds compute_thresholds(const SimConfig& cfg);

// v_L = max((L - L_trnc) / (M1 - L_trnc), 0); denormalize inverts on
// (L_trnc, M1].
double normalize_pathloss(double l_db, const SimConfig& cfg);
double denormalize_pathloss(double v, const SimConfig& cfg);

// Per-cell pathloss L = -(P_L) in dB for one transmitter and one receiver
// plane; row-major grid of env.grid.cells^2 values.
std::vector<double> simulate_plane(const geom::Environment& env, const geom::ObstacleGrid& grid,
                                   const geom::Transmitter& tx, float rx_height_m,
                                   const SimConfig& cfg);

// Raw 3D map: shape (len(rx_heights), N, N) of L in dB. Planes run in
// parallel; results do not depend on the thread count.
Tensor simulate_raw_radio_map_3d(const geom::Environment& env, std::size_t tx_index,
                                 const SimConfig& cfg);

// Applies normalize_pathloss elementwise.
Tensor normalize_map(const Tensor& raw_db, const SimConfig& cfg);

// Minimal-loss path to one receiver cell with its interactions and wall
// crossings re-evaluated against the interpolated ray height.
DominantPath dominant_path(const geom::Environment& env, const geom::Transmitter& tx,
                           std::pair<std::int32_t, std::int32_t> rx_cell, float rx_height_m,
                           const SimConfig& cfg);

}  // namespace rmap::dpm
