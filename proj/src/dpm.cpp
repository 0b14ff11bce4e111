#include "rmap/dpm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "rmap/threadpool.hpp"

namespace rmap::dpm {
namespace {

constexpr double kPi = 3.14159265358979323846;

// 8-neighborhood; even directions are axis steps, odd are diagonals.
constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

double turn_angle(int d_from, int d_to) {
    int diff = std::abs(d_from - d_to);
    if (diff > 4) diff = 8 - diff;
    return diff * (kPi / 4.0);
}

// Per-plane cost fields under the blocking threshold.
struct PlaneContext {
    std::int64_t n = 0;
    double pixel_m = 0.08;
    std::vector<std::uint8_t> blocked;      // wall or furniture at threshold
    std::vector<float> entry_loss;          // wall + furniture t on entering
    std::vector<float> turn_scale;          // interaction dB/rad near the cell
    double base_db = 0.0;                   // 20 log10(4 pi / lambda) - Omega
    double dist_coeff = 0.0;                // 10 p
    double cap_db = 35.0;

    double dist_term(double l) const {
        return dist_coeff * std::log10(std::max(l, pixel_m));
    }
};

PlaneContext make_plane_context(const geom::ObstacleGrid& grid, const geom::GridSpec& gs,
                                double h_threshold, const SimConfig& cfg) {
    PlaneContext ctx;
    ctx.n = grid.cells;
    ctx.pixel_m = gs.pixel_m;
    ctx.base_db = 20.0 * std::log10(4.0 * kPi / cfg.wavelength_m()) - cfg.waveguiding_db;
    ctx.dist_coeff = 10.0 * cfg.pathloss_exponent;
    ctx.cap_db = cfg.interaction_cap_db;
    const std::int64_t nn = ctx.n * ctx.n;
    ctx.blocked.assign(nn, 0);
    ctx.entry_loss.assign(nn, 0.0f);
    std::vector<float> block_height(nn, 0.0f);
    std::vector<float> block_scale(nn, 0.0f);
    for (std::int64_t i = 0; i < nn; ++i) {
        float loss = 0.0f;
        if (grid.wall_height[i] > 0.0f && grid.wall_height[i] >= h_threshold) {
            ctx.blocked[i] = 1;
            loss += grid.wall_tloss[i];
            if (grid.wall_height[i] > block_height[i] ||
                (grid.wall_height[i] == block_height[i] && grid.wall_iscale[i] > block_scale[i])) {
                block_height[i] = grid.wall_height[i];
                block_scale[i] = grid.wall_iscale[i];
            }
        }
        if (grid.furn_height[i] > 0.0f && grid.furn_height[i] >= h_threshold) {
            ctx.blocked[i] = 1;
            loss += grid.furn_tloss[i];
            if (grid.furn_height[i] > block_height[i] ||
                (grid.furn_height[i] == block_height[i] && grid.furn_iscale[i] > block_scale[i])) {
                block_height[i] = grid.furn_height[i];
                block_scale[i] = grid.furn_iscale[i];
            }
        }
        ctx.entry_loss[i] = loss;
    }
    // interaction material: tallest blocking obstacle in the 3x3 neighborhood
    ctx.turn_scale.assign(nn, 0.0f);
    for (std::int64_t y = 0; y < ctx.n; ++y) {
        for (std::int64_t x = 0; x < ctx.n; ++x) {
            float best_h = 0.0f, best_s = 0.0f;
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                for (std::int64_t dx = -1; dx <= 1; ++dx) {
                    const std::int64_t yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= ctx.n || xx < 0 || xx >= ctx.n) continue;
                    const std::int64_t i = yy * ctx.n + xx;
                    if (!ctx.blocked[i]) continue;
                    if (block_height[i] > best_h ||
                        (block_height[i] == best_h && block_scale[i] > best_s)) {
                        best_h = block_height[i];
                        best_s = block_scale[i];
                    }
                }
            }
            ctx.turn_scale[y * ctx.n + x] = best_s;
        }
    }
    return ctx;
}

struct SettledLabel {
    double l, pi, pw;
    std::int32_t cell;
    std::int8_t dir;
    std::int32_t parent;         // settled-label index, -1 at the source
    std::int32_t next_in_state;  // per-state chain for dominance checks
};

struct QueueEntry {
    double g, l, pi, pw;
    std::int32_t cell;
    std::int8_t dir;
    std::int32_t parent;
    std::uint32_t seq;  // deterministic tie-break: earlier push wins
};

struct QueueCmp {
    bool operator()(const QueueEntry& a, const QueueEntry& b) const {
        if (a.g != b.g) return a.g > b.g;
        return a.seq > b.seq;
    }
};

struct SearchOutput {
    std::vector<double> best_g;           // P_L dB per cell
    std::vector<std::int32_t> best_label; // settled index per cell (-1 = none)
    std::vector<SettledLabel> labels;
};

// Label-setting multi-criteria Dijkstra over (cell, incoming-direction)
// states. Labels pop in total-loss order, so the first settled label at a
// cell carries that cell's minimal pathloss.
SearchOutput run_search(const PlaneContext& ctx, std::int64_t tx_cell,
                        std::int64_t stop_cell = -1) {
    const std::int64_t n = ctx.n;
    const std::int64_t nn = n * n;
    SearchOutput out;
    out.best_g.assign(nn, std::numeric_limits<double>::infinity());
    out.best_label.assign(nn, -1);

    // state = cell * 9 + dir, dir 8 = "no incoming direction" (source only)
    std::vector<std::int32_t> state_head(nn * 9, -1);
    std::priority_queue<QueueEntry, std::vector<QueueEntry>, QueueCmp> pq;
    std::uint32_t seq = 0;

    auto dominated = [&](std::int64_t state, double l, double pi, double pw) {
        for (std::int32_t i = state_head[state]; i != -1; i = out.labels[i].next_in_state) {
            const auto& s = out.labels[i];
            if (s.l <= l && s.pi <= pi && s.pw <= pw) return true;
        }
        return false;
    };

    pq.push({ctx.base_db + ctx.dist_term(0.0), 0.0, 0.0, 0.0,
             static_cast<std::int32_t>(tx_cell), 8, -1, seq++});

    const double diag = ctx.pixel_m * std::sqrt(2.0);
    while (!pq.empty()) {
        const QueueEntry e = pq.top();
        pq.pop();
        const std::int64_t state = static_cast<std::int64_t>(e.cell) * 9 + e.dir;
        if (dominated(state, e.l, e.pi, e.pw)) continue;
        const auto settled_idx = static_cast<std::int32_t>(out.labels.size());
        out.labels.push_back({e.l, e.pi, e.pw, e.cell, e.dir, e.parent, state_head[state]});
        state_head[state] = settled_idx;
        if (out.best_label[e.cell] == -1) {
            out.best_label[e.cell] = settled_idx;
            out.best_g[e.cell] = e.g;
            if (e.cell == stop_cell) break;
        }

        const std::int64_t cy = e.cell / n, cx = e.cell % n;
        for (int d = 0; d < 8; ++d) {
            const std::int64_t ny = cy + kDy[d], nx = cx + kDx[d];
            if (ny < 0 || ny >= n || nx < 0 || nx >= n) continue;
            const std::int64_t nb = ny * n + nx;
            const double l2 = e.l + ((d & 1) ? diag : ctx.pixel_m);
            double pi2 = e.pi;
            if (e.dir != 8 && d != e.dir) {
                const float scale = ctx.turn_scale[e.cell];
                if (scale > 0.0f)
                    pi2 = std::min(pi2 + scale * turn_angle(e.dir, d), ctx.cap_db);
            }
            double pw2 = e.pw;
            if (ctx.blocked[nb] && !ctx.blocked[e.cell]) pw2 += ctx.entry_loss[nb];
            const std::int64_t nstate = nb * 9 + d;
            if (dominated(nstate, l2, pi2, pw2)) continue;
            pq.push({ctx.base_db + ctx.dist_term(l2) + pi2 + pw2, l2, pi2, pw2,
                     static_cast<std::int32_t>(nb), static_cast<std::int8_t>(d), settled_idx,
                     seq++});
        }
    }
    return out;
}

}  // namespace

std::vector<float> SimConfig::default_heights() {
    std::vector<float> h(16);
    for (int i = 0; i < 16; ++i) h[i] = 0.5f + 0.1f * static_cast<float>(i);
    return h;
}

double pathloss_along_path(const DominantPath& path, const SimConfig& cfg, double pixel_m) {
    double loss = 20.0 * std::log10(4.0 * kPi / cfg.wavelength_m());
    loss += 10.0 * cfg.pathloss_exponent * std::log10(std::max(path.length_m, pixel_m));
    double interact = 0.0;
    for (const auto& it : path.interactions) interact += it.scale_db_per_rad * std::abs(it.angle_rad);
    loss += std::min(interact, cfg.interaction_cap_db);
    for (double t : path.wall_losses_db) loss += t;
    loss -= cfg.waveguiding_db;
    return loss;
}

double compute_noise_floor_dbm(const SimConfig& cfg) {
    return cfg.noise_density_dbm_per_hz + 10.0 * std::log10(cfg.bandwidth_hz) +
           cfg.noise_figure_db;
}

Thresholds compute_thresholds(const SimConfig& cfg) {
    Thresholds t{};
    t.l_thr_db = compute_noise_floor_dbm(cfg) - cfg.tx_power_dbm;
    t.l_trnc_db = (5.0 * t.l_thr_db - cfg.max_pathloss_db) / 4.0;
    return t;
}

double normalize_pathloss(double l_db, const SimConfig& cfg) {
    const Thresholds t = compute_thresholds(cfg);
    if (cfg.max_pathloss_db <= t.l_trnc_db)
        fail("normalize_pathloss: M1 (" + std::to_string(cfg.max_pathloss_db) +
             " dB) must exceed L_trnc (" + std::to_string(t.l_trnc_db) + " dB)");
    return std::max((l_db - t.l_trnc_db) / (cfg.max_pathloss_db - t.l_trnc_db), 0.0);
}

double denormalize_pathloss(double v, const SimConfig& cfg) {
    const Thresholds t = compute_thresholds(cfg);
    return t.l_trnc_db + v * (cfg.max_pathloss_db - t.l_trnc_db);
}

std::vector<double> simulate_plane(const geom::Environment& env, const geom::ObstacleGrid& grid,
                                   const geom::Transmitter& tx, float rx_height_m,
                                   const SimConfig& cfg) {
    const double threshold = std::min(static_cast<double>(rx_height_m),
                                      static_cast<double>(tx.height));
    PlaneContext ctx = make_plane_context(grid, env.grid, threshold, cfg);
    const std::int64_t tx_cell =
        geom::cell_of(tx.y, env.grid) * env.grid.cells + geom::cell_of(tx.x, env.grid);
    SearchOutput s = run_search(ctx, tx_cell);
    std::vector<double> l_db(s.best_g.size());
    for (std::size_t i = 0; i < l_db.size(); ++i) l_db[i] = -s.best_g[i];
    return l_db;
}

Tensor simulate_raw_radio_map_3d(const geom::Environment& env, std::size_t tx_index,
                                 const SimConfig& cfg) {
    if (tx_index >= env.transmitters.size())
        fail("simulate_raw_radio_map_3d: transmitter index out of range");
    const auto& tx = env.transmitters[tx_index];
    const std::int64_t n = env.grid.cells;
    const auto n_heights = static_cast<std::int64_t>(cfg.rx_heights_m.size());
    if (n_heights == 0) fail("simulate_raw_radio_map_3d: no receiver heights configured");
    const geom::ObstacleGrid grid = rasterize_obstacles(env);
    Tensor out = Tensor::zeros(Shape{n_heights, n, n});
    float* dst = out.mutable_data().data();
    parallel_for(static_cast<std::size_t>(n_heights), [&](std::size_t h0, std::size_t h1) {
        for (std::size_t h = h0; h < h1; ++h) {
            const std::vector<double> plane =
                simulate_plane(env, grid, tx, cfg.rx_heights_m[h], cfg);
            float* slice = dst + static_cast<std::int64_t>(h) * n * n;
            for (std::int64_t i = 0; i < n * n; ++i) slice[i] = static_cast<float>(plane[i]);
        }
    });
    return out;
}

Tensor normalize_map(const Tensor& raw_db, const SimConfig& cfg) {
    Tensor out = Tensor::zeros(raw_db.shape());
    const auto src = raw_db.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i)
        dst[i] = static_cast<float>(normalize_pathloss(src[i], cfg));
    return out;
}

DominantPath dominant_path(const geom::Environment& env, const geom::Transmitter& tx,
                           std::pair<std::int32_t, std::int32_t> rx_cell, float rx_height_m,
                           const SimConfig& cfg) {
    const std::int64_t n = env.grid.cells;
    if (rx_cell.first < 0 || rx_cell.first >= n || rx_cell.second < 0 || rx_cell.second >= n)
        fail("dominant_path: receiver cell outside the grid");
    const geom::ObstacleGrid grid = rasterize_obstacles(env);
    const double threshold = std::min(static_cast<double>(rx_height_m),
                                      static_cast<double>(tx.height));
    PlaneContext ctx = make_plane_context(grid, env.grid, threshold, cfg);
    const std::int64_t tx_cell =
        geom::cell_of(tx.y, env.grid) * n + geom::cell_of(tx.x, env.grid);
    const std::int64_t target = static_cast<std::int64_t>(rx_cell.first) * n + rx_cell.second;
    SearchOutput s = run_search(ctx, tx_cell, target);
    if (s.best_label[target] == -1) fail("dominant_path: receiver unreachable");

    DominantPath path;
    for (std::int32_t i = s.best_label[target]; i != -1; i = s.labels[i].parent) {
        const auto& lab = s.labels[i];
        path.cells.emplace_back(lab.cell / n, lab.cell % n);
    }
    std::reverse(path.cells.begin(), path.cells.end());
    path.length_m = s.labels[s.best_label[target]].l;

    // Re-walk the path and charge crossings/turns against the linearly
    // interpolated ray height h(d) = h_tx + (h_rx - h_tx) * d / D.
    const double total = std::max(path.length_m, ctx.pixel_m);
    const double diag = ctx.pixel_m * std::sqrt(2.0);
    auto ray_height = [&](double d) {
        const double f = std::clamp(d / total, 0.0, 1.0);
        return tx.height + (rx_height_m - tx.height) * f;
    };
    auto blocks_at = [&](std::int64_t cell, double ray_h, float* entry, float* iscale,
                         float* height) {
        float h = 0.0f, t = 0.0f, sc = 0.0f;
        if (grid.wall_height[cell] > 0.0f && grid.wall_height[cell] >= ray_h) {
            t += grid.wall_tloss[cell];
            if (grid.wall_height[cell] > h) {
                h = grid.wall_height[cell];
                sc = grid.wall_iscale[cell];
            }
        }
        if (grid.furn_height[cell] > 0.0f && grid.furn_height[cell] >= ray_h) {
            t += grid.furn_tloss[cell];
            if (grid.furn_height[cell] > h ||
                (grid.furn_height[cell] == h && grid.furn_iscale[cell] > sc)) {
                h = grid.furn_height[cell];
                sc = grid.furn_iscale[cell];
            }
        }
        *entry = t;
        *iscale = sc;
        *height = h;
        return h > 0.0f;
    };

    double cum = 0.0;
    int prev_dir = -1;
    for (std::size_t k = 1; k < path.cells.size(); ++k) {
        const auto [ay, ax] = path.cells[k - 1];
        const auto [by, bx] = path.cells[k];
        int dir = -1;
        for (int d = 0; d < 8; ++d)
            if (ax + kDx[d] == bx && ay + kDy[d] == by) dir = d;
        const double at_a = cum;
        cum += (dir & 1) ? diag : ctx.pixel_m;

        if (prev_dir != -1 && dir != prev_dir) {
            // turn at cell a: interaction with the tallest blocking obstacle
            // in the 3x3 neighborhood at the ray height there
            float best_h = 0.0f, best_s = 0.0f;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const std::int64_t yy = ay + dy, xx = ax + dx;
                    if (yy < 0 || yy >= n || xx < 0 || xx >= n) continue;
                    float entry, iscale, height;
                    if (blocks_at(yy * n + xx, ray_height(at_a), &entry, &iscale, &height)) {
                        if (height > best_h || (height == best_h && iscale > best_s)) {
                            best_h = height;
                            best_s = iscale;
                        }
                    }
                }
            }
            if (best_s > 0.0f)
                path.interactions.push_back({turn_angle(prev_dir, dir), best_s});
        }
        // wall/furniture crossing on entering b
        float entry_b, is_b, h_b, entry_a, is_a, h_a;
        const bool blocked_b = blocks_at(by * n + bx, ray_height(cum), &entry_b, &is_b, &h_b);
        const bool blocked_a = blocks_at(ay * n + ax, ray_height(at_a), &entry_a, &is_a, &h_a);
        if (blocked_b && !blocked_a) path.wall_losses_db.push_back(entry_b);
        prev_dir = dir;
    }
    return path;
}

}  // namespace rmap::dpm
