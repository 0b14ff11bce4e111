#include "rmap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "rmap/tensor_io.hpp"

namespace rmap::geom {
namespace {

using nlohmann::json;

constexpr float kLegalFurnitureHeights[4] = {0.5f, 1.0f, 1.5f, 2.0f};

float dist_point_segment(float px, float py, float x0, float y0, float x1, float y1) {
    const float dx = x1 - x0, dy = y1 - y0;
    const float len2 = dx * dx + dy * dy;
    float t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0f;
    t = std::clamp(t, 0.0f, 1.0f);
    const float cx = x0 + t * dx, cy = y0 + t * dy;
    return std::hypot(px - cx, py - cy);
}

bool point_in_polygon(float px, float py, const std::vector<std::pair<float, float>>& poly) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto [xi, yi] = poly[i];
        const auto [xj, yj] = poly[j];
        const bool crosses = (yi > py) != (yj > py);
        if (crosses && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

float cross(float ax, float ay, float bx, float by) { return ax * by - ay * bx; }

bool segments_properly_intersect(float ax, float ay, float bx, float by, float cx, float cy,
                                 float dx, float dy) {
    const float d1 = cross(dx - cx, dy - cy, ax - cx, ay - cy);
    const float d2 = cross(dx - cx, dy - cy, bx - cx, by - cy);
    const float d3 = cross(bx - ax, by - ay, cx - ax, cy - ay);
    const float d4 = cross(bx - ax, by - ay, dx - ax, dy - ay);
    return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
           ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

bool polygon_is_simple(const std::vector<std::pair<float, float>>& poly) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [ax, ay] = poly[i];
        const auto [bx, by] = poly[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            const auto [cx, cy] = poly[j];
            const auto [dx, dy] = poly[(j + 1) % n];
            if (segments_properly_intersect(ax, ay, bx, by, cx, cy, dx, dy)) return false;
        }
    }
    return true;
}

bool legal_furniture_height(float h) {
    for (float v : kLegalFurnitureHeights)
        if (std::abs(h - v) < 1e-5f) return true;
    return false;
}

// taller object wins; on equal height the lossier material wins
void place(float h, float tloss, float iscale, float* height, float* tlossv, float* iscalev) {
    if (h > *height || (h == *height && (tloss > *tlossv || (tloss == *tlossv && iscale > *iscalev)))) {
        *height = h;
        *tlossv = tloss;
        *iscalev = iscale;
    }
}

}  // namespace

std::int64_t cell_of(float meters, const GridSpec& grid) {
    auto c = static_cast<std::int64_t>(std::floor(meters / grid.pixel_m));
    return std::clamp<std::int64_t>(c, 0, grid.cells - 1);
}

float embed_height(float h, float h_max, float epsilon) {
    if (epsilon <= 0.0f) fail("embed_height: epsilon must be positive");
    if (h < 0.0f || h > h_max)
        fail("embed_height: height " + std::to_string(h) + " outside [0, " +
             std::to_string(h_max) + "]");
    return (h + epsilon) / (h_max + epsilon);
}

float embed_height(float h, const EmbedConfig& cfg) {
    return embed_height(h, cfg.h_max, cfg.epsilon);
}

float unembed_height(float v, float h_max, float epsilon) {
    if (v <= 0.0f || v > 1.0f)
        fail("unembed_height: value " + std::to_string(v) + " outside (0, 1]");
    return v * (h_max + epsilon) - epsilon;
}

void Environment::validate() const {
    if (grid.cells <= 0 || grid.pixel_m <= 0) fail("Environment: bad grid spec");
    const float extent = grid.extent_m();
    for (const auto& wseg : walls) {
        if (std::hypot(wseg.x1 - wseg.x0, wseg.y1 - wseg.y0) <= 0.0f)
            fail("Environment: zero-length wall segment");
        if (wseg.height <= 0.0f || wseg.height > 3.0f)
            fail("Environment: wall height " + std::to_string(wseg.height) + " outside (0, 3]");
        for (float c : {wseg.x0, wseg.y0, wseg.x1, wseg.y1})
            if (c < 0.0f || c > extent) fail("Environment: wall outside scene bounds");
    }
    for (const auto& item : furniture) {
        if (!polygon_is_simple(item.polygon)) fail("Environment: furniture polygon is not simple");
        if (!legal_furniture_height(item.height))
            fail("Environment: furniture height " + std::to_string(item.height) +
                 " not in {0.5, 1, 1.5, 2}");
        for (const auto& [x, y] : item.polygon)
            if (x < 0.0f || x > extent || y < 0.0f || y > extent)
                fail("Environment: furniture outside scene bounds");
    }
    ObstacleGrid obstacles = rasterize_obstacles(*this);
    for (const auto& tx : transmitters) {
        if (tx.x < 0.0f || tx.x > extent || tx.y < 0.0f || tx.y > extent)
            fail("Environment: transmitter outside scene bounds");
        if (tx.height < 0.0f || tx.height > 3.0f)
            fail("Environment: transmitter height outside [0, 3]");
        const std::int64_t cx = cell_of(tx.x, grid), cy = cell_of(tx.y, grid);
        if (obstacles.wall_height[obstacles.idx(cy, cx)] > 0.0f)
            fail("Environment: transmitter placed inside a wall pixel");
    }
}

ObstacleGrid rasterize_obstacles(const Environment& env) {
    const std::int64_t n = env.grid.cells;
    const float px = env.grid.pixel_m;
    ObstacleGrid g;
    g.cells = n;
    g.wall_height.assign(n * n, 0.0f);
    g.furn_height.assign(n * n, 0.0f);
    g.wall_tloss.assign(n * n, 0.0f);
    g.furn_tloss.assign(n * n, 0.0f);
    g.wall_iscale.assign(n * n, 0.0f);
    g.furn_iscale.assign(n * n, 0.0f);

    const float half = 0.5f * px;  // one-pixel wall thickness
    for (const auto& wseg : env.walls) {
        const std::int64_t x_lo = std::max<std::int64_t>(
            0, static_cast<std::int64_t>(std::floor((std::min(wseg.x0, wseg.x1) - px) / px)));
        const std::int64_t x_hi = std::min<std::int64_t>(
            n - 1, static_cast<std::int64_t>(std::ceil((std::max(wseg.x0, wseg.x1) + px) / px)));
        const std::int64_t y_lo = std::max<std::int64_t>(
            0, static_cast<std::int64_t>(std::floor((std::min(wseg.y0, wseg.y1) - px) / px)));
        const std::int64_t y_hi = std::min<std::int64_t>(
            n - 1, static_cast<std::int64_t>(std::ceil((std::max(wseg.y0, wseg.y1) + px) / px)));
        for (std::int64_t cy = y_lo; cy <= y_hi; ++cy) {
            for (std::int64_t cx = x_lo; cx <= x_hi; ++cx) {
                const float mx = (static_cast<float>(cx) + 0.5f) * px;
                const float my = (static_cast<float>(cy) + 0.5f) * px;
                if (dist_point_segment(mx, my, wseg.x0, wseg.y0, wseg.x1, wseg.y1) <= half) {
                    const auto i = g.idx(cy, cx);
                    place(wseg.height, wseg.material.transmission_loss_db,
                          wseg.material.interaction_db_per_rad, &g.wall_height[i],
                          &g.wall_tloss[i], &g.wall_iscale[i]);
                }
            }
        }
    }

    for (const auto& item : env.furniture) {
        float x_min = 1e30f, x_max = -1e30f, y_min = 1e30f, y_max = -1e30f;
        for (const auto& [x, y] : item.polygon) {
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
        const std::int64_t x_lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(x_min / px)));
        const std::int64_t x_hi = std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::ceil(x_max / px)));
        const std::int64_t y_lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(y_min / px)));
        const std::int64_t y_hi = std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::ceil(y_max / px)));
        for (std::int64_t cy = y_lo; cy <= y_hi; ++cy) {
            for (std::int64_t cx = x_lo; cx <= x_hi; ++cx) {
                const float mx = (static_cast<float>(cx) + 0.5f) * px;
                const float my = (static_cast<float>(cy) + 0.5f) * px;
                if (point_in_polygon(mx, my, item.polygon)) {
                    const auto i = g.idx(cy, cx);
                    place(item.height, item.material.transmission_loss_db,
                          item.material.interaction_db_per_rad, &g.furn_height[i],
                          &g.furn_tloss[i], &g.furn_iscale[i]);
                }
            }
        }
    }
    return g;
}

Tensor rasterize(const Environment& env, std::size_t tx_index, const EmbedConfig& embed) {
    if (tx_index >= env.transmitters.size())
        fail("rasterize: transmitter index " + std::to_string(tx_index) + " out of range (" +
             std::to_string(env.transmitters.size()) + " transmitters)");
    const std::int64_t n = env.grid.cells;
    ObstacleGrid g = rasterize_obstacles(env);
    Tensor out = Tensor::zeros(Shape{3, n, n});
    float* walls = out.mutable_data().data();
    float* furn = walls + n * n;
    float* tx_ch = furn + n * n;
    for (std::int64_t i = 0; i < n * n; ++i) {
        if (g.wall_height[i] > 0.0f) walls[i] = embed_height(g.wall_height[i], embed);
        if (g.furn_height[i] > 0.0f) furn[i] = embed_height(g.furn_height[i], embed);
    }
    const auto& tx = env.transmitters[tx_index];
    const std::int64_t cx = cell_of(tx.x, env.grid), cy = cell_of(tx.y, env.grid);
    tx_ch[g.idx(cy, cx)] = embed_height(tx.height, embed);
    return out;
}

Environment generate_random_environment(RandomStream& rng, const GenConfig& cfg) {
    Environment env;
    env.grid = cfg.grid;
    const float extent = cfg.grid.extent_m();
    const float margin = 2.0f * cfg.grid.pixel_m;
    const float lo = margin, hi = extent - margin;
    const Material wall_mat = Material::brick();
    const Material furn_mat = Material::fir_wood();

    auto add_wall = [&](float x0, float y0, float x1, float y1) {
        env.walls.push_back({x0, y0, x1, y1, cfg.wall_height_m, wall_mat});
    };

    // perimeter
    add_wall(lo, lo, hi, lo);
    add_wall(hi, lo, hi, hi);
    add_wall(hi, hi, lo, hi);
    add_wall(lo, hi, lo, lo);

    // interior partitions with door gaps
    struct Room { float x0, y0, x1, y1; };
    std::vector<Room> stack{{lo, lo, hi, hi}};
    std::vector<Room> rooms;
    while (!stack.empty()) {
        Room r = stack.back();
        stack.pop_back();
        const float w = r.x1 - r.x0, h = r.y1 - r.y0;
        const bool splittable_x = w > 2.0f * cfg.min_room_m;
        const bool splittable_y = h > 2.0f * cfg.min_room_m;
        if (!splittable_x && !splittable_y) {
            rooms.push_back(r);
            continue;
        }
        // stop early sometimes so room sizes vary
        if (rng.uniform() < 0.15f && rooms.size() + stack.size() >= 2) {
            rooms.push_back(r);
            continue;
        }
        const bool split_x = splittable_x && (!splittable_y || w >= h);
        if (split_x) {
            const float sx = rng.uniform(r.x0 + cfg.min_room_m, r.x1 - cfg.min_room_m);
            const float door = rng.uniform(r.y0 + 0.2f, r.y1 - 0.2f - cfg.door_width_m);
            add_wall(sx, r.y0, sx, door);
            add_wall(sx, door + cfg.door_width_m, sx, r.y1);
            stack.push_back({r.x0, r.y0, sx, r.y1});
            stack.push_back({sx, r.y0, r.x1, r.y1});
        } else {
            const float sy = rng.uniform(r.y0 + cfg.min_room_m, r.y1 - cfg.min_room_m);
            const float door = rng.uniform(r.x0 + 0.2f, r.x1 - 0.2f - cfg.door_width_m);
            add_wall(r.x0, sy, door, sy);
            add_wall(door + cfg.door_width_m, sy, r.x1, sy);
            stack.push_back({r.x0, r.y0, r.x1, sy});
            stack.push_back({r.x0, sy, r.x1, r.y1});
        }
    }

    // rectangular furniture
    const int n_furn =
        static_cast<int>(rng.uniform_int(cfg.min_furniture, cfg.max_furniture));
    for (int i = 0; i < n_furn; ++i) {
        const float fw = rng.uniform(0.4f, 2.0f);
        const float fh = rng.uniform(0.4f, 2.0f);
        const float fx = rng.uniform(lo, hi - fw);
        const float fy = rng.uniform(lo, hi - fh);
        FurnitureItem item;
        item.polygon = {{fx, fy}, {fx + fw, fy}, {fx + fw, fy + fh}, {fx, fy + fh}};
        item.height = kLegalFurnitureHeights[rng.uniform_int(0, 3)];
        item.material = furn_mat;
        env.furniture.push_back(item);
    }

    // transmitters in wall-free cells
    ObstacleGrid obstacles = rasterize_obstacles(env);
    for (int t = 0; t < cfg.tx_count; ++t) {
        for (int attempt = 0; attempt < 4096; ++attempt) {
            const float x = rng.uniform(lo + 0.1f, hi - 0.1f);
            const float y = rng.uniform(lo + 0.1f, hi - 0.1f);
            const std::int64_t cx = cell_of(x, cfg.grid), cy = cell_of(y, cfg.grid);
            if (obstacles.wall_height[obstacles.idx(cy, cx)] > 0.0f) continue;
            Transmitter tx;
            tx.x = x;
            tx.y = y;
            tx.height = 0.2f * static_cast<float>(rng.uniform_int(0, 15));
            env.transmitters.push_back(tx);
            break;
        }
    }
    if (env.transmitters.size() != static_cast<std::size_t>(cfg.tx_count))
        fail("generate_random_environment: could not place all transmitters");
    return env;
}

namespace {

json material_to_json(const Material& m) {
    return json{{"name", m.name},
                {"transmission_loss_db", m.transmission_loss_db},
                {"interaction_db_per_rad", m.interaction_db_per_rad}};
}

Material material_from_json(const json& j) {
    Material m;
    m.name = j.at("name").get<std::string>();
    m.transmission_loss_db = j.at("transmission_loss_db").get<float>();
    m.interaction_db_per_rad = j.at("interaction_db_per_rad").get<float>();
    return m;
}

}  // namespace

std::string environment_to_json(const Environment& env) {
    json j;
    j["grid"] = {{"cells", env.grid.cells}, {"pixel_m", env.grid.pixel_m}};
    j["extent_m"] = env.grid.extent_m();
    j["walls"] = json::array();
    for (const auto& wseg : env.walls)
        j["walls"].push_back(json{{"x0", wseg.x0},
                                  {"y0", wseg.y0},
                                  {"x1", wseg.x1},
                                  {"y1", wseg.y1},
                                  {"height", wseg.height},
                                  {"material", material_to_json(wseg.material)}});
    j["furniture"] = json::array();
    for (const auto& item : env.furniture) {
        json poly = json::array();
        for (const auto& [x, y] : item.polygon) poly.push_back(json::array({x, y}));
        j["furniture"].push_back(json{{"polygon", poly},
                                      {"height", item.height},
                                      {"material", material_to_json(item.material)}});
    }
    j["transmitters"] = json::array();
    for (const auto& tx : env.transmitters)
        j["transmitters"].push_back(json{{"x", tx.x}, {"y", tx.y}, {"height", tx.height}});
    return j.dump(2);
}

Environment environment_from_json(const std::string& text) {
    const json j = json::parse(text);
    Environment env;
    env.grid.cells = j.at("grid").at("cells").get<std::int64_t>();
    env.grid.pixel_m = j.at("grid").at("pixel_m").get<float>();
    for (const auto& wj : j.at("walls")) {
        WallSegment wseg;
        wseg.x0 = wj.at("x0").get<float>();
        wseg.y0 = wj.at("y0").get<float>();
        wseg.x1 = wj.at("x1").get<float>();
        wseg.y1 = wj.at("y1").get<float>();
        wseg.height = wj.at("height").get<float>();
        wseg.material = material_from_json(wj.at("material"));
        env.walls.push_back(wseg);
    }
    for (const auto& fj : j.at("furniture")) {
        FurnitureItem item;
        for (const auto& pj : fj.at("polygon"))
            item.polygon.emplace_back(pj.at(0).get<float>(), pj.at(1).get<float>());
        item.height = fj.at("height").get<float>();
        item.material = material_from_json(fj.at("material"));
        env.furniture.push_back(item);
    }
    for (const auto& tj : j.at("transmitters")) {
        Transmitter tx;
        tx.x = tj.at("x").get<float>();
        tx.y = tj.at("y").get<float>();
        tx.height = tj.at("height").get<float>();
        env.transmitters.push_back(tx);
    }
    return env;
}

void save_environment(const std::string& path, const Environment& env) {
    io::write_text_file(path, environment_to_json(env));
}

Environment load_environment(const std::string& path) {
    return environment_from_json(io::read_text_file(path));
}

}  // namespace rmap::geom
