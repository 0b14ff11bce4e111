#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmap/tensor.hpp"

// Indoor scenes: walls, furniture and transmitters in meters, rasterized to
// per-channel 2D grids with object heights embedded as pixel values
// v = (h + eps) / (h_max + eps), so a ground-level object stays distinct
// from empty space.

namespace rmap::geom {

struct Material {
    std::string name;
    float transmission_loss_db = 0.0f;        // per wall crossing
    float interaction_db_per_rad = 0.0f;      // direction-change penalty scale

    static Material brick() { return {"brick", 10.0f, 15.0f}; }
    static Material fir_wood() { return {"fir_wood", 4.0f, 8.0f}; }
};

struct WallSegment {
    float x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // meters
    float height = 3.0f;                   // (0, 3]
    Material material = Material::brick();
};

struct FurnitureItem {
    std::vector<std::pair<float, float>> polygon;  // simple, meters
    float height = 0.5f;                           // one of 0.5, 1.0, 1.5, 2.0
    Material material = Material::fir_wood();
};

struct Transmitter {
    float x = 0, y = 0;   // meters
    float height = 1.0f;  // 0.0 .. 3.0 in 0.2 steps
};

struct GridSpec {
    std::int64_t cells = 256;
    float pixel_m = 0.08f;
    float extent_m() const { return static_cast<float>(cells) * pixel_m; }
};

struct Environment {
    GridSpec grid;
    std::vector<WallSegment> walls;
    std::vector<FurnitureItem> furniture;
    std::vector<Transmitter> transmitters;

    // Checks the structural invariants; throws with a description on failure.
    void validate() const;
};

struct EmbedConfig {
    float h_max = 3.0f;
    float epsilon = 0.1f;
};

// Eq-style height embedding: strictly increasing, (0, 1], h=0 maps to
// eps/(h_max+eps) > 0. Rejects h outside [0, h_max].
float embed_height(float h, float h_max, float epsilon);
float embed_height(float h, const EmbedConfig& cfg);
// Exact inverse on (0, 1].
float unembed_height(float v, float h_max, float epsilon);

// Per-cell obstacle fields shared by the image pipeline and the simulator.
// When objects overlap in a channel the taller one wins; ties keep the
// lossier material so the outcome is independent of scene order.
struct ObstacleGrid {
    std::int64_t cells = 0;
    std::vector<float> wall_height, furn_height;     // 0 = no object
    std::vector<float> wall_tloss, furn_tloss;       // dB per crossing
    std::vector<float> wall_iscale, furn_iscale;     // dB per radian

    std::int64_t idx(std::int64_t y, std::int64_t x) const { return y * cells + x; }
};

ObstacleGrid rasterize_obstacles(const Environment& env);

// 3 x N x N stack: walls, furniture, transmitter channels with embedded
// heights; empty pixels are exactly 0.
Tensor rasterize(const Environment& env, std::size_t tx_index, const EmbedConfig& embed = {});

struct GenConfig {
    GridSpec grid;
    int min_furniture = 5;
    int max_furniture = 20;
    float door_width_m = 0.9f;
    float min_room_m = 3.0f;
    float wall_height_m = 3.0f;
    int tx_count = 16;
};

// Random floorplan: perimeter plus recursively partitioned interior walls
// with door gaps, rectangular furniture, transmitters in wall-free cells.
Environment generate_random_environment(RandomStream& rng, const GenConfig& cfg);

// Cell helpers.
std::int64_t cell_of(float meters, const GridSpec& grid);

std::string environment_to_json(const Environment& env);
Environment environment_from_json(const std::string& text);
void save_environment(const std::string& path, const Environment& env);
Environment load_environment(const std::string& path);

}  // namespace rmap::geom
