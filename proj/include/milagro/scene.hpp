#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "milagro/geometry.hpp"

namespace milagro::scene {

enum class Band { Sub7, MmWave };

enum class Pose { Sit, Stand, LyingDown, Absent };

enum class ObstacleKind { CartonBox, FilingCabinet, Furniture, Wall };

// Room boundary surfaces, named so the image method can mirror across them.
enum class WallSide { XMin, XMax, YMin, YMax, Floor, Ceiling };

// dB loss applied once per segment crossing, per band.
struct BandLoss {
    double sub7_db = 9.0;
    double mmwave_db = 25.0;

    double at(Band b) const { return b == Band::Sub7 ? sub7_db : mmwave_db; }
};

struct AntennaArray {
    int rows = 1;
    int cols = 1;
    double element_spacing_m = 0.0;  // 0 = half wavelength at the carrier
    Vec3 boresight{1.0, 0.0, 0.0};

    int elements() const { return rows * cols; }
};

struct RadioNode {
    std::string id;
    Vec3 position;
    Band band = Band::Sub7;
    double carrier_freq_hz = 5.24e9;
    AntennaArray antenna;
    double beacon_interval_s = 0.1024;  // Sub7 only
    bool is_rogue = false;
};

struct Wall {
    WallSide side = WallSide::XMin;
    BandLoss reflection{0.6, 0.25};       // amplitude coefficient in [0,1]
    BandLoss penetration_db{12.0, 40.0};  // used for Wall-kind obstacles / resampling
};

struct Target {
    std::string id;
    Vec3 position;  // feet position (z = floor under the body)
    Pose pose = Pose::Absent;
    double body_radius_m = 0.25;
    double body_height_m = 1.8;
    BandLoss penetration_db{9.0, 25.0};
};

struct Obstacle {
    Box3 box;
    BandLoss penetration_db{3.0, 12.0};
    ObstacleKind kind = ObstacleKind::CartonBox;
};

struct Scene {
    Vec3 room_dims{8.0, 6.0, 3.0};
    std::vector<Wall> walls;
    std::vector<RadioNode> aps;
    RadioNode psta;
    std::vector<Obstacle> obstacles;
    std::vector<Target> targets;

    const RadioNode* ap_for_band(Band b) const {
        for (const auto& n : aps)
            if (n.band == b && !n.is_rogue) return &n;
        return nullptr;
    }
};

// Six default walls with the given reflection coefficients.
std::vector<Wall> default_walls(double refl_sub7 = 0.6, double refl_mmwave = 0.25,
                                double floor_sub7 = 0.35, double floor_mmwave = 0.15);

// Effective body geometry per pose (design note: cylinder for Sit/Stand,
// low horizontal box for LyingDown, nothing for Absent).
struct BodyShape {
    bool is_cylinder = false;
    double cx = 0, cy = 0, radius = 0, z0 = 0, z1 = 0;  // cylinder
    Box3 box;                                           // lying pose
    bool present = false;
};
BodyShape body_shape(const Target& t);

bool target_blocks_segment(const Target& t, const Vec3& p0, const Vec3& p1);

// ---------------------------------------------------------------------------
// Label taxonomies

enum class TaxonomyKind { Occupancy16, Pose4, CorridorTiles, LosBinary, Custom };

struct CorridorGrid {
    // tile (row, col): row indexes along the corridor length, col across it
    Vec3 origin{0.2, 0.35, 0.0};
    double tile_len_m = 0.8;   // along x
    double tile_width_m = 0.6; // along y
    int rows = 14;
    int cols = 3;

    int tile_index(int row, int col) const { return row * cols + col; }
    Vec3 tile_center(int index) const {
        const int row = index / cols, col = index % cols;
        return {origin.x + (row + 0.5) * tile_len_m, origin.y + (col + 0.5) * tile_width_m,
                origin.z};
    }
    std::optional<int> tile_of(const Vec3& p) const {
        const int row = static_cast<int>(std::floor((p.x - origin.x) / tile_len_m));
        const int col = static_cast<int>(std::floor((p.y - origin.y) / tile_width_m));
        if (row < 0 || row >= rows || col < 0 || col >= cols) return std::nullopt;
        return tile_index(row, col);
    }
};

struct LabelTaxonomy {
    TaxonomyKind kind = TaxonomyKind::Custom;
    std::vector<std::string> fine_labels;
    std::vector<std::string> coarse_labels;
    std::vector<int> coarse_map;  // fine index -> coarse index, surjective

    // occupancy / pose anchors
    std::vector<Vec3> anchors;
    double association_radius_m = 0.6;

    CorridorGrid grid;  // CorridorTiles only

    int fine_count() const { return static_cast<int>(fine_labels.size()); }
    int coarse_count() const { return static_cast<int>(coarse_labels.size()); }
    int coarse_of(int fine) const { return coarse_map.at(static_cast<std::size_t>(fine)); }
};

// Occupancy over n anchors (2^n masks); kind is Occupancy16 when n == 4.
// The coarse split is the LOS-blockage bit derived from scene geometry:
// class 1 iff any occupied anchor body intersects the mmWave AP->P-STA segment.
LabelTaxonomy make_occupancy_taxonomy(const Scene& scn, const std::vector<Vec3>& anchors,
                                      Pose occupant_pose = Pose::Sit,
                                      double association_radius_m = 0.6);

// Four poses of a single target at one anchor; coarse = LOS-blockage bit of the pose body.
LabelTaxonomy make_pose_taxonomy(const Scene& scn, const Vec3& anchor,
                                 double association_radius_m = 0.6);

// 14x3 tiles plus an explicit "empty" label (43 total); coarse = lateral tile
// row (3 classes); the empty label joins the row containing the LOS.
LabelTaxonomy make_corridor_taxonomy(const Scene& scn, const CorridorGrid& grid);

// {absent, present} with identity coarse map.
LabelTaxonomy make_los_binary_taxonomy();

// ---------------------------------------------------------------------------
// Operations

struct Violation {
    std::string field;
    std::string rule;
};

std::vector<Violation> validate_scene(const Scene& scn);

// Deterministic label of the current target configuration.
int label_of(const Scene& scn, const LabelTaxonomy& tax);

enum class PerturbLevel { Minor, Mid, Major, NewScenario };

Scene perturb_scene(const Scene& scn, PerturbLevel level, std::uint64_t seed);

// ---------------------------------------------------------------------------
// JSON serialization (schema 1). Also used for scene hashing.

std::string scene_to_json(const Scene& scn);
Scene scene_from_json(const std::string& text);
std::string taxonomy_to_json(const LabelTaxonomy& tax);
LabelTaxonomy taxonomy_from_json(const std::string& text);

std::uint64_t scene_hash(const Scene& scn);

const char* pose_name(Pose p);
Pose pose_from_name(const std::string& s);
const char* band_name(Band b);
Band band_from_name(const std::string& s);

}  // namespace milagro::scene
