#include "milagro/scene.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "milagro/errors.hpp"
#include "milagro/hash.hpp"
#include "milagro/rng.hpp"

namespace milagro::scene {

using ordered_json = nlohmann::ordered_json;

std::vector<Wall> default_walls(double refl_sub7, double refl_mmwave, double floor_sub7,
                                double floor_mmwave) {
    std::vector<Wall> walls;
    for (WallSide side : {WallSide::XMin, WallSide::XMax, WallSide::YMin, WallSide::YMax}) {
        Wall w;
        w.side = side;
        w.reflection = {refl_sub7, refl_mmwave};
        walls.push_back(w);
    }
    Wall floor;
    floor.side = WallSide::Floor;
    floor.reflection = {floor_sub7, floor_mmwave};
    walls.push_back(floor);
    Wall ceiling;
    ceiling.side = WallSide::Ceiling;
    ceiling.reflection = {floor_sub7, floor_mmwave};
    walls.push_back(ceiling);
    return walls;
}

BodyShape body_shape(const Target& t) {
    BodyShape s;
    if (t.pose == Pose::Absent) return s;
    s.present = true;
    switch (t.pose) {
        case Pose::Sit:
            s.is_cylinder = true;
            s.cx = t.position.x;
            s.cy = t.position.y;
            s.radius = t.body_radius_m;
            s.z0 = t.position.z;
            s.z1 = t.position.z + std::min(1.3, t.body_height_m);
            break;
        case Pose::Stand:
            s.is_cylinder = true;
            s.cx = t.position.x;
            s.cy = t.position.y;
            s.radius = t.body_radius_m;
            s.z0 = t.position.z;
            s.z1 = t.position.z + t.body_height_m;
            break;
        case Pose::LyingDown: {
            const double half_len = 0.5 * t.body_height_m;
            const double half_wid = t.body_radius_m + 0.05;
            s.box.lo = {t.position.x - half_len, t.position.y - half_wid, t.position.z};
            s.box.hi = {t.position.x + half_len, t.position.y + half_wid, t.position.z + 0.4};
            break;
        }
        case Pose::Absent:
            break;
    }
    return s;
}

bool target_blocks_segment(const Target& t, const Vec3& p0, const Vec3& p1) {
    const BodyShape s = body_shape(t);
    if (!s.present) return false;
    if (s.is_cylinder) return segment_hits_cylinder(p0, p1, s.cx, s.cy, s.radius, s.z0, s.z1);
    return segment_hits_box(p0, p1, s.box);
}

// ---------------------------------------------------------------------------
// Validation

namespace {

bool inside_room(const Vec3& p, const Vec3& dims) {
    return p.x > 0 && p.x < dims.x && p.y > 0 && p.y < dims.y && p.z > 0 && p.z < dims.z;
}

void check_node(const RadioNode& n, const Vec3& dims, const std::string& field,
                std::vector<Violation>& out) {
    if (!inside_room(n.position, dims)) out.push_back({field, "position outside room"});
    if (n.band == Band::Sub7) {
        if (n.carrier_freq_hz < 2.4e9 || n.carrier_freq_hz > 7e9)
            out.push_back({field + ".carrier_freq", "Sub7 carrier outside [2.4e9, 7e9] Hz"});
        if (n.beacon_interval_s <= 0)
            out.push_back({field + ".beacon_interval", "beacon interval must be > 0"});
    } else {
        if (n.carrier_freq_hz < 57e9 || n.carrier_freq_hz > 71e9)
            out.push_back({field + ".carrier_freq", "MmWave carrier outside [57e9, 71e9] Hz"});
    }
    if (n.antenna.rows * n.antenna.cols < 1)
        out.push_back({field + ".antenna", "array must have at least one element"});
    if (n.antenna.element_spacing_m < 0)
        out.push_back({field + ".antenna.element_spacing", "spacing must be >= 0"});
}

}  // namespace

std::vector<Violation> validate_scene(const Scene& scn) {
    std::vector<Violation> v;
    if (scn.room_dims.x <= 0 || scn.room_dims.y <= 0 || scn.room_dims.z <= 0)
        v.push_back({"room_dims", "room dimensions must be positive"});

    for (std::size_t i = 0; i < scn.walls.size(); ++i) {
        const auto& w = scn.walls[i];
        const std::string f = "walls[" + std::to_string(i) + "]";
        if (w.reflection.sub7_db < 0 || w.reflection.sub7_db > 1 || w.reflection.mmwave_db < 0 ||
            w.reflection.mmwave_db > 1)
            v.push_back({f + ".reflection", "coefficient outside [0, 1]"});
    }

    if (scn.aps.empty()) v.push_back({"aps", "at least one AP required"});
    for (std::size_t i = 0; i < scn.aps.size(); ++i)
        check_node(scn.aps[i], scn.room_dims, "aps[" + std::to_string(i) + "]", v);
    check_node(scn.psta, scn.room_dims, "psta", v);

    for (std::size_t i = 0; i < scn.obstacles.size(); ++i) {
        const auto& o = scn.obstacles[i];
        const std::string f = "obstacles[" + std::to_string(i) + "]";
        const Box3 room{{0, 0, 0}, scn.room_dims};
        if (!room.contains(o.box.lo) || !room.contains(o.box.hi))
            v.push_back({f + ".box", "box not fully inside room"});
        if (o.box.lo.x > o.box.hi.x || o.box.lo.y > o.box.hi.y || o.box.lo.z > o.box.hi.z)
            v.push_back({f + ".box", "box lo/hi inverted"});
        if (o.penetration_db.sub7_db < 0 || o.penetration_db.mmwave_db < 0)
            v.push_back({f + ".penetration", "negative penetration loss"});
    }

    for (std::size_t i = 0; i < scn.targets.size(); ++i) {
        const auto& t = scn.targets[i];
        const std::string f = "targets[" + std::to_string(i) + "]";
        if (!inside_room(t.position, scn.room_dims)) v.push_back({f, "position outside room"});
        if (t.body_radius_m <= 0 || t.body_height_m <= 0)
            v.push_back({f + ".body", "body dimensions must be positive"});
        if (!(t.penetration_db.sub7_db > 0))
            v.push_back({f + ".penetration", "Sub7 penetration loss must be > 0"});
        if (t.penetration_db.mmwave_db < t.penetration_db.sub7_db)
            v.push_back({f + ".penetration", "mmWave loss must be >= Sub7 loss"});
    }
    return v;
}

// ---------------------------------------------------------------------------
// Taxonomies

namespace {

// Segment between the mmWave AP (fallback: first AP) and the P-STA.
std::pair<Vec3, Vec3> los_segment(const Scene& scn) {
    const RadioNode* ap = scn.ap_for_band(Band::MmWave);
    if (!ap && !scn.aps.empty()) ap = &scn.aps.front();
    if (!ap) throw TaxonomyMismatch("scene has no AP to derive a LOS segment from");
    return {ap->position, scn.psta.position};
}

// Renumber raw coarse ids to a dense, surjective range.
void compress_coarse(std::vector<int>& raw, std::vector<std::string>& names_out,
                     const std::vector<std::string>& raw_names) {
    std::vector<int> used;
    for (int r : raw)
        if (std::find(used.begin(), used.end(), r) == used.end()) used.push_back(r);
    std::sort(used.begin(), used.end());
    names_out.clear();
    for (int u : used) names_out.push_back(raw_names[static_cast<std::size_t>(u)]);
    for (int& r : raw)
        r = static_cast<int>(std::find(used.begin(), used.end(), r) - used.begin());
}

}  // namespace

LabelTaxonomy make_occupancy_taxonomy(const Scene& scn, const std::vector<Vec3>& anchors,
                                      Pose occupant_pose, double association_radius_m) {
    if (anchors.empty()) throw TaxonomyMismatch("occupancy taxonomy needs anchor positions");
    LabelTaxonomy tax;
    tax.kind = anchors.size() == 4 ? TaxonomyKind::Occupancy16 : TaxonomyKind::Custom;
    tax.anchors = anchors;
    tax.association_radius_m = association_radius_m;

    const auto [a, b] = los_segment(scn);
    std::vector<bool> blocks(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        Target t;
        t.position = anchors[i];
        t.pose = occupant_pose;
        blocks[i] = target_blocks_segment(t, a, b);
    }

    const int n = static_cast<int>(anchors.size());
    const int masks = 1 << n;
    std::vector<int> raw;
    for (int m = 0; m < masks; ++m) {
        std::string name;
        bool any_blocked = false;
        for (int i = 0; i < n; ++i) {
            const bool occ = (m >> (n - 1 - i)) & 1;
            name += occ ? '1' : '0';
            if (occ && blocks[static_cast<std::size_t>(i)]) any_blocked = true;
        }
        tax.fine_labels.push_back(name);
        raw.push_back(any_blocked ? 1 : 0);
    }
    compress_coarse(raw, tax.coarse_labels, {"clear", "blocked"});
    tax.coarse_map = raw;
    return tax;
}

LabelTaxonomy make_pose_taxonomy(const Scene& scn, const Vec3& anchor,
                                 double association_radius_m) {
    LabelTaxonomy tax;
    tax.kind = TaxonomyKind::Pose4;
    tax.anchors = {anchor};
    tax.association_radius_m = association_radius_m;
    tax.fine_labels = {"sit", "stand", "lying_down", "absent"};

    const auto [a, b] = los_segment(scn);
    std::vector<int> raw;
    for (Pose p : {Pose::Sit, Pose::Stand, Pose::LyingDown, Pose::Absent}) {
        Target t;
        t.position = anchor;
        t.pose = p;
        raw.push_back(target_blocks_segment(t, a, b) ? 1 : 0);
    }
    compress_coarse(raw, tax.coarse_labels, {"clear", "blocked"});
    tax.coarse_map = raw;
    return tax;
}

LabelTaxonomy make_corridor_taxonomy(const Scene& scn, const CorridorGrid& grid) {
    LabelTaxonomy tax;
    tax.kind = TaxonomyKind::CorridorTiles;
    tax.grid = grid;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c)
            tax.fine_labels.push_back("tile_" + std::to_string(r) + "_" + std::to_string(c));
    tax.fine_labels.push_back("empty");

    // coarse = lateral column; an empty corridor looks like the unobstructed
    // LOS column to the beam sweep
    const auto [a, b] = los_segment(scn);
    const Vec3 mid = (a + b) * 0.5;
    int los_col = grid.cols / 2;
    const double rel = (mid.y - grid.origin.y) / grid.tile_width_m;
    if (rel >= 0 && rel < grid.cols) los_col = static_cast<int>(rel);

    for (int c = 0; c < grid.cols; ++c) tax.coarse_labels.push_back("col_" + std::to_string(c));
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) tax.coarse_map.push_back(c);
    tax.coarse_map.push_back(los_col);
    return tax;
}

LabelTaxonomy make_los_binary_taxonomy() {
    LabelTaxonomy tax;
    tax.kind = TaxonomyKind::LosBinary;
    tax.fine_labels = {"absent", "present"};
    tax.coarse_labels = {"absent", "present"};
    tax.coarse_map = {0, 1};
    return tax;
}

// ---------------------------------------------------------------------------
// label_of

namespace {

bool target_at(const Target& t, const Vec3& anchor, double radius) {
    if (t.pose == Pose::Absent) return false;
    const double dx = t.position.x - anchor.x, dy = t.position.y - anchor.y;
    return dx * dx + dy * dy <= radius * radius;
}

}  // namespace

int label_of(const Scene& scn, const LabelTaxonomy& tax) {
    switch (tax.kind) {
        case TaxonomyKind::Occupancy16:
        case TaxonomyKind::Custom: {
            if (tax.anchors.empty())
                throw TaxonomyMismatch("occupancy taxonomy has no anchor positions");
            const int n = static_cast<int>(tax.anchors.size());
            if (tax.fine_count() != (1 << n))
                throw TaxonomyMismatch("occupancy label set does not match anchor count");
            int mask = 0;
            for (int i = 0; i < n; ++i) {
                bool occ = false;
                for (const auto& t : scn.targets)
                    occ = occ || target_at(t, tax.anchors[static_cast<std::size_t>(i)],
                                           tax.association_radius_m);
                if (occ) mask |= 1 << (n - 1 - i);
            }
            return mask;
        }
        case TaxonomyKind::Pose4: {
            if (tax.anchors.size() != 1)
                throw TaxonomyMismatch("pose taxonomy needs exactly one anchor");
            const Target* found = nullptr;
            for (const auto& t : scn.targets) {
                if (!target_at(t, tax.anchors[0], tax.association_radius_m)) continue;
                if (found) throw AmbiguousLabel("more than one target at the pose anchor");
                found = &t;
            }
            if (!found) return 3;  // absent
            switch (found->pose) {
                case Pose::Sit: return 0;
                case Pose::Stand: return 1;
                case Pose::LyingDown: return 2;
                case Pose::Absent: return 3;
            }
            return 3;
        }
        case TaxonomyKind::CorridorTiles: {
            const Target* found = nullptr;
            for (const auto& t : scn.targets) {
                if (t.pose == Pose::Absent) continue;
                if (found) throw AmbiguousLabel("more than one present target in the corridor");
                found = &t;
            }
            if (!found) return tax.grid.rows * tax.grid.cols;  // empty
            const auto tile = tax.grid.tile_of(found->position);
            if (!tile) throw TaxonomyMismatch("present target outside the corridor grid");
            return *tile;
        }
        case TaxonomyKind::LosBinary: {
            for (const auto& t : scn.targets)
                if (t.pose != Pose::Absent) return 1;
            return 0;
        }
    }
    throw TaxonomyMismatch("unknown taxonomy kind");
}

// ---------------------------------------------------------------------------
// perturb_scene

namespace {

void move_obstacle(Obstacle& o, double max_dist, const Vec3& room, Rng& rng) {
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    const double r = rng.uniform(0.0, max_dist);
    Vec3 d{r * std::cos(ang), r * std::sin(ang), 0.0};
    // clamp so the box stays inside the room
    d.x = std::clamp(d.x, -o.box.lo.x, room.x - o.box.hi.x);
    d.y = std::clamp(d.y, -o.box.lo.y, room.y - o.box.hi.y);
    o.box.lo = o.box.lo + d;
    o.box.hi = o.box.hi + d;
}

Obstacle random_furniture(const Vec3& room, Rng& rng) {
    Obstacle o;
    o.kind = ObstacleKind::Furniture;
    const double sx = rng.uniform(0.6, 1.4);
    const double sy = rng.uniform(0.4, 1.0);
    const double sz = rng.uniform(1.0, 2.2);
    const double x = rng.uniform(0.05, std::max(0.06, room.x - sx - 0.05));
    const double y = rng.uniform(0.05, std::max(0.06, room.y - sy - 0.05));
    o.box.lo = {x, y, 0.0};
    o.box.hi = {x + sx, y + sy, std::min(sz, room.z)};
    o.penetration_db = {rng.uniform(8.0, 14.0), rng.uniform(20.0, 35.0)};
    return o;
}

}  // namespace

Scene perturb_scene(const Scene& scn, PerturbLevel level, std::uint64_t seed) {
    Scene out = scn;
    Rng rng(mix_seed(seed, 0x5ce2eULL));
    switch (level) {
        case PerturbLevel::Minor:
            for (auto& o : out.obstacles)
                if (o.kind == ObstacleKind::CartonBox) move_obstacle(o, 0.5, out.room_dims, rng);
            break;
        case PerturbLevel::Mid:
            for (auto& o : out.obstacles)
                if (o.kind == ObstacleKind::FilingCabinet)
                    move_obstacle(o, 1.0, out.room_dims, rng);
            break;
        case PerturbLevel::Major: {
            for (auto& o : out.obstacles) {
                if (o.kind == ObstacleKind::CartonBox) move_obstacle(o, 0.5, out.room_dims, rng);
                if (o.kind == ObstacleKind::FilingCabinet)
                    move_obstacle(o, 1.0, out.room_dims, rng);
            }
            const int extra = rng.uniform_int(2, 4);
            for (int i = 0; i < extra; ++i)
                out.obstacles.push_back(random_furniture(out.room_dims, rng));
            break;
        }
        case PerturbLevel::NewScenario: {
            for (auto& w : out.walls) {
                w.reflection.sub7_db = rng.uniform(0.1, 0.9);
                w.reflection.mmwave_db = rng.uniform(0.05, 0.6);
                w.penetration_db.sub7_db = rng.uniform(6.0, 20.0);
                w.penetration_db.mmwave_db = rng.uniform(25.0, 60.0);
            }
            for (auto& o : out.obstacles) {
                const Vec3 size = o.box.hi - o.box.lo;
                const double x = rng.uniform(0.05, std::max(0.06, out.room_dims.x - size.x - 0.05));
                const double y = rng.uniform(0.05, std::max(0.06, out.room_dims.y - size.y - 0.05));
                o.box.lo = {x, y, o.box.lo.z};
                o.box.hi = {x + size.x, y + size.y, o.box.lo.z + size.z};
                o.penetration_db.sub7_db = rng.uniform(2.0, 14.0);
                o.penetration_db.mmwave_db =
                    o.penetration_db.sub7_db + rng.uniform(6.0, 25.0);
            }
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const char* wall_side_name(WallSide s) {
    switch (s) {
        case WallSide::XMin: return "x_min";
        case WallSide::XMax: return "x_max";
        case WallSide::YMin: return "y_min";
        case WallSide::YMax: return "y_max";
        case WallSide::Floor: return "floor";
        case WallSide::Ceiling: return "ceiling";
    }
    return "x_min";
}

WallSide wall_side_from(const std::string& s) {
    if (s == "x_min") return WallSide::XMin;
    if (s == "x_max") return WallSide::XMax;
    if (s == "y_min") return WallSide::YMin;
    if (s == "y_max") return WallSide::YMax;
    if (s == "floor") return WallSide::Floor;
    if (s == "ceiling") return WallSide::Ceiling;
    throw SceneInvalid("unknown wall side: " + s);
}

const char* obstacle_kind_name(ObstacleKind k) {
    switch (k) {
        case ObstacleKind::CartonBox: return "carton_box";
        case ObstacleKind::FilingCabinet: return "filing_cabinet";
        case ObstacleKind::Furniture: return "furniture";
        case ObstacleKind::Wall: return "wall";
    }
    return "carton_box";
}

ObstacleKind obstacle_kind_from(const std::string& s) {
    if (s == "carton_box") return ObstacleKind::CartonBox;
    if (s == "filing_cabinet") return ObstacleKind::FilingCabinet;
    if (s == "furniture") return ObstacleKind::Furniture;
    if (s == "wall") return ObstacleKind::Wall;
    throw SceneInvalid("unknown obstacle kind: " + s);
}

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const ordered_json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

ordered_json loss_json(const BandLoss& l) {
    return ordered_json{{"sub7", l.sub7_db}, {"mmwave", l.mmwave_db}};
}

BandLoss loss_from(const ordered_json& j) {
    return {j.at("sub7").get<double>(), j.at("mmwave").get<double>()};
}

ordered_json node_json(const RadioNode& n) {
    return ordered_json{{"id", n.id},
                        {"position", vec_json(n.position)},
                        {"band", band_name(n.band)},
                        {"carrier_freq_hz", n.carrier_freq_hz},
                        {"antenna",
                         ordered_json{{"rows", n.antenna.rows},
                                      {"cols", n.antenna.cols},
                                      {"element_spacing_m", n.antenna.element_spacing_m},
                                      {"boresight", vec_json(n.antenna.boresight)}}},
                        {"beacon_interval_s", n.beacon_interval_s},
                        {"is_rogue", n.is_rogue}};
}

RadioNode node_from(const ordered_json& j) {
    RadioNode n;
    n.id = j.at("id").get<std::string>();
    n.position = vec_from(j.at("position"));
    n.band = band_from_name(j.at("band").get<std::string>());
    n.carrier_freq_hz = j.at("carrier_freq_hz").get<double>();
    const auto& a = j.at("antenna");
    n.antenna.rows = a.at("rows").get<int>();
    n.antenna.cols = a.at("cols").get<int>();
    n.antenna.element_spacing_m = a.at("element_spacing_m").get<double>();
    n.antenna.boresight = vec_from(a.at("boresight"));
    n.beacon_interval_s = j.at("beacon_interval_s").get<double>();
    n.is_rogue = j.at("is_rogue").get<bool>();
    return n;
}

}  // namespace

std::string scene_to_json(const Scene& scn) {
    ordered_json j;
    j["schema"] = 1;
    j["room_dims"] = vec_json(scn.room_dims);
    j["walls"] = ordered_json::array();
    for (const auto& w : scn.walls)
        j["walls"].push_back(ordered_json{{"side", wall_side_name(w.side)},
                                          {"reflection", loss_json(w.reflection)},
                                          {"penetration_db", loss_json(w.penetration_db)}});
    j["aps"] = ordered_json::array();
    for (const auto& n : scn.aps) j["aps"].push_back(node_json(n));
    j["psta"] = node_json(scn.psta);
    j["obstacles"] = ordered_json::array();
    for (const auto& o : scn.obstacles)
        j["obstacles"].push_back(ordered_json{{"lo", vec_json(o.box.lo)},
                                              {"hi", vec_json(o.box.hi)},
                                              {"penetration_db", loss_json(o.penetration_db)},
                                              {"kind", obstacle_kind_name(o.kind)}});
    j["targets"] = ordered_json::array();
    for (const auto& t : scn.targets)
        j["targets"].push_back(ordered_json{{"id", t.id},
                                            {"position", vec_json(t.position)},
                                            {"pose", pose_name(t.pose)},
                                            {"body_radius_m", t.body_radius_m},
                                            {"body_height_m", t.body_height_m},
                                            {"penetration_db", loss_json(t.penetration_db)}});
    return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SceneInvalid(std::string("scene JSON parse error: ") + e.what());
    }
    try {
        if (!j.contains("schema") || j.at("schema").get<int>() != 1)
            throw SchemaVersionMismatch("scene schema version is not 1");
        Scene scn;
        scn.room_dims = vec_from(j.at("room_dims"));
        scn.walls.clear();
        for (const auto& wj : j.at("walls")) {
            Wall w;
            w.side = wall_side_from(wj.at("side").get<std::string>());
            w.reflection = loss_from(wj.at("reflection"));
            w.penetration_db = loss_from(wj.at("penetration_db"));
            scn.walls.push_back(w);
        }
        for (const auto& nj : j.at("aps")) scn.aps.push_back(node_from(nj));
        scn.psta = node_from(j.at("psta"));
        for (const auto& oj : j.at("obstacles")) {
            Obstacle o;
            o.box.lo = vec_from(oj.at("lo"));
            o.box.hi = vec_from(oj.at("hi"));
            o.penetration_db = loss_from(oj.at("penetration_db"));
            o.kind = obstacle_kind_from(oj.at("kind").get<std::string>());
            scn.obstacles.push_back(o);
        }
        for (const auto& tj : j.at("targets")) {
            Target t;
            t.id = tj.at("id").get<std::string>();
            t.position = vec_from(tj.at("position"));
            t.pose = pose_from_name(tj.at("pose").get<std::string>());
            t.body_radius_m = tj.at("body_radius_m").get<double>();
            t.body_height_m = tj.at("body_height_m").get<double>();
            t.penetration_db = loss_from(tj.at("penetration_db"));
            scn.targets.push_back(t);
        }
        return scn;
    } catch (const nlohmann::json::exception& e) {
        throw SceneInvalid(std::string("scene JSON missing/invalid field: ") + e.what());
    }
}

std::string taxonomy_to_json(const LabelTaxonomy& tax) {
    ordered_json j;
    j["schema"] = 1;
    const char* kind = "custom";
    switch (tax.kind) {
        case TaxonomyKind::Occupancy16: kind = "occupancy16"; break;
        case TaxonomyKind::Pose4: kind = "pose4"; break;
        case TaxonomyKind::CorridorTiles: kind = "corridor_tiles"; break;
        case TaxonomyKind::LosBinary: kind = "los_binary"; break;
        case TaxonomyKind::Custom: kind = "custom"; break;
    }
    j["kind"] = kind;
    j["fine_labels"] = tax.fine_labels;
    j["coarse_labels"] = tax.coarse_labels;
    j["coarse_map"] = tax.coarse_map;
    j["anchors"] = ordered_json::array();
    for (const auto& a : tax.anchors) j["anchors"].push_back(vec_json(a));
    j["association_radius_m"] = tax.association_radius_m;
    j["grid"] = ordered_json{{"origin", vec_json(tax.grid.origin)},
                             {"tile_len_m", tax.grid.tile_len_m},
                             {"tile_width_m", tax.grid.tile_width_m},
                             {"rows", tax.grid.rows},
                             {"cols", tax.grid.cols}};
    return j.dump(2);
}

LabelTaxonomy taxonomy_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SceneInvalid(std::string("taxonomy JSON parse error: ") + e.what());
    }
    if (!j.contains("schema") || j.at("schema").get<int>() != 1)
        throw SchemaVersionMismatch("taxonomy schema version is not 1");
    LabelTaxonomy tax;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "occupancy16")
        tax.kind = TaxonomyKind::Occupancy16;
    else if (kind == "pose4")
        tax.kind = TaxonomyKind::Pose4;
    else if (kind == "corridor_tiles")
        tax.kind = TaxonomyKind::CorridorTiles;
    else if (kind == "los_binary")
        tax.kind = TaxonomyKind::LosBinary;
    else
        tax.kind = TaxonomyKind::Custom;
    tax.fine_labels = j.at("fine_labels").get<std::vector<std::string>>();
    tax.coarse_labels = j.at("coarse_labels").get<std::vector<std::string>>();
    tax.coarse_map = j.at("coarse_map").get<std::vector<int>>();
    for (const auto& aj : j.at("anchors")) tax.anchors.push_back(vec_from(aj));
    tax.association_radius_m = j.at("association_radius_m").get<double>();
    const auto& g = j.at("grid");
    tax.grid.origin = vec_from(g.at("origin"));
    tax.grid.tile_len_m = g.at("tile_len_m").get<double>();
    tax.grid.tile_width_m = g.at("tile_width_m").get<double>();
    tax.grid.rows = g.at("rows").get<int>();
    tax.grid.cols = g.at("cols").get<int>();
    if (tax.coarse_map.size() != tax.fine_labels.size())
        throw SceneInvalid("taxonomy coarse_map does not cover the fine label set");
    return tax;
}

std::uint64_t scene_hash(const Scene& scn) { return fnv1a64(scene_to_json(scn)); }

const char* pose_name(Pose p) {
    switch (p) {
        case Pose::Sit: return "sit";
        case Pose::Stand: return "stand";
        case Pose::LyingDown: return "lying_down";
        case Pose::Absent: return "absent";
    }
    return "absent";
}

Pose pose_from_name(const std::string& s) {
    if (s == "sit") return Pose::Sit;
    if (s == "stand") return Pose::Stand;
    if (s == "lying_down") return Pose::LyingDown;
    if (s == "absent") return Pose::Absent;
    throw SceneInvalid("unknown pose: " + s);
}

const char* band_name(Band b) { return b == Band::Sub7 ? "sub7" : "mmwave"; }

Band band_from_name(const std::string& s) {
    if (s == "sub7") return Band::Sub7;
    if (s == "mmwave") return Band::MmWave;
    throw SceneInvalid("unknown band: " + s);
}

}  // namespace milagro::scene
