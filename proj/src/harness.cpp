#include "milagro/harness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "milagro/dsp.hpp"
#include "milagro/errors.hpp"
#include "milagro/io.hpp"
#include "milagro/rng.hpp"

namespace milagro::harness {

using channel::CsiCapture;
using channel::FpbtCapture;
using dsp::FeatureTensor;
using ordered_json = nlohmann::ordered_json;
using scene::Band;
using scene::LabelTaxonomy;
using scene::Pose;
using scene::RadioNode;
using scene::Target;
using scene::TaxonomyKind;

const char* scenario_kind_name(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::DistanceTest: return "distance_test";
        case ScenarioKind::OrientationTest: return "orientation_test";
        case ScenarioKind::Workstation16: return "workstation16";
        case ScenarioKind::Pose4: return "pose4";
        case ScenarioKind::Corridor: return "corridor";
        case ScenarioKind::LosNlos: return "los_nlos";
        case ScenarioKind::SampleSweep: return "sample_sweep";
        case ScenarioKind::EpochSweep: return "epoch_sweep";
        case ScenarioKind::SpoofAttack: return "spoof_attack";
        case ScenarioKind::TransferScene: return "transfer_scene";
        case ScenarioKind::Perturbation: return "perturbation";
        case ScenarioKind::TrafficJitter: return "traffic_jitter";
    }
    return "workstation16";
}

ScenarioKind scenario_kind_from_name(const std::string& s) {
    for (ScenarioKind k :
         {ScenarioKind::DistanceTest, ScenarioKind::OrientationTest, ScenarioKind::Workstation16,
          ScenarioKind::Pose4, ScenarioKind::Corridor, ScenarioKind::LosNlos,
          ScenarioKind::SampleSweep, ScenarioKind::EpochSweep, ScenarioKind::SpoofAttack,
          ScenarioKind::TransferScene, ScenarioKind::Perturbation, ScenarioKind::TrafficJitter})
        if (s == scenario_kind_name(k)) return k;
    throw SceneInvalid("unknown scenario kind: " + s);
}

// ---------------------------------------------------------------------------
// presets

namespace {

RadioNode make_ap(const std::string& id, Band band, const Vec3& pos, const Vec3& toward) {
    RadioNode n;
    n.id = id;
    n.position = pos;
    n.band = band;
    if (band == Band::Sub7) {
        n.carrier_freq_hz = 5.24e9;  // channel 48
        n.antenna.rows = n.antenna.cols = 1;
    } else {
        n.carrier_freq_hz = 60.48e9;
        n.antenna.rows = n.antenna.cols = 6;
        n.antenna.boresight = normalized(toward - pos);
    }
    n.beacon_interval_s = 0.1024;
    return n;
}

RadioNode make_psta(const Vec3& pos) {
    RadioNode n;
    n.id = "psta";
    n.position = pos;
    n.band = Band::Sub7;
    n.carrier_freq_hz = 5.24e9;
    return n;
}

Scene lab_scene() {
    Scene scn;
    scn.room_dims = {8.0, 6.0, 3.0};
    scn.walls = scene::default_walls();
    const Vec3 psta_pos{7.5, 5.5, 1.0};
    scn.psta = make_psta(psta_pos);
    scn.aps.push_back(make_ap("ap_sub7", Band::Sub7, {0.5, 0.5, 1.5}, psta_pos));
    scn.aps.push_back(make_ap("ap_mmwave", Band::MmWave, {0.5, 0.5, 1.5}, psta_pos));

    scene::Obstacle carton1;
    carton1.kind = scene::ObstacleKind::CartonBox;
    carton1.box = {{6.4, 0.8, 0.0}, {6.9, 1.3, 0.5}};
    carton1.penetration_db = {1.5, 4.0};
    scene::Obstacle carton2 = carton1;
    carton2.box = {{1.0, 4.9, 0.0}, {1.5, 5.4, 0.5}};
    scene::Obstacle cabinet;
    cabinet.kind = scene::ObstacleKind::FilingCabinet;
    cabinet.box = {{7.2, 2.5, 0.0}, {7.7, 3.1, 1.4}};
    cabinet.penetration_db = {6.0, 18.0};
    scn.obstacles = {carton1, carton2, cabinet};
    return scn;
}

// each workstation sits on a distinct propagation corridor: the first on the
// AP->P-STA diagonal (blocks LOS for both bands), the others on the y_max,
// y_min and x_max first-order reflection legs
std::vector<Vec3> lab_anchors() {
    return {{4.0, 3.0, 0.02}, {5.0, 4.35, 0.02}, {3.3, 1.9, 0.02}, {6.1, 4.0, 0.02}};
}

}  // namespace

Scenario make_workstation16(int samples_per_class, double snr_db) {
    Scenario sc;
    sc.kind = ScenarioKind::Workstation16;
    sc.base_scene = lab_scene();
    sc.taxonomy = scene::make_occupancy_taxonomy(sc.base_scene, lab_anchors(), Pose::Sit);
    sc.samples_per_class = samples_per_class;
    sc.noise.snr_target_db = snr_db;
    sc.load = TrafficLoad::preset(TrafficLoad::Level::Low);
    sc.fpbt.fail_prob = 0.0;
    return sc;
}

Scenario make_occupancy(int n_anchors, int samples_per_class, double snr_db) {
    if (n_anchors < 1 || n_anchors > 4)
        throw SceneInvalid("occupancy preset supports 1..4 workstations");
    Scenario sc = make_workstation16(samples_per_class, snr_db);
    auto anchors = lab_anchors();
    anchors.resize(static_cast<std::size_t>(n_anchors));
    sc.taxonomy = scene::make_occupancy_taxonomy(sc.base_scene, anchors, Pose::Sit);
    return sc;
}

Scenario make_pose4(int workstation, int samples_per_class, double snr_db) {
    Scenario sc;
    sc.kind = ScenarioKind::Pose4;
    sc.base_scene = lab_scene();
    const auto anchors = lab_anchors();
    if (workstation < 0 || workstation >= static_cast<int>(anchors.size()))
        throw SceneInvalid("pose preset workstation index out of range");
    sc.taxonomy =
        scene::make_pose_taxonomy(sc.base_scene, anchors[static_cast<std::size_t>(workstation)]);
    sc.samples_per_class = samples_per_class;
    sc.noise.snr_target_db = snr_db;
    sc.load = TrafficLoad::preset(TrafficLoad::Level::Low);
    sc.fpbt.fail_prob = 0.0;
    return sc;
}

Scenario make_corridor(int samples_per_class, double snr_db) {
    Scenario sc;
    sc.kind = ScenarioKind::Corridor;
    Scene scn;
    scn.room_dims = {12.0, 2.5, 3.0};
    scn.walls = scene::default_walls(0.7, 0.3);
    const Vec3 psta_pos{11.9, 1.25, 1.0};
    scn.psta = make_psta(psta_pos);
    scn.aps.push_back(make_ap("ap_sub7", Band::Sub7, {0.1, 1.25, 2.0}, psta_pos));
    scn.aps.push_back(make_ap("ap_mmwave", Band::MmWave, {0.1, 1.25, 2.0}, psta_pos));
    sc.base_scene = scn;

    scene::CorridorGrid grid;
    grid.origin = {0.2, 0.35, 0.02};
    grid.tile_len_m = 0.8;
    grid.tile_width_m = 0.6;
    grid.rows = 14;
    grid.cols = 3;
    sc.taxonomy = scene::make_corridor_taxonomy(scn, grid);
    sc.samples_per_class = samples_per_class;
    sc.noise.snr_target_db = snr_db;
    sc.load = TrafficLoad::preset(TrafficLoad::Level::Mid);
    sc.fpbt.fail_prob = 0.0;
    sc.params["min_beacons_for_capture"] = 3;
    return sc;
}

Scenario make_losnlos(double distance_m, const std::string& placement, int samples_per_class,
                      double snr_db) {
    if (placement != "los" && placement != "nlos")
        throw SceneInvalid("losnlos placement must be 'los' or 'nlos'");
    Scenario sc;
    sc.kind = ScenarioKind::LosNlos;
    Scene scn;
    scn.room_dims = {distance_m + 2.0, 4.0, 3.0};
    scn.walls = scene::default_walls();
    const Vec3 ap_pos{1.0, 2.0, 1.5};
    const Vec3 psta_pos{1.0 + distance_m, 2.0, 1.5};
    scn.psta = make_psta(psta_pos);
    scn.aps.push_back(make_ap("ap_sub7", Band::Sub7, ap_pos, psta_pos));
    scn.aps.push_back(make_ap("ap_mmwave", Band::MmWave, ap_pos, psta_pos));
    sc.base_scene = scn;
    sc.taxonomy = scene::make_los_binary_taxonomy();
    sc.samples_per_class = samples_per_class;
    sc.noise.snr_target_db = snr_db;
    sc.load = TrafficLoad::preset(TrafficLoad::Level::Low);
    sc.fpbt.fail_prob = 0.0;
    sc.params["distance_m"] = distance_m;
    if (placement == "los") {
        sc.params["present_x"] = 1.0 + distance_m / 2.0;
        sc.params["present_y"] = 2.0;
    } else {
        // midpoint of the first leg of the y_min wall reflection
        sc.params["present_x"] = 1.0 + distance_m / 4.0;
        sc.params["present_y"] = 1.0;
    }
    return sc;
}

Scenario make_distance_test(double distance_m, int samples_per_class, double snr_db) {
    Scenario sc;
    sc.kind = ScenarioKind::DistanceTest;
    Scene scn;
    scn.room_dims = {8.0, 6.0, 3.0};
    scn.walls = scene::default_walls();
    const Vec3 ap_pos{0.5, 0.5, 1.5};
    const Vec3 diag = normalized(Vec3{7.0, 5.0, 0.0});
    const Vec3 psta_pos = ap_pos + diag * distance_m - Vec3{0.0, 0.0, 0.3};
    scn.psta = make_psta(psta_pos);
    scn.aps.push_back(make_ap("ap_sub7", Band::Sub7, ap_pos, psta_pos));
    scn.aps.push_back(make_ap("ap_mmwave", Band::MmWave, ap_pos, psta_pos));
    sc.base_scene = scn;
    sc.taxonomy = scene::make_los_binary_taxonomy();
    sc.samples_per_class = samples_per_class;
    sc.noise.snr_target_db = snr_db;
    sc.fpbt.fail_prob = 0.0;
    sc.params["present_x"] = 4.0;
    sc.params["present_y"] = 3.0;
    sc.params["distance_m"] = distance_m;
    return sc;
}

Scenario make_orientation_test(int position, int samples_per_class, double snr_db) {
    Scenario sc;
    sc.kind = ScenarioKind::OrientationTest;
    Scene scn;
    scn.room_dims = {8.0, 6.0, 3.0};
    scn.walls = scene::default_walls();
    const Vec3 ap_pos{0.5, 0.5, 1.5};
    Vec3 psta_pos;
    switch (position) {
        case 1: psta_pos = ap_pos + normalized(Vec3{7.0, 5.0, 0.0}) * 5.0; break;
        case 2: psta_pos = {0.5, 3.5, 1.5}; break;
        case 3: psta_pos = {4.5, 0.5, 1.5}; break;
        default: throw SceneInvalid("orientation position must be 1, 2 or 3");
    }
    psta_pos.z = 1.2;
    scn.psta = make_psta(psta_pos);
    scn.aps.push_back(make_ap("ap_sub7", Band::Sub7, ap_pos, psta_pos));
    scn.aps.push_back(make_ap("ap_mmwave", Band::MmWave, ap_pos, psta_pos));
    sc.base_scene = scn;
    sc.taxonomy = scene::make_los_binary_taxonomy();
    sc.samples_per_class = samples_per_class;
    sc.noise.snr_target_db = snr_db;
    sc.fpbt.fail_prob = 0.0;
    sc.params["present_x"] = 4.0;
    sc.params["present_y"] = 3.0;
    sc.params["position"] = position;
    return sc;
}

Scenario preset_by_name(const std::string& name) {
    if (name == "workstation16") return make_workstation16();
    if (name == "occupancy4") return make_occupancy(2);
    if (name == "occupancy8") return make_occupancy(3);
    if (name == "pose4") return make_pose4(0);
    if (name == "corridor") return make_corridor();
    if (name == "losnlos_1m_los") return make_losnlos(1.0, "los");
    if (name == "losnlos_1m_nlos") return make_losnlos(1.0, "nlos");
    if (name == "losnlos_5m_nlos") return make_losnlos(5.0, "nlos");
    if (name == "losnlos_10m_nlos") return make_losnlos(10.0, "nlos");
    if (name == "distance_3m") return make_distance_test(3.0);
    if (name == "orientation_pos1") return make_orientation_test(1);
    if (name == "orientation_pos2") return make_orientation_test(2);
    if (name == "orientation_pos3") return make_orientation_test(3);
    throw SceneInvalid("unknown preset: " + name);
}

std::vector<std::string> preset_names() {
    return {"workstation16",   "occupancy4",      "occupancy8",       "pose4",
            "corridor",        "losnlos_1m_los",  "losnlos_1m_nlos",  "losnlos_5m_nlos",
            "losnlos_10m_nlos", "distance_3m",    "orientation_pos1", "orientation_pos2",
            "orientation_pos3"};
}

// ---------------------------------------------------------------------------
// scenario JSON

std::string scenario_to_json(const Scenario& sc) {
    ordered_json j;
    j["schema"] = 1;
    j["kind"] = scenario_kind_name(sc.kind);
    j["samples_per_class"] = sc.samples_per_class;
    j["noise"] = ordered_json{{"snr_target_db", sc.noise.snr_target_db},
                              {"enabled", sc.noise.enabled},
                              {"seed", sc.noise.seed}};
    j["load"] = ordered_json{{"beacon_jitter_std_s", sc.load.beacon_jitter_std_s},
                             {"beacon_drop_prob", sc.load.beacon_drop_prob}};
    j["fpbt"] = ordered_json{{"n_awv", sc.fpbt.n_awv},
                             {"sweep_width_deg", sc.fpbt.sweep_width_deg},
                             {"n_time_samples", sc.fpbt.n_time_samples},
                             {"n_taps", sc.fpbt.n_taps},
                             {"fail_prob", sc.fpbt.fail_prob}};
    j["position_jitter_m"] = sc.position_jitter_m;
    j["beacon_window"] = sc.beacon_window;
    j["feature_pool_sub7"] = sc.feature_pool_sub7;
    j["feature_pool_mmwave"] = sc.feature_pool_mmwave;
    j["params"] = sc.params;
    j["taxonomy"] = ordered_json::parse(scene::taxonomy_to_json(sc.taxonomy));
    j["scene"] = ordered_json::parse(scene::scene_to_json(sc.base_scene));
    return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SceneInvalid(std::string("scenario JSON parse error: ") + e.what());
    }
    if (!j.contains("schema") || j.at("schema").get<int>() != 1)
        throw SchemaVersionMismatch("scenario schema version is not 1");
    Scenario sc;
    sc.kind = scenario_kind_from_name(j.at("kind").get<std::string>());
    sc.samples_per_class = j.at("samples_per_class").get<int>();
    sc.noise.snr_target_db = j.at("noise").at("snr_target_db").get<double>();
    sc.noise.enabled = j.at("noise").at("enabled").get<bool>();
    sc.noise.seed = j.at("noise").at("seed").get<std::uint64_t>();
    sc.load.beacon_jitter_std_s = j.at("load").at("beacon_jitter_std_s").get<double>();
    sc.load.beacon_drop_prob = j.at("load").at("beacon_drop_prob").get<double>();
    sc.fpbt.n_awv = j.at("fpbt").at("n_awv").get<int>();
    sc.fpbt.sweep_width_deg = j.at("fpbt").at("sweep_width_deg").get<double>();
    sc.fpbt.n_time_samples = j.at("fpbt").at("n_time_samples").get<int>();
    sc.fpbt.n_taps = j.at("fpbt").at("n_taps").get<int>();
    sc.fpbt.fail_prob = j.at("fpbt").at("fail_prob").get<double>();
    sc.position_jitter_m = j.at("position_jitter_m").get<double>();
    sc.beacon_window = j.at("beacon_window").get<int>();
    sc.feature_pool_sub7 = j.at("feature_pool_sub7").get<int>();
    sc.feature_pool_mmwave = j.at("feature_pool_mmwave").get<int>();
    sc.params = j.at("params").get<std::map<std::string, double>>();
    sc.taxonomy = scene::taxonomy_from_json(j.at("taxonomy").dump());
    sc.base_scene = scene::scene_from_json(j.at("scene").dump());
    return sc;
}

std::vector<std::string> validate_scenario(const Scenario& sc) {
    std::vector<std::string> issues;
    for (const auto& v : scene::validate_scene(sc.base_scene))
        issues.push_back("scene." + v.field + ": " + v.rule);
    if (sc.samples_per_class < 1) issues.push_back("samples_per_class must be >= 1");
    if (sc.taxonomy.fine_count() < 1) issues.push_back("taxonomy has no fine labels");
    if (!sc.base_scene.ap_for_band(Band::Sub7)) issues.push_back("scene lacks a Sub7 AP");
    if (!sc.base_scene.ap_for_band(Band::MmWave)) issues.push_back("scene lacks a MmWave AP");
    switch (sc.taxonomy.kind) {
        case TaxonomyKind::Occupancy16:
        case TaxonomyKind::Custom:
            if (sc.taxonomy.anchors.empty())
                issues.push_back("occupancy taxonomy needs anchor positions");
            break;
        case TaxonomyKind::Pose4:
            if (sc.taxonomy.anchors.size() != 1)
                issues.push_back("pose taxonomy needs exactly one anchor");
            break;
        case TaxonomyKind::LosBinary:
            if (!sc.params.count("present_x") || !sc.params.count("present_y"))
                issues.push_back("los binary scenario needs present_x/present_y params");
            break;
        case TaxonomyKind::CorridorTiles:
            break;
    }
    return issues;
}

// ---------------------------------------------------------------------------
// dataset generation

namespace {

// Target placement defining each class, before jitter.
std::vector<Target> targets_for_class(const Scenario& sc, int class_id) {
    std::vector<Target> targets;
    const auto& tax = sc.taxonomy;
    auto add = [&](const Vec3& pos, Pose pose) {
        Target t;
        t.id = "t" + std::to_string(targets.size());
        t.position = pos;
        t.pose = pose;
        targets.push_back(t);
    };
    switch (tax.kind) {
        case TaxonomyKind::Occupancy16:
        case TaxonomyKind::Custom: {
            const int n = static_cast<int>(tax.anchors.size());
            for (int i = 0; i < n; ++i)
                if ((class_id >> (n - 1 - i)) & 1)
                    add(tax.anchors[static_cast<std::size_t>(i)], Pose::Sit);
            break;
        }
        case TaxonomyKind::Pose4: {
            const Pose poses[4] = {Pose::Sit, Pose::Stand, Pose::LyingDown, Pose::Absent};
            if (class_id != 3) add(tax.anchors[0], poses[class_id]);
            break;
        }
        case TaxonomyKind::CorridorTiles: {
            if (class_id < tax.grid.rows * tax.grid.cols)
                add(tax.grid.tile_center(class_id), Pose::Stand);
            break;
        }
        case TaxonomyKind::LosBinary: {
            if (class_id == 1)
                add({sc.param("present_x", 0.0), sc.param("present_y", 0.0), 0.02},
                    Pose::Stand);
            break;
        }
    }
    return targets;
}

Scene scene_for_class(const Scenario& sc, int class_id, Rng jitter_rng) {
    Scene scn = sc.base_scene;
    scn.targets = targets_for_class(sc, class_id);
    for (auto& t : scn.targets) {
        t.position.x += jitter_rng.uniform(-sc.position_jitter_m, sc.position_jitter_m);
        t.position.y += jitter_rng.uniform(-sc.position_jitter_m, sc.position_jitter_m);
    }
    return scn;
}

struct SimulatedSample {
    Scene scene_c;
    CsiCapture csi;
    FpbtCapture fpbt;
    int label = 0;
};

SimulatedSample simulate_sample(const Scenario& sc, int class_id, int sample_id,
                                std::uint64_t seed) {
    const Rng base(mix_seed(seed, 0xda7aULL));
    const std::uint64_t cls = static_cast<std::uint64_t>(class_id);
    const std::uint64_t smp = static_cast<std::uint64_t>(sample_id);

    SimulatedSample out;
    out.scene_c = scene_for_class(sc, class_id, base.stream(cls * 65536 + smp, 0));
    out.label = scene::label_of(out.scene_c, sc.taxonomy);
    if (out.label != class_id)
        throw TaxonomyMismatch("generated scene does not reproduce its class label");

    const RadioNode* sub7 = out.scene_c.ap_for_band(Band::Sub7);
    const RadioNode* mm = out.scene_c.ap_for_band(Band::MmWave);
    if (!sub7 || !mm) throw SceneInvalid("scenario scene needs one AP per band");

    out.csi = channel::simulate_beacon_csi(
        out.scene_c, *sub7, sc.noise, sc.load, static_cast<std::size_t>(sc.beacon_window),
        base.stream(cls * 65536 + smp, 1).seed());

    // failed sweeps are redrawn, mirroring a P-STA that recaptures after its
    // quality filter rejects a sweep
    for (int attempt = 0; attempt < 128; ++attempt) {
        out.fpbt = channel::simulate_fpbt_sweep(
            out.scene_c, *mm, sc.noise,
            base.stream(cls * 65536 + smp, 2 + static_cast<std::uint64_t>(attempt)).seed(),
            sc.fpbt);
        if (!out.fpbt.failed) break;
    }
    if (out.fpbt.failed) throw FailedCapture("FPBT sweep kept failing after 128 attempts");
    return out;
}

}  // namespace

Dataset gen_dataset(const Scenario& sc, std::uint64_t seed) {
    {
        const auto issues = validate_scenario(sc);
        if (!issues.empty()) throw SceneInvalid("scenario invalid: " + issues.front());
    }
    const int n_classes = sc.taxonomy.fine_count();
    const int per_class = sc.samples_per_class;
    const std::size_t total = static_cast<std::size_t>(n_classes) *
                              static_cast<std::size_t>(per_class);

    Dataset ds;
    ds.taxonomy = sc.taxonomy;
    ds.seed = seed;
    ds.scene_hash = scene::scene_hash(sc.base_scene);
    ds.samples.resize(total);

    std::string error;
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(total); ++i) {
        const int cls = static_cast<int>(i / per_class);
        const int smp = static_cast<int>(i % per_class);
        try {
            const auto sim = simulate_sample(sc, cls, smp, seed);
            auto& sample = ds.samples[static_cast<std::size_t>(i)];
            sample.fine_label = sim.label;
            sample.sub7 = dsp::csi_to_features(sim.csi,
                                               static_cast<std::size_t>(sc.beacon_window));
            sample.mmwave = dsp::pdp_features(sim.fpbt);
            if (sc.feature_pool_sub7 > 1)
                sample.sub7 = dsp::downsample_time(
                    sample.sub7, static_cast<std::size_t>(sc.feature_pool_sub7));
            if (sc.feature_pool_mmwave > 1)
                sample.mmwave = dsp::downsample_time(
                    sample.mmwave, static_cast<std::size_t>(sc.feature_pool_mmwave));
        } catch (const std::exception& e) {
#pragma omp critical
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw SceneInvalid("dataset generation failed: " + error);

    model::stratified_split(ds, 0.8, seed);
    return ds;
}

// ---------------------------------------------------------------------------
// metrics and reports

const char* degradation_name(Degradation d) {
    switch (d) {
        case Degradation::Unchanged: return "unchanged";
        case Degradation::Minor: return "minor";
        case Degradation::Moderate: return "moderate";
        case Degradation::Failure: return "failure";
    }
    return "unchanged";
}

Degradation degradation_category(double baseline_acc, double new_acc) {
    // thresholds at 5/10/20 points; the epsilon absorbs float rounding of
    // differences that are exactly on a boundary
    const double drop_points = (baseline_acc - new_acc) * 100.0;
    if (drop_points < 5.0 - 1e-9) return Degradation::Unchanged;
    if (drop_points < 10.0 - 1e-9) return Degradation::Minor;
    if (drop_points <= 20.0 + 1e-9) return Degradation::Moderate;
    return Degradation::Failure;
}

ExperimentReport metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                         const std::vector<double>& confidences, int n_classes) {
    if (predictions.size() != labels.size() || predictions.size() != confidences.size())
        throw LengthMismatch("metrics inputs differ in length");
    ExperimentReport r;
    const auto n = static_cast<std::size_t>(n_classes);
    r.confusion.assign(n, std::vector<int>(n, 0));
    std::size_t correct = 0;
    double conf_sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto t = static_cast<std::size_t>(labels[i]);
        const auto p = static_cast<std::size_t>(predictions[i]);
        if (t >= n || p >= n) throw LengthMismatch("label outside the class range");
        r.confusion[t][p] += 1;
        if (t == p) ++correct;
        conf_sum += confidences[i];
    }
    r.accuracy = predictions.empty()
                     ? 0.0
                     : static_cast<double>(correct) / static_cast<double>(predictions.size());
    r.mean_confidence = predictions.empty() ? 0.0
                                            : conf_sum / static_cast<double>(predictions.size());
    r.per_class_accuracy.assign(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        int row = 0;
        for (std::size_t j = 0; j < n; ++j) row += r.confusion[c][j];
        if (row > 0)
            r.per_class_accuracy[c] = static_cast<double>(r.confusion[c][c]) / row;
    }
    return r;
}

std::string report_to_json(const ExperimentReport& r) {
    ordered_json j;
    j["schema"] = 1;
    j["kind"] = "report";
    j["name"] = r.name;
    j["bands"] = model::band_mode_name(r.bands);
    j["accuracy"] = r.accuracy;
    j["mean_confidence"] = r.mean_confidence;
    j["per_class_accuracy"] = r.per_class_accuracy;
    j["confusion"] = r.confusion;
    j["history"] = ordered_json{{"train_loss", r.history.train_loss},
                                {"train_accuracy", r.history.train_accuracy},
                                {"test_accuracy", r.history.test_accuracy}};
    if (r.degradation) j["degradation"] = degradation_name(*r.degradation);
    j["extras"] = r.extras;
    return j.dump(2);
}

ExperimentReport report_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(std::string("report parse error: ") + e.what());
    }
    if (!j.contains("schema") || j.at("schema").get<int>() != 1)
        throw SchemaVersionMismatch("report schema version is not 1");
    ExperimentReport r;
    r.name = j.at("name").get<std::string>();
    r.bands = model::band_mode_from_name(j.at("bands").get<std::string>());
    r.accuracy = j.at("accuracy").get<double>();
    r.mean_confidence = j.at("mean_confidence").get<double>();
    r.per_class_accuracy = j.at("per_class_accuracy").get<std::vector<double>>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<int>>>();
    r.history.train_loss = j.at("history").at("train_loss").get<std::vector<double>>();
    r.history.train_accuracy = j.at("history").at("train_accuracy").get<std::vector<double>>();
    r.history.test_accuracy = j.at("history").at("test_accuracy").get<std::vector<double>>();
    if (j.contains("degradation")) {
        const std::string d = j.at("degradation").get<std::string>();
        for (Degradation dg : {Degradation::Unchanged, Degradation::Minor, Degradation::Moderate,
                               Degradation::Failure})
            if (d == degradation_name(dg)) r.degradation = dg;
    }
    r.extras = j.at("extras").get<std::map<std::string, double>>();
    return r;
}

std::string confusion_csv(const ExperimentReport& r) {
    std::ostringstream out;
    out << "truth\\pred";
    for (std::size_t j = 0; j < r.confusion.size(); ++j) out << "," << j;
    out << "\n";
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
        out << i;
        for (std::size_t j = 0; j < r.confusion[i].size(); ++j) out << "," << r.confusion[i][j];
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// experiments

RunResult run_experiment(const Scenario& sc, const TrainConfig& cfg, std::uint64_t seed,
                         const std::vector<BandMode>& bands) {
    RunResult result;
    result.dataset = gen_dataset(sc, seed);
    for (BandMode mode : bands) {
        model::ModelConfig mc;
        mc.bands = mode;
        MilagroModel m = model::build_model(
            mc, sc.taxonomy, result.dataset.samples.front().sub7.shape,
            result.dataset.samples.front().mmwave.shape, mix_seed(seed, 0xb10cULL));
        TrainConfig tc = cfg;
        tc.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(mode));
        const auto hist = model::train(m, result.dataset, tc);

        const auto eval = model::evaluate(m, result.dataset, result.dataset.test_idx);
        std::vector<int> labels;
        for (std::size_t i : result.dataset.test_idx)
            labels.push_back(result.dataset.samples[i].fine_label);
        ExperimentReport rep =
            metrics(eval.predictions, labels, eval.confidences, sc.taxonomy.fine_count());
        rep.name = scenario_kind_name(sc.kind);
        rep.bands = mode;
        rep.history = hist;
        result.reports[mode] = std::move(rep);
        result.models.emplace(mode, std::move(m));
    }
    return result;
}

CsiCapture spoof_inject(const CsiCapture& cap, const CsiCapture& rogue, double interleave_prob,
                        std::uint64_t seed) {
    if (cap.n_subcarriers != rogue.n_subcarriers || cap.n_beacons > rogue.n_beacons)
        throw ShapeMismatch("rogue capture does not cover the clean capture's shape");
    CsiCapture out = cap;
    Rng rng(mix_seed(seed, 0x5b00fULL));
    for (std::size_t b = 0; b < cap.n_beacons; ++b) {
        if (!rng.bernoulli(interleave_prob)) continue;
        for (std::size_t k = 0; k < cap.n_subcarriers; ++k)
            out.beacons[b * cap.n_subcarriers + k] = rogue.beacons[b * cap.n_subcarriers + k];
        out.snr_db[b] = rogue.snr_db[b];
    }
    return out;
}

ExperimentReport transfer_test(const MilagroModel& m, const Scenario& original,
                               const Scene& scene_b, std::uint64_t seed) {
    Scenario moved = original;
    moved.base_scene = scene_b;
    moved.taxonomy = original.taxonomy;  // labels keep their meaning
    const Dataset ds = gen_dataset(moved, seed);
    std::vector<std::size_t> all(ds.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto eval = model::evaluate(m, ds, all);
    std::vector<int> labels;
    for (const auto& s : ds.samples) labels.push_back(s.fine_label);
    ExperimentReport rep =
        metrics(eval.predictions, labels, eval.confidences, original.taxonomy.fine_count());
    rep.name = "transfer";
    rep.bands = m.cfg.bands;
    return rep;
}

ExperimentReport spoof_attack(const MilagroModel& m, const Scenario& sc,
                              std::uint64_t dataset_seed, double interleave_prob,
                              std::uint64_t attack_seed) {
    const Dataset ds = gen_dataset(sc, dataset_seed);
    const auto clean_eval = model::evaluate(m, ds, ds.test_idx);

    Vec3 rogue_pos;
    if (sc.params.count("rogue_x")) {
        rogue_pos = {sc.param("rogue_x", 0.0), sc.param("rogue_y", 0.0),
                     sc.param("rogue_z", 1.5)};
    } else {
        const RadioNode* ap = sc.base_scene.ap_for_band(Band::Sub7);
        const Vec3 room = sc.base_scene.room_dims;
        const std::vector<Vec3> candidates = {
            {room.x - ap->position.x, room.y - ap->position.y, ap->position.z},
            {0.25 * room.x, 0.75 * room.y, ap->position.z},
            {0.75 * room.x, 0.25 * room.y, ap->position.z},
            {0.5 * room.x, 0.5 * room.y, ap->position.z}};
        rogue_pos = candidates.front();
        for (const auto& c : candidates)
            if (distance(c, sc.base_scene.psta.position) > 0.5 &&
                distance(c, ap->position) > 0.5) {
                rogue_pos = c;
                break;
            }
    }

    const Rng base(mix_seed(attack_seed, 0xa77acULL));
    std::vector<int> predictions, labels;
    std::vector<double> confidences;
    for (std::size_t n = 0; n < ds.test_idx.size(); ++n) {
        const std::size_t i = ds.test_idx[n];
        const int cls = static_cast<int>(i / static_cast<std::size_t>(sc.samples_per_class));
        const int smp = static_cast<int>(i % static_cast<std::size_t>(sc.samples_per_class));
        const auto sim = simulate_sample(sc, cls, smp, dataset_seed);

        // the rogue AP impersonates the trusted one (same id) from elsewhere
        Scene rogue_scene = sim.scene_c;
        RadioNode* rogue_ap = nullptr;
        for (auto& node : rogue_scene.aps)
            if (node.band == Band::Sub7 && !node.is_rogue) rogue_ap = &node;
        rogue_ap->position = rogue_pos;
        rogue_ap->is_rogue = true;
        const CsiCapture rogue_csi = channel::simulate_beacon_csi(
            rogue_scene, *rogue_ap, sc.noise, sc.load,
            static_cast<std::size_t>(sc.beacon_window), base.stream(i, 0).seed());

        const CsiCapture spoofed =
            spoof_inject(sim.csi, rogue_csi, interleave_prob, base.stream(i, 1).seed());
        FeatureTensor f7 =
            dsp::csi_to_features(spoofed, static_cast<std::size_t>(sc.beacon_window));
        if (sc.feature_pool_sub7 > 1)
            f7 = dsp::downsample_time(f7, static_cast<std::size_t>(sc.feature_pool_sub7));

        const auto pred = model::predict(m, ds.samples[i].mmwave, f7);
        predictions.push_back(pred.fine_label);
        confidences.push_back(pred.confidence);
        labels.push_back(ds.samples[i].fine_label);
    }

    ExperimentReport rep =
        metrics(predictions, labels, confidences, sc.taxonomy.fine_count());
    rep.name = "spoof_attack";
    rep.bands = m.cfg.bands;
    rep.extras["clean_accuracy"] = clean_eval.accuracy;
    rep.extras["spoofed_accuracy"] = rep.accuracy;
    rep.extras["interleave_prob"] = interleave_prob;
    return rep;
}

// ---------------------------------------------------------------------------
// corridor tracking

Trajectory straight_walk(const scene::CorridorGrid& grid, double speed_kmh, int column) {
    Trajectory traj;
    traj.speed_kmh = speed_kmh;
    const double speed_ms = speed_kmh / 3.6;
    const double dwell = grid.tile_len_m / speed_ms;
    for (int r = 0; r < grid.rows; ++r)
        traj.waypoints.push_back({grid.tile_index(r, column), r * dwell});
    return traj;
}

TrackResult corridor_track(const MilagroModel& m, const Scenario& corridor,
                           const Trajectory& traj, std::uint64_t seed) {
    if (corridor.taxonomy.kind != TaxonomyKind::CorridorTiles)
        throw InvalidTrajectory("corridor tracking needs a corridor scenario");
    if (traj.waypoints.empty()) throw InvalidTrajectory("trajectory has no waypoints");
    const auto& grid = corridor.taxonomy.grid;
    for (std::size_t i = 0; i < traj.waypoints.size(); ++i) {
        const int t = traj.waypoints[i].tile_index;
        if (t < 0 || t >= grid.rows * grid.cols)
            throw InvalidTrajectory("waypoint tile outside the grid");
        if (i > 0) {
            if (traj.waypoints[i].timestamp_s <= traj.waypoints[i - 1].timestamp_s)
                throw InvalidTrajectory("waypoint timestamps must increase");
            const int prev = traj.waypoints[i - 1].tile_index;
            const int dr = std::abs(t / grid.cols - prev / grid.cols);
            const int dc = std::abs(t % grid.cols - prev % grid.cols);
            if (dr > 1 || dc > 1)
                throw InvalidTrajectory("consecutive waypoints are not adjacent tiles");
        }
    }

    const double speed_ms = traj.speed_kmh / 3.6;
    const double dwell = grid.tile_len_m / speed_ms;
    const double interval = corridor.base_scene.ap_for_band(Band::Sub7)->beacon_interval_s;
    const int min_beacons = static_cast<int>(corridor.param("min_beacons_for_capture", 3));
    const auto window = static_cast<std::size_t>(corridor.beacon_window);

    const Rng base(mix_seed(seed, 0x77a1cULL));
    TrackResult result;
    result.estimated_tiles.assign(traj.waypoints.size(), -1);

    for (std::size_t w = 0; w < traj.waypoints.size(); ++w) {
        Rng wr = base.stream(w);
        // beacon slots landing inside the dwell window survive jitter + drops
        const double offset = wr.uniform(0.0, interval);
        int collected = 0;
        for (int k = 0;; ++k) {
            const double t =
                offset + k * interval + corridor.load.beacon_jitter_std_s * wr.gaussian();
            if (offset + k * interval >= dwell) break;
            if (t < 0.0 || t >= dwell) continue;
            if (!wr.bernoulli(corridor.load.beacon_drop_prob)) ++collected;
        }
        collected = std::min<int>(collected, static_cast<int>(window));
        if (collected < min_beacons) {
            ++result.misses;
            continue;
        }

        Scenario sc = corridor;
        const int tile = traj.waypoints[w].tile_index;
        const Scene scn = scene_for_class(sc, tile, wr.stream(1));
        const RadioNode* sub7 = scn.ap_for_band(Band::Sub7);
        const RadioNode* mm = scn.ap_for_band(Band::MmWave);
        CsiCapture csi = channel::simulate_beacon_csi(
            scn, *sub7, sc.noise, sc.load, static_cast<std::size_t>(collected),
            wr.stream(2).seed());

        // pad to the model window by repeating collected beacons
        if (static_cast<std::size_t>(collected) < window) {
            CsiCapture padded = csi;
            padded.n_beacons = window;
            padded.beacons.resize(window * csi.n_subcarriers);
            padded.timestamps_s.resize(window);
            padded.snr_db.resize(window);
            for (std::size_t b = static_cast<std::size_t>(collected); b < window; ++b) {
                const std::size_t src = b % static_cast<std::size_t>(collected);
                for (std::size_t k = 0; k < csi.n_subcarriers; ++k)
                    padded.beacons[b * csi.n_subcarriers + k] =
                        csi.beacons[src * csi.n_subcarriers + k];
                padded.timestamps_s[b] = padded.timestamps_s[b - 1] + 1e-6;
                padded.snr_db[b] = csi.snr_db[src];
            }
            csi = std::move(padded);
        }

        FpbtCapture fpbt;
        for (int attempt = 0; attempt < 128; ++attempt) {
            fpbt = channel::simulate_fpbt_sweep(
                scn, *mm, sc.noise, wr.stream(3 + static_cast<std::uint64_t>(attempt)).seed(),
                sc.fpbt);
            if (!fpbt.failed) break;
        }

        FeatureTensor f7 = dsp::csi_to_features(csi, window);
        FeatureTensor f60 = dsp::pdp_features(fpbt);
        if (sc.feature_pool_sub7 > 1)
            f7 = dsp::downsample_time(f7, static_cast<std::size_t>(sc.feature_pool_sub7));
        if (sc.feature_pool_mmwave > 1)
            f60 = dsp::downsample_time(f60, static_cast<std::size_t>(sc.feature_pool_mmwave));

        const auto pred = model::predict(m, f60, f7);
        result.estimated_tiles[w] = pred.fine_label;
        if (pred.fine_label == tile)
            ++result.hits;
        else
            ++result.wrong;
    }
    return result;
}

// ---------------------------------------------------------------------------
// sweeps

namespace {

// dataset restricted to the first `per_class` training samples of each class
Dataset truncate_train(const Dataset& full, int per_class) {
    Dataset ds = full;
    std::map<int, int> used;
    std::vector<std::size_t> keep;
    for (std::size_t i : full.train_idx) {
        const int label = full.samples[i].fine_label;
        if (used[label] < per_class) {
            keep.push_back(i);
            used[label] += 1;
        }
    }
    ds.train_idx = keep;
    return ds;
}

}  // namespace

std::vector<SweepCurve> sample_sweep(const std::vector<Scenario>& tasks,
                                     const std::vector<int>& sample_counts, std::uint64_t seed,
                                     int epochs) {
    for (std::size_t i = 1; i < sample_counts.size(); ++i)
        if (sample_counts[i] <= sample_counts[i - 1])
            throw LengthMismatch("sample counts must be strictly increasing");
    std::vector<SweepCurve> curves;
    for (const auto& task : tasks) {
        Scenario sc = task;
        sc.samples_per_class = sample_counts.back();
        const Dataset full = gen_dataset(sc, seed);
        SweepCurve curve;
        curve.n_labels = sc.taxonomy.fine_count();
        for (int count : sample_counts) {
            const int train_per_class = std::max(1, static_cast<int>(std::llround(0.8 * count)));
            const Dataset ds = truncate_train(full, train_per_class);
            model::ModelConfig mc;
            MilagroModel m = model::build_model(mc, sc.taxonomy,
                                                ds.samples.front().sub7.shape,
                                                ds.samples.front().mmwave.shape,
                                                mix_seed(seed, 0x3a3aULL));
            TrainConfig tc;
            tc.epochs = epochs;
            tc.seed = mix_seed(seed, static_cast<std::uint64_t>(count));
            model::train(m, ds, tc);
            const auto eval = model::evaluate(m, ds, ds.test_idx);
            curve.points.push_back({count, eval.accuracy});
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

std::vector<SweepCurve> epoch_sweep(const std::vector<Scenario>& tasks,
                                    const std::vector<int>& epoch_counts, std::uint64_t seed) {
    for (std::size_t i = 1; i < epoch_counts.size(); ++i)
        if (epoch_counts[i] <= epoch_counts[i - 1])
            throw LengthMismatch("epoch counts must be strictly increasing");
    std::vector<SweepCurve> curves;
    for (const auto& task : tasks) {
        const Dataset ds = gen_dataset(task, seed);
        model::ModelConfig mc;
        MilagroModel m = model::build_model(mc, task.taxonomy, ds.samples.front().sub7.shape,
                                            ds.samples.front().mmwave.shape,
                                            mix_seed(seed, 0xe90cULL));
        TrainConfig tc;
        tc.epochs = epoch_counts.back();
        tc.seed = mix_seed(seed, 0x55eedULL);
        const auto hist = model::train(m, ds, tc);
        SweepCurve curve;
        curve.n_labels = task.taxonomy.fine_count();
        for (int e : epoch_counts)
            curve.points.push_back({e, hist.test_accuracy[static_cast<std::size_t>(e - 1)]});
        curves.push_back(std::move(curve));
    }
    return curves;
}

std::string curves_csv(const std::vector<SweepCurve>& curves, const std::string& x_name) {
    std::ostringstream out;
    out << "n_labels," << x_name << ",accuracy\n";
    for (const auto& c : curves)
        for (const auto& p : c.points)
            out << c.n_labels << "," << p.x << "," << p.accuracy << "\n";
    return out.str();
}

}  // namespace milagro::harness
