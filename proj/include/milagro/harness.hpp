#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "milagro/channel.hpp"
#include "milagro/model.hpp"

namespace milagro::harness {

using channel::FpbtConfig;
using channel::NoiseModel;
using channel::TrafficLoad;
using model::BandMode;
using model::Dataset;
using model::MilagroModel;
using model::TrainConfig;
using scene::LabelTaxonomy;
using scene::Scene;

enum class ScenarioKind {
    DistanceTest,
    OrientationTest,
    Workstation16,
    Pose4,
    Corridor,
    LosNlos,
    SampleSweep,
    EpochSweep,
    SpoofAttack,
    TransferScene,
    Perturbation,
    TrafficJitter,
};

const char* scenario_kind_name(ScenarioKind k);
ScenarioKind scenario_kind_from_name(const std::string& s);

struct Scenario {
    ScenarioKind kind = ScenarioKind::Workstation16;
    Scene base_scene;
    LabelTaxonomy taxonomy;
    int samples_per_class = 100;
    NoiseModel noise;
    TrafficLoad load;
    FpbtConfig fpbt;
    double position_jitter_m = 0.15;  // class-preserving target jitter
    int beacon_window = 100;
    // average pooling applied when features are stored into the dataset;
    // 1 keeps the raw (2x100x52) / (64x3000) shapes
    int feature_pool_sub7 = 1;
    int feature_pool_mmwave = 1;
    std::map<std::string, double> params;  // kind-specific knobs

    double param(const std::string& key, double fallback) const {
        const auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
};

// Checks that kind-specific parameters are complete and coherent.
std::vector<std::string> validate_scenario(const Scenario& sc);

std::string scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// presets mirroring the evaluated setups

Scenario make_workstation16(int samples_per_class = 100, double snr_db = 15.0);
// occupancy over the first n_anchors workstations (2^n labels)
Scenario make_occupancy(int n_anchors, int samples_per_class = 100, double snr_db = 15.0);
Scenario make_pose4(int workstation = 0, int samples_per_class = 100, double snr_db = 15.0);
Scenario make_corridor(int samples_per_class = 100, double snr_db = 18.0);
// placement: "los" puts the present target on the direct segment, "nlos" on a
// side-wall reflection segment; distance = AP-to-P-STA separation in meters
Scenario make_losnlos(double distance_m, const std::string& placement,
                      int samples_per_class = 100, double snr_db = 12.0);
Scenario make_distance_test(double distance_m, int samples_per_class = 100,
                            double snr_db = 15.0);
Scenario make_orientation_test(int position /*1..3*/, int samples_per_class = 100,
                               double snr_db = 15.0);

Scenario preset_by_name(const std::string& name);
std::vector<std::string> preset_names();

// ---------------------------------------------------------------------------
// experiment plumbing

struct Trajectory {
    struct Waypoint {
        int tile_index = 0;
        double timestamp_s = 0.0;
    };
    std::vector<Waypoint> waypoints;
    double speed_kmh = 3.0;
};

// straight walk down the corridor's LOS column
Trajectory straight_walk(const scene::CorridorGrid& grid, double speed_kmh, int column);

enum class Degradation { Unchanged, Minor, Moderate, Failure };
const char* degradation_name(Degradation d);
// thresholds: <5 unchanged, 5-10 minor, 10-20 moderate, >20 failure (points)
Degradation degradation_category(double baseline_acc, double new_acc);

struct ExperimentReport {
    std::string name;
    BandMode bands = BandMode::Joint;
    double accuracy = 0.0;
    std::vector<std::vector<int>> confusion;  // fine x fine, rows = truth
    double mean_confidence = 0.0;
    std::vector<double> per_class_accuracy;
    model::TrainHistory history;
    std::optional<Degradation> degradation;
    std::map<std::string, double> extras;
};

ExperimentReport metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                         const std::vector<double>& confidences, int n_classes);

std::string report_to_json(const ExperimentReport& r);
ExperimentReport report_from_json(const std::string& text);
std::string confusion_csv(const ExperimentReport& r);

// ---------------------------------------------------------------------------
// operations

// Simulates both bands per class with jittered target placement; stratified
// 80/20 split. Deterministic per (scenario, seed).
Dataset gen_dataset(const Scenario& sc, std::uint64_t seed);

// Trains + evaluates; band-ablation kinds produce one report per band mode.
struct RunResult {
    std::map<BandMode, ExperimentReport> reports;
    std::map<BandMode, MilagroModel> models;
    Dataset dataset;
};
RunResult run_experiment(const Scenario& sc, const TrainConfig& cfg, std::uint64_t seed,
                         const std::vector<BandMode>& bands = {BandMode::Joint,
                                                               BandMode::Sub7Only,
                                                               BandMode::MmwaveOnly});

// Beacon rows swapped for the rogue capture's rows with probability
// interleave_prob, timestamps preserved.
channel::CsiCapture spoof_inject(const channel::CsiCapture& cap,
                                 const channel::CsiCapture& rogue, double interleave_prob,
                                 std::uint64_t seed);

// Re-evaluates a trained model on data simulated in scene B without retraining.
ExperimentReport transfer_test(const MilagroModel& m, const Scenario& original,
                               const Scene& scene_b, std::uint64_t seed);

// Regenerates the scenario's test captures, interleaves beacons from a rogue
// AP at params rogue_x/rogue_y (default: mirrored across the room center),
// and evaluates the model on the corrupted features. extras carry
// clean_accuracy / spoofed_accuracy.
ExperimentReport spoof_attack(const MilagroModel& m, const Scenario& sc,
                              std::uint64_t dataset_seed, double interleave_prob,
                              std::uint64_t attack_seed);

struct TrackResult {
    std::vector<int> estimated_tiles;  // -1 where the waypoint was missed
    int hits = 0;
    int misses = 0;
    int wrong = 0;
};
TrackResult corridor_track(const MilagroModel& m, const Scenario& corridor,
                           const Trajectory& traj, std::uint64_t seed);

struct SweepPoint {
    int x = 0;  // samples per class, or epoch
    double accuracy = 0.0;
};
struct SweepCurve {
    int n_labels = 0;
    std::vector<SweepPoint> points;
};

// Trains once per sample count at a fixed 100-epoch budget against a fixed
// held-out test pool.
std::vector<SweepCurve> sample_sweep(const std::vector<Scenario>& tasks,
                                     const std::vector<int>& sample_counts, std::uint64_t seed,
                                     int epochs = 100);

// One deterministic run to max(epoch_counts); the per-epoch test accuracy
// history supplies every requested point.
std::vector<SweepCurve> epoch_sweep(const std::vector<Scenario>& tasks,
                                    const std::vector<int>& epoch_counts, std::uint64_t seed);

std::string curves_csv(const std::vector<SweepCurve>& curves, const std::string& x_name);

}  // namespace milagro::harness
