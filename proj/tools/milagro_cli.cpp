// Command-line front end: scene authoring, dataset simulation, training,
// evaluation, attack studies and plot-data export. All operations are
// file-driven and deterministic for a fixed seed; every command emits a run
// manifest next to its primary output.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "milagro/errors.hpp"
#include "milagro/harness.hpp"
#include "milagro/hash.hpp"
#include "milagro/io.hpp"
#include "milagro/model.hpp"
#include "milagro/scene.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace milagro;

namespace {

constexpr const char* kToolVersion = "1.0.0";

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitSchema = 4;

struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_time_s = 0.0;

    void write(const fs::path& path) const {
        std::string key = command;
        for (const auto& s : inputs) key += "|" + s;
        for (const auto& s : outputs) key += "|" + s;
        key += "|" + std::to_string(seed);
        ordered_json j;
        j["schema"] = 1;
        j["kind"] = "run_manifest";
        j["command"] = command;
        j["config_hash"] = std::to_string(fnv1a64(key));
        j["seed"] = seed;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["tool_version"] = kToolVersion;
        j["wall_time_s"] = wall_time_s;
        io::write_text_atomic(path, j.dump(2));
    }
};

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// A spec naming a file loads it (missing files are I/O errors); anything
// else is treated as a preset name.
harness::Scenario load_scenario(const std::string& spec) {
    const bool looks_like_path = spec.find('/') != std::string::npos ||
                                 spec.size() > 5 && spec.substr(spec.size() - 5) == ".json";
    if (looks_like_path || fs::exists(spec))
        return harness::scenario_from_json(io::read_text(spec));
    return harness::preset_by_name(spec);
}

model::TrainConfig train_config_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    if (!j.contains("schema") || j.at("schema").get<int>() != 1)
        throw SchemaVersionMismatch("train config schema version is not 1");
    model::TrainConfig cfg;
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("gate_mode"))
        cfg.gate_mode = j.at("gate_mode").get<std::string>() == "predicted"
                            ? model::GateMode::Predicted
                            : model::GateMode::TeacherForced;
    return cfg;
}

ordered_json dataset_summary(const model::Dataset& ds) {
    return ordered_json{{"n_samples", ds.samples.size()},
                        {"n_labels", ds.taxonomy.fine_count()},
                        {"train", ds.train_idx.size()},
                        {"test", ds.test_idx.size()}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiband passive Wi-Fi sensing simulator and MilaGro classifier"};
    app.require_subcommand(1);
    int jobs = 0;
    app.add_option("--jobs", jobs, "OpenMP thread count (0 = library default)");

    // --- scene -------------------------------------------------------------
    auto* scene_cmd = app.add_subcommand("scene", "Author, validate or perturb scene files");
    scene_cmd->require_subcommand(1);

    std::string scene_preset = "workstation16", scene_out = "scene.json";
    auto* scene_new = scene_cmd->add_subcommand("new", "Write a preset scene");
    scene_new->add_option("--preset", scene_preset, "Preset name")->capture_default_str();
    scene_new->add_option("-o,--out", scene_out, "Output path")->capture_default_str();

    std::string scene_in;
    auto* scene_validate = scene_cmd->add_subcommand("validate", "Check a scene file");
    scene_validate->add_option("file", scene_in, "Scene JSON")->required();

    std::string perturb_in, perturb_out = "perturbed.json", perturb_level = "minor";
    std::uint64_t perturb_seed = 0;
    auto* scene_perturb = scene_cmd->add_subcommand("perturb", "Perturb a scene file");
    scene_perturb->add_option("file", perturb_in, "Scene JSON")->required();
    scene_perturb->add_option("--level", perturb_level, "minor|mid|major|new_scenario")
        ->capture_default_str();
    scene_perturb->add_option("--seed", perturb_seed, "RNG seed")->capture_default_str();
    scene_perturb->add_option("-o,--out", perturb_out, "Output path")->capture_default_str();

    // --- scenario ----------------------------------------------------------
    auto* scenario_cmd = app.add_subcommand("scenario", "Write preset scenario files");
    std::string scenario_preset = "workstation16", scenario_out = "scenario.json";
    auto* scenario_new = scenario_cmd->add_subcommand("new", "Write a preset scenario");
    scenario_new->add_option("--preset", scenario_preset, "Preset name")->capture_default_str();
    scenario_new->add_option("-o,--out", scenario_out, "Output path")->capture_default_str();

    // --- simulate ----------------------------------------------------------
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a dataset container");
    std::string sim_scenario, sim_out = "dataset";
    std::uint64_t sim_seed = 0;
    int sim_samples = -1;
    sim_cmd->add_option("--scenario", sim_scenario, "Scenario JSON path or preset name")
        ->required();
    sim_cmd->add_option("-o,--out", sim_out, "Output directory")->capture_default_str();
    sim_cmd->add_option("--seed", sim_seed, "RNG seed")->capture_default_str();
    sim_cmd->add_option("--samples-per-class", sim_samples, "Override the scenario value");

    // --- train -------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset container");
    std::string train_dataset, train_out = "model.ckpt", train_bands = "joint";
    std::string train_config_path;
    int train_epochs = -1, train_batch = -1;
    std::uint64_t train_seed = 0;
    train_cmd->add_option("--dataset", train_dataset, "Dataset directory")->required();
    train_cmd->add_option("-o,--out", train_out, "Checkpoint path")->capture_default_str();
    train_cmd->add_option("--bands", train_bands, "joint|sub7|mmwave")->capture_default_str();
    train_cmd->add_option("--config", train_config_path, "Train config JSON");
    train_cmd->add_option("--epochs", train_epochs, "Override epochs");
    train_cmd->add_option("--batch", train_batch, "Override batch size");
    train_cmd->add_option("--seed", train_seed, "RNG seed")->capture_default_str();

    // --- eval --------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_dataset, eval_out = "report.json", eval_bands;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "Dataset directory")->required();
    eval_cmd->add_option("-o,--out", eval_out, "Report path")->capture_default_str();
    eval_cmd->add_option("--bands", eval_bands, "Assert the checkpoint band mode");

    // --- attack ------------------------------------------------------------
    auto* attack_cmd = app.add_subcommand("attack", "Spoofing / transfer studies");
    std::string attack_ckpt, attack_scenario, attack_mode = "spoof",
                attack_out = "attack_report.json";
    double attack_interleave = 0.5;
    std::uint64_t attack_seed = 0, attack_dataset_seed = 0;
    attack_cmd->add_option("--checkpoint", attack_ckpt, "Checkpoint path")->required();
    attack_cmd->add_option("--scenario", attack_scenario, "Scenario JSON path or preset name")
        ->required();
    attack_cmd->add_option("--mode", attack_mode, "spoof|transfer")->capture_default_str();
    attack_cmd->add_option("--interleave", attack_interleave, "Rogue beacon probability")
        ->capture_default_str();
    attack_cmd->add_option("--dataset-seed", attack_dataset_seed,
                           "Seed of the dataset the model was trained on");
    attack_cmd->add_option("--seed", attack_seed, "Attack RNG seed")->capture_default_str();
    attack_cmd->add_option("-o,--out", attack_out, "Report path")->capture_default_str();

    // --- report ------------------------------------------------------------
    auto* report_cmd = app.add_subcommand("report", "Merge reports into plot-ready CSVs");
    std::vector<std::string> report_inputs;
    std::string report_out = "plots";
    report_cmd->add_option("--inputs", report_inputs, "Report JSON files")->required();
    report_cmd->add_option("-o,--out", report_out, "Output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    if (jobs > 0) omp_set_num_threads(jobs);

    Stopwatch clock;
    try {
        if (*scene_new) {
            const auto sc = load_scenario(scene_preset);
            io::write_text_atomic(scene_out, scene::scene_to_json(sc.base_scene));
            RunManifest rm{"scene new " + scene_preset, 0, {}, {scene_out}};
            rm.wall_time_s = clock.seconds();
            rm.write(scene_out + ".run.json");
            return kExitOk;
        }
        if (*scene_validate) {
            scene::Scene scn;
            try {
                scn = scene::scene_from_json(io::read_text(scene_in));
            } catch (const SceneInvalid& e) {
                std::cerr << "invalid scene: " << e.what() << "\n";
                return kExitValidation;
            }
            const auto violations = scene::validate_scene(scn);
            for (const auto& v : violations)
                std::cerr << v.field << ": " << v.rule << "\n";
            return violations.empty() ? kExitOk : kExitValidation;
        }
        if (*scene_perturb) {
            const auto scn = scene::scene_from_json(io::read_text(perturb_in));
            scene::PerturbLevel level;
            if (perturb_level == "minor")
                level = scene::PerturbLevel::Minor;
            else if (perturb_level == "mid")
                level = scene::PerturbLevel::Mid;
            else if (perturb_level == "major")
                level = scene::PerturbLevel::Major;
            else if (perturb_level == "new_scenario")
                level = scene::PerturbLevel::NewScenario;
            else {
                std::cerr << "unknown perturbation level: " << perturb_level << "\n";
                return kExitValidation;
            }
            const auto out = scene::perturb_scene(scn, level, perturb_seed);
            io::write_text_atomic(perturb_out, scene::scene_to_json(out));
            RunManifest rm{"scene perturb " + perturb_level, perturb_seed, {perturb_in},
                           {perturb_out}};
            rm.wall_time_s = clock.seconds();
            rm.write(perturb_out + ".run.json");
            return kExitOk;
        }
        if (*scenario_new) {
            const auto sc = load_scenario(scenario_preset);
            io::write_text_atomic(scenario_out, harness::scenario_to_json(sc));
            RunManifest rm{"scenario new " + scenario_preset, 0, {}, {scenario_out}};
            rm.wall_time_s = clock.seconds();
            rm.write(scenario_out + ".run.json");
            return kExitOk;
        }
        if (*sim_cmd) {
            harness::Scenario sc = load_scenario(sim_scenario);
            if (sim_samples > 0) sc.samples_per_class = sim_samples;
            const auto issues = harness::validate_scenario(sc);
            if (!issues.empty()) {
                for (const auto& s : issues) std::cerr << s << "\n";
                return kExitValidation;
            }
            const auto ds = harness::gen_dataset(sc, sim_seed);
            model::save_dataset(ds, sim_out);
            io::write_text_atomic(fs::path(sim_out) / "scenario.json",
                                  harness::scenario_to_json(sc));
            RunManifest rm{"simulate", sim_seed, {sim_scenario}, {sim_out}};
            rm.wall_time_s = clock.seconds();
            rm.write(fs::path(sim_out) / "run_manifest.json");
            std::cout << dataset_summary(ds).dump() << "\n";
            return kExitOk;
        }
        if (*train_cmd) {
            const auto ds = model::load_dataset(train_dataset);
            model::TrainConfig cfg;
            if (!train_config_path.empty())
                cfg = train_config_from_json(io::read_text(train_config_path));
            if (train_epochs > 0) cfg.epochs = train_epochs;
            if (train_batch > 0) cfg.batch_size = train_batch;
            if (train_cmd->count("--seed")) cfg.seed = train_seed;
            model::ModelConfig mc;
            mc.bands = model::band_mode_from_name(train_bands);
            auto m = model::build_model(mc, ds.taxonomy, ds.samples.front().sub7.shape,
                                        ds.samples.front().mmwave.shape, cfg.seed);
            const auto hist = model::train(m, ds, cfg);
            model::save_checkpoint(m, train_out);
            RunManifest rm{"train " + train_bands, cfg.seed, {train_dataset}, {train_out}};
            rm.wall_time_s = clock.seconds();
            rm.write(train_out + ".run.json");
            std::cout << "final test accuracy "
                      << (hist.test_accuracy.empty() ? 0.0 : hist.test_accuracy.back()) << "\n";
            return kExitOk;
        }
        if (*eval_cmd) {
            const auto m = model::load_checkpoint(eval_ckpt);
            if (!eval_bands.empty() &&
                model::band_mode_from_name(eval_bands) != m.cfg.bands) {
                std::cerr << "checkpoint band mode is " << model::band_mode_name(m.cfg.bands)
                          << ", not " << eval_bands << "\n";
                return kExitValidation;
            }
            const auto ds = model::load_dataset(eval_dataset);
            const auto eval = model::evaluate(m, ds, ds.test_idx);
            std::vector<int> labels;
            for (std::size_t i : ds.test_idx) labels.push_back(ds.samples[i].fine_label);
            auto rep = harness::metrics(eval.predictions, labels, eval.confidences,
                                        ds.taxonomy.fine_count());
            rep.name = "eval";
            rep.bands = m.cfg.bands;
            rep.extras["n_labels"] = ds.taxonomy.fine_count();
            rep.extras["samples_per_class"] =
                static_cast<double>(ds.samples.size()) / ds.taxonomy.fine_count();
            io::write_text_atomic(eval_out, harness::report_to_json(rep));
            RunManifest rm{"eval", 0, {eval_ckpt, eval_dataset}, {eval_out}};
            rm.wall_time_s = clock.seconds();
            rm.write(eval_out + ".run.json");
            std::cout << "accuracy " << rep.accuracy << "\n";
            return kExitOk;
        }
        if (*attack_cmd) {
            const auto m = model::load_checkpoint(attack_ckpt);
            const auto sc = load_scenario(attack_scenario);
            harness::ExperimentReport rep;
            if (attack_mode == "spoof") {
                rep = harness::spoof_attack(m, sc, attack_dataset_seed, attack_interleave,
                                            attack_seed);
            } else if (attack_mode == "transfer") {
                const auto scene_b = scene::perturb_scene(
                    sc.base_scene, scene::PerturbLevel::NewScenario, attack_seed);
                rep = harness::transfer_test(m, sc, scene_b, mix_seed(attack_seed, 1));
            } else {
                std::cerr << "unknown attack mode: " << attack_mode << "\n";
                return kExitValidation;
            }
            io::write_text_atomic(attack_out, harness::report_to_json(rep));
            RunManifest rm{"attack " + attack_mode, attack_seed, {attack_ckpt, attack_scenario},
                           {attack_out}};
            rm.wall_time_s = clock.seconds();
            rm.write(attack_out + ".run.json");
            std::cout << "accuracy " << rep.accuracy << "\n";
            return kExitOk;
        }
        if (*report_cmd) {
            fs::create_directories(report_out);
            std::ostringstream labels_csv, samples_csv, epochs_csv;
            labels_csv << "name,bands,n_labels,accuracy\n";
            samples_csv << "name,bands,samples_per_class,accuracy\n";
            epochs_csv << "name,bands,epoch,test_accuracy\n";
            int index = 0;
            for (const auto& input : report_inputs) {
                const auto rep = harness::report_from_json(io::read_text(input));
                const char* bands = model::band_mode_name(rep.bands);
                labels_csv << rep.name << "," << bands << "," << rep.confusion.size() << ","
                           << rep.accuracy << "\n";
                if (rep.extras.count("samples_per_class"))
                    samples_csv << rep.name << "," << bands << ","
                                << rep.extras.at("samples_per_class") << "," << rep.accuracy
                                << "\n";
                for (std::size_t e = 0; e < rep.history.test_accuracy.size(); ++e)
                    epochs_csv << rep.name << "," << bands << "," << e + 1 << ","
                               << rep.history.test_accuracy[e] << "\n";
                io::write_text_atomic(fs::path(report_out) / ("confusion_" +
                                                              std::to_string(index++) + "_" +
                                                              rep.name + ".csv"),
                                      harness::confusion_csv(rep));
            }
            io::write_text_atomic(fs::path(report_out) / "accuracy_vs_labels.csv",
                                  labels_csv.str());
            io::write_text_atomic(fs::path(report_out) / "accuracy_vs_samples.csv",
                                  samples_csv.str());
            io::write_text_atomic(fs::path(report_out) / "accuracy_vs_epochs.csv",
                                  epochs_csv.str());
            RunManifest rm{"report", 0, report_inputs, {report_out}};
            rm.wall_time_s = clock.seconds();
            rm.write(fs::path(report_out) / "run_manifest.json");
            return kExitOk;
        }
    } catch (const SchemaVersionMismatch& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kExitSchema;
    } catch (const CorruptChecksum& e) {
        std::cerr << "corrupt file: " << e.what() << "\n";
        return kExitSchema;
    } catch (const IoFailure& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
