#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "milagro/dsp.hpp"
#include "milagro/nn.hpp"
#include "milagro/scene.hpp"

namespace milagro::model {

using dsp::FeatureTensor;
using dsp::NormStats;
using scene::LabelTaxonomy;

enum class BandMode { Joint, Sub7Only, MmwaveOnly };
enum class GateMode { TeacherForced, Predicted };

const char* band_mode_name(BandMode m);
BandMode band_mode_from_name(const std::string& s);

struct ModelConfig {
    BandMode bands = BandMode::Joint;
    int conv_filters = 64;
    int conv_kernel = 2;
    int pool = 2;
    int hidden = 128;
    double dropout_rate = 0.5;
    // time-axis average pooling targets applied before Conv1D; inputs already
    // at or below the target pass through untouched
    int sub7_pooled_beacons = 4;
    int mmwave_pooled_samples = 100;
};

// Conv1D -> MaxPool1D -> Dense(hidden) ReLU -> Dropout -> Dense(n_out) softmax
struct BlockStack {
    nn::Conv1dLayer conv;
    nn::DenseLayer fc1, fc2;
    std::size_t in_channels = 0, in_len = 0, pool = 2, n_out = 0;
    double dropout_rate = 0.5;

    void init(std::size_t channels, std::size_t len, const ModelConfig& cfg, std::size_t out,
              Rng& rng);
    std::size_t flat_features() const;
    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
};

struct StackCache {
    Tensor x, conv_out, pool_out, fc1_out, relu_out, drop_mask, dropped, probs;
    std::vector<std::size_t> argmax;
};

struct StackGrads {
    Tensor conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b;
    std::vector<const Tensor*> list() const;
};

// x is (batch, channels, len); returns class probabilities (batch, n_out)
Tensor stack_forward(const BlockStack& s, const Tensor& x, bool training, Rng& rng,
                     StackCache* cache);
StackGrads stack_backward(const BlockStack& s, const StackCache& cache,
                          const std::vector<int>& labels);

// ---------------------------------------------------------------------------

struct Sample {
    FeatureTensor sub7;
    FeatureTensor mmwave;
    int fine_label = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::size_t> train_idx, test_idx;
    LabelTaxonomy taxonomy;
    std::uint64_t seed = 0;
    std::uint64_t scene_hash = 0;
};

// 80/20 by default, stratified per fine label, seeded shuffle inside classes.
void stratified_split(Dataset& ds, double train_frac, std::uint64_t seed);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

struct TrainConfig {
    int epochs = 120;
    int batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    GateMode gate_mode = GateMode::TeacherForced;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> train_accuracy;
    std::vector<double> test_accuracy;
};

// ---------------------------------------------------------------------------

struct MilagroModel {
    ModelConfig cfg;
    LabelTaxonomy taxonomy;
    std::size_t sub7_channels = 2, sub7_len = 0;
    std::size_t mmwave_channels = 64, mmwave_len = 0;
    BlockStack block1;                        // gate (joint) or the whole model (single band)
    std::vector<BlockStack> paths;            // joint: one per coarse label
    std::vector<std::vector<int>> path_fine;  // coarse -> global fine label ids
    NormStats norm_sub7, norm_mmwave;
    bool has_norm = false;

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
};

// Builds an untrained model sized for the dataset's stored feature shapes.
MilagroModel build_model(const ModelConfig& cfg, const LabelTaxonomy& taxonomy,
                         const std::vector<std::size_t>& sub7_shape,
                         const std::vector<std::size_t>& mmwave_shape, std::uint64_t seed);

// Pool + normalize a stored feature tensor into the model's input geometry.
Tensor model_input(const MilagroModel& m, const FeatureTensor& t);

struct ForwardResult {
    std::vector<double> coarse_probs;
    std::vector<double> fine_probs;  // over the full fine label set
};

ForwardResult forward(const MilagroModel& m, const FeatureTensor& mmwave,
                      const FeatureTensor& sub7, bool training, Rng& rng,
                      GateMode gate = GateMode::Predicted, int teacher_coarse = -1);

struct Prediction {
    int fine_label = 0;
    double confidence = 0.0;
};

Prediction predict(const MilagroModel& m, const FeatureTensor& mmwave,
                   const FeatureTensor& sub7);

TrainHistory train(MilagroModel& m, const Dataset& ds, const TrainConfig& cfg);

struct EvalResult {
    std::vector<int> predictions;
    std::vector<double> confidences;
    double accuracy = 0.0;
};

EvalResult evaluate(const MilagroModel& m, const Dataset& ds,
                    const std::vector<std::size_t>& indices);

// ---------------------------------------------------------------------------

// Elementwise mean across shape-identical parameter collections.
std::vector<Tensor> federated_average(const std::vector<std::vector<Tensor>>& parameter_sets);
MilagroModel federated_average(const std::vector<const MilagroModel*>& models);

void save_checkpoint(const MilagroModel& m, const std::filesystem::path& path);
MilagroModel load_checkpoint(const std::filesystem::path& path);

}  // namespace milagro::model
