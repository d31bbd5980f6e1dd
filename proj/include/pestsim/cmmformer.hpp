// Species classifier: per-instance normalization, a residual stack of
// conditional modification modules driven by reference-wave statistics, and
// a small feed-forward head. Forward and backward passes are hand-written.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pestsim/params.hpp"
#include "pestsim/record.hpp"

namespace pestsim::cmm {

struct ModelConfig {
    std::size_t T = 128;
    std::size_t C = 2;
    std::size_t C_prime = 16;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t d_model = 32;
    std::size_t k_ref = 8;
    std::size_t pool_capacity = 100;
    std::vector<int> kernel_scales = {1, 3, 5};
    std::size_t classes = 5;
    std::size_t head_hidden = 32;
    double full_scale = 4095.0;  ///< divides raw counts for the pool statistics

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// Components knocked out (true = removed).
struct Ablation {
    bool cmm = false;          ///< fixed identity-padded projection instead of the learned one
    bool pos_enc = false;      ///< no positional embedding
    bool attention = false;    ///< attention output replaced by its input
    bool aggregation = false;  ///< multi-scale convolution replaced by identity

    nlohmann::ordered_json to_json() const;
    static Ablation from_json(const nlohmann::json& j);
    static Ablation parse(const std::string& name);  ///< "", "none", "cmm", "pos_enc", "attention", "aggregation"
};

/// k reference waves, each T x C raw counts.
using RefWaves = std::vector<const Matrix*>;

/// Uniform sample of k pool members without replacement. Throws if k > pool size.
RefWaves sample_refwaves(std::span<const Matrix> pool, std::size_t k, std::uint64_t seed);

/// Per-channel z-score with eps = 1e-6 added to the standard deviation.
Matrix normalize(const Matrix& x);

/// Per-channel mean then per-channel sd over all waves and time, divided by
/// the full scale: a 2C row vector.
Vector pool_statistics(const RefWaves& refs, std::size_t channels, double full_scale);

Matrix record_matrix(const WaveformRecord& rec);

struct LayerTrace;

class Model {
public:
    Model(ModelConfig cfg, Ablation ablation = {});

    void init(std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const Ablation& ablation() const { return ablation_; }
    ParamSet params;

    /// W of one layer for pool statistics s.
    Matrix projection(std::size_t layer, const Vector& s) const;
    /// H_next = H + module(H).
    Matrix cmm_forward(std::size_t layer, const Matrix& h, const Vector& s) const;
    /// Softmax weights per head (T x T) of one layer.
    std::vector<Matrix> attention_weights(std::size_t layer, const Matrix& h, const Vector& s) const;
    /// H^L for normalized input.
    Matrix encode(const Matrix& x, const Vector& s) const;
    Vector forward(const Matrix& x, const Vector& s) const;
    Vector forward(const Matrix& x, const RefWaves& refs) const;

    struct Example {
        const Matrix* x;
        Vector s;
        int label;
    };
    /// Mean cross-entropy over the batch; accumulates gradients when asked.
    double loss(std::span<const Example> batch, ParamSet* grads) const;

    void zero_channel_merge();

    void save(const std::filesystem::path& path) const;
    static Model load(const std::filesystem::path& path);

private:
    struct LayerSlots {
        std::size_t w0, a, p, wq, wk, wv, wo, m, bm;
        std::vector<std::size_t> kernel, kernel_bias;
    };
    ModelConfig cfg_;
    Ablation ablation_;
    std::vector<LayerSlots> slots_;
    std::size_t hw1_ = 0, hb1_ = 0, hw2_ = 0, hb2_ = 0;

    Matrix layer_forward(std::size_t layer, const Matrix& h, const Vector& s, LayerTrace* trace) const;
    Matrix layer_backward(std::size_t layer, const LayerTrace& trace, const Matrix& dout, ParamSet& grads) const;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    double mean_abs_error = 0.0;
    std::size_t checked = 0;
};

/// Central differences with step h on `count` randomly chosen parameters.
GradCheckResult grad_check(Model& model, std::span<const Model::Example> batch, std::size_t count, double h,
                           std::uint64_t seed);

struct LabeledWave {
    Matrix x;
    std::string device_id;
    int label = 0;
    std::string id;
};

using Pools = std::map<std::string, std::vector<Matrix>>;

struct TrainConfig {
    std::size_t max_epochs = 20;
    std::size_t batch = 16;
    std::size_t patience = 10;
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

struct History {
    std::vector<double> train_loss;
    std::vector<double> val_accuracy;
    std::vector<std::uint64_t> step_ref_seeds;  ///< seed used to draw ref-waves at each step
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;

    nlohmann::ordered_json to_json() const;
};

Model train(const ModelConfig& cfg, const Ablation& ablation, std::span<const LabeledWave> train_set,
            std::span<const LabeledWave> val_set, const Pools& pools, const TrainConfig& tc, History* history = nullptr);

/// Each example gets its own ref-wave draw from (seed, index).
std::vector<int> predict(const Model& model, std::span<const LabeledWave> set, const Pools& pools, std::uint64_t seed);

}  // namespace pestsim::cmm
