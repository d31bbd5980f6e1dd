// Counting-task features (per-channel statistics plus time- and
// frequency-binned summaries) and the two-layer counting network.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pestsim/params.hpp"
#include "pestsim/record.hpp"

namespace pestsim::features {

struct ChannelStats {
    double mean = 0, sd = 0, max = 0, median = 0, q25 = 0, q75 = 0, iqr = 0, skewness = 0, kurtosis = 0, energy = 0;

    std::array<double, 10> values() const { return {mean, sd, max, median, q25, q75, iqr, skewness, kurtosis, energy}; }
};
inline constexpr std::array<const char*, 10> kStatNames = {"mean", "sd",       "max",      "median", "q25",
                                                           "q75",  "iqr",      "skewness", "kurtosis", "energy"};

/// Population moments; quartiles by linear interpolation between order
/// statistics. Kurtosis is excess kurtosis; both shape moments are 0 for
/// constant input.
ChannelStats stat_features(std::span<const double> x);

/// Magnitudes of the DFT bins 0..floor(N/2).
std::vector<double> magnitude_spectrum(std::span<const double> x);
/// Sum of squares recovered from the full power spectrum (Parseval).
double spectral_energy(std::span<const double> x);

struct Reduced {
    std::vector<double> time;
    std::vector<double> freq;
};

/// Bin means over the samples and over the first half of the magnitude
/// spectrum. Sequences not divisible by `bins` are padded by repeating the
/// last value.
Reduced reduce(std::span<const double> x, std::size_t bins);

struct CountingFeatures {
    std::array<ChannelStats, 2> stats;
    std::array<Reduced, 2> reduced;

    /// ch1 stats, ch1 time bins, ch1 freq bins, then the same for ch2.
    std::vector<double> flatten() const;
};

/// Features of the baseline-subtracted record.
CountingFeatures extract(const WaveformRecord& rec, std::size_t bins = 16);
std::vector<std::string> feature_names(std::size_t bins = 16);
inline std::size_t feature_count(std::size_t bins = 16) { return 2 * (10 + 2 * bins); }

std::string features_csv(const std::vector<std::string>& ids, const std::vector<std::vector<double>>& rows,
                         std::size_t bins = 16);

inline constexpr std::size_t kCountingClasses = 3;

/// Two-layer network with a standardizing front end. Parameters: "mean" and
/// "scale" (1 x D, fitted, not trained), "w1" (D x H), "b1", "w2" (H x 3), "b2".
struct CountingNet {
    ParamSet params;
    std::size_t inputs = 0;
    std::size_t hidden = 0;
};

CountingNet init_counting_net(std::size_t inputs, std::size_t hidden, std::uint64_t seed);
/// Sets the standardizer from a feature matrix (rows = samples).
void fit_scaler(CountingNet& net, const Matrix& x);

Vector counting_forward(std::span<const double> features, const CountingNet& net);

/// Mean softmax cross-entropy over the batch; adds d(loss)/d(params) into
/// `grads` when given (the scaler entries receive no gradient).
double counting_loss(const CountingNet& net, const Matrix& x, std::span<const int> labels, ParamSet* grads);

struct CountingTrainConfig {
    std::size_t hidden = 64;
    std::size_t epochs = 200;
    std::size_t batch = 16;
    double lr = 1e-3;
    std::size_t patience = 0;  ///< 0: run every epoch
    std::uint64_t seed = 11;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_accuracy;
    std::size_t best_epoch = 0;
};

/// Trains on (x, y); if validation data is given the parameters of the best
/// validation epoch are returned.
CountingNet counting_train(const Matrix& x, std::span<const int> y, const Matrix& x_val, std::span<const int> y_val,
                           const CountingTrainConfig& cfg, TrainHistory* history = nullptr);

std::vector<int> counting_predict(const CountingNet& net, const Matrix& x);

}  // namespace pestsim::features
