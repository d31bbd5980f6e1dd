// Turns raw triggered records into labelled counting / species datasets:
// low-sum filtering, merging of split captures, double-peak extraction,
// debris removal, stratified splits and per-device reference pools.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pestsim/record.hpp"

namespace pestsim::curation {

enum class Disposition { Pure, Merged, DoublePeak, DiscardedLowSum, Debris };
std::string to_string(Disposition d);
Disposition disposition_from_string(const std::string& name);

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& name);

struct CurationConfig {
    double low_sum_threshold = 1850.0;  ///< [counts], summed over both channels
    double merge_gap_samples = 128.0;   ///< one buffer, per channel
    double valley_fraction = 0.25;      ///< of the larger peak
    std::size_t min_peak_gap = 10;      ///< [samples]
    double min_peak_height = 20.0;      ///< [counts] above baseline
    std::size_t smooth_window = 5;
    /// Number of debris records to remove. Unset: the number of records whose
    /// ground truth says debris (stands in for inspecting the collection).
    std::optional<std::size_t> debris_count;
    std::array<double, 3> split_ratio = {0.6, 0.2, 0.2};
    bool oversample_first = false;  ///< oversample before splitting
    std::uint64_t seed = 7;

    void validate() const;
};

inline constexpr double kBaselineQuantile = 0.1;
/// Low quantile of each channel; the baseline a record's excursions are measured from.
std::array<double, 2> channel_baseline(const WaveformRecord& rec);
/// Sum of |sample - channel baseline| over both channels.
double excursion_sum(const WaveformRecord& rec);

struct Partition {
    std::vector<WaveformRecord> kept;
    std::vector<WaveformRecord> discarded;
};

Partition sum_filter(std::span<const WaveformRecord> records, double low_threshold);

/// Absolute time of the trigger [us]; records without one use their first sample.
double trigger_time_us(const WaveformRecord& rec, double sample_period = 200e-6);

struct MergeResult {
    /// Logical records in input order; a merged one keeps its first capture's waveform.
    std::vector<WaveformRecord> records;
    /// Ids of the inputs that were folded into each logical record (size 1 if not merged).
    std::vector<std::vector<std::string>> members;
};

/// Records must be ordered by (device, seq).
MergeResult merge_consecutive(std::span<const WaveformRecord> records, double gap_samples = 128.0,
                              double sample_period = 200e-6);

/// Moving-average of the per-sample max absolute excursion over both channels.
std::vector<double> channel_max_trace(const WaveformRecord& rec, std::size_t smooth_window);

bool has_double_peak(const WaveformRecord& rec, const CurationConfig& cfg);

Partition extract_double_peak(std::span<const WaveformRecord> records, const CurationConfig& cfg);

/// (duration, peak, energy) of the channel-max excursion.
std::array<double, 3> debris_features(const WaveformRecord& rec);

/// Returns the n records furthest from the robust centre as `discarded`,
/// the rest as `kept` (input order preserved).
Partition remove_debris_outliers(std::span<const WaveformRecord> records, std::size_t n);

struct Entry {
    std::string id;
    std::string device_id;
    int label = 0;
    Split split = Split::Train;
    bool duplicate = false;  ///< oversampling copy
};

inline constexpr std::array<const char*, 3> kCountingClasses = {"0", "1", "2"};
inline constexpr std::array<const char*, 5> kSpeciesClasses = {"Sz", "Rd", "Tc", "Os", "Cp"};

struct CuratedDataset {
    std::vector<WaveformRecord> records;     ///< every distinct waveform referenced below
    std::vector<WaveformRecord> references;  ///< reference drops, all devices
    std::vector<Entry> counting;
    std::vector<Entry> species;
    std::map<std::string, Disposition> provenance;  ///< input record id -> disposition
    std::map<std::string, std::vector<std::string>> reference_pools;  ///< device -> reference ids

    /// Rebuilds the id lookup; call after changing `records` or `references`.
    void reindex();
    const WaveformRecord& record(const std::string& id) const;
    const WaveformRecord& reference(const std::string& id) const;
    std::vector<const WaveformRecord*> pool(const std::string& device_id) const;

private:
    std::map<std::string, std::size_t> record_index_;
    std::map<std::string, std::size_t> reference_index_;
};

/// Runs the full pipeline on raw records plus reference drops.
CuratedDataset curate(std::vector<WaveformRecord> records, std::vector<WaveformRecord> references,
                      const CurationConfig& cfg);

/// Stratified split of entries (labels already set) into train/val/test.
void stratified_split(std::vector<Entry>& entries, const std::array<double, 3>& ratio, std::uint64_t seed);
/// Appends duplicates of minority-class entries (among `only` split, or all
/// entries if unset) until each class matches the largest.
void oversample(std::vector<Entry>& entries, std::optional<Split> only);

nlohmann::ordered_json manifest(const CuratedDataset& ds, const CurationConfig& cfg);
std::string dispositions_csv(const CuratedDataset& ds);

/// Writes manifest.json, dispositions.csv, records.jsonl and references.jsonl.
void write_dataset(const std::filesystem::path& dir, const CuratedDataset& ds, const CurationConfig& cfg);
CuratedDataset read_dataset(const std::filesystem::path& dir);

}  // namespace pestsim::curation
