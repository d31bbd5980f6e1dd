// Captured waveform records and their line-JSON / packed binary encodings.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace pestsim {

using Count = std::uint16_t;

/// Ground truth attached by the simulator. `species` is the batch species for
/// pest-free events as well (the species being collected when they occurred).
struct GroundTruth {
    std::uint64_t event_id = 0;
    std::string scenario;
    std::string species;
    int count = 0;
    bool reference = false;

    bool operator==(const GroundTruth&) const = default;
};

struct WaveformRecord {
    std::string device_id;
    std::uint64_t seq = 0;
    std::uint64_t timestamp_us = 0;   ///< time of the first sample in the record
    std::optional<int> trigger_pos;   ///< interleaved index into the record (even: ch1, odd: ch2)
    std::vector<Count> ch1;
    std::vector<Count> ch2;
    std::optional<GroundTruth> truth;

    /// "<device>#<seq>" or "<device>#ref<seq>" for reference drops.
    std::string id() const;
    bool is_reference() const { return truth && truth->reference; }
    bool operator==(const WaveformRecord&) const = default;
};

nlohmann::ordered_json to_json(const WaveformRecord& rec);
WaveformRecord record_from_json(const nlohmann::json& j);

void write_jsonl(const std::filesystem::path& path, const std::vector<WaveformRecord>& records);
std::vector<WaveformRecord> read_jsonl(const std::filesystem::path& path);

/// Packed form: "PSTW", version byte, u32 record count, then per record
/// u16 id length + device id bytes, u64 seq, u64 timestamp_us, i32 trigger
/// position (-1 for none), u16 samples per channel, ch1 then ch2 as u16.
/// All integers little-endian. Ground truth is not carried.
inline constexpr std::uint8_t kRecordFormatVersion = 1;
void write_binary(const std::filesystem::path& path, const std::vector<WaveformRecord>& records);
std::vector<WaveformRecord> read_binary(const std::filesystem::path& path);

}  // namespace pestsim
