// Acquisition firmware: interleaved two-channel DMA ring, half/full completion
// handling, waveform transfer, adaptive thresholds and jump-gated triggering.
//
// Windows are half-open [i, j) with even endpoints over the interleaved ring
// (even index = channel 1, odd index = channel 2).
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pestsim/record.hpp"

namespace pestsim::firmware {

inline constexpr std::size_t kDefaultRingLength = 256;
/// Samples between the two ends of the jump test (interleaved indices).
inline constexpr std::size_t kJumpSpan = 8;

struct RingBuffer {
    std::vector<Count> data;
    std::size_t write_cursor = 0;

    explicit RingBuffer(std::size_t length = kDefaultRingLength);
    void push(Count value);
    std::size_t size() const { return data.size(); }
    /// Copy with the oldest entry first (the next one to be overwritten).
    std::vector<Count> chronological() const;
};

struct WaveList {
    std::vector<std::vector<Count>> rows;
    std::size_t write_index = 0;

    WaveList(std::size_t rows_m, std::size_t length);
};

struct TriggerConfig {
    int theta1 = 0;
    int theta2 = 0;
    int delta_off1 = 30;
    int delta_off2 = 30;
    int jump1 = 40;
    int jump2 = 40;
    double refresh_period = 60.0;     ///< [s]
    double sample_period = 200e-6;    ///< per channel [s]

    void validate() const;
};

struct Thresholds {
    int theta1 = 0;
    int theta2 = 0;
    bool operator==(const Thresholds&) const = default;
};

/// Deinterleaves buf[i, j) into the current WaveList row: pair q goes to
/// channel-1 slot L/2 - n + q and channel-2 slot L - n + q, n = (j - i) / 2.
/// Advances the write index modulo the row count.
void transfer_data(std::span<const Count> buf, std::size_t i, std::size_t j, WaveList& wl);

/// Channel means over buf[i, j) (integer division by (j - i) / 2) plus offsets.
Thresholds adaptive_threshold(std::span<const Count> buf, std::size_t i, std::size_t j, const TriggerConfig& cfg);

/// First interleaved index l in [i, j - 8) (step 2) at which a channel sits at
/// or above its threshold and differs from the sample 8 entries later by at
/// least its jump range; channel 1 is tested before channel 2 at each l.
std::optional<std::size_t> check_threshold(std::span<const Count> buf, std::size_t i, std::size_t j,
                                           const TriggerConfig& cfg);

struct AcquisitionOptions {
    std::size_t ring_length = kDefaultRingLength;
    std::size_t wavelist_rows = 16;
};

/// Replays per-channel sample streams through the firmware event loop. The
/// first completed half seeds the thresholds. Each later half is checked; a
/// hit arms a capture that copies the whole ring (chronologically) at the end
/// of the following half, and hits inside an armed capture are coalesced.
/// Thresholds refresh every refresh_period on the latest untriggered half.
/// Records carry seq = capture index and timestamp_us of their first sample.
std::vector<WaveformRecord> run_acquisition(std::span<const Count> ch1, std::span<const Count> ch2,
                                            const TriggerConfig& cfg, const AcquisitionOptions& opts = {});

}  // namespace pestsim::firmware
