#include "pestsim/firmware.hpp"

#include <cmath>

#include "pestsim/errors.hpp"

namespace pestsim::firmware {

namespace {

void check_window(std::size_t length, std::size_t i, std::size_t j) {
    if (i % 2 != 0 || j % 2 != 0) throw ContractError("window endpoints must be even");
    if (!(i < j) || j > length) throw ContractError("window must satisfy 0 <= i < j <= L");
}

}  // namespace

RingBuffer::RingBuffer(std::size_t length) : data(length, 0) {
    if (length == 0 || length % 2 != 0) throw ContractError("ring length must be even and positive");
}

void RingBuffer::push(Count value) {
    data[write_cursor] = value;
    write_cursor = (write_cursor + 1) % data.size();
}

std::vector<Count> RingBuffer::chronological() const {
    std::vector<Count> out;
    out.reserve(data.size());
    for (std::size_t k = 0; k < data.size(); ++k) out.push_back(data[(write_cursor + k) % data.size()]);
    return out;
}

WaveList::WaveList(std::size_t rows_m, std::size_t length) : rows(rows_m, std::vector<Count>(length, 0)) {
    if (rows_m == 0) throw ContractError("wave list needs at least one row");
    if (length == 0 || length % 2 != 0) throw ContractError("wave list row length must be even");
}

void TriggerConfig::validate() const {
    if (jump1 <= 0 || jump2 <= 0) throw ContractError("jump ranges must be positive");
    if (!(sample_period > 0.0)) throw ContractError("sample period must be positive");
    if (!(refresh_period > 0.0)) throw ContractError("refresh period must be positive");
}

void transfer_data(std::span<const Count> buf, std::size_t i, std::size_t j, WaveList& wl) {
    const std::size_t length = buf.size();
    check_window(length, i, j);
    auto& row = wl.rows.at(wl.write_index);
    if (row.size() != length) throw ContractError("wave list row length must match the buffer");
    const std::size_t n = (j - i) / 2;
    for (std::size_t q = 0; q < n; ++q) {
        row[length / 2 - n + q] = buf[i + 2 * q];
        row[length - n + q] = buf[i + 2 * q + 1];
    }
    wl.write_index = (wl.write_index + 1) % wl.rows.size();
}

Thresholds adaptive_threshold(std::span<const Count> buf, std::size_t i, std::size_t j, const TriggerConfig& cfg) {
    check_window(buf.size(), i, j);
    long long sum1 = 0, sum2 = 0;
    for (std::size_t l = i; l < j; l += 2) {
        sum1 += buf[l];
        sum2 += buf[l + 1];
    }
    const auto n = static_cast<long long>((j - i) / 2);
    return {static_cast<int>(sum1 / n) + cfg.delta_off1, static_cast<int>(sum2 / n) + cfg.delta_off2};
}

std::optional<std::size_t> check_threshold(std::span<const Count> buf, std::size_t i, std::size_t j,
                                           const TriggerConfig& cfg) {
    check_window(buf.size(), i, j);
    if (j < kJumpSpan) return std::nullopt;
    const std::size_t end = j - kJumpSpan;
    const auto jumps = [](int now, int later, int jump) { return now + jump <= later || now >= later + jump; };
    for (std::size_t l = i; l < end; l += 2) {
        const int a = buf[l];
        if (a >= cfg.theta1 && jumps(a, buf[l + kJumpSpan], cfg.jump1)) return l;
        const int b = buf[l + 1];
        if (b >= cfg.theta2 && jumps(b, buf[l + 1 + kJumpSpan], cfg.jump2)) return l + 1;
    }
    return std::nullopt;
}

std::vector<WaveformRecord> run_acquisition(std::span<const Count> ch1, std::span<const Count> ch2,
                                            const TriggerConfig& cfg, const AcquisitionOptions& opts) {
    cfg.validate();
    if (ch1.size() != ch2.size()) throw ContractError("channel streams must have equal length");
    const std::size_t length = opts.ring_length;
    const std::size_t half = length / 2;
    if (half % 2 != 0) throw ContractError("ring length must be a multiple of 4");

    RingBuffer ring(length);
    WaveList wave_list(opts.wavelist_rows, length);
    TriggerConfig live = cfg;
    bool seeded = false;
    double last_refresh = 0.0;
    bool armed = false;
    std::size_t armed_pos = 0;  // trigger position in the completed half

    std::vector<WaveformRecord> out;
    for (std::size_t s = 0; s < ch1.size(); ++s) {
        ring.push(ch1[s]);
        ring.push(ch2[s]);
        if (ring.write_cursor % half != 0) continue;

        // Half-complete (cursor == half) or full-complete (cursor wrapped to 0).
        const std::size_t i = ring.write_cursor == half ? 0 : half;
        const std::size_t j = i + half;
        const double now = static_cast<double>(s + 1) * cfg.sample_period;

        if (!seeded) {
            const auto th = adaptive_threshold(ring.data, i, j, live);
            live.theta1 = th.theta1;
            live.theta2 = th.theta2;
            last_refresh = now;
            seeded = true;
            continue;
        }

        if (armed) {
            // Ring now holds [trigger half, this half] in chronological order.
            const auto linear = ring.chronological();
            transfer_data(linear, 0, length, wave_list);
            const auto& row = wave_list.rows[(wave_list.write_index + wave_list.rows.size() - 1) % wave_list.rows.size()];
            WaveformRecord rec;
            rec.seq = out.size();
            const std::size_t first_sample = s + 1 - half;
            rec.timestamp_us = static_cast<std::uint64_t>(
                std::llround(static_cast<double>(first_sample) * cfg.sample_period * 1e6));
            rec.trigger_pos = static_cast<int>(armed_pos);
            rec.ch1.assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(half));
            rec.ch2.assign(row.begin() + static_cast<std::ptrdiff_t>(half), row.end());
            out.push_back(std::move(rec));
            armed = false;
            continue;
        }

        if (const auto p = check_threshold(ring.data, i, j, live)) {
            armed = true;
            armed_pos = *p - i;
        } else if (now - last_refresh >= cfg.refresh_period) {
            const auto th = adaptive_threshold(ring.data, i, j, live);
            live.theta1 = th.theta1;
            live.theta2 = th.theta2;
            last_refresh = now;
        }
    }
    return out;
}

}  // namespace pestsim::firmware
