#include "pestsim/record.hpp"

#include <array>
#include <fstream>

#include "pestsim/errors.hpp"

namespace pestsim {

std::string WaveformRecord::id() const {
    return device_id + (is_reference() ? "#ref" : "#") + std::to_string(seq);
}

nlohmann::ordered_json to_json(const WaveformRecord& rec) {
    nlohmann::ordered_json j;
    j["device_id"] = rec.device_id;
    j["seq"] = rec.seq;
    j["timestamp_us"] = rec.timestamp_us;
    j["trigger_pos"] = rec.trigger_pos ? nlohmann::ordered_json(*rec.trigger_pos) : nlohmann::ordered_json(nullptr);
    j["ch1"] = rec.ch1;
    j["ch2"] = rec.ch2;
    if (rec.truth) {
        const auto& t = *rec.truth;
        j["truth"] = {{"event_id", t.event_id}, {"scenario", t.scenario}, {"species", t.species},
                      {"count", t.count},       {"reference", t.reference}};
    }
    return j;
}

WaveformRecord record_from_json(const nlohmann::json& j) {
    WaveformRecord rec;
    try {
        rec.device_id = j.at("device_id").get<std::string>();
        rec.seq = j.at("seq").get<std::uint64_t>();
        rec.timestamp_us = j.value("timestamp_us", std::uint64_t{0});
        if (!j.at("trigger_pos").is_null()) rec.trigger_pos = j.at("trigger_pos").get<int>();
        rec.ch1 = j.at("ch1").get<std::vector<Count>>();
        rec.ch2 = j.at("ch2").get<std::vector<Count>>();
        if (j.contains("truth") && !j["truth"].is_null()) {
            const auto& t = j["truth"];
            rec.truth = GroundTruth{t.at("event_id").get<std::uint64_t>(), t.at("scenario").get<std::string>(),
                                    t.at("species").get<std::string>(), t.at("count").get<int>(),
                                    t.value("reference", false)};
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed waveform record: ") + e.what());
    }
    if (rec.ch1.size() != rec.ch2.size()) throw DataError("record " + rec.id() + " has unequal channel lengths");
    return rec;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<WaveformRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<WaveformRecord> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<WaveformRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(path.string() + ": " + e.what());
        }
        out.push_back(record_from_json(j));
    }
    return out;
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes{};
    auto v = static_cast<std::make_unsigned_t<T>>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw DataError("truncated binary record file");
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::make_unsigned_t<T>>(bytes[i]) << (8 * i);
    return static_cast<T>(v);
}

}  // namespace

void write_binary(const std::filesystem::path& path, const std::vector<WaveformRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write("PSTW", 4);
    put_le<std::uint8_t>(out, kRecordFormatVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.device_id.size()));
        out.write(r.device_id.data(), static_cast<std::streamsize>(r.device_id.size()));
        put_le<std::uint64_t>(out, r.seq);
        put_le<std::uint64_t>(out, r.timestamp_us);
        put_le<std::int32_t>(out, r.trigger_pos.value_or(-1));
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.ch1.size()));
        for (Count c : r.ch1) put_le<std::uint16_t>(out, c);
        for (Count c : r.ch2) put_le<std::uint16_t>(out, c);
    }
}

std::vector<WaveformRecord> read_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::string(magic.data(), 4) != "PSTW") throw DataError(path.string() + ": bad magic");
    if (get_le<std::uint8_t>(in) != kRecordFormatVersion) throw DataError(path.string() + ": unsupported version");
    const auto n = get_le<std::uint32_t>(in);
    std::vector<WaveformRecord> out;
    out.reserve(n);
    for (std::uint32_t k = 0; k < n; ++k) {
        WaveformRecord r;
        r.device_id.resize(get_le<std::uint16_t>(in));
        in.read(r.device_id.data(), static_cast<std::streamsize>(r.device_id.size()));
        r.seq = get_le<std::uint64_t>(in);
        r.timestamp_us = get_le<std::uint64_t>(in);
        if (const auto p = get_le<std::int32_t>(in); p >= 0) r.trigger_pos = p;
        const auto len = get_le<std::uint16_t>(in);
        r.ch1.resize(len);
        r.ch2.resize(len);
        for (auto& c : r.ch1) c = get_le<std::uint16_t>(in);
        for (auto& c : r.ch2) c = get_le<std::uint16_t>(in);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace pestsim
