#include "pestsim/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "pestsim/errors.hpp"
#include "pestsim/rng.hpp"

namespace pestsim::curation {

namespace {

template <std::size_t N>
int index_of(const std::array<const char*, N>& names, const std::string& s) {
    for (std::size_t k = 0; k < N; ++k)
        if (s == names[k]) return static_cast<int>(k);
    return -1;
}

constexpr std::array<const char*, 5> kDispositionNames = {"Pure", "Merged", "DoublePeak", "DiscardedLowSum",
                                                          "Debris"};
constexpr std::array<const char*, 3> kSplitNames = {"train", "val", "test"};

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) m = (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid))) / 2.0;
    return m;
}

bool by_device_seq(const WaveformRecord& a, const WaveformRecord& b) {
    if (a.device_id != b.device_id) return a.device_id < b.device_id;
    return a.seq < b.seq;
}

}  // namespace

std::string to_string(Disposition d) { return kDispositionNames[static_cast<std::size_t>(d)]; }

Disposition disposition_from_string(const std::string& name) {
    const int k = index_of(kDispositionNames, name);
    if (k < 0) throw DataError("unknown disposition '" + name + "'");
    return static_cast<Disposition>(k);
}

std::string to_string(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }

Split split_from_string(const std::string& name) {
    const int k = index_of(kSplitNames, name);
    if (k < 0) throw DataError("unknown split '" + name + "'");
    return static_cast<Split>(k);
}

void CurationConfig::validate() const {
    if (!(low_sum_threshold >= 0.0)) throw ConfigError("curation.low_sum_threshold", "must be >= 0");
    if (!(merge_gap_samples >= 0.0)) throw ConfigError("curation.merge_gap_samples", "must be >= 0");
    if (!(valley_fraction > 0.0 && valley_fraction < 1.0))
        throw ConfigError("curation.valley_fraction", "must be in (0, 1)");
    if (min_peak_gap == 0) throw ConfigError("curation.min_peak_gap", "must be >= 1");
    if (smooth_window == 0) throw ConfigError("curation.smooth_window", "must be >= 1");
    double sum = 0.0;
    for (double r : split_ratio) {
        if (r < 0.0) throw ConfigError("curation.split_ratio", "ratios must be >= 0");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("curation.split_ratio", "ratios must sum to 1");
}

std::array<double, 2> channel_baseline(const WaveformRecord& rec) {
    // Shading only ever raises the receiver voltage, and a long pulse can fill
    // most of a record, so the baseline is a low quantile rather than the median.
    const auto low = [](const std::vector<Count>& ch) {
        if (ch.empty()) return 0.0;
        std::vector<double> v(ch.begin(), ch.end());
        std::sort(v.begin(), v.end());
        const double h = kBaselineQuantile * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(h);
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {low(rec.ch1), low(rec.ch2)};
}

double excursion_sum(const WaveformRecord& rec) {
    const auto base = channel_baseline(rec);
    double sum = 0.0;
    for (Count v : rec.ch1) sum += std::abs(v - base[0]);
    for (Count v : rec.ch2) sum += std::abs(v - base[1]);
    return sum;
}

Partition sum_filter(std::span<const WaveformRecord> records, double low_threshold) {
    Partition out;
    for (const auto& r : records) (excursion_sum(r) < low_threshold ? out.discarded : out.kept).push_back(r);
    return out;
}

double trigger_time_us(const WaveformRecord& rec, double sample_period) {
    const double offset = rec.trigger_pos ? static_cast<double>(*rec.trigger_pos / 2) : 0.0;
    return static_cast<double>(rec.timestamp_us) + offset * sample_period * 1e6;
}

MergeResult merge_consecutive(std::span<const WaveformRecord> records, double gap_samples, double sample_period) {
    MergeResult out;
    const double gap_us = gap_samples * sample_period * 1e6;
    for (std::size_t k = 0; k < records.size(); ++k) {
        const auto& r = records[k];
        if (k > 0 && !out.records.empty()) {
            const auto& prev = records[k - 1];
            if (prev.device_id == r.device_id && trigger_time_us(r, sample_period) - trigger_time_us(prev, sample_period) < gap_us) {
                out.members.back().push_back(r.id());
                continue;
            }
        }
        out.records.push_back(r);
        out.members.push_back({r.id()});
    }
    return out;
}

std::vector<double> channel_max_trace(const WaveformRecord& rec, std::size_t smooth_window) {
    const auto base = channel_baseline(rec);
    const std::size_t n = std::min(rec.ch1.size(), rec.ch2.size());
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i)
        raw[i] = std::max(std::abs(rec.ch1[i] - base[0]), std::abs(rec.ch2[i] - base[1]));
    if (smooth_window <= 1) return raw;
    std::vector<double> out(n);
    const auto half = static_cast<std::ptrdiff_t>(smooth_window / 2);
    for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - half);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1,
                                                           static_cast<std::ptrdiff_t>(i) + half);
        double s = 0.0;
        for (auto j = lo; j <= hi; ++j) s += raw[static_cast<std::size_t>(j)];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

bool has_double_peak(const WaveformRecord& rec, const CurationConfig& cfg) {
    const auto trace = channel_max_trace(rec, cfg.smooth_window);
    if (trace.empty()) return false;
    const auto top = static_cast<std::size_t>(std::max_element(trace.begin(), trace.end()) - trace.begin());
    const double p1 = trace[top];
    if (p1 < cfg.min_peak_height) return false;
    const double drop = cfg.valley_fraction * p1;
    // Walk away from the highest peak in each direction, tracking the deepest
    // valley so far; any later point rising far enough above it is a second peak.
    for (int dir : {-1, 1}) {
        double valley = p1;
        for (auto j = static_cast<std::ptrdiff_t>(top) + dir; j >= 0 && j < static_cast<std::ptrdiff_t>(trace.size());
             j += dir) {
            const double v = trace[static_cast<std::size_t>(j)];
            valley = std::min(valley, v);
            const auto gap = static_cast<std::size_t>(std::abs(j - static_cast<std::ptrdiff_t>(top)));
            if (gap >= cfg.min_peak_gap && v >= cfg.min_peak_height && valley <= std::min(p1, v) - drop) return true;
        }
    }
    return false;
}

Partition extract_double_peak(std::span<const WaveformRecord> records, const CurationConfig& cfg) {
    Partition out;  // kept = two-pest, discarded = rest
    for (const auto& r : records) (has_double_peak(r, cfg) ? out.kept : out.discarded).push_back(r);
    return out;
}

std::array<double, 3> debris_features(const WaveformRecord& rec) {
    const auto trace = channel_max_trace(rec, 1);
    if (trace.empty()) return {0.0, 0.0, 0.0};
    const double peak = *std::max_element(trace.begin(), trace.end());
    double duration = 0.0, energy = 0.0;
    for (double v : trace) {
        if (peak > 0.0 && v >= peak / 2.0) duration += 1.0;
        energy += v * v;
    }
    return {duration, peak, energy};
}

Partition remove_debris_outliers(std::span<const WaveformRecord> records, std::size_t n) {
    if (n > records.size())
        throw ContractError(fmt::format("cannot remove {} outliers from {} records", n, records.size()));
    Partition out;
    if (n == 0) {
        out.kept.assign(records.begin(), records.end());
        return out;
    }
    std::vector<std::array<double, 3>> feats;
    feats.reserve(records.size());
    for (const auto& r : records) feats.push_back(debris_features(r));
    std::array<double, 3> centre{}, scale{};
    for (std::size_t f = 0; f < 3; ++f) {
        std::vector<double> col;
        for (const auto& x : feats) col.push_back(x[f]);
        centre[f] = median(col);
        for (auto& v : col) v = std::abs(v - centre[f]);
        scale[f] = 1.4826 * median(col) + 1e-9;
    }
    std::vector<double> dist(records.size());
    for (std::size_t k = 0; k < records.size(); ++k) {
        double s = 0.0;
        for (std::size_t f = 0; f < 3; ++f) s += std::pow((feats[k][f] - centre[f]) / scale[f], 2);
        dist[k] = std::sqrt(s);
    }
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::string> ids;
    for (const auto& r : records) ids.push_back(r.id());
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dist[a] != dist[b]) return dist[a] > dist[b];
        return ids[a] < ids[b];
    });
    std::vector<bool> removed(records.size(), false);
    for (std::size_t k = 0; k < n; ++k) removed[order[k]] = true;
    for (std::size_t k = 0; k < records.size(); ++k) (removed[k] ? out.discarded : out.kept).push_back(records[k]);
    return out;
}

void CuratedDataset::reindex() {
    record_index_.clear();
    reference_index_.clear();
    for (std::size_t k = 0; k < records.size(); ++k) record_index_.emplace(records[k].id(), k);
    for (std::size_t k = 0; k < references.size(); ++k) reference_index_.emplace(references[k].id(), k);
}

const WaveformRecord& CuratedDataset::record(const std::string& id) const {
    const auto it = record_index_.find(id);
    if (it == record_index_.end()) throw DataError("no record with id '" + id + "'");
    return records[it->second];
}

const WaveformRecord& CuratedDataset::reference(const std::string& id) const {
    const auto it = reference_index_.find(id);
    if (it == reference_index_.end()) throw DataError("no reference with id '" + id + "'");
    return references[it->second];
}

std::vector<const WaveformRecord*> CuratedDataset::pool(const std::string& device_id) const {
    const auto it = reference_pools.find(device_id);
    if (it == reference_pools.end() || it->second.empty())
        throw DataError("no reference pool for device '" + device_id + "'");
    std::vector<const WaveformRecord*> out;
    for (const auto& id : it->second) out.push_back(&reference(id));
    return out;
}

void stratified_split(std::vector<Entry>& entries, const std::array<double, 3>& ratio, std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t k = 0; k < entries.size(); ++k) by_label[entries[k].label].push_back(k);
    for (auto& [label, idx] : by_label) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return entries[a].id < entries[b].id; });
        auto rng = make_rng(seed, {static_cast<std::uint64_t>(label)});
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n = static_cast<double>(idx.size());
        const auto n_train = static_cast<std::size_t>(std::llround(ratio[0] * n));
        const auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(ratio[1] * n)));
        for (std::size_t k = 0; k < idx.size(); ++k)
            entries[idx[k]].split = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
    }
}

void oversample(std::vector<Entry>& entries, std::optional<Split> only) {
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t k = 0; k < entries.size(); ++k)
        if (!only || entries[k].split == *only) by_label[entries[k].label].push_back(k);
    std::size_t target = 0;
    for (const auto& [label, idx] : by_label) target = std::max(target, idx.size());
    for (const auto& [label, idx] : by_label) {
        for (std::size_t k = idx.size(); k < target; ++k) {
            Entry e = entries[idx[k % idx.size()]];
            e.duplicate = true;
            entries.push_back(std::move(e));
        }
    }
}

CuratedDataset curate(std::vector<WaveformRecord> records, std::vector<WaveformRecord> references,
                      const CurationConfig& cfg) {
    cfg.validate();
    std::sort(records.begin(), records.end(), by_device_seq);
    std::sort(references.begin(), references.end(), by_device_seq);

    CuratedDataset ds;
    auto assign = [&](const WaveformRecord& r, Disposition d) {
        if (!ds.provenance.emplace(r.id(), d).second) throw DataError("duplicate record id '" + r.id() + "'");
    };
    auto entry = [](const WaveformRecord& r, int label) { return Entry{r.id(), r.device_id, label, Split::Train, false}; };

    auto filtered = sum_filter(records, cfg.low_sum_threshold);
    for (const auto& r : filtered.discarded) {
        assign(r, Disposition::DiscardedLowSum);
        ds.counting.push_back(entry(r, 0));
    }

    const auto merged = merge_consecutive(filtered.kept, cfg.merge_gap_samples);
    std::vector<WaveformRecord> singles;
    std::map<std::string, const WaveformRecord*> by_id;
    for (const auto& r : filtered.kept) by_id[r.id()] = &r;
    for (std::size_t k = 0; k < merged.records.size(); ++k) {
        if (merged.members[k].size() == 1) {
            singles.push_back(merged.records[k]);
            continue;
        }
        for (const auto& id : merged.members[k]) assign(*by_id.at(id), Disposition::Merged);
        ds.counting.push_back(entry(merged.records[k], 1));
    }

    auto doubles = extract_double_peak(singles, cfg);
    for (const auto& r : doubles.kept) {
        assign(r, Disposition::DoublePeak);
        ds.counting.push_back(entry(r, 2));
    }

    std::size_t n_debris = 0;
    if (cfg.debris_count) {
        n_debris = *cfg.debris_count;
    } else {
        for (const auto& r : doubles.discarded)
            if (r.truth && r.truth->scenario == "DebrisNoPest") ++n_debris;
    }
    auto debris = remove_debris_outliers(doubles.discarded, n_debris);
    for (const auto& r : debris.discarded) {
        assign(r, Disposition::Debris);
        ds.counting.push_back(entry(r, 0));
    }
    for (const auto& r : debris.kept) {
        assign(r, Disposition::Pure);
        ds.counting.push_back(entry(r, 1));
        if (!r.truth) throw DataError("record '" + r.id() + "' has no batch species label");
        const int sp = index_of(kSpeciesClasses, r.truth->species);
        if (sp < 0) throw DataError("record '" + r.id() + "' has unknown species '" + r.truth->species + "'");
        ds.species.push_back(entry(r, sp));
    }

    const auto require_classes = [](const std::vector<Entry>& entries, std::size_t k, const char* task) {
        std::vector<int> seen(k, 0);
        for (const auto& e : entries) seen[static_cast<std::size_t>(e.label)] = 1;
        for (std::size_t c = 0; c < k; ++c)
            if (!seen[c]) throw DataError(fmt::format("{} task has no records of class {}", task, c));
    };
    require_classes(ds.counting, 3, "counting");
    require_classes(ds.species, 5, "species");

    // Stable order before splitting so the assignment does not depend on
    // which stage produced an entry.
    const auto by_id_order = [](const Entry& a, const Entry& b) { return a.id < b.id; };
    std::sort(ds.counting.begin(), ds.counting.end(), by_id_order);
    std::sort(ds.species.begin(), ds.species.end(), by_id_order);
    if (cfg.oversample_first) {
        oversample(ds.counting, std::nullopt);
        stratified_split(ds.counting, cfg.split_ratio, derive_seed(cfg.seed, {0}));
    } else {
        stratified_split(ds.counting, cfg.split_ratio, derive_seed(cfg.seed, {0}));
        oversample(ds.counting, Split::Train);
    }
    stratified_split(ds.species, cfg.split_ratio, derive_seed(cfg.seed, {1}));

    for (const auto& r : references) ds.reference_pools[r.device_id].push_back(r.id());
    ds.records = std::move(records);
    ds.references = std::move(references);
    ds.reindex();
    return ds;
}

namespace {

nlohmann::ordered_json entries_json(const std::vector<Entry>& entries) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : entries)
        arr.push_back({{"id", e.id}, {"device_id", e.device_id}, {"label", e.label}, {"split", to_string(e.split)},
                       {"duplicate", e.duplicate}});
    return arr;
}

std::vector<Entry> entries_from_json(const nlohmann::json& arr) {
    std::vector<Entry> out;
    for (const auto& j : arr)
        out.push_back({j.at("id").get<std::string>(), j.at("device_id").get<std::string>(), j.at("label").get<int>(),
                       split_from_string(j.at("split").get<std::string>()), j.at("duplicate").get<bool>()});
    return out;
}

}  // namespace

nlohmann::ordered_json manifest(const CuratedDataset& ds, const CurationConfig& cfg) {
    nlohmann::ordered_json j;
    j["format"] = "pestsim-dataset";
    j["version"] = 1;
    j["seed"] = cfg.seed;
    j["oversample_first"] = cfg.oversample_first;
    std::map<std::string, std::size_t> summary;
    for (auto name : kDispositionNames) summary[name] = 0;
    for (const auto& [id, d] : ds.provenance) ++summary[to_string(d)];
    j["summary"] = summary;
    nlohmann::ordered_json prov = nlohmann::ordered_json::object();
    for (const auto& [id, d] : ds.provenance) prov[id] = to_string(d);
    j["dispositions"] = prov;
    j["counting"] = entries_json(ds.counting);
    j["species"] = entries_json(ds.species);
    nlohmann::ordered_json pools = nlohmann::ordered_json::object();
    for (const auto& [dev, ids] : ds.reference_pools) pools[dev] = ids;
    j["reference_pools"] = pools;
    return j;
}

std::string dispositions_csv(const CuratedDataset& ds) {
    std::string out = "record_id,disposition\n";
    for (const auto& [id, d] : ds.provenance) out += id + "," + to_string(d) + "\n";
    return out;
}

void write_dataset(const std::filesystem::path& dir, const CuratedDataset& ds, const CurationConfig& cfg) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "manifest.json", std::ios::binary);
        f << manifest(ds, cfg).dump(1) << "\n";
    }
    {
        std::ofstream f(dir / "dispositions.csv", std::ios::binary);
        f << dispositions_csv(ds);
    }
    write_jsonl(dir / "records.jsonl", ds.records);
    write_jsonl(dir / "references.jsonl", ds.references);
}

CuratedDataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json", std::ios::binary);
    if (!f) throw DataError("missing " + (dir / "manifest.json").string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
    CuratedDataset ds;
    try {
        for (const auto& [id, d] : j.at("dispositions").items())
            ds.provenance[id] = disposition_from_string(d.get<std::string>());
        ds.counting = entries_from_json(j.at("counting"));
        ds.species = entries_from_json(j.at("species"));
        for (const auto& [dev, ids] : j.at("reference_pools").items())
            ds.reference_pools[dev] = ids.get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
    ds.records = read_jsonl(dir / "records.jsonl");
    ds.references = read_jsonl(dir / "references.jsonl");
    ds.reindex();
    return ds;
}

}  // namespace pestsim::curation
