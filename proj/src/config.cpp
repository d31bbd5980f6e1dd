#include "pestsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "pestsim/errors.hpp"
#include "pestsim/rng.hpp"

namespace pestsim::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) throw ConfigError(key, fmt::format("{}: '{}' is not a number", key, v));
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end)
        throw ConfigError(key, fmt::format("{}: '{}' is not a non-negative integer", key, v));
    return out;
}

int to_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) throw ConfigError(key, fmt::format("{}: '{}' is not an integer", key, v));
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(key, fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(v);
    while (std::getline(in, cell, ',')) out.push_back(trim(cell));
    return out;
}

template <std::size_t N>
std::array<double, N> to_array(const std::string& key, const std::string& v) {
    const auto cells = split_list(v);
    if (cells.size() != N) throw ConfigError(key, fmt::format("{}: expected {} comma-separated values", key, N));
    std::array<double, N> out{};
    for (std::size_t k = 0; k < N; ++k) out[k] = to_double(key, cells[k]);
    return out;
}

std::string num(double v) { return fmt::format("{}", v); }

template <typename Seq>
std::string join(const Seq& values) {
    std::string out;
    for (const auto& v : values) out += (out.empty() ? "" : ", ") + fmt::format("{}", v);
    return out;
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

// Helpers that bind a member reached through `access` to a typed field.
template <typename F>
Field real(F access) {
    return {[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = to_double(k, v); },
            [access](const RunConfig& c) { return num(access(const_cast<RunConfig&>(c))); }};
}

template <typename F>
Field size(F access) {
    return {[access](RunConfig& c, const std::string& k, const std::string& v) {
                access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(to_u64(k, v));
            },
            [access](const RunConfig& c) { return fmt::format("{}", access(const_cast<RunConfig&>(c))); }};
}

template <typename F>
Field integer(F access) {
    return {[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = to_int(k, v); },
            [access](const RunConfig& c) { return fmt::format("{}", access(const_cast<RunConfig&>(c))); }};
}

template <typename F>
Field boolean(F access) {
    return {[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = to_bool(k, v); },
            [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename F>
Field optional_real(F access) {
    return {[access](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "auto")
                    access(c).reset();
                else
                    access(c) = to_double(k, v);
            },
            [access](const RunConfig& c) {
                const auto& o = access(const_cast<RunConfig&>(c));
                return o ? num(*o) : std::string("auto");
            }};
}

template <typename F>
Field optional_size(F access) {
    return {[access](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "auto")
                    access(c).reset();
                else
                    access(c) = static_cast<std::size_t>(to_u64(k, v));
            },
            [access](const RunConfig& c) {
                const auto& o = access(const_cast<RunConfig&>(c));
                return o ? fmt::format("{}", *o) : std::string("auto");
            }};
}

template <std::size_t N, typename F>
Field real_list(F access) {
    return {[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = to_array<N>(k, v); },
            [access](const RunConfig& c) { return join(access(const_cast<RunConfig&>(c))); }};
}

#define ACCESS(expr) [](RunConfig & c) -> auto& { return expr; }

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"seed", size(ACCESS(c.seed))},
        {"eval.seed", size(ACCESS(c.eval_seed))},
        {"campaign.n_devices", size(ACCESS(c.n_devices))},
        {"campaign.n_events", size(ACCESS(c.campaign.n_events))},
        {"campaign.reference_drops", size(ACCESS(c.reference_drops))},
        {"campaign.species_mix", real_list<5>(ACCESS(c.campaign.species_mix))},
        {"campaign.scenario_mix", real_list<5>(ACCESS(c.campaign.scenario_mix))},

        {"geometry.emitter_distance", real(ACCESS(c.device.geometry.emitter_distance))},
        {"geometry.dropzone_radius", real(ACCESS(c.device.geometry.dropzone_radius))},
        {"geometry.emitter_half_power_angle", real(ACCESS(c.device.geometry.emitter_half_power_angle))},
        {"geometry.receiver_half_angle", real(ACCESS(c.device.geometry.receiver_half_angle))},
        {"geometry.second_pair_rotation", real(ACCESS(c.device.geometry.second_pair_rotation))},
        {"geometry.receiver_distance", optional_real(ACCESS(c.device.geometry.receiver_distance))},
        {"geometry.receiver_range", optional_real(ACCESS(c.device.geometry.receiver_range))},
        {"geometry.layout",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.device.geometry.layout = optics::layout_from_string(v);
              } catch (const std::exception& e) {
                  throw ConfigError(k, fmt::format("{}: {}", k, e.what()));
              }
          },
          [](const RunConfig& c) { return optics::to_string(c.device.geometry.layout); }}},

        {"circuit.vcc", real(ACCESS(c.device.circuit.vcc))},
        {"circuit.r_e", real(ACCESS(c.device.circuit.r_e))},
        {"circuit.r_r", real(ACCESS(c.device.circuit.r_r))},
        {"circuit.k1", real(ACCESS(c.device.circuit.k1))},
        {"circuit.c1", real(ACCESS(c.device.circuit.c1))},
        {"circuit.a", real(ACCESS(c.device.circuit.a))},
        {"circuit.k2", real(ACCESS(c.device.circuit.k2))},
        {"circuit.c2", real(ACCESS(c.device.circuit.c2))},
        {"circuit.ambient_e", real(ACCESS(c.device.circuit.ambient_e))},
        {"circuit.c0", real(ACCESS(c.device.circuit.c0))},
        {"circuit.v_ref", real(ACCESS(c.device.circuit.v_ref))},
        {"circuit.v_min", real(ACCESS(c.device.circuit.v_min))},
        {"circuit.adc_bits", integer(ACCESS(c.device.circuit.adc_bits))},

        {"trigger.delta_off1", integer(ACCESS(c.device.trigger.delta_off1))},
        {"trigger.delta_off2", integer(ACCESS(c.device.trigger.delta_off2))},
        {"trigger.jump1", integer(ACCESS(c.device.trigger.jump1))},
        {"trigger.jump2", integer(ACCESS(c.device.trigger.jump2))},
        {"trigger.refresh_period", real(ACCESS(c.device.trigger.refresh_period))},
        {"trigger.sample_period", real(ACCESS(c.device.trigger.sample_period))},

        {"noise.white_sd", real(ACCESS(c.device.noise.white_sd))},
        {"noise.wander_amplitude", real(ACCESS(c.device.noise.wander_amplitude))},
        {"noise.wander_period", real(ACCESS(c.device.noise.wander_period))},
        {"individuality.gain_sigma", real(ACCESS(c.device.individuality.gain_sigma))},
        {"individuality.offset_sd", real(ACCESS(c.device.individuality.offset_sd))},

        {"curation.low_sum_threshold", real(ACCESS(c.curation.low_sum_threshold))},
        {"curation.merge_gap_samples", real(ACCESS(c.curation.merge_gap_samples))},
        {"curation.valley_fraction", real(ACCESS(c.curation.valley_fraction))},
        {"curation.min_peak_gap", size(ACCESS(c.curation.min_peak_gap))},
        {"curation.min_peak_height", real(ACCESS(c.curation.min_peak_height))},
        {"curation.smooth_window", size(ACCESS(c.curation.smooth_window))},
        {"curation.debris_count", optional_size(ACCESS(c.curation.debris_count))},
        {"curation.split_ratio", real_list<3>(ACCESS(c.curation.split_ratio))},
        {"curation.oversample_first", boolean(ACCESS(c.curation.oversample_first))},
        {"curation.seed", size(ACCESS(c.curation.seed))},

        {"model.C_prime", size(ACCESS(c.model.C_prime))},
        {"model.layers", size(ACCESS(c.model.layers))},
        {"model.heads", size(ACCESS(c.model.heads))},
        {"model.d_model", size(ACCESS(c.model.d_model))},
        {"model.k_ref", size(ACCESS(c.model.k_ref))},
        {"model.pool_capacity", size(ACCESS(c.model.pool_capacity))},
        {"model.head_hidden", size(ACCESS(c.model.head_hidden))},
        {"model.kernel_scales",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              c.model.kernel_scales.clear();
              for (const auto& cell : split_list(v)) c.model.kernel_scales.push_back(to_int(k, cell));
          },
          [](const RunConfig& c) { return join(c.model.kernel_scales); }}},

        {"train.max_epochs", size(ACCESS(c.train.max_epochs))},
        {"train.batch", size(ACCESS(c.train.batch))},
        {"train.patience", size(ACCESS(c.train.patience))},
        {"train.lr", real(ACCESS(c.train.lr))},
        {"train.seed", size(ACCESS(c.train.seed))},

        {"counting.hidden", size(ACCESS(c.counting.hidden))},
        {"counting.epochs", size(ACCESS(c.counting.epochs))},
        {"counting.batch", size(ACCESS(c.counting.batch))},
        {"counting.patience", size(ACCESS(c.counting.patience))},
        {"counting.lr", real(ACCESS(c.counting.lr))},
        {"counting.seed", size(ACCESS(c.counting.seed))},

        {"bench.devices", size(ACCESS(c.bench.devices))},
        {"bench.drops", size(ACCESS(c.bench.drops))},
        {"bench.species",
         {[](RunConfig& c, const std::string&, const std::string& v) { c.bench.species = v; },
          [](const RunConfig& c) { return c.bench.species; }}},
        {"bench.conventional_r_r", real(ACCESS(c.bench.conventional_r_r))},
        {"bench.conventional_r_e", real(ACCESS(c.bench.conventional_r_e))},
        {"bench.max_response_time", real(ACCESS(c.bench.max_response_time))},
        {"bench.linearity_margin", real(ACCESS(c.bench.linearity_margin))},
        {"bench.r_r_min", real(ACCESS(c.bench.r_r_min))},
        {"bench.r_r_max", real(ACCESS(c.bench.r_r_max))},
        {"bench.r_e_min", real(ACCESS(c.bench.r_e_min))},
        {"bench.r_e_max", real(ACCESS(c.bench.r_e_max))},
    };
    return table;
}

#undef ACCESS

}  // namespace

std::vector<DeviceConfig> RunConfig::devices() const {
    std::vector<DeviceConfig> out;
    for (std::size_t k = 0; k < n_devices; ++k) {
        DeviceConfig d = device;
        d.id = fmt::format("dev{}", k);
        d.seed = derive_seed(seed, {0xDE, k});
        out.push_back(d);
    }
    return out;
}

dropsim::CampaignConfig RunConfig::campaign_config() const {
    auto c = campaign;
    c.seed = seed;
    c.devices = devices();
    return c;
}

void RunConfig::validate() const {
    const auto wrap = [](const char* key, auto&& fn) {
        try {
            fn();
        } catch (const ContractError& e) {
            throw ConfigError(key, fmt::format("{}: {}", key, e.what()));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key, fmt::format("{}: {}", key, e.what()));
        }
    };
    if (n_devices == 0) throw ConfigError("campaign.n_devices", "campaign.n_devices: must be at least 1");
    if (reference_drops == 0) throw ConfigError("campaign.reference_drops", "campaign.reference_drops: must be at least 1");
    wrap("geometry", [&] { device.geometry.validate(); });
    wrap("circuit", [&] { device.circuit.validate(); });
    wrap("trigger", [&] { device.trigger.validate(); });
    wrap("device", [&] { device.validate(); });
    wrap("campaign", [&] { campaign_config().validate(); });
    curation.validate();
    model.validate();
    if (model.k_ref > reference_drops)
        throw ConfigError("model.k_ref", "model.k_ref: exceeds campaign.reference_drops");
    if (train.batch == 0) throw ConfigError("train.batch", "train.batch: must be at least 1");
    if (counting.batch == 0) throw ConfigError("counting.batch", "counting.batch: must be at least 1");
    if (bench.devices == 0 || bench.drops == 0) throw ConfigError("bench.drops", "bench: devices and drops must be positive");
    wrap("bench.species", [&] { dropsim::species_from_string(bench.species); });
}

RunConfig parse(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("", fmt::format("line {}: expected 'key = value'", lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "output_dir") {
            cfg.output_dir = value;
            continue;
        }
        const auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError(key, fmt::format("unknown configuration key '{}'", key));
        if (!seen.emplace(key, value).second) throw ConfigError(key, fmt::format("key '{}' given twice", key));
        it->second.set(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config", "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

void apply_environment(RunConfig& cfg) {
    if (const char* s = std::getenv("PESTSIM_SEED"); s && *s) cfg.seed = to_u64("PESTSIM_SEED", s);
}

std::string resolved(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
    return out;
}

std::vector<std::string> known_keys() {
    std::vector<std::string> keys{"output_dir"};
    for (const auto& [key, field] : fields()) keys.push_back(key);
    return keys;
}

}  // namespace pestsim::config
