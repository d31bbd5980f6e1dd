#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <json.hpp>

#include "pestsim/cmmformer.hpp"
#include "pestsim/config.hpp"
#include "pestsim/curation.hpp"
#include "pestsim/dropsim.hpp"
#include "pestsim/errors.hpp"
#include "pestsim/features.hpp"
#include "pestsim/metrics.hpp"
#include "pestsim/optics.hpp"
#include "pestsim/pipeline.hpp"

namespace fs = std::filesystem;

namespace pestsim::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

config::RunConfig load_config(const std::string& explicit_path, const fs::path& fallback_dir) {
    fs::path path = explicit_path;
    if (path.empty()) {
        path = fallback_dir / "config.resolved";
        if (!fs::exists(path)) throw ConfigError("config", "no --config given and no " + path.string());
    }
    auto cfg = config::load(path);
    config::apply_environment(cfg);
    cfg.validate();
    return cfg;
}

void prepare_out(const fs::path& out, const config::RunConfig& cfg) {
    fs::create_directories(out);
    write_text(out / "config.resolved", config::resolved(cfg));
}

std::vector<std::string> class_names(const std::string& task) {
    if (task == "counting") return {curation::kCountingClasses.begin(), curation::kCountingClasses.end()};
    return {curation::kSpeciesClasses.begin(), curation::kSpeciesClasses.end()};
}

void print_metrics(const std::string& label, const metrics::ClassificationMetrics& m) {
    fmt::print("{:<12} kappa {:.4f}  recall {:.4f}  precision {:.4f}  f1 {:.4f}  accuracy {:.4f}  (n={})\n", label,
               m.kappa, m.macro_recall, m.macro_precision, m.macro_f1, m.accuracy, m.support);
}

}  // namespace

int simulate(const SimulateArgs& a) {
    auto cfg = config::load(a.config);
    config::apply_environment(cfg);
    cfg.validate();
    const fs::path out = a.out;
    prepare_out(out, cfg);

    const auto result = dropsim::simulate_campaign(cfg.campaign_config());
    std::vector<WaveformRecord> refs;
    for (const auto& d : cfg.devices()) {
        auto r = dropsim::build_reference_drops(d, cfg.reference_drops);
        refs.insert(refs.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    write_jsonl(out / "records.jsonl", result.records);
    write_binary(out / "records.bin", result.records);
    write_jsonl(out / "references.jsonl", refs);
    write_binary(out / "references.bin", refs);
    write_text(out / "truth.csv", dropsim::truth_csv(result.truth));
    fmt::print("simulated {} events on {} devices: {} records, {} reference drops -> {}\n", result.truth.size(),
               cfg.n_devices, result.records.size(), refs.size(), out.string());
    return 0;
}

int curate(const CurateArgs& a) {
    const fs::path in = a.in, out = a.out;
    auto cfg = load_config(a.config, in);
    if (a.oversample_first) cfg.curation.oversample_first = true;
    auto ds = curation::curate(read_jsonl(in / "records.jsonl"), read_jsonl(in / "references.jsonl"), cfg.curation);
    prepare_out(out, cfg);
    curation::write_dataset(out, ds, cfg.curation);
    if (fs::exists(in / "truth.csv")) write_text(out / "truth.csv", read_text(in / "truth.csv"));
    std::map<std::string, std::size_t> summary;
    for (const auto& [id, d] : ds.provenance) ++summary[curation::to_string(d)];
    fmt::print("curated {} records:", ds.provenance.size());
    for (const auto& [name, n] : summary) fmt::print(" {}={}", name, n);
    fmt::print("\ncounting entries {}, species entries {} -> {}\n", ds.counting.size(), ds.species.size(),
               out.string());
    return 0;
}

int bench_layout(const BenchArgs& a) {
    auto cfg = config::load(a.config);
    config::apply_environment(cfg);
    cfg.validate();
    const fs::path out = a.out.empty() ? fs::path(cfg.output_dir) : fs::path(a.out);
    if (out.empty()) throw ConfigError("output_dir", "bench-layout needs output_dir in the config or --out");
    const auto result = pipeline::bench_layout(cfg);
    prepare_out(out, cfg);
    write_text(out / "bench.csv", pipeline::bench_csv(result));
    fmt::print("tailored circuit: r_r = {} ohm, r_e = {} ohm\n", result.tailored.r_r, result.tailored.r_e);
    for (const auto& r : result.rows)
        if (r.device == "all")
            fmt::print("{:<14} eta = {:.2f} +/- {:.2f} mV over {} drops\n", r.combination, r.mean_eta, r.sd_eta,
                       r.drops);
    return 0;
}

namespace {

void train_counting(const curation::CuratedDataset& ds, const config::RunConfig& cfg, const fs::path& out) {
    const auto train = pipeline::counting_data(ds, curation::Split::Train);
    const auto val = pipeline::counting_data(ds, curation::Split::Val);
    features::TrainHistory hist;
    const auto net = features::counting_train(train.x, train.y, val.x, val.y, cfg.counting, &hist);
    save_checkpoint(out / "counting.pstm", net.params);
    nlohmann::ordered_json h;
    h["task"] = "counting";
    h["train_loss"] = hist.train_loss;
    h["val_accuracy"] = hist.val_accuracy;
    h["best_epoch"] = hist.best_epoch;
    write_text(out / "history.json", h.dump(1) + "\n");
    fmt::print("trained counting network on {} rows; best validation epoch {}\n", train.x.rows(), hist.best_epoch);
}

cmm::Model train_species(const curation::CuratedDataset& ds, const config::RunConfig& cfg,
                         const cmm::Ablation& ablation, cmm::History* hist) {
    const auto train = pipeline::species_data(ds, curation::Split::Train);
    const auto val = pipeline::species_data(ds, curation::Split::Val);
    const auto pools = pipeline::reference_pools(ds, cfg.model.pool_capacity);
    return cmm::train(cfg.model, ablation, train, val, pools, cfg.train, hist);
}

features::CountingNet load_counting(const fs::path& path) {
    features::CountingNet net;
    net.params = load_checkpoint(path);
    for (const char* name : {"mean", "scale", "w1", "b1", "w2", "b2"})
        if (!net.params.contains(name)) throw DataError(fmt::format("counting checkpoint lacks '{}'", name));
    net.inputs = static_cast<std::size_t>(net.params.at("w1").rows());
    net.hidden = static_cast<std::size_t>(net.params.at("w1").cols());
    return net;
}

}  // namespace

int train(const TrainArgs& a) {
    const fs::path data = a.data, out = a.out;
    const auto cfg = load_config(a.config, data);
    const auto ds = curation::read_dataset(data);
    prepare_out(out, cfg);
    if (a.task == "counting") {
        if (!a.ablate.empty()) throw ConfigError("ablate", "ablations apply to the species model only");
        train_counting(ds, cfg, out);
        return 0;
    }
    cmm::History hist;
    const auto model = train_species(ds, cfg, cmm::Ablation::parse(a.ablate), &hist);
    model.save(out / "model.pstm");
    write_text(out / "history.json", hist.to_json().dump(1) + "\n");
    fmt::print("trained species model for {} epochs; best validation epoch {}\n", hist.epochs_run, hist.best_epoch);
    return 0;
}

int eval(const EvalArgs& a) {
    const fs::path data = a.data;
    // --model names the train output directory or a checkpoint inside it
    fs::path model_dir = a.model;
    if (!a.model.empty() && fs::is_regular_file(model_dir)) model_dir = model_dir.parent_path();
    const auto cfg = load_config(a.config, a.model.empty() ? data : model_dir);
    const auto ds = curation::read_dataset(data);
    const auto names = class_names(a.task);

    std::vector<int> truth, pred;
    std::vector<std::string> devices;
    nlohmann::ordered_json report;
    report["task"] = a.task;
    if (a.task == "counting") {
        if (!a.ablate.empty()) throw ConfigError("ablate", "ablations apply to the species model only");
        if (a.model.empty()) throw ConfigError("model", "eval --task counting needs --model");
        const auto net = load_counting(model_dir / "counting.pstm");
        const auto test = pipeline::counting_data(ds, curation::Split::Test);
        if (test.y.empty()) throw DataError("empty test split");
        truth = test.y;
        devices = test.devices;
        pred = features::counting_predict(net, test.x);
        std::vector<long> counts(names.size(), 0);
        for (int y : truth) ++counts[static_cast<std::size_t>(y)];
        const double majority =
            static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(truth.size());
        report["majority_baseline"] = majority;
        fmt::print("majority-class baseline accuracy {:.4f}\n", majority);
    } else {
        cmm::Ablation ablation;
        std::optional<cmm::Model> model;
        if (!a.ablate.empty()) {
            ablation = cmm::Ablation::parse(a.ablate);
            model = train_species(ds, cfg, ablation, nullptr);
        } else if (!a.model.empty()) {
            model = cmm::Model::load(model_dir / "model.pstm");
            ablation = model->ablation();
        } else {
            throw ConfigError("model", "eval --task species needs --model or --ablate");
        }
        const auto test = pipeline::species_data(ds, curation::Split::Test);
        if (test.empty()) throw DataError("empty test split");
        const auto pools = pipeline::reference_pools(ds, model->config().pool_capacity);
        pred = cmm::predict(*model, test, pools, cfg.eval_seed);
        for (const auto& w : test) {
            truth.push_back(w.label);
            devices.push_back(w.device_id);
        }
        report["ablation"] = ablation.to_json();
    }

    const auto ev = pipeline::evaluate(truth, pred, devices, names);
    const auto overall = metrics::classification_metrics(ev.overall);
    print_metrics("overall", overall);
    report["overall"] = metrics::to_json(overall);
    report["confusion"] = metrics::to_json(ev.overall);
    std::string csv = metrics::metrics_csv_header() + metrics::metrics_csv_row("overall", overall);
    if (a.per_device) {
        nlohmann::ordered_json per = nlohmann::ordered_json::object();
        double mean_acc = 0.0;
        for (const auto& [dev, cm] : ev.per_device) {
            const auto m = metrics::classification_metrics(cm);
            print_metrics(dev, m);
            per[dev] = metrics::to_json(m);
            csv += metrics::metrics_csv_row(dev, m);
            mean_acc += m.accuracy / static_cast<double>(ev.per_device.size());
        }
        report["per_device"] = per;
        report["mean_device_accuracy"] = mean_acc;
        fmt::print("mean per-device accuracy {:.4f}\n", mean_acc);
    }
    if (!a.out.empty()) {
        const fs::path out = a.out;
        prepare_out(out, cfg);
        write_text(out / "metrics.json", report.dump(1) + "\n");
        write_text(out / "metrics.csv", csv);
        write_text(out / "confusion.csv", metrics::to_csv(ev.overall));
        for (const auto& [dev, cm] : ev.per_device)
            if (a.per_device) write_text(out / fmt::format("confusion_{}.csv", dev), metrics::to_csv(cm));
    }
    return 0;
}

namespace {

std::vector<fs::path> find_files(const fs::path& root, const std::string& name) {
    std::vector<fs::path> out;
    if (fs::is_regular_file(root / name)) out.push_back(root / name);
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file() && entry.path().filename() == name && entry.path() != root / name)
            out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::string source_of(const fs::path& file, const fs::path& root) {
    const auto rel = fs::relative(file.parent_path(), root).generic_string();
    return rel.empty() ? "." : rel;
}

std::string feature_histograms(const fs::path& root) {
    constexpr std::size_t kBins = 20;
    constexpr std::array<const char*, 3> kNames = {"duration", "peak", "energy"};
    std::string out = "source,feature,group,bin,lo,hi,count\n";
    for (const auto& file : find_files(root, "records.jsonl")) {
        const auto records = read_jsonl(file);
        if (records.empty()) continue;
        std::map<std::string, std::vector<std::array<double, 3>>> groups;
        std::array<double, 3> lo{}, hi{};
        lo.fill(1e300);
        hi.fill(-1e300);
        for (const auto& r : records) {
            const auto f = curation::debris_features(r);
            groups[r.truth ? r.truth->scenario : "unlabelled"].push_back(f);
            for (std::size_t k = 0; k < 3; ++k) {
                lo[k] = std::min(lo[k], f[k]);
                hi[k] = std::max(hi[k], f[k]);
            }
        }
        for (std::size_t k = 0; k < 3; ++k) {
            const double width = hi[k] > lo[k] ? (hi[k] - lo[k]) / kBins : 1.0;
            for (const auto& [group, feats] : groups) {
                std::vector<long> counts(kBins, 0);
                for (const auto& f : feats)
                    ++counts[std::min(kBins - 1, static_cast<std::size_t>((f[k] - lo[k]) / width))];
                for (std::size_t b = 0; b < kBins; ++b)
                    out += fmt::format("{},{},{},{},{:.6g},{:.6g},{}\n", source_of(file, root), kNames[k], group, b,
                                       lo[k] + width * static_cast<double>(b),
                                       lo[k] + width * static_cast<double>(b + 1), counts[b]);
            }
        }
    }
    return out;
}

std::string coverage_grid(const optics::BeamGeometry& geom, double step) {
    std::string out = "t_mm,r_mm,pair1,pair2\n";
    const double R = geom.dropzone_radius;
    const auto n = static_cast<long>(std::floor(R / step));
    for (long i = -n; i <= n; ++i)
        for (long j = -n; j <= n; ++j) {
            const double t = static_cast<double>(i) * step, r = static_cast<double>(j) * step;
            if (t * t + r * r > R * R) continue;
            out += fmt::format("{:.4f},{:.4f},{},{}\n", t, r, optics::in_reach(t, r, geom, 1) ? 1 : 0,
                               optics::in_reach(t, r, geom, 2) ? 1 : 0);
        }
    return out;
}

std::string metric_table(const fs::path& root) {
    std::string out = "source,task,label,kappa,recall,precision,f1,accuracy,support\n";
    for (const auto& file : find_files(root, "metrics.json")) {
        const auto j = nlohmann::json::parse(read_text(file));
        const auto row = [&](const std::string& label, const nlohmann::json& m) {
            out += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", source_of(file, root),
                               j.value("task", ""), label, m.at("kappa").get<double>(), m.at("recall").get<double>(),
                               m.at("precision").get<double>(), m.at("f1").get<double>(),
                               m.at("accuracy").get<double>(), m.at("support").get<long>());
        };
        row("overall", j.at("overall"));
        if (j.contains("per_device"))
            for (const auto& [dev, m] : j.at("per_device").items()) row(dev, m);
    }
    return out;
}

std::string pca_table(const fs::path& root) {
    std::string out = "source,record_id,label,pc1,pc2\n";
    for (const auto& file : find_files(root, "manifest.json")) {
        const auto ds = curation::read_dataset(file.parent_path());
        std::vector<std::string> ids;
        std::vector<int> labels;
        std::vector<std::vector<double>> rows;
        for (const auto& e : ds.counting) {
            if (e.duplicate) continue;
            ids.push_back(e.id);
            labels.push_back(e.label);
            rows.push_back(features::extract(ds.record(e.id)).flatten());
        }
        if (rows.size() < 2) continue;
        Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t k = 0; k < rows[i].size(); ++k)
                x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
        const Eigen::RowVectorXd mean = x.colwise().mean();
        Matrix z = x.rowwise() - mean;
        Eigen::RowVectorXd sd = (z.array().square().colwise().mean()).sqrt();
        for (Eigen::Index k = 0; k < sd.size(); ++k) z.col(k) /= sd(k) > 1e-12 ? sd(k) : 1.0;
        const Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(z.rows() - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        const Eigen::Index d = cov.rows();
        Eigen::MatrixXd basis(d, 2);
        basis.col(0) = eig.eigenvectors().col(d - 1);
        basis.col(1) = eig.eigenvectors().col(d - 2);
        // Fix the sign so the largest loading of each axis is positive.
        for (Eigen::Index c = 0; c < 2; ++c) {
            Eigen::Index arg = 0;
            basis.col(c).cwiseAbs().maxCoeff(&arg);
            if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
        }
        const Eigen::MatrixXd proj = z * basis;
        for (std::size_t i = 0; i < ids.size(); ++i)
            out += fmt::format("{},{},{},{:.6f},{:.6f}\n", source_of(file, root), ids[i], labels[i],
                               proj(static_cast<Eigen::Index>(i), 0), proj(static_cast<Eigen::Index>(i), 1));
    }
    return out;
}

}  // namespace

int report(const ReportArgs& a) {
    const fs::path in = a.in, out = a.out;
    if (!fs::is_directory(in)) throw DataError("no such run directory " + in.string());
    config::RunConfig cfg;
    if (fs::exists(in / "config.resolved")) cfg = config::load(in / "config.resolved");
    fs::create_directories(out);

    write_text(out / "feature_histograms.csv", feature_histograms(in));
    std::string summary = "layout,both_pairs,one_pair,blind\n";
    for (auto layout : {optics::Layout::Symmetric, optics::Layout::AsymmetricOrthogonal}) {
        auto geom = cfg.device.geometry;
        geom.layout = layout;
        const auto name = optics::to_string(layout);
        write_text(out / fmt::format("coverage_{}.csv", name), coverage_grid(geom, 0.05));
        const auto rep = optics::coverage_map(geom, 0.05);
        summary += fmt::format("{},{:.6f},{:.6f},{:.6f}\n", name, rep.both_pairs, rep.one_pair, rep.blind);
    }
    write_text(out / "coverage_summary.csv", summary);
    write_text(out / "metrics_table.csv", metric_table(in));
    std::string bench = "source,combination,device,mean_eta_mv,sd_eta_mv,drops\n";
    for (const auto& file : find_files(in, "bench.csv")) {
        std::istringstream lines(read_text(file));
        std::string line;
        std::getline(lines, line);
        while (std::getline(lines, line))
            if (!line.empty()) bench += source_of(file, in) + "," + line + "\n";
    }
    write_text(out / "bench_table.csv", bench);
    write_text(out / "pca.csv", pca_table(in));
    fmt::print("report written to {}\n", out.string());
    return 0;
}

}  // namespace pestsim::cli
