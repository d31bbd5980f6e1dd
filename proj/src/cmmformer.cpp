#include "pestsim/cmmformer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "pestsim/errors.hpp"
#include "pestsim/rng.hpp"

namespace pestsim::cmm {

void ModelConfig::validate() const {
    if (T == 0 || C == 0 || C_prime == 0 || layers == 0 || heads == 0 || d_model == 0 || classes == 0 ||
        head_hidden == 0)
        throw ConfigError("model", "model dimensions must be positive");
    if (d_model % heads != 0) throw ConfigError("model.d_model", "d_model must be divisible by heads");
    if (k_ref == 0) throw ConfigError("model.k_ref", "k_ref must be at least 1");
    if (k_ref > pool_capacity) throw ConfigError("model.k_ref", "k_ref must not exceed the pool capacity");
    if (kernel_scales.empty()) throw ConfigError("model.kernel_scales", "at least one kernel scale is needed");
    for (int s : kernel_scales)
        if (s < 1 || s % 2 == 0) throw ConfigError("model.kernel_scales", "kernel sizes must be odd and positive");
    if (!(full_scale > 0.0)) throw ConfigError("model.full_scale", "must be positive");
}

nlohmann::ordered_json ModelConfig::to_json() const {
    return {{"T", T},
            {"C", C},
            {"C_prime", C_prime},
            {"layers", layers},
            {"heads", heads},
            {"d_model", d_model},
            {"k_ref", k_ref},
            {"pool_capacity", pool_capacity},
            {"kernel_scales", kernel_scales},
            {"classes", classes},
            {"head_hidden", head_hidden},
            {"full_scale", full_scale}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.T = j.at("T");
    c.C = j.at("C");
    c.C_prime = j.at("C_prime");
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.d_model = j.at("d_model");
    c.k_ref = j.at("k_ref");
    c.pool_capacity = j.at("pool_capacity");
    c.kernel_scales = j.at("kernel_scales").get<std::vector<int>>();
    c.classes = j.at("classes");
    c.head_hidden = j.at("head_hidden");
    c.full_scale = j.at("full_scale");
    c.validate();
    return c;
}

nlohmann::ordered_json Ablation::to_json() const {
    return {{"cmm", cmm}, {"pos_enc", pos_enc}, {"attention", attention}, {"aggregation", aggregation}};
}

Ablation Ablation::from_json(const nlohmann::json& j) {
    return {j.at("cmm").get<bool>(), j.at("pos_enc").get<bool>(), j.at("attention").get<bool>(),
            j.at("aggregation").get<bool>()};
}

Ablation Ablation::parse(const std::string& name) {
    Ablation a;
    if (name.empty() || name == "none") return a;
    if (name == "cmm")
        a.cmm = true;
    else if (name == "pos_enc")
        a.pos_enc = true;
    else if (name == "attention")
        a.attention = true;
    else if (name == "aggregation")
        a.aggregation = true;
    else
        throw ConfigError("ablate", "unknown ablation '" + name + "'");
    return a;
}

RefWaves sample_refwaves(std::span<const Matrix> pool, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ContractError("ref-wave sample size must be at least 1");
    if (k > pool.size())
        throw ContractError(fmt::format("cannot draw {} ref-waves from a pool of {}", k, pool.size()));
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(seed, {0x4EF});
    // Partial Fisher-Yates: the first k slots are a uniform sample in draw order.
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    RefWaves out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(&pool[idx[i]]);
    return out;
}

Matrix normalize(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    const auto n = static_cast<double>(x.rows());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double mean = x.col(c).mean();
        const double sd = std::sqrt((x.col(c).array() - mean).square().sum() / n);
        out.col(c) = (x.col(c).array() - mean) / (sd + 1e-6);
    }
    return out;
}

Vector pool_statistics(const RefWaves& refs, std::size_t channels, double full_scale) {
    if (refs.empty()) throw ContractError("pool statistics need at least one ref-wave");
    const auto c = static_cast<Eigen::Index>(channels);
    Vector s = Vector::Zero(2 * c);
    double n = 0.0;
    for (const auto* w : refs) {
        if (w->cols() != c) throw ContractError("ref-wave channel count mismatch");
        s.head(c) += w->colwise().sum().transpose();
        n += static_cast<double>(w->rows());
    }
    s.head(c) /= n;
    for (const auto* w : refs)
        for (Eigen::Index ch = 0; ch < c; ++ch) s(c + ch) += (w->col(ch).array() - s(ch)).square().sum();
    for (Eigen::Index ch = 0; ch < c; ++ch) s(c + ch) = std::sqrt(s(c + ch) / n);
    return s / full_scale;
}

Matrix record_matrix(const WaveformRecord& rec) {
    if (rec.ch1.size() != rec.ch2.size()) throw DataError("record '" + rec.id() + "' has unequal channels");
    Matrix x(static_cast<Eigen::Index>(rec.ch1.size()), 2);
    for (std::size_t t = 0; t < rec.ch1.size(); ++t) {
        x(static_cast<Eigen::Index>(t), 0) = rec.ch1[t];
        x(static_cast<Eigen::Index>(t), 1) = rec.ch2[t];
    }
    return x;
}

struct LayerTrace {
    Matrix h, w, e, q, k, v, o, z, g;
    std::vector<Matrix> attn;
    Vector s;
};

namespace {

// Same-padded 2D cross-correlation of a T x C' plane with an odd square kernel.
Matrix correlate(const Matrix& z, const Matrix& kernel) {
    const Eigen::Index rows = z.rows(), cols = z.cols(), s = kernel.rows(), r = s / 2;
    Matrix out = Matrix::Zero(rows, cols);
    for (Eigen::Index a = 0; a < s; ++a)
        for (Eigen::Index b = 0; b < s; ++b) {
            const double k = kernel(a, b);
            const Eigen::Index dt = a - r, dj = b - r;
            const Eigen::Index t0 = std::max<Eigen::Index>(0, -dt), t1 = std::min(rows, rows - dt);
            const Eigen::Index j0 = std::max<Eigen::Index>(0, -dj), j1 = std::min(cols, cols - dj);
            if (t1 <= t0 || j1 <= j0) continue;
            out.block(t0, j0, t1 - t0, j1 - j0) += k * z.block(t0 + dt, j0 + dj, t1 - t0, j1 - j0);
        }
    return out;
}

void softmax_rows(Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double mx = m.row(i).maxCoeff();
        m.row(i) = (m.row(i).array() - mx).exp();
        m.row(i) /= m.row(i).sum();
    }
}

}  // namespace

Model::Model(ModelConfig cfg, Ablation ablation) : cfg_(std::move(cfg)), ablation_(ablation) {
    cfg_.validate();
    const auto C = static_cast<Eigen::Index>(cfg_.C);
    const auto Cp = static_cast<Eigen::Index>(cfg_.C_prime);
    const auto T = static_cast<Eigen::Index>(cfg_.T);
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const auto name = [l](const std::string& n) { return fmt::format("l{}.{}", l, n); };
        LayerSlots s{};
        s.w0 = params.add(name("w0"), C, Cp);
        s.a = params.add(name("a"), 2 * C, C * Cp);
        s.p = params.add(name("p"), T, Cp);
        s.wq = params.add(name("wq"), Cp, d);
        s.wk = params.add(name("wk"), Cp, d);
        s.wv = params.add(name("wv"), Cp, d);
        s.wo = params.add(name("wo"), d, Cp);
        for (int k : cfg_.kernel_scales) {
            s.kernel.push_back(params.add(name(fmt::format("k{}", k)), k, k));
            s.kernel_bias.push_back(params.add(name(fmt::format("kb{}", k)), 1, 1));
        }
        s.m = params.add(name("m"), Cp, C);
        s.bm = params.add(name("bm"), 1, C);
        slots_.push_back(std::move(s));
    }
    const auto hh = static_cast<Eigen::Index>(cfg_.head_hidden);
    hw1_ = params.add("head.w1", C, hh);
    hb1_ = params.add("head.b1", 1, hh);
    hw2_ = params.add("head.w2", hh, static_cast<Eigen::Index>(cfg_.classes));
    hb2_ = params.add("head.b2", 1, static_cast<Eigen::Index>(cfg_.classes));
}

void Model::init(std::uint64_t seed) {
    auto rng = make_rng(seed, {0x1417});
    const auto fill = [&](std::size_t slot, double sd) {
        std::normal_distribution<double> n(0.0, sd);
        for (auto& v : params[slot].reshaped()) v = n(rng);
    };
    const auto C = static_cast<double>(cfg_.C);
    const auto Cp = static_cast<double>(cfg_.C_prime);
    const auto d = static_cast<double>(cfg_.d_model);
    params.set_zero();
    for (const auto& s : slots_) {
        fill(s.w0, 1.0 / std::sqrt(C));
        fill(s.a, 0.1);
        fill(s.p, 0.1);
        fill(s.wq, 1.0 / std::sqrt(Cp));
        fill(s.wk, 1.0 / std::sqrt(Cp));
        fill(s.wv, 1.0 / std::sqrt(Cp));
        fill(s.wo, 1.0 / std::sqrt(d));
        for (std::size_t k = 0; k < s.kernel.size(); ++k)
            fill(s.kernel[k], 1.0 / static_cast<double>(cfg_.kernel_scales[k]));
        // Small but non-zero so every parameter upstream receives gradient.
        fill(s.m, 0.1 / std::sqrt(Cp));
    }
    fill(hw1_, std::sqrt(2.0 / C));
    // The time-mean of a z-scored input starts near zero; a positive bias keeps
    // the hidden units off the ReLU kink.
    params[hb1_].setConstant(0.1);
    fill(hw2_, std::sqrt(1.0 / static_cast<double>(cfg_.head_hidden)));
}

Matrix Model::projection(std::size_t layer, const Vector& s) const {
    const auto C = static_cast<Eigen::Index>(cfg_.C);
    const auto Cp = static_cast<Eigen::Index>(cfg_.C_prime);
    if (ablation_.cmm) {
        Matrix w = Matrix::Zero(C, Cp);
        for (Eigen::Index c = 0; c < std::min(C, Cp); ++c) w(c, c) = 1.0;
        return w;
    }
    if (s.size() != 2 * C) throw ContractError("pool statistics must have 2C entries");
    const auto& sl = slots_.at(layer);
    const Matrix flat = s.transpose() * params[sl.a];  // 1 x (C * C')
    return params[sl.w0] + Eigen::Map<const Matrix>(flat.data(), C, Cp);
}

Matrix Model::layer_forward(std::size_t layer, const Matrix& h, const Vector& s, LayerTrace* tr) const {
    const auto& sl = slots_.at(layer);
    if (h.rows() != static_cast<Eigen::Index>(cfg_.T) || h.cols() != static_cast<Eigen::Index>(cfg_.C))
        throw ContractError(fmt::format("layer input must be {}x{}, got {}x{}", cfg_.T, cfg_.C, h.rows(), h.cols()));
    LayerTrace local;
    LayerTrace& t = tr ? *tr : local;
    t.h = h;
    t.s = s;
    t.w = projection(layer, s);
    t.e = h * t.w;
    if (!ablation_.pos_enc) t.e += params[sl.p];

    if (ablation_.attention) {
        t.z = t.e;
    } else {
        t.q = t.e * params[sl.wq];
        t.k = t.e * params[sl.wk];
        t.v = t.e * params[sl.wv];
        const auto dk = static_cast<Eigen::Index>(cfg_.d_model / cfg_.heads);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
        t.o.resize(t.q.rows(), t.q.cols());
        t.attn.resize(cfg_.heads);
        for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
            const auto off = static_cast<Eigen::Index>(hd) * dk;
            Matrix a = scale * (t.q.middleCols(off, dk) * t.k.middleCols(off, dk).transpose());
            softmax_rows(a);
            t.o.middleCols(off, dk) = a * t.v.middleCols(off, dk);
            t.attn[hd] = std::move(a);
        }
        t.z = t.o * params[sl.wo];
    }

    if (ablation_.aggregation) {
        t.g = t.z;
    } else {
        t.g = Matrix::Zero(t.z.rows(), t.z.cols());
        for (std::size_t k = 0; k < sl.kernel.size(); ++k)
            t.g += (correlate(t.z, params[sl.kernel[k]]).array() + params[sl.kernel_bias[k]](0, 0)).matrix();
        t.g /= static_cast<double>(sl.kernel.size());
    }
    Matrix out = (t.g * params[sl.m]).rowwise() + params[sl.bm].row(0);
    return h + out;
}

Matrix Model::layer_backward(std::size_t layer, const LayerTrace& t, const Matrix& dout, ParamSet& grads) const {
    const auto& sl = slots_.at(layer);
    Matrix dh = dout;  // residual path
    grads[sl.m] += t.g.transpose() * dout;
    grads[sl.bm] += dout.colwise().sum();
    const Matrix dg = dout * params[sl.m].transpose();

    Matrix dz;
    if (ablation_.aggregation) {
        dz = dg;
    } else {
        const double inv = 1.0 / static_cast<double>(sl.kernel.size());
        dz = Matrix::Zero(t.z.rows(), t.z.cols());
        const Eigen::Index rows = t.z.rows(), cols = t.z.cols();
        for (std::size_t k = 0; k < sl.kernel.size(); ++k) {
            const auto& ker = params[sl.kernel[k]];
            auto& dker = grads[sl.kernel[k]];
            const Eigen::Index s = ker.rows(), r = s / 2;
            grads[sl.kernel_bias[k]](0, 0) += inv * dg.sum();
            for (Eigen::Index a = 0; a < s; ++a)
                for (Eigen::Index b = 0; b < s; ++b) {
                    const Eigen::Index dt = a - r, dj = b - r;
                    const Eigen::Index t0 = std::max<Eigen::Index>(0, -dt), t1 = std::min(rows, rows - dt);
                    const Eigen::Index j0 = std::max<Eigen::Index>(0, -dj), j1 = std::min(cols, cols - dj);
                    if (t1 <= t0 || j1 <= j0) continue;
                    const auto g_blk = dg.block(t0, j0, t1 - t0, j1 - j0);
                    dker(a, b) += inv * g_blk.cwiseProduct(t.z.block(t0 + dt, j0 + dj, t1 - t0, j1 - j0)).sum();
                    dz.block(t0 + dt, j0 + dj, t1 - t0, j1 - j0) += (inv * ker(a, b)) * g_blk;
                }
        }
    }

    Matrix de;
    if (ablation_.attention) {
        de = dz;
    } else {
        grads[sl.wo] += t.o.transpose() * dz;
        const Matrix d_o = dz * params[sl.wo].transpose();
        const auto dk = static_cast<Eigen::Index>(cfg_.d_model / cfg_.heads);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
        Matrix dq(t.q.rows(), t.q.cols()), dkm(t.k.rows(), t.k.cols()), dv(t.v.rows(), t.v.cols());
        for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
            const auto off = static_cast<Eigen::Index>(hd) * dk;
            const Matrix& a = t.attn[hd];
            const auto doh = d_o.middleCols(off, dk);
            const Matrix da = doh * t.v.middleCols(off, dk).transpose();
            dv.middleCols(off, dk) = a.transpose() * doh;
            const Vector row_dot = (da.cwiseProduct(a)).rowwise().sum();
            const Matrix ds = scale * (a.array() * (da.colwise() - row_dot).array()).matrix();
            dq.middleCols(off, dk) = ds * t.k.middleCols(off, dk);
            dkm.middleCols(off, dk) = ds.transpose() * t.q.middleCols(off, dk);
        }
        grads[sl.wq] += t.e.transpose() * dq;
        grads[sl.wk] += t.e.transpose() * dkm;
        grads[sl.wv] += t.e.transpose() * dv;
        de = dq * params[sl.wq].transpose() + dkm * params[sl.wk].transpose() + dv * params[sl.wv].transpose();
    }

    if (!ablation_.pos_enc) grads[sl.p] += de;
    const Matrix dw = t.h.transpose() * de;  // C x C'
    dh += de * t.w.transpose();
    if (!ablation_.cmm) {
        grads[sl.w0] += dw;
        const Eigen::Map<const Eigen::RowVectorXd> flat(dw.data(), dw.size());
        grads[sl.a] += t.s * flat;
    }
    return dh;
}

Matrix Model::cmm_forward(std::size_t layer, const Matrix& h, const Vector& s) const {
    return layer_forward(layer, h, s, nullptr);
}

std::vector<Matrix> Model::attention_weights(std::size_t layer, const Matrix& h, const Vector& s) const {
    LayerTrace t;
    layer_forward(layer, h, s, &t);
    return t.attn;
}

Matrix Model::encode(const Matrix& x, const Vector& s) const {
    Matrix h = normalize(x);
    for (std::size_t l = 0; l < cfg_.layers; ++l) h = layer_forward(l, h, s, nullptr);
    return h;
}

Vector Model::forward(const Matrix& x, const Vector& s) const {
    const Matrix h = encode(x, s);
    const Eigen::RowVectorXd m = h.colwise().mean();
    const Eigen::RowVectorXd a1 = (m * params[hw1_] + params[hb1_].row(0)).cwiseMax(0.0);
    return (a1 * params[hw2_] + params[hb2_].row(0)).transpose();
}

Vector Model::forward(const Matrix& x, const RefWaves& refs) const {
    return forward(x, pool_statistics(refs, cfg_.C, cfg_.full_scale));
}

double Model::loss(std::span<const Example> batch, ParamSet* grads) const {
    if (batch.empty()) throw ContractError("empty batch");
    const auto n = static_cast<double>(batch.size());
    double total = 0.0;
    std::vector<LayerTrace> traces(cfg_.layers);
    for (const auto& ex : batch) {
        if (ex.label < 0 || ex.label >= static_cast<int>(cfg_.classes)) throw ContractError("label out of range");
        Matrix h = normalize(*ex.x);
        for (std::size_t l = 0; l < cfg_.layers; ++l) h = layer_forward(l, h, ex.s, grads ? &traces[l] : nullptr);
        const Eigen::RowVectorXd m = h.colwise().mean();
        const Eigen::RowVectorXd pre = m * params[hw1_] + params[hb1_].row(0);
        const Eigen::RowVectorXd a1 = pre.cwiseMax(0.0);
        const Eigen::RowVectorXd logits = a1 * params[hw2_] + params[hb2_].row(0);
        const double mx = logits.maxCoeff();
        const Eigen::RowVectorXd e = (logits.array() - mx).exp();
        const double z = e.sum();
        total += -(logits(ex.label) - mx - std::log(z));
        if (!grads) continue;

        Eigen::RowVectorXd dlogits = e / z;
        dlogits(ex.label) -= 1.0;
        dlogits /= n;
        auto& g = *grads;
        g[hb2_] += dlogits;
        g[hw2_] += a1.transpose() * dlogits;
        const Eigen::RowVectorXd dpre = (dlogits * params[hw2_].transpose()).cwiseProduct(
            (pre.array() > 0.0).cast<double>().matrix());
        g[hb1_] += dpre;
        g[hw1_] += m.transpose() * dpre;
        const Eigen::RowVectorXd dm = dpre * params[hw1_].transpose();
        Matrix dh = (dm / static_cast<double>(h.rows())).replicate(h.rows(), 1);
        for (std::size_t l = cfg_.layers; l-- > 0;) dh = layer_backward(l, traces[l], dh, g);
    }
    return total / n;
}

void Model::zero_channel_merge() {
    for (const auto& s : slots_) {
        params[s.m].setZero();
        params[s.bm].setZero();
    }
}

void Model::save(const std::filesystem::path& path) const {
    save_checkpoint(path, params);
    nlohmann::ordered_json j;
    j["format"] = "PSTM";
    j["version"] = kCheckpointVersion;
    j["model"] = cfg_.to_json();
    j["ablation"] = ablation_.to_json();
    std::ofstream f(path.string() + ".json", std::ios::binary);
    f << j.dump(1) << "\n";
}

Model Model::load(const std::filesystem::path& path) {
    std::ifstream f(path.string() + ".json", std::ios::binary);
    if (!f) throw DataError("missing model manifest " + path.string() + ".json");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model manifest: ") + e.what());
    }
    Model m(ModelConfig::from_json(j.at("model")), Ablation::from_json(j.at("ablation")));
    ParamSet loaded = load_checkpoint(path);
    if (loaded.size() != m.params.size()) throw DataError("checkpoint does not match the model layout");
    for (std::size_t k = 0; k < loaded.size(); ++k) {
        if (loaded.name(k) != m.params.name(k) || loaded[k].rows() != m.params[k].rows() ||
            loaded[k].cols() != m.params[k].cols())
            throw DataError("checkpoint tensor '" + loaded.name(k) + "' does not match the model layout");
        m.params[k] = loaded[k];
    }
    return m;
}

GradCheckResult grad_check(Model& model, std::span<const Model::Example> batch, std::size_t count, double h,
                           std::uint64_t seed) {
    ParamSet grads = model.params.zeros_like();
    model.loss(batch, &grads);
    const std::size_t n = model.params.scalar_count();
    auto rng = make_rng(seed, {0x6C});
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    GradCheckResult r;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t k = pick(rng);
        double& p = model.params.scalar(k);
        const double saved = p;
        p = saved + h;
        const double up = model.loss(batch, nullptr);
        p = saved - h;
        const double down = model.loss(batch, nullptr);
        p = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = grads.scalar(k);
        const double err = std::abs(numeric - analytic);
        // Gradients far below the finite-difference noise floor are compared absolutely.
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        r.max_rel_error = std::max(r.max_rel_error, err / denom);
        r.mean_abs_error += err;
        ++r.checked;
    }
    if (r.checked) r.mean_abs_error /= static_cast<double>(r.checked);
    return r;
}

nlohmann::ordered_json History::to_json() const {
    return {{"train_loss", train_loss},
            {"val_accuracy", val_accuracy},
            {"best_epoch", best_epoch},
            {"epochs_run", epochs_run},
            {"step_ref_seeds", step_ref_seeds}};
}

namespace {

const std::vector<Matrix>& pool_for(const Pools& pools, const std::string& device) {
    const auto it = pools.find(device);
    if (it == pools.end() || it->second.empty()) throw DataError("no reference pool for device '" + device + "'");
    return it->second;
}

}  // namespace

std::vector<int> predict(const Model& model, std::span<const LabeledWave> set, const Pools& pools, std::uint64_t seed) {
    std::vector<int> out;
    out.reserve(set.size());
    const auto& cfg = model.config();
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto refs = sample_refwaves(pool_for(pools, set[i].device_id), cfg.k_ref, derive_seed(seed, {i}));
        const Vector logits = model.forward(set[i].x, refs);
        Eigen::Index arg = 0;
        logits.maxCoeff(&arg);
        out.push_back(static_cast<int>(arg));
    }
    return out;
}

Model train(const ModelConfig& cfg, const Ablation& ablation, std::span<const LabeledWave> train_set,
            std::span<const LabeledWave> val_set, const Pools& pools, const TrainConfig& tc, History* history) {
    if (train_set.empty()) throw DataError("no training examples");
    if (tc.batch == 0) throw ConfigError("train.batch", "batch size must be positive");
    for (const auto& ex : train_set) pool_for(pools, ex.device_id);
    for (const auto& ex : val_set) pool_for(pools, ex.device_id);

    Model model(cfg, ablation);
    model.init(tc.seed);
    Adam adam(model.params, {.lr = tc.lr});
    ParamSet grads = model.params.zeros_like();
    Model best = model;
    double best_acc = -1.0;
    std::size_t since_best = 0;
    History hist;
    const std::uint64_t val_seed = derive_seed(tc.seed, {0xEA});

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Model::Example> batch;
    for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
        auto rng = make_rng(tc.seed, {0x7E, epoch});
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0, b = 0; start < order.size(); start += tc.batch, ++b) {
            const std::size_t end = std::min(order.size(), start + tc.batch);
            const std::uint64_t step_seed = derive_seed(tc.seed, {0x5E, epoch, b});
            hist.step_ref_seeds.push_back(step_seed);
            batch.clear();
            for (std::size_t k = start; k < end; ++k) {
                const auto& ex = train_set[order[k]];
                const auto refs = sample_refwaves(pool_for(pools, ex.device_id), cfg.k_ref,
                                                  derive_seed(step_seed, {k - start}));
                batch.push_back({&ex.x, pool_statistics(refs, cfg.C, cfg.full_scale), ex.label});
            }
            grads.set_zero();
            epoch_loss += model.loss(batch, &grads) * static_cast<double>(end - start);
            adam.step(model.params, grads);
        }
        hist.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
        hist.epochs_run = epoch + 1;
        if (val_set.empty()) {
            best = model;
            continue;
        }
        const auto pred = predict(model, val_set, pools, val_seed);
        double correct = 0.0;
        for (std::size_t k = 0; k < pred.size(); ++k) correct += pred[k] == val_set[k].label;
        const double acc = correct / static_cast<double>(pred.size());
        hist.val_accuracy.push_back(acc);
        if (acc > best_acc) {
            best_acc = acc;
            best = model;
            hist.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    if (history) *history = std::move(hist);
    return best;
}

}  // namespace pestsim::cmm
