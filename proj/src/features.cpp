#include "pestsim/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numeric>
#include <random>

#include <fftw3.h>
#include <fmt/format.h>

#include "pestsim/curation.hpp"
#include "pestsim/errors.hpp"
#include "pestsim/rng.hpp"

namespace pestsim::features {

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<double> bin_means(std::vector<double> v, std::size_t bins) {
    if (v.empty()) return std::vector<double>(bins, 0.0);
    const std::size_t width = (v.size() + bins - 1) / bins;
    v.resize(width * bins, v.back());
    std::vector<double> out(bins);
    for (std::size_t b = 0; b < bins; ++b)
        out[b] = std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(b * width),
                                 v.begin() + static_cast<std::ptrdiff_t>((b + 1) * width), 0.0) /
                 static_cast<double>(width);
    return out;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

std::vector<std::complex<double>> rfft(std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    const std::size_t m = x.size() / 2 + 1;
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(x.size()));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(m));
    fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.get(), out.get(), FFTW_ESTIMATE);
    std::copy(x.begin(), x.end(), in.get());
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    std::vector<std::complex<double>> spec(m);
    for (std::size_t k = 0; k < m; ++k) spec[k] = {out.get()[k][0], out.get()[k][1]};
    return spec;
}

}  // namespace

ChannelStats stat_features(std::span<const double> x) {
    if (x.empty()) throw ContractError("stat_features needs a non-empty channel");
    const auto n = static_cast<double>(x.size());
    ChannelStats s;
    s.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - s.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        s.energy += v * v;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    s.sd = std::sqrt(m2);
    // Rounding in the mean leaves a residue of order eps^2 * mean^2 on constant input.
    if (m2 > 1e-24 * (s.mean * s.mean + 1.0)) {
        s.skewness = m3 / std::pow(m2, 1.5);
        s.kurtosis = m4 / (m2 * m2) - 3.0;
    }
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    s.max = sorted.back();
    s.median = quantile_sorted(sorted, 0.5);
    s.q25 = quantile_sorted(sorted, 0.25);
    s.q75 = quantile_sorted(sorted, 0.75);
    s.iqr = s.q75 - s.q25;
    return s;
}

std::vector<double> magnitude_spectrum(std::span<const double> x) {
    if (x.empty()) return {};
    const auto spec = rfft(x);
    std::vector<double> mag(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k) mag[k] = std::abs(spec[k]);
    return mag;
}

double spectral_energy(std::span<const double> x) {
    if (x.empty()) return 0.0;
    const auto mag = magnitude_spectrum(x);
    const std::size_t n = x.size();
    double sum = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        // Bins other than DC and (for even n) Nyquist stand for a mirrored pair.
        const bool single = k == 0 || (n % 2 == 0 && k == n / 2);
        sum += (single ? 1.0 : 2.0) * mag[k] * mag[k];
    }
    return sum / static_cast<double>(n);
}

Reduced reduce(std::span<const double> x, std::size_t bins) {
    if (bins == 0) throw ContractError("reduce needs at least one bin");
    Reduced r;
    r.time = bin_means(std::vector<double>(x.begin(), x.end()), bins);
    auto mag = magnitude_spectrum(x);
    mag.resize(std::max<std::size_t>(x.size() / 2, 1));
    r.freq = bin_means(std::move(mag), bins);
    return r;
}

std::vector<double> CountingFeatures::flatten() const {
    std::vector<double> out;
    for (int c = 0; c < 2; ++c) {
        for (double v : stats[c].values()) out.push_back(v);
        out.insert(out.end(), reduced[c].time.begin(), reduced[c].time.end());
        out.insert(out.end(), reduced[c].freq.begin(), reduced[c].freq.end());
    }
    return out;
}

CountingFeatures extract(const WaveformRecord& rec, std::size_t bins) {
    const auto base = curation::channel_baseline(rec);
    CountingFeatures f;
    const std::array<const std::vector<Count>*, 2> chans = {&rec.ch1, &rec.ch2};
    for (int c = 0; c < 2; ++c) {
        std::vector<double> x(chans[c]->size());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = (*chans[c])[i] - base[c];
        f.stats[c] = stat_features(x);
        f.reduced[c] = reduce(x, bins);
    }
    return f;
}

std::vector<std::string> feature_names(std::size_t bins) {
    std::vector<std::string> names;
    for (int c = 1; c <= 2; ++c) {
        for (auto s : kStatNames) names.push_back(fmt::format("ch{}_{}", c, s));
        for (std::size_t b = 0; b < bins; ++b) names.push_back(fmt::format("ch{}_time{}", c, b));
        for (std::size_t b = 0; b < bins; ++b) names.push_back(fmt::format("ch{}_freq{}", c, b));
    }
    return names;
}

std::string features_csv(const std::vector<std::string>& ids, const std::vector<std::vector<double>>& rows,
                         std::size_t bins) {
    if (ids.size() != rows.size()) throw ContractError("one id per feature row required");
    std::string out = "record_id";
    for (const auto& n : feature_names(bins)) out += "," + n;
    out += "\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out += ids[k];
        for (double v : rows[k]) out += fmt::format(",{:.10g}", v);
        out += "\n";
    }
    return out;
}

CountingNet init_counting_net(std::size_t inputs, std::size_t hidden, std::uint64_t seed) {
    if (inputs == 0 || hidden == 0) throw ContractError("network dimensions must be positive");
    CountingNet net;
    net.inputs = inputs;
    net.hidden = hidden;
    const auto d = static_cast<Eigen::Index>(inputs);
    const auto h = static_cast<Eigen::Index>(hidden);
    net.params.add("mean", 1, d);
    net.params.add("scale", 1, d);
    net.params.at("scale").setOnes();
    net.params.add("w1", d, h);
    net.params.add("b1", 1, h);
    net.params.add("w2", h, kCountingClasses);
    net.params.add("b2", 1, kCountingClasses);
    auto rng = make_rng(seed, {0xC0});
    std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / static_cast<double>(inputs)));
    std::normal_distribution<double> n2(0.0, std::sqrt(1.0 / static_cast<double>(hidden)));
    for (auto& v : net.params.at("w1").reshaped()) v = n1(rng);
    for (auto& v : net.params.at("w2").reshaped()) v = n2(rng);
    return net;
}

void fit_scaler(CountingNet& net, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != net.inputs) throw ContractError("feature dimension mismatch");
    if (x.rows() == 0) throw ContractError("cannot fit a scaler on no rows");
    const Vector mean = x.colwise().mean();
    const Vector sd = ((x.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt();
    net.params.at("mean") = mean.transpose();
    net.params.at("scale") = sd.transpose().unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });
}

namespace {

struct Forward {
    Matrix z, pre, h, logits;
};

Forward forward(const CountingNet& net, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != net.inputs)
        throw ContractError(fmt::format("expected {} features, got {}", net.inputs, x.cols()));
    const auto& p = net.params;
    Forward f;
    f.z = (x.rowwise() - p[0].row(0)).array().rowwise() / p[1].row(0).array();
    f.pre = (f.z * p[2]).rowwise() + p[3].row(0);
    f.h = f.pre.cwiseMax(0.0);
    f.logits = (f.h * p[4]).rowwise() + p[5].row(0);
    return f;
}

}  // namespace

Vector counting_forward(std::span<const double> features, const CountingNet& net) {
    Matrix x(1, static_cast<Eigen::Index>(features.size()));
    for (std::size_t k = 0; k < features.size(); ++k) x(0, static_cast<Eigen::Index>(k)) = features[k];
    return forward(net, x).logits.row(0).transpose();
}

double counting_loss(const CountingNet& net, const Matrix& x, std::span<const int> labels, ParamSet* grads) {
    if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ContractError("one label per row required");
    const auto f = forward(net, x);
    const auto b = static_cast<double>(x.rows());
    Matrix dlogits(f.logits.rows(), f.logits.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < f.logits.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= static_cast<int>(kCountingClasses)) throw ContractError("label out of range");
        const double mx = f.logits.row(i).maxCoeff();
        const Vector e = (f.logits.row(i).array() - mx).exp().transpose();
        const double s = e.sum();
        loss += -(f.logits(i, y) - mx - std::log(s));
        dlogits.row(i) = (e / s).transpose();
        dlogits(i, y) -= 1.0;
    }
    dlogits /= b;
    if (grads) {
        auto& g = *grads;
        g[5] += dlogits.colwise().sum();
        g[4] += f.h.transpose() * dlogits;
        const Matrix dh = (dlogits * net.params[4].transpose()).array() * (f.pre.array() > 0.0).cast<double>();
        g[3] += dh.colwise().sum();
        g[2] += f.z.transpose() * dh;
    }
    return loss / b;
}

std::vector<int> counting_predict(const CountingNet& net, const Matrix& x) {
    const auto f = forward(net, x);
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::Index arg = 0;
        f.logits.row(i).maxCoeff(&arg);
        out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
}

CountingNet counting_train(const Matrix& x, std::span<const int> y, const Matrix& x_val, std::span<const int> y_val,
                           const CountingTrainConfig& cfg, TrainHistory* history) {
    if (x.rows() == 0) throw DataError("no training rows");
    if (cfg.batch == 0) throw ContractError("batch size must be positive");
    CountingNet net = init_counting_net(static_cast<std::size_t>(x.cols()), cfg.hidden, cfg.seed);
    fit_scaler(net, x);
    Adam adam(net.params, {.lr = cfg.lr});
    ParamSet grads = net.params.zeros_like();
    const bool validate = x_val.rows() > 0;
    CountingNet best = net;
    double best_acc = -1.0;
    std::size_t since_best = 0;
    TrainHistory hist;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = make_rng(cfg.seed, {0xE0, epoch});
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);
            Matrix xb(static_cast<Eigen::Index>(end - start), x.cols());
            std::vector<int> yb;
            for (std::size_t k = start; k < end; ++k) {
                xb.row(static_cast<Eigen::Index>(k - start)) = x.row(order[k]);
                yb.push_back(y[static_cast<std::size_t>(order[k])]);
            }
            grads.set_zero();
            epoch_loss += counting_loss(net, xb, yb, &grads) * static_cast<double>(end - start);
            adam.step(net.params, grads);
        }
        hist.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
        if (!validate) continue;
        const auto pred = counting_predict(net, x_val);
        double correct = 0.0;
        for (std::size_t k = 0; k < pred.size(); ++k) correct += pred[k] == y_val[k];
        const double acc = correct / static_cast<double>(pred.size());
        hist.val_accuracy.push_back(acc);
        if (acc > best_acc) {
            best_acc = acc;
            best = net;
            hist.best_epoch = epoch;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }
    if (history) *history = hist;
    return validate ? best : net;
}

}  // namespace pestsim::features
