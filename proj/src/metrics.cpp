#include "pestsim/metrics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "pestsim/errors.hpp"

namespace pestsim::metrics {

double eta(double dv1, double dv2) {
    if (!(dv1 >= 0.0) || !(dv2 >= 0.0)) throw ContractError("eta needs non-negative excursions");
    if (dv1 + dv2 == 0.0) throw ContractError("eta is undefined when both excursions are zero");
    return dv1 * dv2 / (dv1 + dv2);
}

double trigger_accuracy(double triggered, double actual) {
    if (!(actual > 0.0)) throw ContractError("trigger accuracy needs a positive actual count");
    return 100.0 * (1.0 - std::abs(triggered - actual) / actual);
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> names)
    : class_names(std::move(names)), counts(class_names.size(), std::vector<long>(class_names.size(), 0)) {
    if (class_names.empty()) throw ContractError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int truth, int predicted, long n) {
    const auto k = static_cast<int>(classes());
    if (truth < 0 || truth >= k || predicted < 0 || predicted >= k) throw ContractError("class index out of range");
    if (n < 0) throw ContractError("negative count");
    counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)] += n;
}

long ConfusionMatrix::total() const {
    long t = 0;
    for (const auto& row : counts)
        for (long v : row) t += v;
    return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.class_names != class_names) throw ContractError("confusion matrices have different classes");
    for (std::size_t i = 0; i < classes(); ++i)
        for (std::size_t j = 0; j < classes(); ++j) counts[i][j] += other.counts[i][j];
    return *this;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::vector<std::string> names) {
    if (truth.size() != predicted.size()) throw ContractError("truth and prediction lengths differ");
    ConfusionMatrix cm(std::move(names));
    for (std::size_t k = 0; k < truth.size(); ++k) cm.add(truth[k], predicted[k]);
    return cm;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
    const long total = cm.total();
    if (total <= 0) throw ContractError("metrics need a non-empty confusion matrix");
    const std::size_t k = cm.classes();
    const auto n = static_cast<double>(total);
    std::vector<double> row(k, 0.0), col(k, 0.0);
    double trace = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const auto v = static_cast<double>(cm.counts[i][j]);
            row[i] += v;
            col[j] += v;
            if (i == j) trace += v;
        }
    ClassificationMetrics m;
    m.support = total;
    m.accuracy = trace / n;
    double pe = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        const auto tp = static_cast<double>(cm.counts[c][c]);
        const double precision = col[c] > 0.0 ? tp / col[c] : 0.0;
        const double recall = row[c] > 0.0 ? tp / row[c] : 0.0;
        const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        m.macro_precision += precision;
        m.macro_recall += recall;
        m.macro_f1 += f1;
        pe += (row[c] / n) * (col[c] / n);
    }
    m.macro_precision /= static_cast<double>(k);
    m.macro_recall /= static_cast<double>(k);
    m.macro_f1 /= static_cast<double>(k);
    // A single populated class on both sides gives pe = 1; agreement is then perfect.
    m.kappa = pe < 1.0 ? (m.accuracy - pe) / (1.0 - pe) : 1.0;
    return m;
}

nlohmann::ordered_json to_json(const ClassificationMetrics& m) {
    return {{"kappa", m.kappa},         {"recall", m.macro_recall}, {"precision", m.macro_precision},
            {"f1", m.macro_f1},         {"accuracy", m.accuracy},   {"support", m.support}};
}

nlohmann::ordered_json to_json(const ConfusionMatrix& cm) {
    return {{"classes", cm.class_names}, {"counts", cm.counts}};
}

std::string metrics_csv_header() { return "label,kappa,recall,precision,f1,accuracy,support\n"; }

std::string metrics_csv_row(const std::string& label, const ClassificationMetrics& m) {
    return fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", label, m.kappa, m.macro_recall,
                       m.macro_precision, m.macro_f1, m.accuracy, m.support);
}

std::string to_csv(const ConfusionMatrix& cm) {
    std::string out = "truth\\predicted";
    for (const auto& n : cm.class_names) out += "," + n;
    out += "\n";
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        out += cm.class_names[i];
        for (long v : cm.counts[i]) out += fmt::format(",{}", v);
        out += "\n";
    }
    return out;
}

}  // namespace pestsim::metrics
