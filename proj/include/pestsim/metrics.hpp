// Sensitivity, trigger accuracy and multi-class classification metrics.
#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace pestsim::metrics {

/// dv1*dv2/(dv1+dv2). Both inputs >= 0 and not both zero.
double eta(double dv1, double dv2);

/// 100 * (1 - |triggered - actual| / actual) [percent]; actual > 0.
double trigger_accuracy(double triggered, double actual);

struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<long>> counts;  ///< rows = truth, cols = prediction

    explicit ConfusionMatrix(std::vector<std::string> names);
    std::size_t classes() const { return class_names.size(); }
    void add(int truth, int predicted, long n = 1);
    long total() const;
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::vector<std::string> names);

struct ClassificationMetrics {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double kappa = 0.0;
    long support = 0;
};

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

nlohmann::ordered_json to_json(const ClassificationMetrics& m);
nlohmann::ordered_json to_json(const ConfusionMatrix& cm);
/// Header line "label,kappa,recall,precision,f1,accuracy,support".
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& label, const ClassificationMetrics& m);
std::string to_csv(const ConfusionMatrix& cm);

}  // namespace pestsim::metrics
