// Named parameter tensors, the Adam optimizer, and the "PSTM" checkpoint container.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace pestsim {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class ParamSet {
public:
    /// Adds a zero tensor and returns its slot.
    std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

    std::size_t size() const { return tensors_.size(); }
    Matrix& operator[](std::size_t k) { return tensors_[k]; }
    const Matrix& operator[](std::size_t k) const { return tensors_[k]; }
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    const std::string& name(std::size_t k) const { return names_[k]; }
    bool contains(const std::string& name) const;

    /// Number of scalars across all tensors.
    std::size_t scalar_count() const;
    /// k-th scalar in declaration order, row-major within each tensor.
    double& scalar(std::size_t k);
    double scalar(std::size_t k) const;

    ParamSet zeros_like() const;
    void set_zero();
    /// this += scale * other (same layout).
    void axpy(double scale, const ParamSet& other);
    bool all_finite() const;
    bool operator==(const ParamSet& other) const;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> tensors_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(const ParamSet& like, AdamConfig cfg = {});
    void step(ParamSet& params, const ParamSet& grads);
    long steps() const { return t_; }

private:
    AdamConfig cfg_;
    ParamSet m_, v_;
    long t_ = 0;
};

/// "PSTM", version byte, u32 tensor count, then per tensor u16 name length,
/// name bytes, u32 rows, u32 cols and rows*cols f64 (row-major). Little-endian.
inline constexpr std::uint8_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace pestsim
