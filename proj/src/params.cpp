#include "pestsim/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pestsim/errors.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace pestsim {

std::size_t ParamSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
    names_.push_back(name);
    tensors_.push_back(Matrix::Zero(rows, cols));
    return tensors_.size() - 1;
}

bool ParamSet::contains(const std::string& name) const {
    for (const auto& n : names_)
        if (n == name) return true;
    return false;
}

Matrix& ParamSet::at(const std::string& name) {
    for (std::size_t k = 0; k < names_.size(); ++k)
        if (names_[k] == name) return tensors_[k];
    throw ContractError("no parameter '" + name + "'");
}

const Matrix& ParamSet::at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
    return n;
}

double& ParamSet::scalar(std::size_t k) {
    for (auto& t : tensors_) {
        const auto n = static_cast<std::size_t>(t.size());
        if (k < n) return t.data()[k];
        k -= n;
    }
    throw ContractError("scalar index out of range");
}

double ParamSet::scalar(std::size_t k) const { return const_cast<ParamSet*>(this)->scalar(k); }

ParamSet ParamSet::zeros_like() const {
    ParamSet out = *this;
    out.set_zero();
    return out;
}

void ParamSet::set_zero() {
    for (auto& t : tensors_) t.setZero();
}

void ParamSet::axpy(double scale, const ParamSet& other) {
    if (other.size() != size()) throw ContractError("parameter layouts differ");
    for (std::size_t k = 0; k < size(); ++k) tensors_[k] += scale * other.tensors_[k];
}

bool ParamSet::all_finite() const {
    for (const auto& t : tensors_)
        if (!t.allFinite()) return false;
    return true;
}

bool ParamSet::operator==(const ParamSet& other) const {
    if (names_ != other.names_) return false;
    for (std::size_t k = 0; k < size(); ++k) {
        const auto& a = tensors_[k];
        const auto& b = other.tensors_[k];
        if (a.rows() != b.rows() || a.cols() != b.cols() || a != b) return false;
    }
    return true;
}

Adam::Adam(const ParamSet& like, AdamConfig cfg) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

void Adam::step(ParamSet& params, const ParamSet& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw ContractError("parameter layouts differ");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = m_[k];
        auto& v = v_[k];
        const auto& g = grads[k];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        params[k].array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
    }
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated checkpoint");
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write("PSTM", 4);
    put<std::uint8_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& name = params.name(k);
        put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(params[k].rows()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(params[k].cols()));
    }
    for (std::size_t k = 0; k < params.size(); ++k)
        out.write(reinterpret_cast<const char*>(params[k].data()),
                  static_cast<std::streamsize>(params[k].size() * static_cast<Eigen::Index>(sizeof(double))));
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "PSTM", 4) != 0) throw DataError("not a PSTM checkpoint");
    if (get<std::uint8_t>(in) != kCheckpointVersion) throw DataError("unsupported checkpoint version");
    const auto n = get<std::uint32_t>(in);
    ParamSet params;
    for (std::uint32_t k = 0; k < n; ++k) {
        std::string name(get<std::uint16_t>(in), '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw DataError("truncated checkpoint");
        const auto rows = get<std::uint32_t>(in);
        const auto cols = get<std::uint32_t>(in);
        params.add(name, rows, cols);
    }
    for (std::size_t k = 0; k < params.size(); ++k)
        if (!in.read(reinterpret_cast<char*>(params[k].data()),
                     static_cast<std::streamsize>(params[k].size() * static_cast<Eigen::Index>(sizeof(double)))))
            throw DataError("truncated checkpoint");
    return params;
}

}  // namespace pestsim
