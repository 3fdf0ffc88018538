#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prunemf/error.hpp"

namespace prunemf {

enum class Optimizer : std::uint8_t { sgd = 0, adagrad = 1 };

inline const char* to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adagrad"; }

struct InitSpec {
    enum class Kind { normal, uniform };
    Kind kind = Kind::normal;
    double param1 = 0.0;  // mean, or low bound
    double param2 = 0.1;  // stddev, or high bound
    std::uint64_t seed = 1;

    static InitSpec normal(double mean, double stddev, std::uint64_t seed = 1) {
        return {Kind::normal, mean, stddev, seed};
    }
    static InitSpec uniform(double low, double high, std::uint64_t seed = 1) {
        return {Kind::uniform, low, high, seed};
    }

    void validate() const {
        if (!std::isfinite(param1) || !std::isfinite(param2)) throw ConfigError("init parameters must be finite");
        if (kind == Kind::normal && !(param2 > 0.0)) throw ConfigError("init.param2 (stddev) must be > 0");
        if (kind == Kind::uniform && !(param1 < param2)) throw ConfigError("init.param1 must be < init.param2");
    }
};

/// User factors P (m x k, row-major) and item factors Q (k x n), with
/// optional per-coordinate Adagrad accumulators in the same layouts.
///
/// Q is stored item-major: the k entries of item vector q_i are
/// contiguous, so a (u, i) visit streams both vectors linearly.
class FactorModel {
public:
    FactorModel() = default;
    FactorModel(std::size_t m, std::size_t n, std::size_t k)
        : m_(m), n_(n), k_(k), p_(m * k, 0.0), q_(n * k, 0.0) {}

    std::size_t num_users() const { return m_; }
    std::size_t num_items() const { return n_; }
    std::size_t rank() const { return k_; }

    std::span<double> user(std::size_t u) { return {p_.data() + u * k_, k_}; }
    std::span<const double> user(std::size_t u) const { return {p_.data() + u * k_, k_}; }
    std::span<double> item(std::size_t i) { return {q_.data() + i * k_, k_}; }
    std::span<const double> item(std::size_t i) const { return {q_.data() + i * k_, k_}; }

    std::span<double> user_accum(std::size_t u) { return {gp_.data() + u * k_, k_}; }
    std::span<double> item_accum(std::size_t i) { return {gq_.data() + i * k_, k_}; }

    /// p_{u,t}
    double p(std::size_t u, std::size_t t) const { return p_[u * k_ + t]; }
    /// q_{t,i}
    double q(std::size_t t, std::size_t i) const { return q_[i * k_ + t]; }

    std::vector<double>& p_data() { return p_; }
    const std::vector<double>& p_data() const { return p_; }
    std::vector<double>& q_data() { return q_; }
    const std::vector<double>& q_data() const { return q_; }
    std::vector<double>& p_accum() { return gp_; }
    const std::vector<double>& p_accum() const { return gp_; }
    std::vector<double>& q_accum() { return gq_; }
    const std::vector<double>& q_accum() const { return gq_; }

    bool has_accumulators() const { return !gp_.empty(); }

    void enable_accumulators() {
        gp_.assign(m_ * k_, 0.0);
        gq_.assign(n_ * k_, 0.0);
    }

    friend bool operator==(const FactorModel&, const FactorModel&) = default;

private:
    std::size_t m_ = 0, n_ = 0, k_ = 0;
    std::vector<double> p_, q_;
    std::vector<double> gp_, gq_;
};

/// Every entry of P then Q drawn independently from `spec` with one
/// seeded generator.
inline FactorModel init_model(std::size_t m, std::size_t n, std::size_t k, const InitSpec& spec,
                              bool with_accumulators = false) {
    if (m < 1 || n < 1 || k < 1) throw ConfigError("model dimensions m, n, k must be >= 1");
    spec.validate();
    FactorModel model(m, n, k);
    std::mt19937_64 rng(spec.seed);
    const auto fill = [&](auto dist) {
        for (auto& v : model.p_data()) v = dist(rng);
        for (auto& v : model.q_data()) v = dist(rng);
    };
    if (spec.kind == InitSpec::Kind::normal)
        fill(std::normal_distribution<double>(spec.param1, spec.param2));
    else
        fill(std::uniform_real_distribution<double>(spec.param1, spec.param2));
    if (with_accumulators) model.enable_accumulators();
    return model;
}

/// Left-to-right k-term dot product.
inline double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) sum += a[t] * b[t];
    return sum;
}

inline double predict_full(const FactorModel& model, std::size_t u, std::size_t i) {
    if (u >= model.num_users() || i >= model.num_items()) throw std::out_of_range("predict_full: index out of range");
    return dot(model.user(u), model.item(i));
}

inline bool is_permutation_of_range(std::span<const std::size_t> perm) {
    std::vector<bool> seen(perm.size(), false);
    for (const auto v : perm) {
        if (v >= perm.size() || seen[v]) return false;
        seen[v] = true;
    }
    return true;
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t j = 0; j < perm.size(); ++j) inv[perm[j]] = j;
    return inv;
}

/// After the call, latent index j holds what was latent index perm[j],
/// in P, Q and both accumulators.
inline void apply_permutation(FactorModel& model, std::span<const std::size_t> perm) {
    const auto k = model.rank();
    if (perm.size() != k || !is_permutation_of_range(perm))
        throw ConfigError("apply_permutation: not a permutation of {0..k-1}");
    std::vector<double> scratch(k);
    const auto permute_rows = [&](std::vector<double>& data) {
        for (std::size_t base = 0; base < data.size(); base += k) {
            for (std::size_t j = 0; j < k; ++j) scratch[j] = data[base + perm[j]];
            std::copy(scratch.begin(), scratch.end(), data.begin() + static_cast<std::ptrdiff_t>(base));
        }
    };
    permute_rows(model.p_data());
    permute_rows(model.q_data());
    permute_rows(model.p_accum());
    permute_rows(model.q_accum());
}

// Checkpoint layout, little-endian:
//   magic "PRUNEMF\0" | u32 version | u64 m | u64 n | u64 k | u8 optimizer | u8 has_accum
//   | P (m*k f64) | Q (n*k f64, item-major) | [G_P | G_Q]
inline constexpr char kCheckpointMagic[8] = {'P', 'R', 'U', 'N', 'E', 'M', 'F', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
T to_little_endian(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &v, sizeof(T));
        std::reverse(bytes, bytes + sizeof(T));
        std::memcpy(&v, bytes, sizeof(T));
    }
    return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    v = to_little_endian(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint truncated: " + path);
    return to_little_endian(v);
}

}  // namespace detail

inline void save_checkpoint(const FactorModel& model, Optimizer optimizer, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::write_le<std::uint32_t>(out, kCheckpointVersion);
    detail::write_le<std::uint64_t>(out, model.num_users());
    detail::write_le<std::uint64_t>(out, model.num_items());
    detail::write_le<std::uint64_t>(out, model.rank());
    detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(optimizer));
    detail::write_le<std::uint8_t>(out, model.has_accumulators() ? 1 : 0);
    const auto write_all = [&](const std::vector<double>& v) {
        for (const double x : v) detail::write_le(out, x);
    };
    write_all(model.p_data());
    write_all(model.q_data());
    if (model.has_accumulators()) {
        write_all(model.p_accum());
        write_all(model.q_accum());
    }
    if (!out) throw DataError("checkpoint write failed: " + path);
}

struct Checkpoint {
    FactorModel model;
    Optimizer optimizer = Optimizer::sgd;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw DataError("bad checkpoint magic: " + path);
    const auto version = detail::read_le<std::uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    const auto m = detail::read_le<std::uint64_t>(in, path);
    const auto n = detail::read_le<std::uint64_t>(in, path);
    const auto k = detail::read_le<std::uint64_t>(in, path);
    const auto opt = detail::read_le<std::uint8_t>(in, path);
    const auto has_accum = detail::read_le<std::uint8_t>(in, path);
    if (m == 0 || n == 0 || k == 0 || opt > 1 || has_accum > 1) throw DataError("corrupt checkpoint header: " + path);

    // reject lengths that cannot fit the remaining bytes before allocating
    const auto header_end = in.tellg();
    in.seekg(0, std::ios::end);
    const auto remaining = static_cast<std::uint64_t>(in.tellg() - header_end);
    in.seekg(header_end);
    const std::uint64_t entries = (m + n) * k * (has_accum ? 2 : 1);
    if (remaining != entries * sizeof(double)) throw DataError("checkpoint length mismatch: " + path);

    Checkpoint ck{FactorModel(m, n, k), static_cast<Optimizer>(opt)};
    if (has_accum) ck.model.enable_accumulators();
    const auto read_all = [&](std::vector<double>& v) {
        for (double& x : v) x = detail::read_le<double>(in, path);
    };
    read_all(ck.model.p_data());
    read_all(ck.model.q_data());
    if (has_accum) {
        read_all(ck.model.p_accum());
        read_all(ck.model.q_accum());
    }
    return ck;
}

}  // namespace prunemf
