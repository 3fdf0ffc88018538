#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "prunemf/model.hpp"

using namespace prunemf;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("prunemf_model_" + name);
}

}  // namespace

TEST(InitModel, DeterministicPerSeed) {
    const auto a = init_model(10, 20, 4, InitSpec::normal(0.0, 0.1, 5));
    const auto b = init_model(10, 20, 4, InitSpec::normal(0.0, 0.1, 5));
    const auto c = init_model(10, 20, 4, InitSpec::normal(0.0, 0.1, 6));
    EXPECT_EQ(a, b);
    EXPECT_NE(a.p_data(), c.p_data());
}

TEST(InitModel, UniformStaysInBounds) {
    const auto m = init_model(30, 30, 5, InitSpec::uniform(-0.2, 0.3, 1));
    for (const double v : m.p_data()) EXPECT_TRUE(v >= -0.2 && v < 0.3);
    for (const double v : m.q_data()) EXPECT_TRUE(v >= -0.2 && v < 0.3);
}

TEST(InitModel, AccumulatorsStartAtZero) {
    const auto m = init_model(3, 4, 2, InitSpec::normal(0.0, 0.1), true);
    ASSERT_TRUE(m.has_accumulators());
    EXPECT_TRUE(std::all_of(m.p_accum().begin(), m.p_accum().end(), [](double g) { return g == 0.0; }));
    EXPECT_EQ(m.q_accum().size(), 8u);
}

TEST(InitModel, RejectsInvalid) {
    EXPECT_THROW(init_model(0, 4, 2, InitSpec::normal(0.0, 0.1)), ConfigError);
    EXPECT_THROW(init_model(3, 4, 0, InitSpec::normal(0.0, 0.1)), ConfigError);
    EXPECT_THROW(init_model(3, 4, 2, InitSpec::normal(0.0, 0.0)), ConfigError);
    EXPECT_THROW(init_model(3, 4, 2, InitSpec::uniform(0.5, 0.5)), ConfigError);
}

TEST(FactorModel, Layout) {
    FactorModel m(2, 3, 2);
    m.user(1)[0] = 7.0;
    m.item(2)[1] = 9.0;
    EXPECT_EQ(m.p(1, 0), 7.0);
    EXPECT_EQ(m.q(1, 2), 9.0);
    EXPECT_EQ(m.p_data()[2], 7.0);
    EXPECT_EQ(m.q_data()[5], 9.0);
}

TEST(PredictFull, DotAndBounds) {
    FactorModel m(1, 1, 3);
    const double p[] = {1.0, 2.0, 3.0}, q[] = {0.5, -1.0, 2.0};
    std::copy(p, p + 3, m.user(0).begin());
    std::copy(q, q + 3, m.item(0).begin());
    EXPECT_DOUBLE_EQ(predict_full(m, 0, 0), 4.5);
    EXPECT_THROW(predict_full(m, 1, 0), std::out_of_range);
    EXPECT_THROW(predict_full(m, 0, 1), std::out_of_range);
}

TEST(Permutation, InverseAndValidation) {
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    EXPECT_TRUE(is_permutation_of_range(perm));
    const auto inv = inverse_permutation(perm);
    for (std::size_t j = 0; j < perm.size(); ++j) EXPECT_EQ(inv[perm[j]], j);
    EXPECT_FALSE(is_permutation_of_range(std::vector<std::size_t>{0, 0, 1}));
    EXPECT_FALSE(is_permutation_of_range(std::vector<std::size_t>{0, 3, 1}));
}

TEST(Permutation, MovesColumnsRowsAndAccumulators) {
    auto m = init_model(5, 6, 4, InitSpec::normal(0.0, 1.0, 2), true);
    for (std::size_t j = 0; j < m.p_accum().size(); ++j) m.p_accum()[j] = static_cast<double>(j);
    const auto before = m;
    const std::vector<std::size_t> perm{3, 1, 0, 2};
    apply_permutation(m, perm);
    for (std::size_t u = 0; u < 5; ++u)
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_EQ(m.p(u, j), before.p(u, perm[j]));
            EXPECT_EQ(m.p_accum()[u * 4 + j], before.p_accum()[u * 4 + perm[j]]);
        }
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m.q(j, i), before.q(perm[j], i));
    apply_permutation(m, inverse_permutation(perm));
    EXPECT_EQ(m, before);
}

TEST(Permutation, IdentityIsNoOp) {
    auto m = init_model(3, 3, 3, InitSpec::normal(0.0, 1.0));
    const auto before = m;
    apply_permutation(m, std::vector<std::size_t>{0, 1, 2});
    EXPECT_EQ(m, before);
}

TEST(Permutation, RejectsNonBijection) {
    auto m = init_model(3, 3, 3, InitSpec::normal(0.0, 1.0));
    EXPECT_THROW(apply_permutation(m, std::vector<std::size_t>{0, 1}), ConfigError);
    EXPECT_THROW(apply_permutation(m, std::vector<std::size_t>{0, 1, 1}), ConfigError);
}

TEST(Checkpoint, RoundTripWithAccumulators) {
    auto m = init_model(7, 9, 3, InitSpec::normal(0.0, 0.1, 4), true);
    m.p_accum()[5] = 1.25;
    m.q_accum()[2] = 3.5;
    const auto path = temp_path("roundtrip.bin");
    save_checkpoint(m, Optimizer::adagrad, path.string());
    const auto ck = load_checkpoint(path.string());
    EXPECT_EQ(ck.model, m);
    EXPECT_EQ(ck.optimizer, Optimizer::adagrad);
    std::filesystem::remove(path);
}

TEST(Checkpoint, RoundTripWithoutAccumulators) {
    const auto m = init_model(4, 2, 5, InitSpec::uniform(-1.0, 1.0, 8));
    const auto path = temp_path("sgd.bin");
    save_checkpoint(m, Optimizer::sgd, path.string());
    const auto ck = load_checkpoint(path.string());
    EXPECT_EQ(ck.model, m);
    EXPECT_FALSE(ck.model.has_accumulators());
    EXPECT_EQ(ck.optimizer, Optimizer::sgd);
    std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileIsDataError) {
    const auto m = init_model(4, 4, 4, InitSpec::normal(0.0, 0.1));
    const auto path = temp_path("trunc.bin");
    save_checkpoint(m, Optimizer::sgd, path.string());
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 9);
    EXPECT_THROW(load_checkpoint(path.string()), DataError);
    std::filesystem::resize_file(path, 10);
    EXPECT_THROW(load_checkpoint(path.string()), DataError);
    std::filesystem::remove(path);
}

TEST(Checkpoint, BadMagicIsDataError) {
    const auto path = temp_path("magic.bin");
    std::ofstream(path) << "NOTACHECKPOINTFILE-------------------------------";
    EXPECT_THROW(load_checkpoint(path.string()), DataError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path.string()), DataError);
}
