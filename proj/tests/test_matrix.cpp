#include "seqfreq/matrix.hpp"

#include <gtest/gtest.h>

#include <vector>

#include "seqfreq/errors.hpp"
#include "seqfreq/rng.hpp"

using namespace seqfreq;

TEST(Matrix, MatvecKnownValues) {
    Matrix m(2, 2);
    m.data()[0] = 1.0;
    m.data()[1] = 2.0;
    m.data()[2] = 3.0;
    m.data()[3] = 4.0;
    const std::vector<double> v{1.0, 1.0};
    const auto out = matvec(ConstMatrixView(m.data().data(), 2, 2), v);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_DOUBLE_EQ(out[0], 3.0);
    EXPECT_DOUBLE_EQ(out[1], 7.0);
}

TEST(Matrix, MatvecRejectsDimensionMismatch) {
    Matrix m(2, 3);
    const std::vector<double> v{1.0, 1.0};
    EXPECT_THROW(matvec(ConstMatrixView(m.data().data(), 2, 3), v), ConfigError);
}

TEST(Matrix, IdentityLeavesVectorsUnchanged) {
    const Matrix id = Matrix::identity(4);
    const std::vector<double> v{2.0, -1.0, 0.5, 3.0};
    const auto out = matvec(ConstMatrixView(id.data().data(), 4, 4), v);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(out[i], v[i]);
}

TEST(Matrix, TransposeKernelMatchesExplicitTranspose) {
    RngStream rng(11);
    Matrix m(3, 5);
    for (auto& x : m.data()) x = rng.next_uniform(-1.0, 1.0);
    std::vector<double> v(3);
    for (auto& x : v) x = rng.next_uniform(-1.0, 1.0);

    std::vector<double> fast(5, 0.0);
    matvec_t_acc(ConstMatrixView(m.data().data(), 3, 5), v, fast);

    Matrix t(5, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 5; ++j) t.data()[j * 3 + i] = m(i, j);
    }
    const auto slow = matvec(ConstMatrixView(t.data().data(), 5, 3), v);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(fast[j], slow[j], 1e-15);
}

TEST(Matrix, OuterProductAccumulates) {
    Matrix m(2, 3);
    for (auto& x : m.data()) x = 1.0;
    const std::vector<double> u{2.0, -1.0};
    const std::vector<double> v{1.0, 0.0, 3.0};
    outer_acc(MatrixView{m.data().data(), 2, 3}, u, v);
    EXPECT_DOUBLE_EQ(m(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(m(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(m(0, 2), 7.0);
    EXPECT_DOUBLE_EQ(m(1, 0), 0.0);
    EXPECT_DOUBLE_EQ(m(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(m(1, 2), -2.0);
}

TEST(Matrix, MatvecAccAddsOntoExistingValues) {
    Matrix m(2, 2);
    m.data()[0] = 1.0;
    m.data()[3] = 1.0;
    const std::vector<double> v{5.0, 7.0};
    std::vector<double> out{100.0, 200.0};
    matvec_acc(ConstMatrixView(m.data().data(), 2, 2), v, out);
    EXPECT_DOUBLE_EQ(out[0], 105.0);
    EXPECT_DOUBLE_EQ(out[1], 207.0);
}
