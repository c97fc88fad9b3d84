// SPDX-License-Identifier: Apache-2.0
//
// airsl — split learning over MIMO wireless channels via over-the-air computation
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include <catch2/catch_amalgamated.hpp>

#include <airsl/clinalg.hpp>

#include "helpers.hpp"

using namespace airsl;
using airsl_test::bitwise_equal;
using airsl_test::naive_matmul;
using airsl_test::random_matrix;
using airsl_test::random_psd;

TEST_CASE("matmul identity leaves a matrix unchanged")
{
    Rng rng(7);
    const ComplexMatrix a = random_matrix(3, 5, rng);
    const ComplexMatrix out = matmul(ComplexMatrix::identity(3), a);
    REQUIRE(max_abs_diff(out, a) == 0.0);
}

TEST_CASE("matmul scalar case")
{
    ComplexMatrix a(1, 1), b(1, 1);
    a(0, 0) = Complex(2.0, 1.0);
    b(0, 0) = Complex(3.0, -1.0);
    const ComplexMatrix c = matmul(a, b);
    REQUIRE(c(0, 0) == Complex(7.0, 1.0));
}

TEST_CASE("matmul matches the naive triple-loop product")
{
    Rng rng(11);
    const ComplexMatrix a = random_matrix(5, 4, rng);
    const ComplexMatrix b = random_matrix(4, 3, rng);
    REQUIRE(max_abs_diff(matmul(a, b), naive_matmul(a, b)) <= 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes naming both")
{
    const ComplexMatrix a(5, 4), b(3, 3);
    REQUIRE_THROWS_WITH(matmul(a, b),
                        Catch::Matchers::ContainsSubstring("5x4") &&
                            Catch::Matchers::ContainsSubstring("3x3"));
}

TEST_CASE("adjoint conjugates and transposes")
{
    ComplexMatrix a(1, 1);
    a(0, 0) = Complex(0.0, 1.0);
    REQUIRE(adjoint(a)(0, 0) == Complex(0.0, -1.0));

    ComplexMatrix sym(2, 2);
    sym(0, 0) = 1.0;
    sym(0, 1) = 2.0;
    sym(1, 0) = 2.0;
    sym(1, 1) = -3.0;
    REQUIRE(bitwise_equal(adjoint(sym), sym));
}

TEST_CASE("adjoint is an exact involution")
{
    Rng rng(5);
    const ComplexMatrix a = random_matrix(6, 3, rng);
    REQUIRE(bitwise_equal(adjoint(adjoint(a)), a));
}

TEST_CASE("hermitian_eig on a diagonal matrix")
{
    ComplexMatrix d(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 1.0;
    const HermitianEig eig = hermitian_eig(d);
    REQUIRE(eig.eigenvalues[0] == Catch::Approx(2.0).margin(1e-14));
    REQUIRE(eig.eigenvalues[1] == Catch::Approx(1.0).margin(1e-14));
    REQUIRE(std::abs(eig.eigenvectors(0, 0)) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(std::abs(eig.eigenvectors(1, 1)) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("hermitian_eig on the Pauli-y-like matrix")
{
    ComplexMatrix m(2, 2);
    m(0, 1) = Complex(0.0, -1.0);
    m(1, 0) = Complex(0.0, 1.0);
    const HermitianEig eig = hermitian_eig(m);
    REQUIRE(eig.eigenvalues[0] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(eig.eigenvalues[1] == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("hermitian_eig reconstructs a random PSD matrix")
{
    Rng rng(23);
    const ComplexMatrix r = random_psd(8, rng);
    const HermitianEig eig = hermitian_eig(r);

    ComplexMatrix recon(8, 8);
    for (std::size_t k = 0; k < 8; ++k) {
        const ComplexMatrix u = eig.eigenvectors.column(k);
        recon += eig.eigenvalues[k] * matmul(u, adjoint(u));
    }
    REQUIRE(frobenius_norm(recon - r) <= 1e-9 * frobenius_norm(r));

    const ComplexMatrix gram = matmul(adjoint(eig.eigenvectors), eig.eigenvectors);
    REQUIRE(frobenius_norm(gram - ComplexMatrix::identity(8)) <= 1e-9);
}

TEST_CASE("hermitian_eig eigenvector unitarity holds up to dim 128")
{
    Rng rng(29);
    const ComplexMatrix r = random_psd(128, rng);
    const HermitianEig eig = hermitian_eig(r);
    const ComplexMatrix gram = matmul(adjoint(eig.eigenvectors), eig.eigenvectors);
    REQUIRE(frobenius_norm(gram - ComplexMatrix::identity(128)) <= 1e-9);
}

TEST_CASE("hermitian_eig rejects bad input")
{
    REQUIRE_THROWS_AS(hermitian_eig(ComplexMatrix(2, 3)), std::invalid_argument);
    ComplexMatrix not_herm(2, 2);
    not_herm(0, 1) = Complex(1.0, 0.0);
    not_herm(1, 0) = Complex(0.5, 0.0);
    REQUIRE_THROWS_AS(hermitian_eig(not_herm), std::invalid_argument);
}

TEST_CASE("random_complex_gaussian basics")
{
    Rng rng(1);
    REQUIRE(max_abs(random_complex_gaussian(4, 4, 0.0, rng)) == 0.0);

    Rng a(42), b(42);
    REQUIRE(bitwise_equal(random_complex_gaussian(6, 5, 2.0, a),
                          random_complex_gaussian(6, 5, 2.0, b)));

    REQUIRE_THROWS_AS(random_complex_gaussian(2, 2, -1.0, rng), std::invalid_argument);
}

TEST_CASE("random_complex_gaussian moments")
{
    const double variance = 0.7;
    const std::size_t n = 100000;
    Rng rng(123);
    const ComplexMatrix m = random_complex_gaussian(n, 1, variance, rng);
    double sum_norm = 0.0;
    Complex sum(0.0, 0.0);
    for (const auto &z : m.data()) {
        sum_norm += std::norm(z);
        sum += z;
    }
    const double emp_var = sum_norm / static_cast<double>(n);
    REQUIRE(emp_var == Catch::Approx(variance).epsilon(0.02));
    REQUIRE(std::abs(sum) / static_cast<double>(n) < 0.01 * std::sqrt(variance));
}

TEST_CASE("matmul associativity property")
{
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 8 + 14 * static_cast<std::size_t>(trial);  // up to 64
        const ComplexMatrix a = random_matrix(n, n, rng);
        const ComplexMatrix b = random_matrix(n, n, rng);
        const ComplexMatrix x = random_matrix(n, 1, rng);
        const ComplexMatrix left = matmul(matmul(a, b), x);
        const ComplexMatrix right = matmul(a, matmul(b, x));
        REQUIRE(frobenius_norm(left - right) <= 1e-10 * std::max(1.0, frobenius_norm(left)));
    }
}

TEST_CASE("PSD eigenvalues stay above the negative tolerance")
{
    Rng rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        const ComplexMatrix r = random_psd(6, rng);
        const HermitianEig eig = hermitian_eig(r);
        for (double lambda : eig.eigenvalues)
            REQUIRE(lambda >= -1e-10 * frobenius_norm(r));
    }
}

TEST_CASE("adjoint of a product reverses the factors")
{
    Rng rng(41);
    const ComplexMatrix a = random_matrix(4, 6, rng);
    const ComplexMatrix b = random_matrix(6, 3, rng);
    REQUIRE(max_abs_diff(adjoint(matmul(a, b)), matmul(adjoint(b), adjoint(a))) <= 1e-12);
}

TEST_CASE("derived seeds differ per tag and repeat per (master, tag)")
{
    REQUIRE(derive_seed(1, 2) != derive_seed(1, 3));
    REQUIRE(derive_seed(1, 2) != derive_seed(2, 2));
    REQUIRE(derive_seed(9, 4) == derive_seed(9, 4));
}
