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

#pragma once

#include <airsl/clinalg.hpp>

namespace airsl_test {

using airsl::Complex;
using airsl::ComplexMatrix;

/// Independent reference product: plain i/j/k triple loop, accumulation
/// order distinct from the library's i/k/j loop.
inline ComplexMatrix naive_matmul(const ComplexMatrix &a, const ComplexMatrix &b)
{
    ComplexMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            Complex sum(0.0, 0.0);
            for (std::size_t k = 0; k < a.cols(); ++k)
                sum += a(i, k) * b(k, j);
            c(i, j) = sum;
        }
    return c;
}

inline ComplexMatrix random_matrix(std::size_t rows, std::size_t cols, airsl::Rng &rng)
{
    ComplexMatrix m(rows, cols);
    for (auto &z : m.data())
        z = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    return m;
}

/// Hermitian PSD test matrix built as A^H A.
inline ComplexMatrix random_psd(std::size_t n, airsl::Rng &rng)
{
    const ComplexMatrix a = random_matrix(n, n, rng);
    return airsl::matmul(airsl::adjoint(a), a);
}

inline bool bitwise_equal(const ComplexMatrix &a, const ComplexMatrix &b)
{
    if (!a.same_shape(b))
        return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i])
            return false;
    return true;
}

} // namespace airsl_test
