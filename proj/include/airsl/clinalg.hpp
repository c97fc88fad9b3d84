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

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace airsl {

using Complex = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;

/// Dense row-major complex matrix. The single value carrier of the library:
/// signals and parameters are N×1 columns, channels and weights are full
/// matrices. All entries are double-precision.
class ComplexMatrix {
  public:
    ComplexMatrix() = default;

    ComplexMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols) {}

    static ComplexMatrix identity(std::size_t n)
    {
        ComplexMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    Complex &operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const Complex &operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::vector<Complex> &data() { return data_; }
    const std::vector<Complex> &data() const { return data_; }

    bool same_shape(const ComplexMatrix &o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    ComplexMatrix column(std::size_t j) const
    {
        ComplexMatrix c(rows_, 1);
        for (std::size_t i = 0; i < rows_; ++i)
            c(i, 0) = (*this)(i, j);
        return c;
    }

    void set_column(std::size_t j, const ComplexMatrix &c)
    {
        for (std::size_t i = 0; i < rows_; ++i)
            (*this)(i, j) = c(i, 0);
    }

    bool is_finite() const
    {
        for (const auto &z : data_)
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
                return false;
        return true;
    }

    std::string shape_string() const
    {
        std::ostringstream os;
        os << rows_ << "x" << cols_;
        return os.str();
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Complex> data_;
};

[[noreturn]] inline void throw_shape_error(const std::string &op, const ComplexMatrix &a,
                                           const ComplexMatrix &b)
{
    throw std::invalid_argument(op + ": shape mismatch (" + a.shape_string() + ") vs (" +
                                b.shape_string() + ")");
}

inline ComplexMatrix matmul(const ComplexMatrix &a, const ComplexMatrix &b)
{
    if (a.cols() != b.rows())
        throw_shape_error("matmul", a, b);
    ComplexMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const Complex aik = a(i, k);
            if (aik == Complex(0.0, 0.0))
                continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

/// Conjugate transpose, the (·)^H operator.
inline ComplexMatrix adjoint(const ComplexMatrix &a)
{
    ComplexMatrix r(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            r(j, i) = std::conj(a(i, j));
    return r;
}

/// Plain transpose, no conjugation (the backward channel is H^T).
inline ComplexMatrix transpose(const ComplexMatrix &a)
{
    ComplexMatrix r(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            r(j, i) = a(i, j);
    return r;
}

inline ComplexMatrix conjugate(const ComplexMatrix &a)
{
    ComplexMatrix r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i)
        r.data()[i] = std::conj(a.data()[i]);
    return r;
}

inline ComplexMatrix operator+(const ComplexMatrix &a, const ComplexMatrix &b)
{
    if (!a.same_shape(b))
        throw_shape_error("add", a, b);
    ComplexMatrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i)
        c.data()[i] += b.data()[i];
    return c;
}

inline ComplexMatrix operator-(const ComplexMatrix &a, const ComplexMatrix &b)
{
    if (!a.same_shape(b))
        throw_shape_error("sub", a, b);
    ComplexMatrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i)
        c.data()[i] -= b.data()[i];
    return c;
}

inline ComplexMatrix &operator+=(ComplexMatrix &a, const ComplexMatrix &b)
{
    if (!a.same_shape(b))
        throw_shape_error("add", a, b);
    for (std::size_t i = 0; i < a.size(); ++i)
        a.data()[i] += b.data()[i];
    return a;
}

inline ComplexMatrix operator*(Complex s, const ComplexMatrix &a)
{
    ComplexMatrix c = a;
    for (auto &z : c.data())
        z *= s;
    return c;
}

inline ComplexMatrix operator*(double s, const ComplexMatrix &a) { return Complex(s, 0.0) * a; }

inline double frobenius_norm(const ComplexMatrix &a)
{
    double s = 0.0;
    for (const auto &z : a.data())
        s += std::norm(z);
    return std::sqrt(s);
}

inline double max_abs(const ComplexMatrix &a)
{
    double m = 0.0;
    for (const auto &z : a.data())
        m = std::max(m, std::abs(z));
    return m;
}

inline double max_abs_diff(const ComplexMatrix &a, const ComplexMatrix &b)
{
    if (!a.same_shape(b))
        throw_shape_error("max_abs_diff", a, b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

inline bool is_hermitian(const ComplexMatrix &a, double tol)
{
    if (a.rows() != a.cols())
        return false;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i; j < a.cols(); ++j)
            if (std::abs(a(i, j) - std::conj(a(j, i))) > tol)
                return false;
    return true;
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues are sorted
/// descending; column j of `eigenvectors` pairs with `eigenvalues[j]`.
struct HermitianEig {
    std::vector<double> eigenvalues;
    ComplexMatrix eigenvectors;
};

/// Cyclic Jacobi eigendecomposition for Hermitian input. Rotations are
/// swept over all (p, q) pairs until every off-diagonal magnitude drops
/// below 1e-12, capped at 100 sweeps.
inline HermitianEig hermitian_eig(const ComplexMatrix &r)
{
    if (r.rows() != r.cols())
        throw std::invalid_argument("hermitian_eig: input must be square, got " +
                                    r.shape_string());
    if (!is_hermitian(r, 1e-10))
        throw std::invalid_argument("hermitian_eig: input is not Hermitian within 1e-10");

    const std::size_t n = r.rows();
    ComplexMatrix a = r;
    ComplexMatrix v = ComplexMatrix::identity(n);
    const double off_tol = 1e-12;
    const int max_sweeps = 100;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const Complex apq = a(p, q);
                const double apq_mag = std::abs(apq);
                if (apq_mag < off_tol)
                    continue;
                rotated = true;

                const double app = a(p, p).real();
                const double aqq = a(q, q).real();
                const Complex phase = apq / apq_mag;
                const double tau = (aqq - app) / (2.0 * apq_mag);
                const double t =
                    (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                // Unitary plane rotation U2 = [[c, s], [-s e^{-ja}, c e^{-ja}]]
                // with e^{ja} the phase of a(p,q); A <- U2^H A U2, V <- V U2.
                const Complex u10 = -s * std::conj(phase);
                const Complex u11 = c * std::conj(phase);

                for (std::size_t i = 0; i < n; ++i) {
                    const Complex tp = a(i, p);
                    const Complex tq = a(i, q);
                    a(i, p) = tp * c + tq * u10;
                    a(i, q) = tp * s + tq * u11;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const Complex tp = a(p, j);
                    const Complex tq = a(q, j);
                    a(p, j) = c * tp - s * phase * tq;
                    a(q, j) = s * tp + c * phase * tq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const Complex tp = v(i, p);
                    const Complex tq = v(i, q);
                    v(i, p) = tp * c + tq * u10;
                    v(i, q) = tp * s + tq * u11;
                }
                // Clean the rotated pivot so roundoff cannot stall the sweep.
                a(p, q) = 0.0;
                a(q, p) = 0.0;
            }
        }
        if (!rotated)
            break;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return a(i, i).real() > a(j, j).real();
    });

    HermitianEig out;
    out.eigenvalues.resize(n);
    out.eigenvectors = ComplexMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.eigenvalues[j] = a(order[j], order[j]).real();
        for (std::size_t i = 0; i < n; ++i)
            out.eigenvectors(i, j) = v(i, order[j]);
    }
    return out;
}

inline std::uint64_t mix_seed(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a fixed tag.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag)
{
    return mix_seed(mix_seed(master) ^ mix_seed(tag));
}

/// Seeded random stream. Uniform doubles come straight from engine bits and
/// normals from Box-Muller, so draws are reproducible across standard
/// libraries, not just across runs.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// One Box-Muller pair of independent N(0,1) draws.
    void gaussian_pair(double &a, double &b)
    {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double m = std::sqrt(-2.0 * std::log(u1));
        a = m * std::cos(2.0 * kPi * u2);
        b = m * std::sin(2.0 * kPi * u2);
    }

    double gaussian()
    {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double a, b;
        gaussian_pair(a, b);
        spare_ = b;
        have_spare_ = true;
        return a;
    }

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// I.i.d. circularly symmetric complex Gaussian entries: real and imaginary
/// parts are each N(0, variance/2).
inline ComplexMatrix random_complex_gaussian(std::size_t rows, std::size_t cols, double variance,
                                             Rng &rng)
{
    if (variance < 0.0)
        throw std::invalid_argument("random_complex_gaussian: negative variance " +
                                    std::to_string(variance));
    ComplexMatrix m(rows, cols);
    if (variance == 0.0)
        return m;
    const double sigma = std::sqrt(0.5 * variance);
    for (auto &z : m.data()) {
        double a, b;
        rng.gaussian_pair(a, b);
        z = Complex(sigma * a, sigma * b);
    }
    return m;
}

} // namespace airsl
