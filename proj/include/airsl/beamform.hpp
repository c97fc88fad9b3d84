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

#include "clinalg.hpp"

namespace airsl {

/// Running sum of outer products v v^H over a batch of transmissions.
/// The sum is exactly Hermitian by construction; mean() gives the PSD
/// sample covariance.
class CovarianceAccumulator {
  public:
    explicit CovarianceAccumulator(std::size_t dim) : dim_(dim), sum_outer_(dim, dim) {}

    void accumulate(const ComplexMatrix &v)
    {
        if (v.rows() != dim_ || v.cols() != 1)
            throw std::invalid_argument("CovarianceAccumulator: expected " +
                                        std::to_string(dim_) + "x1 sample, got " +
                                        v.shape_string());
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j)
                sum_outer_(i, j) += v(i, 0) * std::conj(v(j, 0));
        ++n_samples_;
    }

    ComplexMatrix mean() const
    {
        if (n_samples_ == 0)
            throw std::invalid_argument("CovarianceAccumulator: no samples accumulated");
        return (1.0 / static_cast<double>(n_samples_)) * sum_outer_;
    }

    void reset()
    {
        sum_outer_ = ComplexMatrix(dim_, dim_);
        n_samples_ = 0;
    }

    std::size_t dim() const { return dim_; }
    std::size_t n_samples() const { return n_samples_; }
    const ComplexMatrix &sum_outer() const { return sum_outer_; }

  private:
    std::size_t dim_;
    ComplexMatrix sum_outer_;
    std::size_t n_samples_ = 0;
};

/// Columns r..end of the eigenvector basis: the directions spanning the
/// weakest dim - r subchannels. Empty (dim x 0) when r >= dim.
inline ComplexMatrix weak_subspace(const HermitianEig &eig, std::size_t r)
{
    const std::size_t dim = eig.eigenvectors.rows();
    const std::size_t tail = (r >= dim) ? 0 : dim - r;
    ComplexMatrix u_b(dim, tail);
    for (std::size_t j = 0; j < tail; ++j)
        for (std::size_t i = 0; i < dim; ++i)
            u_b(i, j) = eig.eigenvectors(i, r + j);
    return u_b;
}

struct SubspaceLoss {
    double loss = 0.0;
    ComplexMatrix grad;
};

/// Energy of the combiner inside the weak received subspace:
/// l_f = ||C^H U_{r+1:}||_F^2, with U from the received-signal covariance.
/// The gradient (with U held constant) is U_{r+1:} U_{r+1:}^H C, so descent
/// steers the combiner into the strong subspace without knowing H.
inline SubspaceLoss forward_subspace_loss(const ComplexMatrix &c,
                                          const CovarianceAccumulator &acc, std::size_t r)
{
    if (acc.dim() != c.rows())
        throw std::invalid_argument("forward_subspace_loss: combiner rows " +
                                    std::to_string(c.rows()) + " do not match covariance dim " +
                                    std::to_string(acc.dim()));
    const HermitianEig eig = hermitian_eig(acc.mean());
    const ComplexMatrix u_b = weak_subspace(eig, r);
    SubspaceLoss out;
    if (u_b.cols() == 0) {
        out.grad = ComplexMatrix(c.rows(), c.cols());
        return out;
    }
    const ComplexMatrix proj = matmul(adjoint(u_b), c);  // (dim - r) x r_c
    const double n = frobenius_norm(proj);
    out.loss = n * n;
    out.grad = matmul(u_b, proj);
    return out;
}

struct BackwardSubspaceLoss {
    double loss = 0.0;
    std::vector<ComplexMatrix> grads;  // one per transmitted column
};

/// Mean transmitted-signal energy inside the weak backward subspace, with
/// U' taken from the covariance of the recovered transmit-signal gradients.
/// Per-column gradients flow back into the transmit chain (P and W~_k);
/// U' is a stop-gradient statistic.
inline BackwardSubspaceLoss backward_subspace_loss(const CovarianceAccumulator &acc_b,
                                                   const std::vector<const ComplexMatrix *> &x_t,
                                                   std::size_t r)
{
    const HermitianEig eig = hermitian_eig(acc_b.mean());
    const ComplexMatrix u_b = weak_subspace(eig, r);
    BackwardSubspaceLoss out;
    out.grads.reserve(x_t.size());
    if (x_t.empty())
        throw std::invalid_argument("backward_subspace_loss: no transmitted columns supplied");
    const double inv_n = 1.0 / static_cast<double>(x_t.size());
    for (const ComplexMatrix *col : x_t) {
        if (col->rows() != acc_b.dim() || col->cols() != 1)
            throw std::invalid_argument("backward_subspace_loss: column shape " +
                                        col->shape_string() + " does not match covariance dim " +
                                        std::to_string(acc_b.dim()));
        if (u_b.cols() == 0) {
            out.grads.emplace_back(col->rows(), 1);
            continue;
        }
        const ComplexMatrix proj = matmul(adjoint(u_b), *col);
        const double n = frobenius_norm(proj);
        out.loss += inv_n * n * n;
        out.grads.push_back(inv_n * matmul(u_b, proj));
    }
    return out;
}

/// The combined training objective l = l_task + lambda_f l_f + lambda_b l_b.
struct LossBundle {
    double task = 0.0;
    double forward_sub = 0.0;
    double backward_sub = 0.0;
    double lambda_f = 1.0;
    double lambda_b = 1.0;
    double total = 0.0;
};

inline LossBundle total_loss(double task, double forward_sub, double backward_sub,
                             double lambda_f = 1.0, double lambda_b = 1.0)
{
    LossBundle b;
    b.task = task;
    b.forward_sub = forward_sub;
    b.backward_sub = backward_sub;
    b.lambda_f = lambda_f;
    b.lambda_b = lambda_b;
    b.total = task + lambda_f * forward_sub + lambda_b * backward_sub;
    return b;
}

} // namespace airsl
