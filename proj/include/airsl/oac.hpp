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

#include <utility>

#include "channel.hpp"

namespace airsl {

/// Everything one input column leaves behind on its way through the air:
/// the input, the K transmitted and received antenna signals, and the final
/// combined output (bias included).
struct ForwardTrace {
    ComplexMatrix x;
    std::vector<ComplexMatrix> x_t;
    std::vector<ComplexMatrix> y_r;
    ComplexMatrix y;
};

/// Gradients of one backward pass; shapes mirror the layer parameters.
/// g_xt holds the recovered per-round transmit-signal gradients, which the
/// transmitter needs both for its local parameter gradients and for the
/// backward subspace regularizer.
struct BackwardTrace {
    ComplexMatrix g_x;
    ComplexMatrix g_p;
    std::vector<ComplexMatrix> g_w_tilde;
    ComplexMatrix g_c;
    ComplexMatrix g_b;
    std::vector<ComplexMatrix> g_xt;
};

/// A fully connected layer realized as K precode/transmit/combine rounds
/// over a MIMO link. Round k sends x_{t,k} = P W~_k x, receives
/// y_{r,k} = H x_{t,k} + n, and combines y_k = C^H y_{r,k}; the outputs are
/// concatenated, truncated to n_o, and the receiver adds its local bias.
///
/// Backpropagation never reads H: the receiver transmits conj(C g_{y_k})
/// over the reciprocal link H^T, and the conjugate of the raw received
/// signal is exactly H^H C g_{y_k}, the transmit-signal gradient. Everything
/// else is local algebra on either side of the link.
class OacLinearLayer {
  public:
    ComplexMatrix p;                     // N_t x r, shared precoder part
    std::vector<ComplexMatrix> w_tilde;  // K matrices, r x N_i
    ComplexMatrix c;                     // N_r x r, shared combiner
    ComplexMatrix bias;                  // N_o x 1, lives at the receiver

    static OacLinearLayer init(std::size_t n_i, std::size_t n_o, std::size_t n_t,
                               std::size_t n_r, std::size_t r, Rng &rng)
    {
        if (n_i < 1 || n_o < 1 || n_t < 1 || n_r < 1 || r < 1)
            throw std::invalid_argument("OacLinearLayer: all dimensions must be at least 1");
        if (r > std::min(n_t, n_r))
            throw std::invalid_argument("OacLinearLayer: r = " + std::to_string(r) +
                                        " exceeds min(n_t, n_r) = " +
                                        std::to_string(std::min(n_t, n_r)) +
                                        "; the link cannot carry that many streams");
        OacLinearLayer layer;
        layer.n_i_ = n_i;
        layer.n_o_ = n_o;
        layer.rounds_ = (n_o + r - 1) / r;
        layer.streams_ = r;
        // Complex Glorot-style init: per-entry variance 1/fan_in, where
        // fan_in is the dimension each matrix contracts over in the forward
        // direction (N_i for W~_k, r for P, N_r for the combiner C^H).
        layer.p = random_complex_gaussian(n_t, r, 1.0 / static_cast<double>(r), rng);
        layer.w_tilde.reserve(layer.rounds_);
        for (std::size_t k = 0; k < layer.rounds_; ++k)
            layer.w_tilde.push_back(
                random_complex_gaussian(r, n_i, 1.0 / static_cast<double>(n_i), rng));
        layer.c = random_complex_gaussian(n_r, r, 1.0 / static_cast<double>(n_r), rng);
        layer.bias = ComplexMatrix(n_o, 1);
        return layer;
    }

    std::size_t n_i() const { return n_i_; }
    std::size_t n_o() const { return n_o_; }
    std::size_t rounds() const { return rounds_; }
    std::size_t streams() const { return streams_; }
    std::size_t n_t() const { return p.rows(); }
    std::size_t n_r() const { return c.rows(); }

    std::pair<ComplexMatrix, ForwardTrace> forward(ChannelState &channel, const ComplexMatrix &x,
                                                   Rng &rng) const
    {
        if (x.rows() != n_i_ || x.cols() != 1)
            throw std::invalid_argument("oac forward: expected " + std::to_string(n_i_) +
                                        "x1 input, got " + x.shape_string());
        if (channel.n_t() != n_t() || channel.n_r() != n_r())
            throw std::invalid_argument("oac forward: channel is " +
                                        channel.h().shape_string() + " but layer expects " +
                                        std::to_string(n_r()) + "x" + std::to_string(n_t()));
        ForwardTrace trace;
        trace.x = x;
        trace.x_t.reserve(rounds_);
        trace.y_r.reserve(rounds_);
        ComplexMatrix y(n_o_, 1);
        const ComplexMatrix combiner = adjoint(c);
        for (std::size_t k = 0; k < rounds_; ++k) {
            ComplexMatrix xt = matmul(p, matmul(w_tilde[k], x));
            ComplexMatrix yr = channel.transmit_forward(xt, rng);
            ComplexMatrix yk = matmul(combiner, yr);
            for (std::size_t i = 0; i < streams_; ++i) {
                const std::size_t idx = k * streams_ + i;
                if (idx < n_o_)
                    y(idx, 0) = yk(i, 0);
            }
            trace.x_t.push_back(std::move(xt));
            trace.y_r.push_back(std::move(yr));
        }
        y += bias;
        trace.y = y;
        return {std::move(y), std::move(trace)};
    }

    /// Reference backward pass that reads H directly. This is the oracle the
    /// over-the-air path is checked against; training uses backward_ota.
    BackwardTrace backward_ideal(const ChannelState &channel, const ForwardTrace &trace,
                                 const ComplexMatrix &g_y) const
    {
        check_backward_args(channel, trace, g_y);
        const ComplexMatrix h_adj = adjoint(channel.h());
        std::vector<ComplexMatrix> g_xt;
        g_xt.reserve(rounds_);
        for (std::size_t k = 0; k < rounds_; ++k)
            g_xt.push_back(matmul(h_adj, matmul(c, output_chunk(g_y, k))));
        return accumulate_gradients(trace, g_y, std::move(g_xt));
    }

    /// Over-the-air backward pass. Per round the receiver sends
    /// conj(C g_{y_k}) across the reciprocal link; the conjugate of the raw
    /// antenna signal recovers g_{x_t,k} (exactly H^H C g_{y_k} when the
    /// link is noiseless). H itself is never read here.
    BackwardTrace backward_ota(const ChannelState &channel, const ForwardTrace &trace,
                               const ComplexMatrix &g_y, Rng &rng) const
    {
        check_backward_args(channel, trace, g_y);
        std::vector<ComplexMatrix> g_xt;
        g_xt.reserve(rounds_);
        for (std::size_t k = 0; k < rounds_; ++k) {
            const ComplexMatrix sent = conjugate(matmul(c, output_chunk(g_y, k)));
            g_xt.push_back(conjugate(channel.transmit_backward(sent, rng)));
        }
        return accumulate_gradients(trace, g_y, std::move(g_xt));
    }

    /// Local gradient algebra shared by both backward routes, given the
    /// recovered transmit-signal gradients. Convention: for y = A x and a
    /// real loss, g_x = A^H g_y and g_A = g_y x^H.
    BackwardTrace accumulate_gradients(const ForwardTrace &trace, const ComplexMatrix &g_y,
                                       std::vector<ComplexMatrix> g_xt) const
    {
        BackwardTrace out;
        out.g_xt = std::move(g_xt);
        out.g_b = g_y;
        out.g_x = ComplexMatrix(n_i_, 1);
        out.g_p = ComplexMatrix(n_t(), streams_);
        out.g_c = ComplexMatrix(n_r(), streams_);
        out.g_w_tilde.assign(rounds_, ComplexMatrix(streams_, n_i_));
        const ComplexMatrix p_adj = adjoint(p);
        const ComplexMatrix x_adj = adjoint(trace.x);
        for (std::size_t k = 0; k < rounds_; ++k) {
            const ComplexMatrix g_yk = output_chunk(g_y, k);
            const ComplexMatrix g_yk_adj = adjoint(g_yk);
            out.g_c += matmul(trace.y_r[k], g_yk_adj);
            const ComplexMatrix u = matmul(w_tilde[k], trace.x);
            out.g_p += matmul(out.g_xt[k], adjoint(u));
            const ComplexMatrix pg = matmul(p_adj, out.g_xt[k]);
            out.g_w_tilde[k] = matmul(pg, x_adj);
            out.g_x += matmul(adjoint(w_tilde[k]), pg);
        }
        return out;
    }

    /// Per-round slice of the output gradient; entries past n_o (the
    /// discarded tail of the final round) contribute zero.
    ComplexMatrix output_chunk(const ComplexMatrix &g_y, std::size_t k) const
    {
        ComplexMatrix chunk(streams_, 1);
        for (std::size_t i = 0; i < streams_; ++i) {
            const std::size_t idx = k * streams_ + i;
            if (idx < n_o_)
                chunk(i, 0) = g_y(idx, 0);
        }
        return chunk;
    }

  private:
    void check_backward_args(const ChannelState &channel, const ForwardTrace &trace,
                             const ComplexMatrix &g_y) const
    {
        if (trace.x.rows() != n_i_ || trace.x_t.size() != rounds_ || trace.y_r.size() != rounds_)
            throw std::invalid_argument("oac backward: trace does not belong to this layer");
        if (g_y.rows() != n_o_ || g_y.cols() != 1)
            throw std::invalid_argument("oac backward: expected " + std::to_string(n_o_) +
                                        "x1 output gradient, got " + g_y.shape_string());
        if (channel.n_t() != n_t() || channel.n_r() != n_r())
            throw std::invalid_argument("oac backward: channel dimensions do not match layer");
    }

    std::size_t n_i_ = 0;
    std::size_t n_o_ = 0;
    std::size_t rounds_ = 0;
    std::size_t streams_ = 0;
};

/// Geometry of an im2col-style rearrangement that lets the OAC layer act as
/// a convolution: one transmitted column per output location, holding the
/// flattened receptive field (channel-major, then kernel row, then column).
struct ConvGeometry {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t padding = 0;
    std::size_t stride = 1;

    void validate() const
    {
        if (channels < 1 || height < 1 || width < 1 || kernel_h < 1 || kernel_w < 1)
            throw std::invalid_argument("conv geometry: all extents must be at least 1");
        if (stride < 1)
            throw std::invalid_argument("conv geometry: stride must be at least 1");
        if (kernel_h > height + 2 * padding || kernel_w > width + 2 * padding)
            throw std::invalid_argument("conv geometry: kernel does not fit the padded map");
    }

    std::size_t out_h() const { return (height + 2 * padding - kernel_h) / stride + 1; }
    std::size_t out_w() const { return (width + 2 * padding - kernel_w) / stride + 1; }
    std::size_t patch_len() const { return channels * kernel_h * kernel_w; }
};

/// Splits a flattened channels x height x width feature map into one column
/// per output location. Out-of-bounds (padding) taps read zero.
inline std::vector<ComplexMatrix> conv_rearrange(const ComplexMatrix &feature_map,
                                                 const ConvGeometry &g)
{
    g.validate();
    if (feature_map.rows() != g.channels * g.height * g.width || feature_map.cols() != 1)
        throw std::invalid_argument("conv_rearrange: expected " +
                                    std::to_string(g.channels * g.height * g.width) +
                                    "x1 flattened map, got " + feature_map.shape_string());
    std::vector<ComplexMatrix> columns;
    columns.reserve(g.out_h() * g.out_w());
    for (std::size_t oi = 0; oi < g.out_h(); ++oi) {
        for (std::size_t oj = 0; oj < g.out_w(); ++oj) {
            ComplexMatrix col(g.patch_len(), 1);
            for (std::size_t c = 0; c < g.channels; ++c) {
                for (std::size_t di = 0; di < g.kernel_h; ++di) {
                    for (std::size_t dj = 0; dj < g.kernel_w; ++dj) {
                        const long ii = static_cast<long>(oi * g.stride + di) -
                                        static_cast<long>(g.padding);
                        const long jj = static_cast<long>(oj * g.stride + dj) -
                                        static_cast<long>(g.padding);
                        if (ii < 0 || jj < 0 || ii >= static_cast<long>(g.height) ||
                            jj >= static_cast<long>(g.width))
                            continue;
                        const std::size_t src =
                            (c * g.height + static_cast<std::size_t>(ii)) * g.width +
                            static_cast<std::size_t>(jj);
                        col((c * g.kernel_h + di) * g.kernel_w + dj, 0) = feature_map(src, 0);
                    }
                }
            }
            columns.push_back(std::move(col));
        }
    }
    return columns;
}

/// Inverse of the rearrangement on the output side: per-location columns of
/// length out_channels become a flattened out_channels x out_h x out_w map.
inline ComplexMatrix conv_assemble(const std::vector<ComplexMatrix> &columns,
                                   std::size_t out_channels, std::size_t out_h,
                                   std::size_t out_w)
{
    if (columns.size() != out_h * out_w)
        throw std::invalid_argument("conv_assemble: expected " + std::to_string(out_h * out_w) +
                                    " columns, got " + std::to_string(columns.size()));
    ComplexMatrix map(out_channels * out_h * out_w, 1);
    for (std::size_t loc = 0; loc < columns.size(); ++loc) {
        if (columns[loc].rows() != out_channels || columns[loc].cols() != 1)
            throw std::invalid_argument("conv_assemble: column " + std::to_string(loc) +
                                        " has shape " + columns[loc].shape_string());
        const std::size_t i = loc / out_w;
        const std::size_t j = loc % out_w;
        for (std::size_t c = 0; c < out_channels; ++c)
            map((c * out_h + i) * out_w + j, 0) = columns[loc](c, 0);
    }
    return map;
}

/// Adjoint of conv_rearrange: scatters per-location patch gradients back
/// onto the input map (padding taps are dropped).
inline ComplexMatrix conv_scatter(const std::vector<ComplexMatrix> &patch_grads,
                                  const ConvGeometry &g)
{
    g.validate();
    if (patch_grads.size() != g.out_h() * g.out_w())
        throw std::invalid_argument("conv_scatter: wrong number of patch gradients");
    ComplexMatrix map(g.channels * g.height * g.width, 1);
    for (std::size_t loc = 0; loc < patch_grads.size(); ++loc) {
        const std::size_t oi = loc / g.out_w();
        const std::size_t oj = loc % g.out_w();
        for (std::size_t c = 0; c < g.channels; ++c) {
            for (std::size_t di = 0; di < g.kernel_h; ++di) {
                for (std::size_t dj = 0; dj < g.kernel_w; ++dj) {
                    const long ii =
                        static_cast<long>(oi * g.stride + di) - static_cast<long>(g.padding);
                    const long jj =
                        static_cast<long>(oj * g.stride + dj) - static_cast<long>(g.padding);
                    if (ii < 0 || jj < 0 || ii >= static_cast<long>(g.height) ||
                        jj >= static_cast<long>(g.width))
                        continue;
                    const std::size_t dst = (c * g.height + static_cast<std::size_t>(ii)) *
                                                g.width +
                                            static_cast<std::size_t>(jj);
                    map(dst, 0) += patch_grads[loc]((c * g.kernel_h + di) * g.kernel_w + dj, 0);
                }
            }
        }
    }
    return map;
}

} // namespace airsl
