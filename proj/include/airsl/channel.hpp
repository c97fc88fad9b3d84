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

#include <limits>

#include "clinalg.hpp"

namespace airsl {

/// Multipath geometry of the channel generator: each path carries a complex
/// gain with |a| uniform in [gain_low, gain_high] and uniform phase, plus
/// uniform arrival/departure angles in [-pi, pi].
struct PathParams {
    std::size_t n_paths = 8;
    double gain_low = 0.5;
    double gain_high = 1.5;
};

/// Array response column vector: entry m is e^{j m angle}.
inline ComplexMatrix steering(std::size_t n_antennas, double angle)
{
    if (n_antennas == 0)
        throw std::invalid_argument("steering: antenna count must be at least 1");
    ComplexMatrix v(n_antennas, 1);
    for (std::size_t m = 0; m < n_antennas; ++m)
        v(m, 0) = std::polar(1.0, angle * static_cast<double>(m));
    return v;
}

struct MobilityConfig {
    double rho = 0.0;
    std::size_t update_interval = 50;

    void validate() const
    {
        if (rho < 0.0 || rho > 1.0)
            throw std::invalid_argument("mobility.rho must lie in [0, 1]");
        if (update_interval < 1)
            throw std::invalid_argument("mobility.update_interval must be at least 1");
    }
};

/// A MIMO link frozen at one instant: the matrix H, its nominal stream rank,
/// the per-antenna noise power, and a running estimate of received signal
/// power used to hold a requested SNR.
///
/// Forward transmission is H x + n, backward transmission is H^T s + n with
/// the same H (strict reciprocity) and the same noise power.
class ChannelState {
  public:
    ChannelState(ComplexMatrix h, std::size_t nominal_rank)
        : h_(std::move(h)), rank_(nominal_rank)
    {
        if (h_.rows() == 0 || h_.cols() == 0)
            throw std::invalid_argument("ChannelState: empty channel matrix");
    }

    const ComplexMatrix &h() const { return h_; }
    std::size_t n_t() const { return h_.cols(); }
    std::size_t n_r() const { return h_.rows(); }
    std::size_t nominal_rank() const { return rank_; }
    double noise_variance() const { return noise_variance_; }
    double signal_power_ema() const { return signal_power_ema_; }

    void set_noise_variance(double v)
    {
        if (v < 0.0)
            throw std::invalid_argument("ChannelState: negative noise variance");
        noise_variance_ = v;
    }

    void seed_power_ema(double power)
    {
        if (power < 0.0)
            throw std::invalid_argument("ChannelState: negative signal power estimate");
        signal_power_ema_ = power;
    }

    /// Sets the noise power so that the tracked received signal power sits
    /// snr_db above it. Requires at least one observed transmission (or a
    /// pre-seeded power estimate).
    void calibrate_noise(double snr_db)
    {
        if (signal_power_ema_ <= 0.0)
            throw std::invalid_argument(
                "calibrate_noise: no positive signal power estimate available yet");
        noise_variance_ = signal_power_ema_ / std::pow(10.0, snr_db / 10.0);
    }

    double measured_snr_db() const
    {
        if (noise_variance_ <= 0.0 || signal_power_ema_ <= 0.0)
            return std::numeric_limits<double>::infinity();
        return 10.0 * std::log10(signal_power_ema_ / noise_variance_);
    }

    /// y = H x + n. Also feeds the signal-power tracker with the noiseless
    /// per-antenna received power; the first transmission seeds it, later
    /// ones decay it with factor 0.9.
    ComplexMatrix transmit_forward(const ComplexMatrix &x_t, Rng &rng)
    {
        if (x_t.rows() != n_t() || x_t.cols() != 1)
            throw std::invalid_argument("transmit_forward: expected " + std::to_string(n_t()) +
                                        "x1 signal, got " + x_t.shape_string());
        ComplexMatrix y = matmul(h_, x_t);
        const double power = frobenius_norm(y) * frobenius_norm(y) / static_cast<double>(n_r());
        signal_power_ema_ =
            (signal_power_ema_ == 0.0) ? power : 0.9 * signal_power_ema_ + 0.1 * power;
        if (noise_variance_ > 0.0)
            y += random_complex_gaussian(n_r(), 1, noise_variance_, rng);
        return y;
    }

    /// Reciprocal link: returns H^T s + n with the same noise power as the
    /// forward direction. Never re-draws H.
    ComplexMatrix transmit_backward(const ComplexMatrix &s, Rng &rng) const
    {
        if (s.rows() != n_r() || s.cols() != 1)
            throw std::invalid_argument("transmit_backward: expected " + std::to_string(n_r()) +
                                        "x1 signal, got " + s.shape_string());
        ComplexMatrix g = matmul(transpose(h_), s);
        if (noise_variance_ > 0.0)
            g += random_complex_gaussian(n_t(), 1, noise_variance_, rng);
        return g;
    }

    void replace_h(ComplexMatrix h)
    {
        if (h.rows() != n_r() || h.cols() != n_t())
            throw std::invalid_argument("replace_h: dimension change is not allowed");
        h_ = std::move(h);
    }

  private:
    ComplexMatrix h_;
    std::size_t rank_ = 0;
    double noise_variance_ = 0.0;
    double signal_power_ema_ = 0.0;
};

/// One path's rank-one contribution:
///   a conj(steer(N_r, theta)) steer(N_t, phi)^T.
inline ComplexMatrix path_component(Complex gain, double theta, double phi, std::size_t n_t,
                                    std::size_t n_r)
{
    const ComplexMatrix rx = conjugate(steering(n_r, theta));
    const ComplexMatrix tx = transpose(steering(n_t, phi));
    return gain * matmul(rx, tx);
}

/// Draws a channel as a sum of n_paths rank-one outer products. Per path
/// the draw order is |a|, angle(a), theta, phi.
inline ChannelState gen_channel(const PathParams &params, std::size_t n_t, std::size_t n_r,
                                Rng &rng)
{
    if (n_t < 1 || n_r < 1)
        throw std::invalid_argument("gen_channel: antenna counts must be at least 1");
    ComplexMatrix h(n_r, n_t);
    for (std::size_t n = 0; n < params.n_paths; ++n) {
        const double mag = rng.uniform(params.gain_low, params.gain_high);
        const double arg = rng.uniform(-kPi, kPi);
        const Complex gain = std::polar(mag, arg);
        const double theta = rng.uniform(-kPi, kPi);
        const double phi = rng.uniform(-kPi, kPi);
        h += path_component(gain, theta, phi, n_t, n_r);
    }
    return ChannelState(std::move(h), params.n_paths);
}

/// One mobility step: H <- (1 - rho) H + rho H~ with H~ a fresh draw.
/// Rank, noise power, and the signal-power tracker carry over.
inline ChannelState evolve_channel(const ChannelState &current, const MobilityConfig &config,
                                   const PathParams &params, Rng &rng)
{
    config.validate();
    const ChannelState fresh = gen_channel(params, current.n_t(), current.n_r(), rng);
    ComplexMatrix h = (1.0 - config.rho) * current.h() + config.rho * fresh.h();
    ChannelState next(std::move(h), current.nominal_rank());
    next.set_noise_variance(current.noise_variance());
    next.seed_power_ema(current.signal_power_ema());
    return next;
}

} // namespace airsl
