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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "clinalg.hpp"

namespace airsl {

/// An in-memory corpus: one flattened complex feature column per sample.
struct Dataset {
    std::vector<ComplexMatrix> samples;
    std::vector<int> labels;
    std::vector<std::size_t> feature_shape;
    std::size_t class_count = 0;

    std::size_t size() const { return samples.size(); }
    std::size_t feature_dim() const { return flatten(); }

    std::size_t flatten() const
    {
        std::size_t n = 1;
        for (auto d : feature_shape)
            n *= d;
        return n;
    }
};

/// Real values enter the complex network as x + j0; the first complex layer
/// creates the imaginary structure.
inline ComplexMatrix to_complex(const std::vector<double> &x)
{
    ComplexMatrix m(x.size(), 1);
    for (std::size_t i = 0; i < x.size(); ++i)
        m(i, 0) = Complex(x[i], 0.0);
    return m;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary format
// ---------------------------------------------------------------------------

constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label byte + 3 x 32 x 32 pixels
constexpr std::size_t kCifarPixels = 3072;

struct CifarRaw {
    std::vector<std::vector<double>> pixels;  // per record, 3072 values in [0, 1]
    std::vector<int> labels;
};

/// Parses one binary batch file of 3073-byte records. The file size must be
/// an exact multiple of the record size and every label byte must be 0..9;
/// violations are reported with the byte offset / record index.
inline CifarRaw parse_cifar10_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::invalid_argument("cifar10: cannot open '" + path + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    if (bytes.size() % kCifarRecordBytes != 0) {
        const std::size_t offset = (bytes.size() / kCifarRecordBytes) * kCifarRecordBytes;
        throw std::invalid_argument("cifar10: '" + path + "' is truncated: " +
                                    std::to_string(bytes.size()) +
                                    " bytes is not a multiple of 3073; partial record starts "
                                    "at byte offset " +
                                    std::to_string(offset));
    }
    CifarRaw raw;
    const std::size_t records = bytes.size() / kCifarRecordBytes;
    raw.pixels.reserve(records);
    raw.labels.reserve(records);
    for (std::size_t rec = 0; rec < records; ++rec) {
        const unsigned char *base =
            reinterpret_cast<const unsigned char *>(bytes.data()) + rec * kCifarRecordBytes;
        const unsigned char label = base[0];
        if (label > 9)
            throw std::invalid_argument("cifar10: '" + path + "' record " +
                                        std::to_string(rec) + " has label byte " +
                                        std::to_string(static_cast<int>(label)) +
                                        " outside 0..9");
        raw.labels.push_back(static_cast<int>(label));
        std::vector<double> px(kCifarPixels);
        for (std::size_t i = 0; i < kCifarPixels; ++i)
            px[i] = static_cast<double>(base[1 + i]) / 255.0;
        raw.pixels.push_back(std::move(px));
    }
    return raw;
}

/// Loads the standard six-file CIFAR-10 binary layout from a directory.
/// Pixels are scaled to [0, 1] and standardized per channel with statistics
/// taken from the training split only.
inline std::pair<Dataset, Dataset> load_cifar10(const std::string &dir)
{
    CifarRaw train_raw;
    for (int i = 1; i <= 5; ++i) {
        const std::string path = dir + "/data_batch_" + std::to_string(i) + ".bin";
        CifarRaw part = parse_cifar10_file(path);
        for (std::size_t r = 0; r < part.labels.size(); ++r) {
            train_raw.pixels.push_back(std::move(part.pixels[r]));
            train_raw.labels.push_back(part.labels[r]);
        }
    }
    CifarRaw test_raw = parse_cifar10_file(dir + "/test_batch.bin");
    if (train_raw.labels.empty())
        throw std::invalid_argument("cifar10: training files contain no records");

    // Per-channel mean/std over the training split.
    const std::size_t per_channel = 1024;
    double mean[3] = {0, 0, 0}, var[3] = {0, 0, 0};
    const double n = static_cast<double>(train_raw.pixels.size() * per_channel);
    for (const auto &px : train_raw.pixels)
        for (int ch = 0; ch < 3; ++ch)
            for (std::size_t i = 0; i < per_channel; ++i)
                mean[ch] += px[ch * per_channel + i];
    for (int ch = 0; ch < 3; ++ch)
        mean[ch] /= n;
    for (const auto &px : train_raw.pixels)
        for (int ch = 0; ch < 3; ++ch)
            for (std::size_t i = 0; i < per_channel; ++i) {
                const double d = px[ch * per_channel + i] - mean[ch];
                var[ch] += d * d;
            }
    double stddev[3];
    for (int ch = 0; ch < 3; ++ch)
        stddev[ch] = std::max(std::sqrt(var[ch] / n), 1e-12);

    auto build = [&](CifarRaw &raw) {
        Dataset d;
        d.feature_shape = {3, 32, 32};
        d.class_count = 10;
        d.samples.reserve(raw.labels.size());
        d.labels = raw.labels;
        for (auto &px : raw.pixels) {
            for (int ch = 0; ch < 3; ++ch)
                for (std::size_t i = 0; i < per_channel; ++i)
                    px[ch * per_channel + i] = (px[ch * per_channel + i] - mean[ch]) /
                                               stddev[ch];
            d.samples.push_back(to_complex(px));
        }
        return d;
    };
    return {build(train_raw), build(test_raw)};
}

// ---------------------------------------------------------------------------
// Synthetic complex Gaussian blobs
// ---------------------------------------------------------------------------

/// Desk-scale classification corpus: per-class complex means drawn on the
/// unit sphere and scaled by `separation`, samples spread around them with
/// the given per-entry complex variance.
struct BlobConfig {
    std::size_t classes = 4;
    std::size_t dim = 16;
    double separation = 4.0;
    double variance = 1.0;
    std::size_t per_class = 500;

    void validate() const
    {
        if (classes < 2)
            throw std::invalid_argument("blob.classes must be at least 2");
        if (dim < 1)
            throw std::invalid_argument("blob.dim must be at least 1");
        if (separation <= 0.0)
            throw std::invalid_argument("blob.separation must be positive");
        if (variance <= 0.0)
            throw std::invalid_argument("blob.variance must be positive");
        if (per_class < 5)
            throw std::invalid_argument("blob.per_class must be at least 5");
    }
};

/// Returns an 80/20 train/test split, deterministic per generator state.
inline std::pair<Dataset, Dataset> synth_blobs(const BlobConfig &config, Rng &rng)
{
    config.validate();
    std::vector<ComplexMatrix> means;
    means.reserve(config.classes);
    for (std::size_t c = 0; c < config.classes; ++c) {
        ComplexMatrix m = random_complex_gaussian(config.dim, 1, 1.0, rng);
        const double norm = frobenius_norm(m);
        means.push_back((config.separation / std::max(norm, 1e-30)) * m);
    }
    Dataset train, test;
    for (Dataset *d : {&train, &test}) {
        d->feature_shape = {config.dim};
        d->class_count = config.classes;
    }
    const std::size_t train_per_class = (config.per_class * 4) / 5;
    for (std::size_t c = 0; c < config.classes; ++c) {
        for (std::size_t s = 0; s < config.per_class; ++s) {
            ComplexMatrix sample =
                means[c] + random_complex_gaussian(config.dim, 1, config.variance, rng);
            Dataset &dst = (s < train_per_class) ? train : test;
            dst.samples.push_back(std::move(sample));
            dst.labels.push_back(static_cast<int>(c));
        }
    }
    return {train, test};
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
    ComplexMatrix features;  // feature_dim x batch columns
    std::vector<int> labels;
};

/// One epoch of minibatches. The permutation is a deterministic function of
/// the generator state; the final partial batch is kept.
inline std::vector<Batch> make_batches(const Dataset &d, std::size_t batch_size, bool shuffle,
                                       Rng &rng)
{
    if (batch_size < 1)
        throw std::invalid_argument("make_batches: batch_size must be at least 1");
    if (d.size() == 0)
        throw std::invalid_argument("make_batches: dataset is empty");
    std::vector<std::size_t> order(d.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    if (shuffle) {
        // Fisher-Yates on our own stream so the permutation is stable across
        // standard libraries.
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
            std::swap(order[i - 1], order[j]);
        }
    }
    std::vector<Batch> batches;
    const std::size_t dim = d.feature_dim();
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, order.size() - start);
        Batch b;
        b.features = ComplexMatrix(dim, count);
        b.labels.resize(count);
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t src = order[start + k];
            b.features.set_column(k, d.samples[src]);
            b.labels[k] = d.labels[src];
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

} // namespace airsl
