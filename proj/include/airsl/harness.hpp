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

#include <charconv>
#include <chrono>

#include <json.hpp>

#include "data.hpp"
#include "nn.hpp"

namespace airsl {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ActivationConfig {
    std::string kind = "crelu";  // crelu | qam
    std::size_t levels = 4;
    double delta = 1.0;
};

struct OptimizerConfig {
    double lr = 0.005;
    std::size_t batch_size = 64;
    std::size_t epochs = 30;
};

struct LossWeights {
    double lambda_f = 1.0;
    double lambda_b = 1.0;
};

struct DataConfig {
    bool use_blob = true;
    BlobConfig blob;
    std::string cifar10_dir;
};

/// Config-level layer descriptor. "activation" is a placeholder resolved to
/// the configured activation kind when the model is built, which is what
/// lets the sweep commands swap activations without touching the model.
struct CfgLayer {
    std::string type;
    std::size_t out = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t padding = 0;
    std::size_t stride = 1;
    std::vector<CfgLayer> inner;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    double snr_db = 20.0;
    MimoParams mimo;
    ActivationConfig activation;
    LossWeights loss_weights;
    OptimizerConfig optimizer;
    MobilityConfig mobility;
    DataConfig data;
    std::vector<CfgLayer> model_layers;
};

namespace detail {

inline void check_keys(const json &obj, const std::vector<std::string> &allowed,
                       const std::string &path)
{
    if (!obj.is_object())
        throw std::invalid_argument(path + ": expected a JSON object");
    for (const auto &item : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw std::invalid_argument(path + ": unknown field '" + item.key() + "'");
    }
}

inline double get_number(const json &obj, const char *key, double fallback,
                         const std::string &path)
{
    if (!obj.contains(key))
        return fallback;
    if (!obj[key].is_number())
        throw std::invalid_argument(path + "." + key + ": expected a number");
    return obj[key].get<double>();
}

inline std::size_t get_count(const json &obj, const char *key, std::size_t fallback,
                             const std::string &path)
{
    if (!obj.contains(key))
        return fallback;
    if (!obj[key].is_number_unsigned() && !obj[key].is_number_integer())
        throw std::invalid_argument(path + "." + key + ": expected a non-negative integer");
    const auto v = obj[key].get<long long>();
    if (v < 0)
        throw std::invalid_argument(path + "." + key + ": expected a non-negative integer");
    return static_cast<std::size_t>(v);
}

inline std::vector<CfgLayer> parse_layers(const json &arr, const std::string &path);

inline CfgLayer parse_layer(const json &obj, const std::string &path)
{
    if (!obj.is_object() || !obj.contains("type") || !obj["type"].is_string())
        throw std::invalid_argument(path + ": each layer needs a string 'type'");
    CfgLayer layer;
    layer.type = obj["type"].get<std::string>();
    if (layer.type == "oac_linear" || layer.type == "dense") {
        check_keys(obj, {"type", "out"}, path);
        layer.out = get_count(obj, "out", 0, path);
        if (layer.out < 1)
            throw std::invalid_argument(path + ".out: must be at least 1");
    } else if (layer.type == "oac_conv" || layer.type == "conv") {
        check_keys(obj, {"type", "out_channels", "kernel", "padding", "stride"}, path);
        layer.out_channels = get_count(obj, "out_channels", 0, path);
        if (layer.out_channels < 1)
            throw std::invalid_argument(path + ".out_channels: must be at least 1");
        if (obj.contains("kernel")) {
            const auto &k = obj["kernel"];
            if (k.is_array() && k.size() == 2) {
                layer.kernel_h = k[0].get<std::size_t>();
                layer.kernel_w = k[1].get<std::size_t>();
            } else if (k.is_number_unsigned()) {
                layer.kernel_h = layer.kernel_w = k.get<std::size_t>();
            } else {
                throw std::invalid_argument(path + ".kernel: expected an integer or [kh, kw]");
            }
        }
        layer.padding = get_count(obj, "padding", 0, path);
        layer.stride = get_count(obj, "stride", 1, path);
    } else if (layer.type == "crelu" || layer.type == "qam" || layer.type == "activation" ||
               layer.type == "batchnorm") {
        check_keys(obj, {"type"}, path);
    } else if (layer.type == "residual") {
        check_keys(obj, {"type", "layers"}, path);
        if (!obj.contains("layers"))
            throw std::invalid_argument(path + ": residual needs a 'layers' array");
        layer.inner = parse_layers(obj["layers"], path + ".layers");
    } else {
        throw std::invalid_argument(path + ": unknown layer type '" + layer.type + "'");
    }
    return layer;
}

inline std::vector<CfgLayer> parse_layers(const json &arr, const std::string &path)
{
    if (!arr.is_array() || arr.empty())
        throw std::invalid_argument(path + ": expected a non-empty array of layers");
    std::vector<CfgLayer> out;
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(parse_layer(arr[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

} // namespace detail

/// Parses and fully validates a JSON experiment configuration. The schema is
/// strict: unknown fields anywhere are rejected with their path.
inline ExperimentConfig parse_config(const json &root)
{
    using namespace detail;
    check_keys(root,
               {"seed", "snr_db", "mimo", "activation", "loss_weights", "optimizer", "mobility",
                "data", "model"},
               "config");
    ExperimentConfig cfg;
    cfg.seed = get_count(root, "seed", 1, "config");
    cfg.snr_db = get_number(root, "snr_db", 20.0, "config");

    if (root.contains("mimo")) {
        const auto &m = root["mimo"];
        check_keys(m, {"n_t", "n_r", "r", "n_paths", "gain_low", "gain_high"}, "mimo");
        cfg.mimo.n_t = get_count(m, "n_t", cfg.mimo.n_t, "mimo");
        cfg.mimo.n_r = get_count(m, "n_r", cfg.mimo.n_r, "mimo");
        cfg.mimo.r = get_count(m, "r", cfg.mimo.r, "mimo");
        cfg.mimo.n_paths = get_count(m, "n_paths", cfg.mimo.n_paths, "mimo");
        cfg.mimo.gain_low = get_number(m, "gain_low", cfg.mimo.gain_low, "mimo");
        cfg.mimo.gain_high = get_number(m, "gain_high", cfg.mimo.gain_high, "mimo");
    }
    cfg.mimo.validate();

    if (root.contains("activation")) {
        const auto &a = root["activation"];
        check_keys(a, {"kind", "levels", "delta"}, "activation");
        if (a.contains("kind")) {
            if (!a["kind"].is_string())
                throw std::invalid_argument("activation.kind: expected a string");
            cfg.activation.kind = a["kind"].get<std::string>();
        }
        cfg.activation.levels = get_count(a, "levels", cfg.activation.levels, "activation");
        cfg.activation.delta = get_number(a, "delta", cfg.activation.delta, "activation");
    }
    if (cfg.activation.kind != "crelu" && cfg.activation.kind != "qam")
        throw std::invalid_argument("activation.kind: must be 'crelu' or 'qam', got '" +
                                    cfg.activation.kind + "'");
    if (cfg.activation.levels < 2)
        throw std::invalid_argument("activation.levels: must be at least 2");
    if (cfg.activation.delta <= 0.0)
        throw std::invalid_argument("activation.delta: must be positive");

    if (root.contains("loss_weights")) {
        const auto &w = root["loss_weights"];
        check_keys(w, {"lambda_f", "lambda_b"}, "loss_weights");
        cfg.loss_weights.lambda_f = get_number(w, "lambda_f", 1.0, "loss_weights");
        cfg.loss_weights.lambda_b = get_number(w, "lambda_b", 1.0, "loss_weights");
        if (cfg.loss_weights.lambda_f < 0.0 || cfg.loss_weights.lambda_b < 0.0)
            throw std::invalid_argument("loss_weights: weights must be non-negative");
    }

    if (root.contains("optimizer")) {
        const auto &o = root["optimizer"];
        check_keys(o, {"lr", "batch_size", "epochs"}, "optimizer");
        cfg.optimizer.lr = get_number(o, "lr", cfg.optimizer.lr, "optimizer");
        cfg.optimizer.batch_size = get_count(o, "batch_size", cfg.optimizer.batch_size,
                                             "optimizer");
        cfg.optimizer.epochs = get_count(o, "epochs", cfg.optimizer.epochs, "optimizer");
        if (cfg.optimizer.lr <= 0.0)
            throw std::invalid_argument("optimizer.lr: must be positive");
        if (cfg.optimizer.batch_size < 1 || cfg.optimizer.epochs < 1)
            throw std::invalid_argument("optimizer: batch_size and epochs must be at least 1");
    }

    if (root.contains("mobility")) {
        const auto &m = root["mobility"];
        check_keys(m, {"rho", "update_interval"}, "mobility");
        cfg.mobility.rho = get_number(m, "rho", 0.0, "mobility");
        cfg.mobility.update_interval = get_count(m, "update_interval", 50, "mobility");
    }
    cfg.mobility.validate();

    if (!root.contains("data"))
        throw std::invalid_argument("config: missing required field 'data'");
    {
        const auto &d = root["data"];
        check_keys(d, {"blob", "cifar10"}, "data");
        const bool has_blob = d.contains("blob");
        const bool has_cifar = d.contains("cifar10");
        if (has_blob == has_cifar)
            throw std::invalid_argument("data: exactly one of 'blob' or 'cifar10' is required");
        if (has_blob) {
            const auto &b = d["blob"];
            check_keys(b, {"classes", "dim", "separation", "variance", "per_class"},
                       "data.blob");
            cfg.data.use_blob = true;
            cfg.data.blob.classes = detail::get_count(b, "classes", 4, "data.blob");
            cfg.data.blob.dim = detail::get_count(b, "dim", 16, "data.blob");
            cfg.data.blob.separation = detail::get_number(b, "separation", 4.0, "data.blob");
            cfg.data.blob.variance = detail::get_number(b, "variance", 1.0, "data.blob");
            cfg.data.blob.per_class = detail::get_count(b, "per_class", 500, "data.blob");
            cfg.data.blob.validate();
        } else {
            if (!d["cifar10"].is_string())
                throw std::invalid_argument("data.cifar10: expected a directory path string");
            cfg.data.use_blob = false;
            cfg.data.cifar10_dir = d["cifar10"].get<std::string>();
        }
    }

    if (!root.contains("model"))
        throw std::invalid_argument("config: missing required field 'model'");
    detail::check_keys(root["model"], {"layers"}, "model");
    if (!root["model"].contains("layers"))
        throw std::invalid_argument("model: missing 'layers'");
    cfg.model_layers = detail::parse_layers(root["model"]["layers"], "model.layers");

    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string &text)
{
    return parse_config(json::parse(text));
}

namespace detail {

inline json layers_to_json(const std::vector<CfgLayer> &layers)
{
    json arr = json::array();
    for (const auto &l : layers) {
        json o;
        o["type"] = l.type;
        if (l.type == "oac_linear" || l.type == "dense") {
            o["out"] = l.out;
        } else if (l.type == "oac_conv" || l.type == "conv") {
            o["out_channels"] = l.out_channels;
            o["kernel"] = json::array({l.kernel_h, l.kernel_w});
            o["padding"] = l.padding;
            o["stride"] = l.stride;
        } else if (l.type == "residual") {
            o["layers"] = layers_to_json(l.inner);
        }
        arr.push_back(std::move(o));
    }
    return arr;
}

} // namespace detail

inline json serialize_config(const ExperimentConfig &cfg)
{
    json root;
    root["seed"] = cfg.seed;
    root["snr_db"] = cfg.snr_db;
    root["mimo"] = {{"n_t", cfg.mimo.n_t},       {"n_r", cfg.mimo.n_r},
                    {"r", cfg.mimo.r},           {"n_paths", cfg.mimo.n_paths},
                    {"gain_low", cfg.mimo.gain_low}, {"gain_high", cfg.mimo.gain_high}};
    root["activation"] = {{"kind", cfg.activation.kind},
                          {"levels", cfg.activation.levels},
                          {"delta", cfg.activation.delta}};
    root["loss_weights"] = {{"lambda_f", cfg.loss_weights.lambda_f},
                            {"lambda_b", cfg.loss_weights.lambda_b}};
    root["optimizer"] = {{"lr", cfg.optimizer.lr},
                         {"batch_size", cfg.optimizer.batch_size},
                         {"epochs", cfg.optimizer.epochs}};
    root["mobility"] = {{"rho", cfg.mobility.rho},
                        {"update_interval", cfg.mobility.update_interval}};
    if (cfg.data.use_blob)
        root["data"] = {{"blob",
                         {{"classes", cfg.data.blob.classes},
                          {"dim", cfg.data.blob.dim},
                          {"separation", cfg.data.blob.separation},
                          {"variance", cfg.data.blob.variance},
                          {"per_class", cfg.data.blob.per_class}}}};
    else
        root["data"] = {{"cifar10", cfg.data.cifar10_dir}};
    root["model"] = {{"layers", detail::layers_to_json(cfg.model_layers)}};
    return root;
}

/// Resolves the config-level layer list into a ModelSpec, replacing
/// "activation" placeholders with the configured activation.
inline ModelSpec resolve_model(const std::vector<CfgLayer> &layers,
                               const ActivationConfig &activation)
{
    ModelSpec spec;
    for (const auto &l : layers) {
        LayerDesc d;
        if (l.type == "oac_linear") {
            d.kind = LayerKind::OacLinear;
            d.out = l.out;
        } else if (l.type == "dense") {
            d.kind = LayerKind::Dense;
            d.out = l.out;
        } else if (l.type == "oac_conv" || l.type == "conv") {
            d.kind = (l.type == "oac_conv") ? LayerKind::OacConv : LayerKind::Conv;
            d.out_channels = l.out_channels;
            d.kernel_h = l.kernel_h;
            d.kernel_w = l.kernel_w;
            d.padding = l.padding;
            d.stride = l.stride;
        } else if (l.type == "crelu") {
            d.kind = LayerKind::CRelu;
        } else if (l.type == "qam") {
            d.kind = LayerKind::Qam;
            d.constellation = Constellation(activation.levels, activation.delta);
        } else if (l.type == "activation") {
            if (activation.kind == "qam") {
                d.kind = LayerKind::Qam;
                d.constellation = Constellation(activation.levels, activation.delta);
            } else {
                d.kind = LayerKind::CRelu;
            }
        } else if (l.type == "batchnorm") {
            d.kind = LayerKind::BatchNorm;
        } else if (l.type == "residual") {
            d.kind = LayerKind::Residual;
            d.inner = resolve_model(l.inner, activation).layers;
        } else {
            throw std::invalid_argument("unknown layer type '" + l.type + "'");
        }
        spec.layers.push_back(std::move(d));
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Metrics and CSV output
// ---------------------------------------------------------------------------

struct MetricsRow {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double loss_task = 0.0;
    double loss_f = 0.0;
    double loss_b = 0.0;
    double loss_total = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double snr_db_measured = 0.0;
    double wall_ms = 0.0;
};

/// Shortest round-trip decimal form, locale-free and identical across runs.
inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string metrics_csv(const std::vector<MetricsRow> &rows)
{
    std::string out =
        "epoch,step,loss_task,loss_f,loss_b,loss_total,train_acc,test_acc,"
        "snr_db_measured,wall_ms\n";
    for (const auto &r : rows) {
        out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," +
               format_double(r.loss_task) + "," + format_double(r.loss_f) + "," +
               format_double(r.loss_b) + "," + format_double(r.loss_total) + "," +
               format_double(r.train_acc) + "," + format_double(r.test_acc) + "," +
               format_double(r.snr_db_measured) + "," + format_double(r.wall_ms) + "\n";
    }
    return out;
}

inline void write_text_file(const std::string &path, const std::string &content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::invalid_argument("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
    bool timing = false;  // wall_ms stays 0 unless requested, keeping CSVs reproducible
};

struct TrainResult {
    std::vector<MetricsRow> rows;
    std::vector<std::string> events;
    std::size_t evolution_events = 0;
    double best_test_acc = 0.0;
    bool aborted = false;
    std::string abort_reason;
    std::string model_json;
};

inline std::vector<std::size_t> predict_classes(const ComplexMatrix &z)
{
    std::vector<std::size_t> out(z.cols());
    for (std::size_t b = 0; b < z.cols(); ++b) {
        std::size_t arg = 0;
        double best = z(0, b).real();
        for (std::size_t i = 1; i < z.rows(); ++i)
            if (z(i, b).real() > best) {
                best = z(i, b).real();
                arg = i;
            }
        out[b] = arg;
    }
    return out;
}

inline double evaluate_accuracy(Model &model, const Dataset &d, std::size_t batch_size)
{
    Rng unused(0);
    const auto batches = make_batches(d, batch_size, false, unused);
    std::size_t correct = 0;
    for (const auto &b : batches) {
        const ComplexMatrix z = model.forward(b.features, false);
        const auto preds = predict_classes(z);
        for (std::size_t i = 0; i < preds.size(); ++i)
            if (preds[i] == static_cast<std::size_t>(b.labels[i]))
                ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(d.size());
}

namespace detail {

struct ParamSnapshot {
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;

    void capture(const std::vector<ParamRef> &params)
    {
        names.clear();
        values.clear();
        for (const auto &p : params) {
            names.push_back(p.name);
            values.emplace_back(p.value, p.value + p.count);
        }
    }

    std::string to_json(std::uint64_t seed) const
    {
        json root;
        root["format"] = "airsl-model";
        root["seed"] = seed;
        json params = json::array();
        for (std::size_t i = 0; i < names.size(); ++i) {
            json p;
            p["name"] = names[i];
            p["values"] = values[i];
            params.push_back(std::move(p));
        }
        root["params"] = std::move(params);
        return root.dump();
    }
};

inline std::pair<Dataset, Dataset> load_data(const ExperimentConfig &cfg)
{
    if (cfg.data.use_blob) {
        Rng rng(derive_seed(cfg.seed, 1));
        return synth_blobs(cfg.data.blob, rng);
    }
    return load_cifar10(cfg.data.cifar10_dir);
}

} // namespace detail

/// Runs one full training experiment: forward passes transmit over each OAC
/// layer's channel, backward passes ride the reciprocal links, the subspace
/// regularizers are assembled per batch, and channels drift on their
/// configured cadence. Fully deterministic given (config, seed).
inline TrainResult run_train(const ExperimentConfig &cfg, const TrainOptions &opts = {})
{
    auto [train, test] = detail::load_data(cfg);
    const ModelSpec spec = resolve_model(cfg.model_layers, cfg.activation);
    Model model(spec, cfg.mimo, train.feature_shape, cfg.seed);
    if (model.output_width() != train.class_count)
        throw std::invalid_argument("model: final width " +
                                    std::to_string(model.output_width()) +
                                    " does not match class count " +
                                    std::to_string(train.class_count));
    model.set_loss_weights(cfg.loss_weights.lambda_f, cfg.loss_weights.lambda_b);

    Adam opt(cfg.optimizer.lr);
    Rng shuffle_rng(derive_seed(cfg.seed, 2));

    TrainResult result;
    detail::ParamSnapshot last_good;
    last_good.capture(model.params());

    std::size_t global_batch = 0;
    for (std::size_t epoch = 1; epoch <= cfg.optimizer.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto batches = make_batches(train, cfg.optimizer.batch_size, true, shuffle_rng);
        double sum_task = 0.0, sum_f = 0.0, sum_b = 0.0, sum_total = 0.0;
        std::size_t train_correct = 0;
        for (const auto &batch : batches) {
            model.calibrate_noise(cfg.snr_db);
            const ComplexMatrix z = model.forward(batch.features, true);
            HeadLossResult head = head_loss(z, batch.labels);
            for (std::size_t i = 0; i < head.predictions.size(); ++i)
                if (head.predictions[i] == static_cast<std::size_t>(batch.labels[i]))
                    ++train_correct;
            model.zero_grads();
            model.backward(head.g_z);
            const auto [lf, lb] = model.apply_subspace_losses();
            const LossBundle bundle = total_loss(head.loss, lf, lb, cfg.loss_weights.lambda_f,
                                                 cfg.loss_weights.lambda_b);
            if (!std::isfinite(bundle.total)) {
                result.aborted = true;
                result.abort_reason = "non-finite loss at batch " +
                                      std::to_string(global_batch + 1) + " (task=" +
                                      format_double(bundle.task) + ", f=" +
                                      format_double(bundle.forward_sub) + ", b=" +
                                      format_double(bundle.backward_sub) + ")";
                result.model_json = last_good.to_json(cfg.seed);
                return result;
            }
            try {
                opt.step(model.params());
            } catch (const std::runtime_error &e) {
                result.aborted = true;
                result.abort_reason = e.what();
                result.model_json = last_good.to_json(cfg.seed);
                return result;
            }
            last_good.capture(model.params());
            sum_task += bundle.task;
            sum_f += bundle.forward_sub;
            sum_b += bundle.backward_sub;
            sum_total += bundle.total;
            ++global_batch;
            if (global_batch % cfg.mobility.update_interval == 0) {
                model.evolve_channels(cfg.mobility);
                ++result.evolution_events;
                result.events.push_back("evolve batch=" + std::to_string(global_batch) +
                                        " rho=" + format_double(cfg.mobility.rho));
            }
        }
        MetricsRow row;
        row.epoch = epoch;
        row.step = global_batch;
        const double nb = static_cast<double>(batches.size());
        row.loss_task = sum_task / nb;
        row.loss_f = sum_f / nb;
        row.loss_b = sum_b / nb;
        row.loss_total = sum_total / nb;
        row.train_acc = static_cast<double>(train_correct) / static_cast<double>(train.size());
        row.test_acc = evaluate_accuracy(model, test, cfg.optimizer.batch_size);
        row.snr_db_measured = model.mean_measured_snr_db();
        if (opts.timing) {
            const auto t1 = std::chrono::steady_clock::now();
            row.wall_ms =
                std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
        }
        result.best_test_acc = std::max(result.best_test_acc, row.test_acc);
        result.rows.push_back(row);
    }
    last_good.capture(model.params());
    result.model_json = last_good.to_json(cfg.seed);
    return result;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
    double point = 0.0;
    std::string activation;
    double best_test_acc = 0.0;
};

inline std::string sweep_csv(const std::vector<SweepRow> &rows, const std::string &point_name)
{
    std::string out = point_name + ",activation,best_test_acc\n";
    for (const auto &r : rows)
        out += format_double(r.point) + "," + r.activation + "," +
               format_double(r.best_test_acc) + "\n";
    return out;
}

/// One independent run per (point, activation) pair, sharing seeds across
/// pairs. An aborted run surfaces as a runtime_error.
template <typename Apply>
inline std::vector<SweepRow> run_sweep(const ExperimentConfig &cfg,
                                       const std::vector<double> &points, Apply &&apply,
                                       const char *what)
{
    if (points.size() < 2)
        throw std::invalid_argument(std::string(what) + " sweep needs at least 2 points");
    std::vector<SweepRow> rows;
    for (const double point : points) {
        for (const std::string &activation : {std::string("crelu"), std::string("qam")}) {
            ExperimentConfig run_cfg = cfg;
            run_cfg.activation.kind = activation;
            apply(run_cfg, point);
            const TrainResult res = run_train(run_cfg);
            if (res.aborted)
                throw std::runtime_error(std::string(what) + " sweep aborted at point " +
                                         format_double(point) + " (" + activation +
                                         "): " + res.abort_reason);
            rows.push_back(SweepRow{point, activation, res.best_test_acc});
        }
    }
    return rows;
}

inline std::vector<SweepRow> run_sweep_snr(const ExperimentConfig &cfg,
                                           const std::vector<double> &snrs)
{
    return run_sweep(cfg, snrs,
                     [](ExperimentConfig &c, double point) { c.snr_db = point; }, "snr");
}

inline std::vector<SweepRow> run_sweep_rho(const ExperimentConfig &cfg,
                                           const std::vector<double> &rhos)
{
    return run_sweep(cfg, rhos,
                     [](ExperimentConfig &c, double point) { c.mobility.rho = point; }, "rho");
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradcheckGroup {
    std::string name;
    double max_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckGroup> groups;
    bool passed = true;

    void add(const std::string &name, double err, double tol)
    {
        groups.push_back(GradcheckGroup{name, err, tol, err <= tol});
        passed = passed && err <= tol;
    }
};

namespace detail {

/// First OAC layer's (n_i, n_o) in the configured model, searching residual
/// blocks too. Conv layers contribute their patch/out-channel widths.
inline bool find_oac_dims(const std::vector<CfgLayer> &layers, std::size_t &n_i,
                          std::size_t &n_o, std::size_t current_width)
{
    for (const auto &l : layers) {
        if (l.type == "oac_linear") {
            n_i = current_width;
            n_o = l.out;
            return true;
        }
        if (l.type == "oac_conv") {
            n_i = l.kernel_h * l.kernel_w;  // times channels, unknown here; keep small
            n_o = l.out_channels;
            return true;
        }
        if (l.type == "residual" && find_oac_dims(l.inner, n_i, n_o, current_width))
            return true;
        if (l.type == "oac_linear" || l.type == "dense")
            current_width = l.out;
    }
    return false;
}

} // namespace detail

/// Numerically verifies the gradient machinery on a small instance derived
/// from the config: the over-the-air backward pass against the explicit-H
/// reference, and the reference against central finite differences for a
/// quadratic loss behind a CReLU. `corrupt_hook` deliberately flips one
/// gradient sign so the harness's own failure path can be exercised.
inline GradcheckReport run_gradcheck(const ExperimentConfig &cfg, bool corrupt_hook = false)
{
    std::size_t n_i = 8, n_o = 8;
    detail::find_oac_dims(cfg.model_layers, n_i, n_o,
                          cfg.data.use_blob ? cfg.data.blob.dim : 8);
    const std::size_t limit = 16;
    if (n_i > limit || n_o > limit || cfg.mimo.n_t > limit || cfg.mimo.n_r > limit)
        throw std::invalid_argument(
            "gradcheck: requires a small-dimension config (every side <= 16)");

    GradcheckReport report;

    // Suite 1: over-the-air backward equals the explicit-H reference when
    // the link is noiseless.
    {
        Rng rng(derive_seed(cfg.seed, 101));
        OacLinearLayer layer =
            OacLinearLayer::init(n_i, n_o, cfg.mimo.n_t, cfg.mimo.n_r, cfg.mimo.r, rng);
        ChannelState channel = gen_channel(cfg.mimo.path_params(), cfg.mimo.n_t, cfg.mimo.n_r,
                                           rng);
        double worst[5] = {0, 0, 0, 0, 0};
        for (int instance = 0; instance < 10; ++instance) {
            const ComplexMatrix x = random_complex_gaussian(n_i, 1, 1.0, rng);
            const ComplexMatrix g_y = random_complex_gaussian(n_o, 1, 1.0, rng);
            auto [y, trace] = layer.forward(channel, x, rng);
            const BackwardTrace ideal = layer.backward_ideal(channel, trace, g_y);
            const BackwardTrace ota = layer.backward_ota(channel, trace, g_y, rng);
            worst[0] = std::max(worst[0], max_abs_diff(ota.g_x, ideal.g_x));
            worst[1] = std::max(worst[1], max_abs_diff(ota.g_p, ideal.g_p));
            for (std::size_t k = 0; k < layer.rounds(); ++k)
                worst[2] = std::max(worst[2],
                                    max_abs_diff(ota.g_w_tilde[k], ideal.g_w_tilde[k]));
            worst[3] = std::max(worst[3], max_abs_diff(ota.g_c, ideal.g_c));
            worst[4] = std::max(worst[4], max_abs_diff(ota.g_b, ideal.g_b));
        }
        report.add("ota_vs_ideal.g_x", worst[0], 1e-9);
        report.add("ota_vs_ideal.g_p", worst[1], 1e-9);
        report.add("ota_vs_ideal.g_w_tilde", worst[2], 1e-9);
        report.add("ota_vs_ideal.g_c", worst[3], 1e-9);
        report.add("ota_vs_ideal.g_b", worst[4], 1e-9);
    }

    // Suite 2: reference backward against central finite differences for
    // L = 0.5 || crelu(oac(x)) - y0 ||^2.
    {
        Rng rng(derive_seed(cfg.seed, 202));
        OacLinearLayer layer =
            OacLinearLayer::init(n_i, n_o, cfg.mimo.n_t, cfg.mimo.n_r, cfg.mimo.r, rng);
        ChannelState channel = gen_channel(cfg.mimo.path_params(), cfg.mimo.n_t, cfg.mimo.n_r,
                                           rng);
        ComplexMatrix x = random_complex_gaussian(n_i, 1, 1.0, rng);
        const ComplexMatrix y0 = random_complex_gaussian(n_o, 1, 1.0, rng);
        Rng noiseless(0);

        auto loss_of = [&](const OacLinearLayer &l, const ComplexMatrix &input) {
            auto [y, trace] = l.forward(channel, input, noiseless);
            const ComplexMatrix diff = crelu(y) - y0;
            const double n = frobenius_norm(diff);
            return 0.5 * n * n;
        };

        auto [y, trace] = layer.forward(channel, x, noiseless);
        const ComplexMatrix g_z = crelu(y) - y0;
        const ComplexMatrix g_y = crelu_backward(y, g_z);
        BackwardTrace grads = layer.backward_ideal(channel, trace, g_y);
        if (corrupt_hook && grads.g_x.size() > 0)
            grads.g_x(0, 0) = -grads.g_x(0, 0);

        const double h = 1e-5;
        auto fd_matrix = [&](ComplexMatrix &target, const ComplexMatrix &analytic,
                             const std::string &name) {
            double max_fd = 0.0, max_diff = 0.0;
            for (std::size_t i = 0; i < target.size(); ++i) {
                for (int comp = 0; comp < 2; ++comp) {
                    const Complex saved = target.data()[i];
                    const Complex dz = comp == 0 ? Complex(h, 0.0) : Complex(0.0, h);
                    target.data()[i] = saved + dz;
                    const double lp = loss_of(layer, x);
                    target.data()[i] = saved - dz;
                    const double lm = loss_of(layer, x);
                    target.data()[i] = saved;
                    const double fd = (lp - lm) / (2.0 * h);
                    const double an = comp == 0 ? analytic.data()[i].real()
                                                : analytic.data()[i].imag();
                    max_fd = std::max(max_fd, std::abs(fd));
                    max_diff = std::max(max_diff, std::abs(fd - an));
                }
            }
            report.add(name, max_diff / std::max(max_fd, 1e-12), 1e-4);
        };
        fd_matrix(layer.p, grads.g_p, "finite_diff.p");
        for (std::size_t k = 0; k < layer.rounds(); ++k)
            fd_matrix(layer.w_tilde[k], grads.g_w_tilde[k],
                      "finite_diff.w" + std::to_string(k));
        fd_matrix(layer.c, grads.g_c, "finite_diff.c");
        fd_matrix(layer.bias, grads.g_b, "finite_diff.bias");
        fd_matrix(x, grads.g_x, "finite_diff.x");
    }

    return report;
}

// ---------------------------------------------------------------------------
// Synthetic dataset export
// ---------------------------------------------------------------------------

/// Writes a blob corpus as train.csv/test.csv plus a small meta.json.
inline void write_blob_dataset(const std::string &dir, const BlobConfig &config,
                               std::uint64_t seed)
{
    std::filesystem::create_directories(dir);
    Rng rng(derive_seed(seed, 1));
    auto [train, test] = synth_blobs(config, rng);
    auto dump = [&](const Dataset &d, const std::string &path) {
        std::string out = "label";
        for (std::size_t i = 0; i < d.feature_dim(); ++i)
            out += ",re_" + std::to_string(i) + ",im_" + std::to_string(i);
        out += "\n";
        for (std::size_t s = 0; s < d.size(); ++s) {
            out += std::to_string(d.labels[s]);
            for (std::size_t i = 0; i < d.feature_dim(); ++i) {
                out += "," + format_double(d.samples[s](i, 0).real());
                out += "," + format_double(d.samples[s](i, 0).imag());
            }
            out += "\n";
        }
        write_text_file(path, out);
    };
    dump(train, dir + "/train.csv");
    dump(test, dir + "/test.csv");
    json meta = {{"classes", config.classes},
                 {"dim", config.dim},
                 {"separation", config.separation},
                 {"variance", config.variance},
                 {"per_class", config.per_class},
                 {"seed", seed},
                 {"train_samples", train.size()},
                 {"test_samples", test.size()}};
    write_text_file(dir + "/meta.json", meta.dump(2) + "\n");
}

} // namespace airsl
