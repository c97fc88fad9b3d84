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

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include <airsl/airsl.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntimeAbort = 2;
constexpr int kExitGradcheckFailed = 3;

airsl::ExperimentConfig load_config(const std::string &path, std::int64_t seed_override)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    airsl::ExperimentConfig cfg = airsl::parse_config_text(text);
    if (seed_override >= 0)
        cfg.seed = static_cast<std::uint64_t>(seed_override);
    return cfg;
}

std::string snapshot_path(const std::string &csv_path)
{
    const std::string suffix = ".csv";
    if (csv_path.size() > suffix.size() &&
        csv_path.compare(csv_path.size() - suffix.size(), suffix.size(), suffix) == 0)
        return csv_path.substr(0, csv_path.size() - suffix.size()) + ".model.json";
    return csv_path + ".model.json";
}

int cmd_train(const std::string &config_path, const std::string &out_path,
              std::int64_t seed_override, bool timing)
{
    const airsl::ExperimentConfig cfg = load_config(config_path, seed_override);
    airsl::TrainOptions opts;
    opts.timing = timing;
    const airsl::TrainResult res = airsl::run_train(cfg, opts);
    airsl::write_text_file(out_path, airsl::metrics_csv(res.rows));
    airsl::write_text_file(snapshot_path(out_path), res.model_json + "\n");
    for (const auto &event : res.events)
        std::cerr << event << "\n";
    if (res.aborted) {
        std::cerr << "training aborted: " << res.abort_reason << "\n"
                  << "last-good snapshot written to " << snapshot_path(out_path) << "\n";
        return kExitRuntimeAbort;
    }
    std::cout << "best_test_acc=" << airsl::format_double(res.best_test_acc) << "\n";
    return kExitOk;
}

int cmd_sweep(const std::string &config_path, const std::string &out_path,
              std::int64_t seed_override, const std::vector<double> &points, bool is_snr)
{
    const airsl::ExperimentConfig cfg = load_config(config_path, seed_override);
    const auto rows = is_snr ? airsl::run_sweep_snr(cfg, points)
                             : airsl::run_sweep_rho(cfg, points);
    airsl::write_text_file(out_path, airsl::sweep_csv(rows, is_snr ? "snr_db" : "rho"));
    std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string &config_path, std::int64_t seed_override,
                  bool corrupt_hook)
{
    const airsl::ExperimentConfig cfg = load_config(config_path, seed_override);
    const airsl::GradcheckReport report = airsl::run_gradcheck(cfg, corrupt_hook);
    for (const auto &g : report.groups)
        std::cout << (g.pass ? "PASS " : "FAIL ") << g.name
                  << " max_rel_err=" << airsl::format_double(g.max_err)
                  << " tol=" << airsl::format_double(g.tol) << "\n";
    if (!report.passed) {
        std::cerr << "gradcheck failed\n";
        return kExitGradcheckFailed;
    }
    return kExitOk;
}

int cmd_data_synth(const std::string &out_dir, const std::string &config_path,
                   std::int64_t seed_override)
{
    airsl::BlobConfig blob;
    std::uint64_t seed = 1;
    if (!config_path.empty()) {
        const airsl::ExperimentConfig cfg = load_config(config_path, seed_override);
        if (!cfg.data.use_blob)
            throw std::invalid_argument("data synth needs a blob data config");
        blob = cfg.data.blob;
        seed = cfg.seed;
    } else if (seed_override >= 0) {
        seed = static_cast<std::uint64_t>(seed_override);
    }
    airsl::write_blob_dataset(out_dir, blob, seed);
    std::cout << "wrote train.csv, test.csv, meta.json to " << out_dir << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"split learning over MIMO wireless channels via over-the-air computation"};
    app.require_subcommand(1);

    std::string config_path, out_path;
    std::int64_t seed_override = -1;
    bool timing = false;
    bool corrupt_hook = false;
    std::vector<double> snrs, rhos;

    CLI::App *train = app.add_subcommand("train", "train a model and write a metrics CSV");
    train->add_option("--config", config_path, "experiment config (JSON)")->required();
    train->add_option("--out", out_path, "metrics CSV output path")->required();
    train->add_option("--seed", seed_override, "override the config seed");
    train->add_flag("--timing", timing,
                    "record wall-clock milliseconds in the wall_ms column "
                    "(off by default so outputs are byte-reproducible)");

    CLI::App *sweep = app.add_subcommand("sweep", "run accuracy sweeps");
    sweep->require_subcommand(1);
    CLI::App *sweep_snr = sweep->add_subcommand("snr", "sweep the requested SNR");
    sweep_snr->add_option("--config", config_path, "experiment config (JSON)")->required();
    sweep_snr->add_option("--snrs", snrs, "comma-separated SNR points in dB")
        ->required()
        ->delimiter(',');
    sweep_snr->add_option("--out", out_path, "sweep CSV output path")->required();
    sweep_snr->add_option("--seed", seed_override, "override the config seed");
    CLI::App *sweep_rho = sweep->add_subcommand("rho", "sweep the channel mobility rate");
    sweep_rho->add_option("--config", config_path, "experiment config (JSON)")->required();
    sweep_rho->add_option("--rhos", rhos, "comma-separated rho points in [0,1]")
        ->required()
        ->delimiter(',');
    sweep_rho->add_option("--out", out_path, "sweep CSV output path")->required();
    sweep_rho->add_option("--seed", seed_override, "override the config seed");

    CLI::App *gradcheck =
        app.add_subcommand("gradcheck", "verify gradients on a small instance");
    gradcheck->add_option("--config", config_path, "experiment config (JSON)")->required();
    gradcheck->add_option("--seed", seed_override, "override the config seed");
    gradcheck->add_flag("--corrupt-hook", corrupt_hook)->group("");  // self-test hook

    CLI::App *data = app.add_subcommand("data", "dataset utilities");
    data->require_subcommand(1);
    CLI::App *synth = data->add_subcommand("synth", "write a synthetic blob dataset");
    synth->add_option("--out", out_path, "output directory")->required();
    synth->add_option("--config", config_path, "experiment config supplying blob parameters");
    synth->add_option("--seed", seed_override, "seed for the synthetic draw");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (train->parsed())
            return cmd_train(config_path, out_path, seed_override, timing);
        if (sweep_snr->parsed())
            return cmd_sweep(config_path, out_path, seed_override, snrs, true);
        if (sweep_rho->parsed())
            return cmd_sweep(config_path, out_path, seed_override, rhos, false);
        if (gradcheck->parsed())
            return cmd_gradcheck(config_path, seed_override, corrupt_hook);
        if (synth->parsed())
            return cmd_data_synth(out_path, config_path, seed_override);
        std::cerr << "no subcommand\n";
        return kExitValidation;
    } catch (const nlohmann::json::exception &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception &e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntimeAbort;
    }
}
