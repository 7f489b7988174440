// spikerep: command-line driver for the spike-sorting pipeline.
//
//   spikerep <subcommand> --config config.json [--seed N] [--use-dae] [--out DIR]
//
// Subcommands: synth, preprocess, detect, extract, train, embed, sort, eval,
// ablate. Every artifact lands in --out; a RunManifest is written to
// <out>/run.json before exit on success and on failure. Exit code 0 on
// success; on failure a one-line machine-readable error JSON goes to stderr
// and the exit code is 1.

#include <Eigen/Core>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <spikerep/augment.hpp>
#include <spikerep/config.hpp>
#include <spikerep/dsp.hpp>
#include <spikerep/gmm.hpp>
#include <spikerep/io.hpp>
#include <spikerep/metrics.hpp>
#include <spikerep/model.hpp>
#include <spikerep/rng.hpp>
#include <spikerep/synth.hpp>
#include <spikerep/types.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spikerep;

namespace {

constexpr const char* kVersion = "1.0.0";

struct CliArgs {
    std::string subcommand;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool use_dae = false;
    std::string out = ".";
};

[[noreturn]] void usage_error(const std::string& msg) {
    throw std::invalid_argument(
        msg +
        "\nusage: spikerep <synth|preprocess|detect|extract|train|embed|sort|"
        "eval|ablate> --config config.json [--seed N] [--use-dae] [--out DIR]");
}

CliArgs parse_args(int argc, char** argv) {
    if (argc < 2) usage_error("missing subcommand");
    CliArgs args;
    args.subcommand = argv[1];
    for (int i = 2; i < argc; ++i) {
        const std::string flag = argv[i];
        auto next = [&](const char* name) -> std::string {
            if (i + 1 >= argc)
                usage_error(std::string(name) + " requires a value");
            return argv[++i];
        };
        if (flag == "--config") {
            args.config_path = next("--config");
        } else if (flag == "--seed") {
            args.seed = std::stoull(next("--seed"));
        } else if (flag == "--use-dae") {
            args.use_dae = true;
        } else if (flag == "--out") {
            args.out = next("--out");
        } else {
            usage_error("unknown flag: " + flag);
        }
    }
    if (args.config_path.empty()) usage_error("--config is required");
    return args;
}

// Accumulates everything run.json reports; flushed on both exit paths.
struct RunManifest {
    json j;

    RunManifest(const CliArgs& args, const PipelineConfig& pc) {
        j["tool"] = "spikerep";
        j["version"] = kVersion;
        j["modules"] = {{"core-data", kVersion}, {"synthgen", kVersion},
                        {"dsp", kVersion},       {"augment", kVersion},
                        {"repmodel", kVersion},  {"cluster", kVersion},
                        {"eval", kVersion},      {"cli", kVersion}};
        j["command"] = args.subcommand;
        j["config_path"] = args.config_path;
        j["config"] = pc.to_json();
        j["seed"] = pc.seed;
        j["use_dae"] = args.use_dae;
        j["out"] = args.out;
        j["artifacts"] = json::array();
        j["stage_seconds"] = json::object();
        j["status"] = "running";
    }

    void add_artifact(const std::string& path) { j["artifacts"].push_back(path); }

    void write(const std::string& out_dir) const {
        std::ofstream f(fs::path(out_dir) / "run.json");
        f << j.dump(2) << "\n";
    }
};

// Runs one named pipeline stage and records its wall-clock time.
template <typename F>
auto stage(RunManifest& man, const std::string& name, F&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        man.j["stage_seconds"][name] =
            std::chrono::duration<double>(t1 - t0).count();
    } else {
        auto result = fn();
        const auto t1 = std::chrono::steady_clock::now();
        man.j["stage_seconds"][name] =
            std::chrono::duration<double>(t1 - t0).count();
        return result;
    }
}

std::string at(const std::string& out, const std::string& name) {
    return (fs::path(out) / name).string();
}

void require_file(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw std::runtime_error("missing input " + path + " (run `spikerep " +
                                 producer + "` first)");
}

SynthSpec synth_spec_from(const PipelineConfig& pc) {
    SynthSpec s;
    s.n_units = pc.synth_n_units;
    s.probe_rows = pc.synth_probe_rows;
    s.probe_cols = pc.synth_probe_cols;
    s.pitch_um = pc.synth_pitch_um;
    s.duration_s = pc.synth_duration_s;
    s.sample_rate_hz = pc.synth_sample_rate_hz;
    s.firing_rate_hz = pc.synth_firing_rate_hz;
    s.amp_min_uv = pc.synth_amp_min_uv;
    s.amp_max_uv = pc.synth_amp_max_uv;
    s.noise_std_uv = pc.synth_noise_std_uv;
    s.noise_ar = pc.synth_noise_ar;
    s.lambda_um = pc.synth_lambda_um;
    s.template_samples = pc.synth_template_samples;
    s.drift = {pc.drift_amplitude_um, pc.drift_n_cycles, pc.synth_duration_s};
    s.rng_seed = pc.seed;
    return s;
}

DetectionSpec detection_spec_from(const PipelineConfig& pc, double fs) {
    DetectionSpec d;
    d.threshold_mads = pc.detect_threshold_mads;
    d.polarity = polarity_from_string(pc.detect_polarity);
    d.refractory_samples =
        static_cast<int>(std::lround(pc.detect_refractory_ms * fs / 1000.0));
    d.peak_window_samples =
        static_cast<int>(std::lround(pc.detect_peak_window_ms * fs / 1000.0));
    d.merge_radius_um = pc.detect_merge_radius_um;
    d.min_amplitude_uv = pc.detect_min_amplitude_uv;
    return d;
}

AugmentSpec augment_spec_from(const PipelineConfig& pc) {
    AugmentSpec a;
    a.voltage_jitter_lo = pc.aug_voltage_jitter_lo;
    a.voltage_jitter_hi = pc.aug_voltage_jitter_hi;
    a.temporal_jitter_max = pc.aug_temporal_jitter_max;
    a.crop_channels = pc.aug_crop_channels;
    a.collision_prob = pc.aug_collision_prob;
    a.collision_scale_lo = pc.aug_collision_scale_lo;
    a.collision_scale_hi = pc.aug_collision_scale_hi;
    a.collision_offset_max = pc.aug_collision_offset_max;
    a.noise_scale_lo = pc.aug_noise_scale_lo;
    a.noise_scale_hi = pc.aug_noise_scale_hi;
    a.noise_ar_coeff = pc.aug_noise_ar;
    return a;
}

GmmOptions gmm_options_from(const PipelineConfig& pc, std::uint64_t seed) {
    GmmOptions g;
    g.max_iter = pc.gmm_max_iter;
    g.tol = pc.gmm_tol;
    g.reg = pc.gmm_reg;
    g.seed = seed;
    g.n_init = pc.gmm_n_init;
    return g;
}

std::vector<Eigen::MatrixXd> as_double_snippets(
    const std::vector<WaveformSnippet>& snippets) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(snippets.size());
    for (const auto& s : snippets) out.push_back(s.values.cast<double>());
    return out;
}

void write_events_csv(const std::vector<SpikeEvent>& events,
                      const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "frame,channel,amplitude\n";
    char buf[64];
    for (const auto& e : events) {
        std::snprintf(buf, sizeof buf, "%.17g", e.amplitude);
        f << e.frame << "," << e.channel << "," << buf << "\n";
    }
}

std::vector<SpikeEvent> read_events_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("frame,channel,amplitude", 0) != 0)
        throw std::runtime_error(path + ": missing events header");
    std::vector<SpikeEvent> events;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        SpikeEvent e;
        if (std::sscanf(line.c_str(), "%" SCNd64 ",%d,%lf", &e.frame,
                        &e.channel, &e.amplitude) != 3)
            throw std::runtime_error(path + ": malformed row: " + line);
        events.push_back(e);
    }
    return events;
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    char buf[64];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
            f << (c ? "," : "") << buf;
        }
        f << "\n";
    }
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error(path + ": ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path + ": empty matrix");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = rows[static_cast<std::size_t>(r)]
                          [static_cast<std::size_t>(c)];
    return m;
}

// Remaps arbitrary component indices to contiguous labels 0..L-1 in order of
// first appearance, as SortingResult requires.
std::vector<int> contiguous_labels(const std::vector<int>& raw) {
    std::map<int, int> remap;
    std::vector<int> out;
    out.reserve(raw.size());
    for (int r : raw) {
        auto [it, inserted] =
            remap.try_emplace(r, static_cast<int>(remap.size()));
        out.push_back(it->second);
    }
    return out;
}

ModelState load_checkpoint(const std::string& out) {
    const std::string path = at(out, "model.ckpt");
    require_file(path, "train");
    return load_model(path);
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_synth(const PipelineConfig& pc, const CliArgs& args,
               RunManifest& man) {
    const SynthSpec spec = synth_spec_from(pc);
    auto [rec, gt] = stage(man, "synth", [&] { return generate_recording(spec); });
    stage(man, "write", [&] {
        write_recording(rec, at(args.out, "recording.bin"));
        write_ground_truth(gt, at(args.out, "ground_truth.csv"));
    });
    man.add_artifact(at(args.out, "recording.bin"));
    man.add_artifact(at(args.out, "recording.json"));
    man.add_artifact(at(args.out, "ground_truth.csv"));
    std::int64_t n_events = 0;
    for (const auto& [unit, frames] : gt.units)
        n_events += static_cast<std::int64_t>(frames.size());
    man.j["n_units"] = static_cast<int>(gt.units.size());
    man.j["n_events"] = n_events;
}

void cmd_preprocess(const PipelineConfig& pc, const CliArgs& args,
                    RunManifest& man) {
    require_file(at(args.out, "recording.bin"), "synth");
    Recording rec = stage(man, "read", [&] {
        return read_recording(at(args.out, "recording.bin"));
    });
    auto [clean, removed] =
        stage(man, "remove_bad_channels", [&] { return remove_bad_channels(rec); });
    rec = Recording{};  // release the raw copy before filtering
    const FilterSpec fspec{pc.filter_low_hz, pc.filter_high_hz, pc.filter_order};
    const Recording filtered =
        stage(man, "bandpass", [&] { return bandpass(clean, fspec); });
    stage(man, "write", [&] {
        write_recording(filtered, at(args.out, "filtered.bin"));
    });
    man.add_artifact(at(args.out, "filtered.bin"));
    man.add_artifact(at(args.out, "filtered.json"));
    man.j["removed_channels"] = removed;
}

void cmd_detect(const PipelineConfig& pc, const CliArgs& args,
                RunManifest& man) {
    require_file(at(args.out, "filtered.bin"), "preprocess");
    const Recording rec = stage(man, "read", [&] {
        return read_recording(at(args.out, "filtered.bin"));
    });
    const DetectionSpec dspec = detection_spec_from(pc, rec.sample_rate_hz);
    const std::vector<SpikeEvent> events =
        stage(man, "detect", [&] { return detect(rec, dspec); });
    stage(man, "write",
          [&] { write_events_csv(events, at(args.out, "events.csv")); });
    man.add_artifact(at(args.out, "events.csv"));
    man.j["n_detected"] = events.size();
}

void cmd_extract(const PipelineConfig& pc, const CliArgs& args,
                 RunManifest& man) {
    require_file(at(args.out, "filtered.bin"), "preprocess");
    require_file(at(args.out, "events.csv"), "detect");
    const Recording rec = stage(man, "read", [&] {
        return read_recording(at(args.out, "filtered.bin"));
    });
    const std::vector<SpikeEvent> events =
        read_events_csv(at(args.out, "events.csv"));
    const ExtractResult ex = stage(man, "extract", [&] {
        return extract_snippets(rec, events, pc.snippet_t, pc.snippet_c);
    });
    stage(man, "write",
          [&] { write_snippets(ex.snippets, at(args.out, "snippets.bin")); });
    man.add_artifact(at(args.out, "snippets.bin"));
    man.add_artifact(at(args.out, "snippets.json"));
    man.j["n_snippets"] = ex.snippets.size();
    man.j["n_dropped_edge"] = ex.n_dropped_edge;
}

void cmd_train(const PipelineConfig& pc, const CliArgs& args,
               RunManifest& man) {
    require_file(at(args.out, "snippets.bin"), "extract");
    const std::vector<WaveformSnippet> snippets =
        read_snippets(at(args.out, "snippets.bin"));
    const std::vector<Eigen::MatrixXd> pool = as_double_snippets(snippets);
    const ModelConfig mc = ModelConfig::from(pc);
    const TrainConfig tc =
        TrainConfig::from(pc, static_cast<int>(pool.size()));
    const AugmentSpec aug = augment_spec_from(pc);
    aug.validate(mc.snippet_c);

    ModelState state = init_model(mc, pc.seed);
    std::ofstream log(at(args.out, "train_log.csv"));
    if (!log) throw std::runtime_error("cannot write train_log.csv");
    log << "step,epoch,lr,contrastive,denoise,total\n";

    stage(man, "train", [&] {
        std::vector<int> order(pool.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = static_cast<int>(i);
        char buf[160];
        for (int epoch = 0; epoch < tc.epochs; ++epoch) {
            Rng shuffle_rng = Rng(tc.seed).substream(
                "epoch-shuffle", static_cast<std::uint64_t>(epoch));
            shuffle_rng.shuffle(order);
            for (int s = 0; s < tc.steps_per_epoch; ++s) {
                std::vector<int> batch(
                    order.begin() + static_cast<std::ptrdiff_t>(s) * tc.batch_size,
                    order.begin() +
                        static_cast<std::ptrdiff_t>(s + 1) * tc.batch_size);
                const double lr = lr_at(state.step, tc);
                const TrainStepResult r =
                    train_step(state, pool, batch, aug, tc);
                std::snprintf(buf, sizeof buf,
                              "%" PRId64 ",%d,%.17g,%.17g,%.17g,%.17g\n",
                              state.step - 1, epoch, lr, r.contrastive,
                              r.denoise, r.total);
                log << buf;
            }
        }
    });
    stage(man, "write", [&] { save_model(state, at(args.out, "model.ckpt")); });
    man.add_artifact(at(args.out, "model.ckpt"));
    man.add_artifact(at(args.out, "model.ckpt.json"));
    man.add_artifact(at(args.out, "train_log.csv"));
    man.j["train_steps"] = state.step;
}

void cmd_embed(const PipelineConfig& pc, const CliArgs& args,
               RunManifest& man) {
    (void)pc;
    require_file(at(args.out, "snippets.bin"), "extract");
    const std::vector<WaveformSnippet> snippets =
        read_snippets(at(args.out, "snippets.bin"));
    const ModelState state = load_checkpoint(args.out);
    const Eigen::MatrixXd reps = stage(
        man, "embed", [&] { return embed(snippets, state, args.use_dae); });
    stage(man, "write",
          [&] { write_matrix_csv(reps, at(args.out, "embeddings.csv")); });
    man.add_artifact(at(args.out, "embeddings.csv"));
    man.j["n_embedded"] = reps.rows();
    man.j["rep_dim"] = reps.cols();
}

void cmd_sort(const PipelineConfig& pc, const CliArgs& args, RunManifest& man) {
    require_file(at(args.out, "recording.bin"), "synth");
    Recording raw = stage(man, "read", [&] {
        return read_recording(at(args.out, "recording.bin"));
    });
    auto [clean, removed] =
        stage(man, "remove_bad_channels", [&] { return remove_bad_channels(raw); });
    raw = Recording{};
    const FilterSpec fspec{pc.filter_low_hz, pc.filter_high_hz, pc.filter_order};
    const Recording filtered =
        stage(man, "bandpass", [&] { return bandpass(clean, fspec); });
    const DetectionSpec dspec = detection_spec_from(pc, filtered.sample_rate_hz);
    const std::vector<SpikeEvent> events =
        stage(man, "detect", [&] { return detect(filtered, dspec); });
    const ExtractResult ex = stage(man, "extract", [&] {
        return extract_snippets(filtered, events, pc.snippet_t, pc.snippet_c);
    });

    const std::string ckpt = at(args.out, "model.ckpt");
    if (args.use_dae && !fs::exists(ckpt))
        throw std::runtime_error(
            "--use-dae requires a trained checkpoint (model.ckpt); run "
            "`spikerep train` first");
    const ModelState state = fs::exists(ckpt)
                                 ? load_model(ckpt)
                                 : init_model(ModelConfig::from(pc), pc.seed);
    const Eigen::MatrixXd reps = stage(man, "embed", [&] {
        return embed(ex.snippets, state, args.use_dae);
    });

    const GmmOptions gopts = gmm_options_from(pc, pc.seed);
    const GmmModel gmm = stage(man, "cluster", [&] {
        return pc.gmm_bic_sweep
                   ? gmm_fit_bic(reps, 2, std::max(2, pc.gmm_k), gopts)
                   : gmm_fit(reps, pc.gmm_k, gopts);
    });
    const std::vector<int> labels = contiguous_labels(gmm_assign(gmm, reps));

    SortingResult sr;
    sr.events.reserve(ex.snippets.size());
    for (std::size_t i = 0; i < ex.snippets.size(); ++i)
        sr.events.emplace_back(ex.snippets[i].event_frame, labels[i]);
    sr.validate();
    stage(man, "write",
          [&] { write_sorting(sr, at(args.out, "sorting.csv")); });
    man.add_artifact(at(args.out, "sorting.csv"));
    man.j["removed_channels"] = removed;
    man.j["n_detected"] = events.size();
    man.j["n_sorted"] = sr.events.size();
    man.j["n_clusters"] = gmm.n_components();
    man.j["checkpoint_used"] = fs::exists(ckpt);
}

void cmd_eval(const PipelineConfig& pc, const CliArgs& args, RunManifest& man) {
    require_file(at(args.out, "ground_truth.csv"), "synth");
    require_file(at(args.out, "sorting.csv"), "sort");
    const GroundTruth gt = read_ground_truth(at(args.out, "ground_truth.csv"));
    const SortingResult sr = read_sorting(at(args.out, "sorting.csv"));
    // SNR filtering runs on the filtered recording when available (matching
    // what the sorter saw), otherwise on the raw recording.
    const std::string rec_path = fs::exists(at(args.out, "filtered.bin"))
                                     ? at(args.out, "filtered.bin")
                                     : at(args.out, "recording.bin");
    require_file(rec_path, "synth");
    const Recording rec =
        stage(man, "read", [&] { return read_recording(rec_path); });
    const auto delta = static_cast<std::int64_t>(
        std::lround(pc.eval_match_delta_ms * rec.sample_rate_hz / 1000.0));
    const ScoreAggregate agg = stage(man, "score", [&] {
        return score_sorting(gt, sr, delta, pc.eval_snr_floor, rec);
    });

    json report;
    report["match_delta_samples"] = delta;
    report["snr_floor"] = pc.eval_snr_floor;
    report["recording"] = rec_path;
    report["per_unit"] = json::array();
    for (const auto& u : agg.per_unit)
        report["per_unit"].push_back({{"gt_unit_id", u.gt_unit_id},
                                      {"matched_sorter_label", u.matched_sorter_label},
                                      {"accuracy", u.accuracy},
                                      {"recall", u.recall},
                                      {"precision", u.precision},
                                      {"undefined_metric", u.undefined_metric}});
    report["mean_accuracy"] = agg.mean_accuracy;
    report["sem_accuracy"] = agg.sem_accuracy;
    report["mean_recall"] = agg.mean_recall;
    report["sem_recall"] = agg.sem_recall;
    report["mean_precision"] = agg.mean_precision;
    report["sem_precision"] = agg.sem_precision;

    // Unit-sampling ARI protocol, when an embeddings file is present: group
    // embedding rows by the ground-truth unit owning the snippet's event
    // frame, then sample eval_n_units units per protocol seed and average the
    // ARI of eval_gmm_runs GMM clusterings.
    if (fs::exists(at(args.out, "embeddings.csv")) &&
        fs::exists(at(args.out, "snippets.json"))) {
        const Eigen::MatrixXd reps =
            read_matrix_csv(at(args.out, "embeddings.csv"));
        std::ifstream sf(at(args.out, "snippets.json"));
        const json sidecar = json::parse(sf);
        const auto frames = sidecar.at("event_frames")
                                .get<std::vector<std::int64_t>>();
        if (static_cast<Eigen::Index>(frames.size()) != reps.rows())
            throw std::runtime_error(
                "embeddings.csv does not match snippets.json");

        std::vector<std::pair<std::int64_t, int>> gt_frames;
        for (const auto& [unit, fs_] : gt.units)
            for (const std::int64_t f : fs_) gt_frames.emplace_back(f, unit);
        std::sort(gt_frames.begin(), gt_frames.end());
        std::map<int, std::vector<int>> unit_rows;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const auto it = std::lower_bound(
                gt_frames.begin(), gt_frames.end(),
                std::make_pair(frames[i] - delta, -1));
            if (it != gt_frames.end() && it->first <= frames[i] + delta)
                unit_rows[it->second].push_back(static_cast<int>(i));
        }
        std::map<int, Eigen::MatrixXd> unit_reps;
        for (const auto& [unit, rows] : unit_rows) {
            if (rows.size() < 2) continue;
            Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                              reps.cols());
            for (std::size_t r = 0; r < rows.size(); ++r)
                m.row(static_cast<Eigen::Index>(r)) = reps.row(rows[r]);
            unit_reps[unit] = std::move(m);
        }
        if (unit_reps.size() >= 2) {
            const int n_units = std::min<int>(
                pc.eval_n_units, static_cast<int>(unit_reps.size()));
            const ProtocolResult pr = stage(man, "protocol", [&] {
                return protocol_ari(unit_reps, n_units, pc.eval_seeds,
                                    pc.eval_gmm_runs, pc.seed);
            });
            report["protocol_ari"] = {{"mean", pr.mean},
                                      {"sem", pr.sem},
                                      {"min", pr.min},
                                      {"max", pr.max},
                                      {"n_units", n_units},
                                      {"seeds", pc.eval_seeds},
                                      {"gmm_runs", pc.eval_gmm_runs}};
        }
    }
    stage(man, "write", [&] {
        std::ofstream f(at(args.out, "eval.json"));
        f << report.dump(2) << "\n";
    });
    man.add_artifact(at(args.out, "eval.json"));

    // Aligned text table, one row per scored unit plus the aggregate.
    std::printf("%8s %8s %10s %10s %10s\n", "unit", "match", "accuracy",
                "recall", "precision");
    for (const auto& u : agg.per_unit)
        std::printf("%8d %8d %10.4f %10.4f %10.4f%s\n", u.gt_unit_id,
                    u.matched_sorter_label, u.accuracy, u.recall, u.precision,
                    u.undefined_metric ? "  (undefined->0)" : "");
    std::printf("%8s %8s %10.4f %10.4f %10.4f  (mean +- SEM: %.4f %.4f %.4f)\n",
                "all", "-", agg.mean_accuracy, agg.mean_recall,
                agg.mean_precision, agg.sem_accuracy, agg.sem_recall,
                agg.sem_precision);
    if (report.contains("protocol_ari")) {
        const auto& p = report["protocol_ari"];
        std::printf("protocol ARI (%d units, %d seeds): %.4f +- %.4f "
                    "[%.4f, %.4f]\n",
                    p["n_units"].get<int>(), p["seeds"].get<int>(),
                    p["mean"].get<double>(), p["sem"].get<double>(),
                    p["min"].get<double>(), p["max"].get<double>());
    }
}

void cmd_ablate(const PipelineConfig& pc, const CliArgs& args,
                RunManifest& man) {
    require_file(at(args.out, "train_embeddings.csv"), "embed (rename embeddings.csv)");
    require_file(at(args.out, "test_embeddings.csv"), "embed (rename embeddings.csv)");
    const Eigen::MatrixXd train_reps =
        read_matrix_csv(at(args.out, "train_embeddings.csv"));
    const Eigen::MatrixXd test_reps =
        read_matrix_csv(at(args.out, "test_embeddings.csv"));

    std::optional<std::vector<int>> labels;
    const std::string labels_path = at(args.out, "test_labels.csv");
    if (fs::exists(labels_path)) {
        std::ifstream f(labels_path);
        std::vector<int> l;
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) l.push_back(std::stoi(line));
        if (static_cast<Eigen::Index>(l.size()) != test_reps.rows())
            throw std::runtime_error("test_labels.csv row count mismatch");
        labels = std::move(l);
    }

    AblationOptions opts;
    opts.seed = pc.seed;
    opts.fallback_clusters = std::max(2, pc.gmm_k);
    const AblationReport rep = stage(man, "ablate", [&] {
        return ablation_report(train_reps, test_reps, labels, opts);
    });

    json report;
    report["use_dae"] = args.use_dae;
    report["centroid_distance"] = rep.centroid_distance;
    report["silhouette"] = rep.silhouette;
    if (rep.ari)
        report["ari"] = *rep.ari;
    else
        report["ari"] = nullptr;
    stage(man, "write", [&] {
        std::ofstream f(at(args.out, "ablation.json"));
        f << report.dump(2) << "\n";
    });
    man.add_artifact(at(args.out, "ablation.json"));
    std::printf("%-18s %12s\n", "metric", "value");
    std::printf("%-18s %12.6f\n", "centroid_distance", rep.centroid_distance);
    std::printf("%-18s %12.6f\n", "silhouette", rep.silhouette);
    if (rep.ari) std::printf("%-18s %12.6f\n", "ari", *rep.ari);
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("SPIKEREP_THREADS"))
        Eigen::setNbThreads(std::max(1, std::atoi(threads)));

    std::optional<CliArgs> args;
    std::optional<RunManifest> man;
    try {
        args = parse_args(argc, argv);
        PipelineConfig pc = PipelineConfig::load(args->config_path);
        if (args->seed) pc.seed = *args->seed;
        fs::create_directories(args->out);
        man.emplace(*args, pc);

        const std::string& cmd = args->subcommand;
        if (cmd == "synth")
            cmd_synth(pc, *args, *man);
        else if (cmd == "preprocess")
            cmd_preprocess(pc, *args, *man);
        else if (cmd == "detect")
            cmd_detect(pc, *args, *man);
        else if (cmd == "extract")
            cmd_extract(pc, *args, *man);
        else if (cmd == "train")
            cmd_train(pc, *args, *man);
        else if (cmd == "embed")
            cmd_embed(pc, *args, *man);
        else if (cmd == "sort")
            cmd_sort(pc, *args, *man);
        else if (cmd == "eval")
            cmd_eval(pc, *args, *man);
        else if (cmd == "ablate")
            cmd_ablate(pc, *args, *man);
        else
            usage_error("unknown subcommand: " + cmd);

        man->j["status"] = "ok";
        man->write(args->out);
        return 0;
    } catch (const std::exception& e) {
        json err = {{"error",
                     {{"command", args ? args->subcommand : ""},
                      {"message", e.what()}}}};
        if (man && args) {
            man->j["status"] = "error";
            man->j["error"] = e.what();
            try {
                man->write(args->out);
            } catch (...) {
            }
        }
        std::cerr << err.dump() << std::endl;
        return 1;
    }
}
