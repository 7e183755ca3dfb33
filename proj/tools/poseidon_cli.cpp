// poseidon: train, detect, calibrate, eval, roc and synth workflows.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error.

#include "config.hpp"

#include "poseidon/detector.hpp"
#include "poseidon/error.hpp"
#include "poseidon/eval.hpp"
#include "poseidon/ingest.hpp"
#include "poseidon/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

using namespace poseidon;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Overrides {
    std::string config;
    std::optional<std::string> capture, calibration_capture, truth, store, store_b, alerts,
        alerts_b, spec, output, mode, unseen;
    std::optional<double> threshold, target_fp, cluster_threshold;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<int> port;
    std::string fp_sources;
};

void add_common_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "JSON config file");
    cmd->add_option("--capture", o.capture, "pcap capture to read");
    cmd->add_option("--calibration-capture", o.calibration_capture,
                    "attack-free pcap used to derive the threshold");
    cmd->add_option("--truth", o.truth, "ground-truth CSV");
    cmd->add_option("--store", o.store, "model store file");
    cmd->add_option("--store-b", o.store_b, "second model store (eval comparison)");
    cmd->add_option("--alerts", o.alerts, "alert CSV");
    cmd->add_option("--alerts-b", o.alerts_b, "second alert CSV (eval comparison)");
    cmd->add_option("--spec", o.spec, "synthetic traffic spec (JSON)");
    cmd->add_option("-o,--out", o.output, "output file (default: stdout)");
    cmd->add_option("--mode", o.mode, "poseidon | payl");
    cmd->add_option("--unseen", o.unseen, "alert | ignore");
    cmd->add_option("--threshold", o.threshold, "detection threshold");
    cmd->add_option("--target-fp", o.target_fp, "target false-positive rate for calibration");
    cmd->add_option("--cluster-threshold", o.cluster_threshold,
                    "merge threshold for baseline length models");
    cmd->add_option("--seed", o.seed, "random seed (SOM init, or synth generation)");
    cmd->add_option("--threads", o.threads, "detection worker threads");
}

cli::RunConfig resolve(const Overrides& o) {
    cli::RunConfig rc = o.config.empty() ? cli::RunConfig{} : cli::load_run_config(o.config);
    auto set = [](std::string& dst, const std::optional<std::string>& v) {
        if (v)
            dst = *v;
    };
    set(rc.paths.capture, o.capture);
    set(rc.paths.calibration_capture, o.calibration_capture);
    set(rc.paths.truth, o.truth);
    set(rc.paths.store, o.store);
    set(rc.paths.store_b, o.store_b);
    set(rc.paths.alerts, o.alerts);
    set(rc.paths.alerts_b, o.alerts_b);
    set(rc.paths.spec, o.spec);
    set(rc.paths.output, o.output);
    if (o.mode) {
        rc.detector.mode = parse_mode(*o.mode);
        rc.mode_given = true;
    }
    if (o.unseen)
        rc.detector.unseen = parse_unseen_policy(*o.unseen);
    if (o.threshold)
        rc.threshold = *o.threshold;
    if (o.target_fp)
        rc.target_fp_rate = *o.target_fp;
    if (o.cluster_threshold)
        rc.detector.cluster_threshold = *o.cluster_threshold;
    if (o.seed) {
        rc.detector.som.seed = *o.seed;
        rc.synth_seed = *o.seed;
    }
    if (o.threads)
        rc.threads = *o.threads;
    return rc;
}

const std::string& require(const std::string& value, const char* what) {
    if (value.empty())
        throw UsageError(std::string("missing required path: ") + what);
    return value;
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::Io, "cannot write '" + path + "'");
    out << text;
    if (!out)
        throw Error(ErrorKind::Io, "write failed for '" + path + "'");
}

std::vector<PacketRecord> read_filtered(const std::string& path, const TrafficFilter& filter) {
    auto all = read_pcap(path);
    return filter_packets(all, filter);
}

ModelStore load_checked(const cli::RunConfig& rc) {
    auto store = load_store(require(rc.paths.store, "store"));
    if (rc.mode_given && store.mode() != rc.detector.mode)
        throw Error(ErrorKind::StoreFormat, std::string("store was trained in ") +
                                                to_string(store.mode()) + " mode, but " +
                                                to_string(rc.detector.mode) + " was requested");
    return store;
}

/// Copy of the store with the unseen-model policy taken from the run config.
ModelStore with_policy(const ModelStore& store, UnseenPolicy policy) {
    if (store.config().unseen == policy)
        return store;
    auto cfg = store.config();
    cfg.unseen = policy;
    ModelStore out(cfg);
    for (const auto& [port, som] : store.soms())
        out.add_som(port, som);
    for (const auto& [key, entry] : store.models())
        out.put_model(key, entry);
    return out;
}

int cmd_train(const cli::RunConfig& rc) {
    const auto& capture = require(rc.paths.capture, "capture");
    const auto& store_path = require(rc.paths.store, "store");
    rc.detector.validate();
    auto packets = read_filtered(capture, rc.detector.filter);
    auto store = train_store(packets, rc.detector);
    save_store(store, store_path);

    std::map<std::uint16_t, std::size_t> per_port;
    for (const auto& p : packets)
        ++per_port[p.dst_port];
    std::string report = "mode," + std::string(to_string(store.mode())) + "\n";
    report += "packets," + std::to_string(packets.size()) + "\n";
    for (const auto& [port, n] : per_port)
        report += "port_packets," + std::to_string(port) + "," + std::to_string(n) + "\n";
    if (store.mode() == Mode::Poseidon) {
        std::map<std::uint16_t, std::vector<Payload>> by_som;
        for (const auto& p : packets)
            by_som[rc.detector.som_port_for(p.dst_port)].push_back(p.payload);
        for (const auto& [port, som] : store.soms())
            report += "quantization_error," + std::to_string(port) + "," +
                      format_real(som.quantization_error_payloads(by_som.at(port))) + "\n";
    }
    report += "profiles," + std::to_string(store.profile_count()) + "\n";
    emit(rc.paths.output, report);
    return 0;
}

double resolve_threshold(const cli::RunConfig& rc, const ModelStore& store) {
    if (rc.threshold)
        return *rc.threshold;
    if (rc.paths.calibration_capture.empty())
        throw UsageError("detect needs --threshold or --calibration-capture");
    auto calib = read_filtered(rc.paths.calibration_capture, store.config().filter);
    return calibrate_threshold(store, calib, rc.target_fp_rate);
}

int cmd_detect(const cli::RunConfig& rc) {
    auto store = with_policy(load_checked(rc), rc.detector.unseen);
    const auto& capture = require(rc.paths.capture, "capture");
    double threshold = resolve_threshold(rc, store);
    auto packets = read_filtered(capture, store.config().filter);
    auto alerts = detect_all(packets, store, threshold, rc.threads);
    emit(rc.paths.output, format_alerts_csv(alerts));
    return 0;
}

int cmd_calibrate(const cli::RunConfig& rc) {
    auto store = with_policy(load_checked(rc), rc.detector.unseen);
    const auto& path = rc.paths.calibration_capture.empty() ? rc.paths.capture
                                                            : rc.paths.calibration_capture;
    auto packets = read_filtered(require(path, "capture"), store.config().filter);
    double t = calibrate_threshold(store, packets, rc.target_fp_rate);
    emit(rc.paths.output, format_real(t) + "\n");
    return 0;
}

std::vector<Alert> read_alerts(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open alerts '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_alerts_csv(text, path);
}

int cmd_eval(const cli::RunConfig& rc, const std::string& fp_sources) {
    const auto truth = load_truth_csv(require(rc.paths.truth, "truth"));
    const auto& alerts_path = require(rc.paths.alerts, "alerts");
    auto packets = read_filtered(require(rc.paths.capture, "capture"), rc.detector.filter);
    auto labels = label_packets(packets, truth);
    auto metrics = score_run(read_alerts(alerts_path), labels, packets);
    if (!fp_sources.empty())
        emit(fp_sources, format_fp_sources_csv(metrics));
    if (rc.paths.alerts_b.empty()) {
        emit(rc.paths.output, format_metrics_csv(metrics));
        return 0;
    }
    auto metrics_b = score_run(read_alerts(rc.paths.alerts_b), labels, packets);
    const auto digest = capture_digest(packets);
    RunSummary a{"a", metrics, 0, digest}, b{"b", metrics_b, 0, digest};
    if (!rc.paths.store.empty()) {
        auto s = load_store(rc.paths.store);
        a.name = to_string(s.mode());
        a.profile_count = s.profile_count();
    }
    if (!rc.paths.store_b.empty()) {
        auto s = load_store(rc.paths.store_b);
        b.name = to_string(s.mode());
        b.profile_count = s.profile_count();
    }
    if (a.name == b.name) {
        a.name += "_a";
        b.name += "_b";
    }
    emit(rc.paths.output, format_comparison_csv(compare_modes(a, b)));
    return 0;
}

int cmd_roc(const cli::RunConfig& rc, std::optional<int> port) {
    const auto truth = load_truth_csv(require(rc.paths.truth, "truth"));
    auto store = with_policy(load_checked(rc), rc.detector.unseen);
    auto packets = read_filtered(require(rc.paths.capture, "capture"), store.config().filter);
    if (packets.empty())
        throw Error(ErrorKind::InvalidArgument, "capture has no packets passing the filter");
    auto labels = label_packets(packets, truth);
    auto scores = score_all(packets, store, rc.threads);
    std::vector<double> values;
    for (const auto& s : scores)
        values.push_back(detection_score(s, store.config().unseen));
    std::optional<std::uint16_t> only;
    if (port)
        only = static_cast<std::uint16_t>(*port);
    emit(rc.paths.output, format_roc_csv(roc_sweep(values, labels, packets, only)));
    return 0;
}

int cmd_synth(const cli::RunConfig& rc) {
    auto spec = load_traffic_spec(require(rc.paths.spec, "spec"));
    if (rc.synth_seed)
        spec.seed = *rc.synth_seed;
    const auto& pcap = require(rc.paths.output, "out (pcap)");
    const auto& truth = require(rc.paths.truth, "truth");
    write_corpus(build_corpus(spec), pcap, truth);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Payload anomaly detection: SOM pre-classification + byte-frequency models"};
    app.require_subcommand(1);

    Overrides o;
    std::optional<int> roc_port;
    auto* train = app.add_subcommand("train", "train a model store from a capture");
    auto* detect = app.add_subcommand("detect", "write one CSV row per alert");
    auto* calibrate = app.add_subcommand("calibrate", "derive a threshold from attack-free traffic");
    auto* eval = app.add_subcommand("eval", "score alerts against ground truth");
    auto* roc = app.add_subcommand("roc", "sweep thresholds and write ROC points");
    auto* synth = app.add_subcommand("synth", "generate a synthetic capture and truth file");
    for (auto* cmd : {train, detect, calibrate, eval, roc, synth})
        add_common_options(cmd, o);
    eval->add_option("--fp-sources", o.fp_sources, "also write false positives per source host");
    roc->add_option("--port", roc_port, "restrict the sweep to one destination port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        auto rc = resolve(o);
        if (*train)
            return cmd_train(rc);
        if (*detect)
            return cmd_detect(rc);
        if (*calibrate)
            return cmd_calibrate(rc);
        if (*eval)
            return cmd_eval(rc, o.fp_sources);
        if (*roc)
            return cmd_roc(rc, roc_port);
        if (*synth)
            return cmd_synth(rc);
    } catch (const UsageError& e) {
        std::cerr << "poseidon: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "poseidon: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return e.kind() == ErrorKind::Config ? kExitUsage : kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "poseidon: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "poseidon: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
