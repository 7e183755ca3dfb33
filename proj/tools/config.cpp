#include "config.hpp"

#include "poseidon/error.hpp"

#include <json.hpp>

#include <fstream>
#include <iterator>
#include <set>

namespace poseidon::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::string_view where, std::initializer_list<const char*> keys) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k))
            throw Error(ErrorKind::Config,
                        "unknown config key '" + k + "' in " + std::string(where));
}

SomConfig read_som(const json& j, SomConfig c, std::string_view where) {
    reject_unknown(j, where, {"rows", "cols", "learning_rate", "radius", "smoothing",
                              "max_payload_len", "seed", "passes"});
    c.rows = j.value("rows", c.rows);
    c.cols = j.value("cols", c.cols);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.radius = j.value("radius", c.radius);
    c.smoothing = j.value("smoothing", c.smoothing);
    c.max_payload_len = j.value("max_payload_len", c.max_payload_len);
    c.seed = j.value("seed", c.seed);
    c.passes = j.value("passes", c.passes);
    return c;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    RunConfig rc;
    auto& d = rc.detector;
    try {
        auto j = json::parse(json_text);
        reject_unknown(j, "top level",
                       {"mode", "filter", "som", "som_overrides", "port_groups", "payl", "detect",
                        "synth", "paths"});
        if (j.contains("mode")) {
            d.mode = parse_mode(j.at("mode").get<std::string>());
            rc.mode_given = true;
        }
        if (j.contains("filter")) {
            const auto& f = j.at("filter");
            reject_unknown(f, "filter", {"home_network", "ports", "require_payload"});
            if (f.contains("home_network"))
                d.filter.home_network = Cidr::parse(f.at("home_network").get<std::string>());
            if (f.contains("ports")) {
                auto p = f.at("ports").get<std::vector<int>>();
                if (p.size() != 2)
                    throw Error(ErrorKind::Config, "filter.ports must be [first, last]");
                d.filter.port_range = PortRange::make(p[0], p[1]);
            }
            d.filter.require_payload = f.value("require_payload", d.filter.require_payload);
        }
        if (j.contains("som"))
            d.som = read_som(j.at("som"), d.som, "som");
        if (j.contains("som_overrides"))
            for (const auto& [port, o] : j.at("som_overrides").items())
                d.som_overrides[static_cast<std::uint16_t>(std::stoul(port))] =
                    read_som(o, d.som, "som_overrides." + port);
        if (j.contains("port_groups"))
            for (const auto& [port, target] : j.at("port_groups").items())
                d.port_groups[static_cast<std::uint16_t>(std::stoul(port))] =
                    target.get<std::uint16_t>();
        if (j.contains("payl")) {
            const auto& p = j.at("payl");
            reject_unknown(p, "payl", {"smoothing", "cluster_threshold"});
            d.smoothing = p.value("smoothing", d.smoothing);
            if (p.contains("cluster_threshold") && !p.at("cluster_threshold").is_null())
                d.cluster_threshold = p.at("cluster_threshold").get<double>();
        }
        if (j.contains("detect")) {
            const auto& x = j.at("detect");
            reject_unknown(x, "detect", {"threshold", "target_fp_rate", "unseen_policy", "threads"});
            if (x.contains("threshold") && !x.at("threshold").is_null())
                rc.threshold = x.at("threshold").get<double>();
            rc.target_fp_rate = x.value("target_fp_rate", rc.target_fp_rate);
            if (x.contains("unseen_policy"))
                d.unseen = parse_unseen_policy(x.at("unseen_policy").get<std::string>());
            rc.threads = x.value("threads", rc.threads);
        }
        if (j.contains("synth")) {
            const auto& s = j.at("synth");
            reject_unknown(s, "synth", {"seed"});
            if (s.contains("seed"))
                rc.synth_seed = s.at("seed").get<std::uint64_t>();
        }
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            reject_unknown(p, "paths", {"capture", "calibration_capture", "truth", "store",
                                        "store_b", "alerts", "alerts_b", "spec", "output"});
            auto& ps = rc.paths;
            ps.capture = p.value("capture", ps.capture);
            ps.calibration_capture = p.value("calibration_capture", ps.calibration_capture);
            ps.truth = p.value("truth", ps.truth);
            ps.store = p.value("store", ps.store);
            ps.store_b = p.value("store_b", ps.store_b);
            ps.alerts = p.value("alerts", ps.alerts);
            ps.alerts_b = p.value("alerts_b", ps.alerts_b);
            ps.spec = p.value("spec", ps.spec);
            ps.output = p.value("output", ps.output);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw Error(ErrorKind::Config, std::string("config: ") + e.what());
    }
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Config, "cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

}  // namespace poseidon::cli
