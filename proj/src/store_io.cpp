#include "poseidon/detector.hpp"
#include "poseidon/error.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

// Model store text layout, one record per line, tokens separated by
// single spaces, reals printed with 17 significant digits:
//
//   poseidon-model-store <version>
//   [header]
//   mode <poseidon|payl>
//   filter <cidr> <port_lo> <port_hi> <require_payload 0|1>
//   som <rows> <cols> <rate> <radius> <k> <len> <seed> <passes>
//   som_override <port> <rows> <cols> <rate> <radius> <k> <len> <seed> <passes>
//   port_group <port> <som_port>
//   smoothing <real>
//   cluster_threshold <real|none>
//   unseen <alert|ignore>
//   [soms] <count>
//   map <port> <rows> <cols> <rate> <radius> <k> <len> <seed> <passes> <trained 0|1>
//   w <len reals>                       (rows*cols lines per map)
//   [models] <count>
//   model <ip> <port> <class> <class_last> <count>
//   mean <256 reals>
//   m2 <256 reals>
//   [end]

namespace poseidon {

namespace {

constexpr std::string_view kMagic = "poseidon-model-store";

void put_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

void put_som_config(std::string& out, const SomConfig& c) {
    out += std::to_string(c.rows) + ' ' + std::to_string(c.cols) + ' ';
    put_double(out, c.learning_rate);
    out += ' ';
    put_double(out, c.radius);
    out += ' ' + std::to_string(c.smoothing) + ' ' + std::to_string(c.max_payload_len) + ' ' +
           std::to_string(c.seed) + ' ' + std::to_string(c.passes);
}

template <typename Range>
void put_reals(std::string& out, std::string_view tag, const Range& values) {
    out += tag;
    for (double v : values) {
        out += ' ';
        put_double(out, v);
    }
    out += '\n';
}

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    void enter(std::string section) { section_ = std::move(section); }

    /// Next line split into tokens; throws if the input is exhausted.
    std::vector<std::string_view> line() {
        if (pos_ >= text_.size())
            fail("unexpected end of file");
        auto nl = text_.find('\n', pos_);
        if (nl == std::string_view::npos)
            fail("unexpected end of file (unterminated line)");
        std::string_view l = text_.substr(pos_, nl - pos_);
        pos_ = nl + 1;
        ++line_no_;
        std::vector<std::string_view> tokens;
        std::size_t i = 0;
        while (i < l.size()) {
            auto sp = l.find(' ', i);
            if (sp == std::string_view::npos)
                sp = l.size();
            if (sp > i)
                tokens.push_back(l.substr(i, sp - i));
            i = sp + 1;
        }
        if (tokens.empty())
            fail("blank line");
        return tokens;
    }

    std::vector<std::string_view> expect(std::string_view tag, std::size_t args) {
        auto t = line();
        if (t[0] != tag || t.size() != args + 1)
            fail("expected '" + std::string(tag) + "' with " + std::to_string(args) +
                 " fields, got '" + std::string(t[0]) + "' with " + std::to_string(t.size() - 1));
        return t;
    }

    template <typename Int>
    Int integer(std::string_view tok) {
        Int v{};
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || p != tok.data() + tok.size())
            fail("bad integer '" + std::string(tok) + "'");
        return v;
    }

    double real(std::string_view tok) {
        std::string s(tok);
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size())
            fail("bad number '" + s + "'");
        return v;
    }

    SomConfig som_config(std::span<const std::string_view> t) {
        SomConfig c;
        c.rows = integer<int>(t[0]);
        c.cols = integer<int>(t[1]);
        c.learning_rate = real(t[2]);
        c.radius = real(t[3]);
        c.smoothing = integer<int>(t[4]);
        c.max_payload_len = integer<int>(t[5]);
        c.seed = integer<std::uint64_t>(t[6]);
        c.passes = integer<int>(t[7]);
        return c;
    }

    bool at_end() const { return pos_ >= text_.size(); }

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::StoreFormat, "model store section [" + section_ + "], line " +
                                                std::to_string(line_no_) + ": " + what);
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
    std::string section_ = "preamble";
};

}  // namespace

std::string serialize_store(const ModelStore& store) {
    const auto& cfg = store.config();
    std::string out;
    out += std::string(kMagic) + ' ' + std::to_string(kStoreFormatVersion) + '\n';
    out += "[header]\n";
    out += std::string("mode ") + to_string(cfg.mode) + '\n';
    out += "filter " + cfg.filter.home_network.to_string() + ' ' +
           std::to_string(cfg.filter.port_range.lo) + ' ' + std::to_string(cfg.filter.port_range.hi) +
           ' ' + (cfg.filter.require_payload ? "1" : "0") + '\n';
    out += "som ";
    put_som_config(out, cfg.som);
    out += '\n';
    for (const auto& [port, c] : cfg.som_overrides) {
        out += "som_override " + std::to_string(port) + ' ';
        put_som_config(out, c);
        out += '\n';
    }
    for (const auto& [from, to] : cfg.port_groups)
        out += "port_group " + std::to_string(from) + ' ' + std::to_string(to) + '\n';
    out += "smoothing ";
    put_double(out, cfg.smoothing);
    out += "\ncluster_threshold ";
    if (cfg.cluster_threshold)
        put_double(out, *cfg.cluster_threshold);
    else
        out += "none";
    out += std::string("\nunseen ") + to_string(cfg.unseen) + '\n';

    out += "[soms] " + std::to_string(store.soms().size()) + '\n';
    for (const auto& [port, som] : store.soms()) {
        out += "map " + std::to_string(port) + ' ';
        put_som_config(out, som.config());
        out += som.trained() ? " 1\n" : " 0\n";
        for (std::size_t n = 0; n < som.neuron_count(); ++n)
            put_reals(out, "w", som.weights(NeuronIndex{n}));
    }

    out += "[models] " + std::to_string(store.models().size()) + '\n';
    for (const auto& [key, entry] : store.models()) {
        out += "model " + key.ip.to_string() + ' ' + std::to_string(key.port) + ' ' +
               std::to_string(key.class_index) + ' ' + std::to_string(entry.class_last) + ' ' +
               std::to_string(entry.fv.count) + '\n';
        put_reals(out, "mean", entry.fv.mean);
        put_reals(out, "m2", entry.fv.m2);
    }
    out += "[end]\n";
    return out;
}

ModelStore parse_store(std::string_view text) {
    if (text.empty())
        throw Error(ErrorKind::StoreFormat, "model store is empty");
    Parser in(text);
    auto magic = in.line();
    if (magic[0] != kMagic || magic.size() != 2)
        in.fail("not a model store file");
    int version = in.integer<int>(magic[1]);
    if (version != kStoreFormatVersion)
        throw Error(ErrorKind::StoreVersion, "model store format version " + std::to_string(version) +
                                                 " is not supported (expected " +
                                                 std::to_string(kStoreFormatVersion) + ")");

    in.enter("header");
    in.expect("[header]", 0);
    DetectorConfig cfg;
    try {
        cfg.mode = parse_mode(in.expect("mode", 1)[1]);
        auto f = in.expect("filter", 4);
        cfg.filter.home_network = Cidr::parse(f[1]);
        cfg.filter.port_range = PortRange::make(in.integer<int>(f[2]), in.integer<int>(f[3]));
        cfg.filter.require_payload = in.integer<int>(f[4]) != 0;
    } catch (const std::invalid_argument& e) {
        in.fail(e.what());
    }
    auto s = in.expect("som", 8);
    cfg.som = in.som_config(std::span(s).subspan(1));
    auto t = in.line();
    while (t[0] == "som_override" || t[0] == "port_group") {
        if (t[0] == "som_override") {
            if (t.size() != 10)
                in.fail("som_override needs 9 fields");
            cfg.som_overrides[in.integer<std::uint16_t>(t[1])] = in.som_config(std::span(t).subspan(2));
        } else {
            if (t.size() != 3)
                in.fail("port_group needs 2 fields");
            cfg.port_groups[in.integer<std::uint16_t>(t[1])] = in.integer<std::uint16_t>(t[2]);
        }
        t = in.line();
    }
    if (t[0] != "smoothing" || t.size() != 2)
        in.fail("expected 'smoothing'");
    cfg.smoothing = in.real(t[1]);
    auto ct = in.expect("cluster_threshold", 1);
    if (ct[1] != "none")
        cfg.cluster_threshold = in.real(ct[1]);
    try {
        cfg.unseen = parse_unseen_policy(in.expect("unseen", 1)[1]);
    } catch (const Error& e) {
        in.fail(e.what());
    }

    std::optional<ModelStore> store;
    try {
        store.emplace(cfg);
    } catch (const Error& e) {
        in.fail(e.what());
    }

    in.enter("soms");
    auto sh = in.expect("[soms]", 1);
    auto som_count = in.integer<std::size_t>(sh[1]);
    for (std::size_t i = 0; i < som_count; ++i) {
        auto m = in.expect("map", 10);
        auto port = in.integer<std::uint16_t>(m[1]);
        SomConfig sc = in.som_config(std::span(m).subspan(2, 8));
        bool trained = in.integer<int>(m[10]) != 0;
        try {
            sc.validate();
        } catch (const std::invalid_argument& e) {
            in.fail(e.what());
        }
        const auto len = static_cast<std::size_t>(sc.max_payload_len);
        std::vector<double> weights;
        weights.reserve(sc.neuron_count() * len);
        for (std::size_t n = 0; n < sc.neuron_count(); ++n) {
            auto w = in.expect("w", len);
            for (std::size_t k = 1; k <= len; ++k)
                weights.push_back(in.real(w[k]));
        }
        store->add_som(port, Som::from_weights(sc, std::move(weights), trained));
    }

    in.enter("models");
    auto mh = in.expect("[models]", 1);
    auto model_count = in.integer<std::size_t>(mh[1]);
    for (std::size_t i = 0; i < model_count; ++i) {
        auto m = in.expect("model", 5);
        ModelKey key;
        try {
            key.ip = Ipv4Address::parse(m[1]);
        } catch (const std::invalid_argument& e) {
            in.fail(e.what());
        }
        key.port = in.integer<std::uint16_t>(m[2]);
        key.class_index = in.integer<std::uint32_t>(m[3]);
        ModelEntry entry;
        entry.class_last = in.integer<std::uint32_t>(m[4]);
        entry.fv.count = in.integer<std::uint64_t>(m[5]);
        auto mean = in.expect("mean", kByteValues);
        auto m2 = in.expect("m2", kByteValues);
        for (std::size_t b = 0; b < kByteValues; ++b) {
            entry.fv.mean[b] = in.real(mean[b + 1]);
            entry.fv.m2[b] = in.real(m2[b + 1]);
        }
        store->put_model(key, std::move(entry));
    }
    in.enter("end");
    in.expect("[end]", 0);
    if (!in.at_end())
        in.fail("trailing data after [end]");
    return std::move(*store);
}

void save_store(const ModelStore& store, const std::filesystem::path& path) {
    const std::string text = serialize_store(store);
    // Sibling temp file, then rename over the target.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorKind::Io, "cannot write model store '" + path.string() + "'");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out)
            throw Error(ErrorKind::Io, "write failed for model store '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

ModelStore load_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open model store '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_store(text);
}

}  // namespace poseidon
