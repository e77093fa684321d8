#include "camsim/beaconing.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <fmt/format.h>

#include "camsim/csv.hpp"
#include "camsim/error.hpp"
#include "camsim/parallel.hpp"
#include "camsim/rng.hpp"

namespace camsim {

namespace {

constexpr std::string_view kLogHeader = "time_s,tx_id,rx_id,distance_m,link_class,rx_power_dbm,received";

}  // namespace

void validate(const BeaconConfig& cfg, int ticks_per_second)
{
    if (ticks_per_second <= 0) throw ConfigError("tick length must divide one second");
    if (cfg.rate_hz < 1 || cfg.rate_hz > ticks_per_second)
        throw ConfigError(fmt::format("rate_hz {} not representable on a {} ticks/s grid", cfg.rate_hz, ticks_per_second));
    if (!(cfg.candidate_radius_m > 0.0)) throw ConfigError("candidate_radius_m must be > 0");
    if (cfg.payload_bytes <= 0) throw ConfigError("payload_bytes must be > 0");
    if (!std::isfinite(cfg.tx_power_vehicle_dbm) || !std::isfinite(cfg.tx_power_roadside_dbm))
        throw ConfigError("tx power must be finite");
    if (!(cfg.power_offset_lo_db <= cfg.power_offset_hi_db)) throw ConfigError("power offset range is empty");
}

nlohmann::json to_json(const BeaconConfig& cfg)
{
    return {
        {"rate_hz", cfg.rate_hz},
        {"tx_power_dbm", {{"vehicle", cfg.tx_power_vehicle_dbm}, {"roadside", cfg.tx_power_roadside_dbm}}},
        {"payload_bytes", cfg.payload_bytes},
        {"candidate_radius_m", cfg.candidate_radius_m},
        {"start_phase", cfg.start_phase == PhaseMode::aligned ? "aligned" : "per_node_random"},
        {"power_offset_db", {cfg.power_offset_lo_db, cfg.power_offset_hi_db}},
    };
}

BeaconConfig beacon_config_from_json(const nlohmann::json& j)
{
    BeaconConfig cfg;
    if (!j.is_object()) throw ConfigError("beacon config must be a JSON object");
    try {
        for (const auto& [k, v] : j.items()) {
            if (k == "rate_hz") cfg.rate_hz = v.get<int>();
            else if (k == "tx_power_dbm") {
                if (v.is_number()) cfg.tx_power_vehicle_dbm = cfg.tx_power_roadside_dbm = v.get<double>();
                else {
                    for (const auto& [r, p] : v.items()) {
                        if (r == "vehicle") cfg.tx_power_vehicle_dbm = p.get<double>();
                        else if (r == "roadside") cfg.tx_power_roadside_dbm = p.get<double>();
                        else throw ConfigError(fmt::format("unknown role '{}' in tx_power_dbm", r));
                    }
                }
            } else if (k == "payload_bytes") cfg.payload_bytes = v.get<int>();
            else if (k == "candidate_radius_m") cfg.candidate_radius_m = v.get<double>();
            else if (k == "start_phase") {
                const auto s = v.get<std::string>();
                if (s == "aligned") cfg.start_phase = PhaseMode::aligned;
                else if (s == "per_node_random") cfg.start_phase = PhaseMode::per_node_random;
                else throw ConfigError(fmt::format("unknown start_phase '{}'", s));
            } else if (k == "power_offset_db") {
                const auto r = v.get<std::vector<double>>();
                if (r.size() != 2) throw ConfigError("power_offset_db must be [lo, hi]");
                cfg.power_offset_lo_db = r[0];
                cfg.power_offset_hi_db = r[1];
            } else {
                throw ConfigError(fmt::format("unknown key '{}' in beacon config", k));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("beacon config: {}", e.what()));
    }
    return cfg;
}

double effective_power(const NodeState& node, const BeaconConfig& cfg, std::uint64_t seed)
{
    const double nominal = node.role == Role::roadside ? cfg.tx_power_roadside_dbm : cfg.tx_power_vehicle_dbm;
    const double width = cfg.power_offset_hi_db - cfg.power_offset_lo_db;
    if (width <= 0.0) return nominal + cfg.power_offset_lo_db;
    const double u = 1.0 - rng::uniform(rng::key(seed, rng::Stream::power_offset, node.node_id), 0);
    return nominal + cfg.power_offset_lo_db + width * u;
}

EmissionSchedule::EmissionSchedule(const Scenario& scenario, const BeaconConfig& cfg, std::uint64_t seed)
    : rate_(cfg.rate_hz), ticks_per_second_(scenario.ticks_per_second())
{
    validate(cfg, ticks_per_second_);
    slot_of_offset_.assign(static_cast<std::size_t>(ticks_per_second_), -1);
    for (int e = 0; e < rate_; ++e) slot_of_offset_[static_cast<std::size_t>(e * ticks_per_second_ / rate_)] = e;
    const auto spacing = static_cast<std::uint64_t>(ticks_per_second_ / rate_);
    for (NodeId id : scenario.node_ids()) {
        std::size_t phase = 0;
        if (cfg.start_phase == PhaseMode::per_node_random && spacing > 1)
            phase = static_cast<std::size_t>(rng::bits(rng::key(seed, rng::Stream::beacon_phase, id), 0) % spacing);
        phases_.push_back(phase);
    }
}

std::int64_t EmissionSchedule::emission_at(std::size_t dense, std::size_t k) const
{
    const std::size_t phase = phases_[dense];
    if (k < phase) return -1;
    const std::size_t d = k - phase;
    const auto T = static_cast<std::size_t>(ticks_per_second_);
    const int slot = slot_of_offset_[d % T];
    if (slot < 0) return -1;
    return static_cast<std::int64_t>(d / T) * rate_ + slot;
}

std::vector<PairGeometry> tick_geometry(std::span<const NodeState> nodes, const SpatialIndex& index,
                                        const ChannelConfig& cfg, double radius_m, std::span<const char> want,
                                        int workers)
{
    std::vector<PairGeometry> pairs;
    const double r2 = radius_m * radius_m;
    for (std::size_t a = 0; a < nodes.size(); ++a) {
        const bool want_a = want.empty() || want[a];
        for (std::size_t b = a + 1; b < nodes.size(); ++b) {
            if (!want_a && !want[b]) continue;
            const Point2D d = nodes[b].position - nodes[a].position;
            if (d.x * d.x + d.y * d.y > r2) continue;
            PairGeometry p;
            p.a = static_cast<std::uint32_t>(a);
            p.b = static_cast<std::uint32_t>(b);
            pairs.push_back(p);
        }
    }
    if (pairs.empty()) return pairs;
    const NodeSet set(nodes);
    parallel_chunks(pairs.size(), workers, [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i) {
            auto& p = pairs[i];
            const NodeState& tx = nodes[p.a];
            const NodeState& rx = nodes[p.b];
            p.distance_m = distance(tx.position, rx.position);
            p.obstruction = inspect_link(tx, rx, set, index);
            p.loss_db = large_scale_loss_db(p.obstruction.link_class, p.distance_m, tx, rx, p.obstruction, cfg);
        }
    });
    return pairs;
}

RunStats run(const Scenario& scenario, const BeaconConfig& beacon, const ChannelConfig& channel, std::uint64_t seed,
             const SampleSink& sink, int workers)
{
    if (scenario.empty()) throw ConfigError("scenario has no nodes");
    validate(channel);
    const EmissionSchedule schedule(scenario, beacon, seed);
    const auto T = static_cast<std::size_t>(schedule.ticks_per_second());
    const std::size_t n_nodes = scenario.node_ids().size();

    RunStats stats;
    std::vector<std::uint64_t> emitted(n_nodes, 0);
    std::vector<double> power(n_nodes, std::numeric_limits<double>::quiet_NaN());

    std::vector<std::size_t> dense;
    std::vector<std::int64_t> msg;
    std::vector<char> want;
    std::vector<double> sigma;
    std::vector<std::size_t> adj_start;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> adj;  // (other node, pair index)
    std::vector<LinkSample> out;

    for (std::size_t k = 0; k < scenario.active_tick_count(); ++k) {
        const auto nodes = scenario.at_tick(k);
        const std::size_t m = nodes.size();
        dense.resize(m);
        msg.resize(m);
        want.assign(m, 0);
        std::vector<std::size_t> emitters;
        for (std::size_t i = 0; i < m; ++i) {
            dense[i] = scenario.dense_index(nodes[i].node_id);
            msg[i] = schedule.emission_at(dense[i], k);
            if (msg[i] >= 0) {
                want[i] = 1;
                emitters.push_back(i);
                ++emitted[dense[i]];
                if (std::isnan(power[dense[i]])) power[dense[i]] = effective_power(nodes[i], beacon, seed);
            }
        }
        if (emitters.empty()) continue;

        const auto pairs = tick_geometry(nodes, scenario.index(), channel, beacon.candidate_radius_m, want, workers);
        const auto second = static_cast<std::int64_t>(k / T);
        sigma.resize(pairs.size());
        for (std::size_t p = 0; p < pairs.size(); ++p)
            sigma[p] = draw_sigma(scenario.environment(),
                                  link_key(nodes[pairs[p].a].node_id, nodes[pairs[p].b].node_id), second, channel, seed);

        adj_start.assign(m + 1, 0);
        for (const auto& p : pairs) {
            ++adj_start[p.a + 1];
            ++adj_start[p.b + 1];
        }
        for (std::size_t i = 0; i < m; ++i) adj_start[i + 1] += adj_start[i];
        adj.resize(adj_start[m]);
        {
            std::vector<std::size_t> fill(adj_start.begin(), adj_start.end() - 1);
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                adj[fill[pairs[p].a]++] = {pairs[p].b, static_cast<std::uint32_t>(p)};
                adj[fill[pairs[p].b]++] = {pairs[p].a, static_cast<std::uint32_t>(p)};
            }
        }

        const std::size_t chunks = chunk_count(emitters.size(), workers);
        std::vector<std::vector<LinkSample>> parts(chunks);
        parallel_chunks(emitters.size(), workers, [&](std::size_t begin, std::size_t end, std::size_t c) {
            auto& part = parts[c];
            for (std::size_t e = begin; e < end; ++e) {
                const std::size_t i = emitters[e];
                const NodeState& tx = nodes[i];
                const double p_tx = power[dense[i]];
                for (std::size_t q = adj_start[i]; q < adj_start[i + 1]; ++q) {
                    const auto [j, pi] = adj[q];
                    const NodeState& rx = nodes[j];
                    const PairGeometry& g = pairs[pi];
                    LinkSample s;
                    s.time_s = tx.time_s;
                    s.tx_id = tx.node_id;
                    s.rx_id = rx.node_id;
                    s.distance_m = g.distance_m;
                    s.link_class = g.obstruction.link_class;
                    s.rx_power_dbm = mean_rx_power_dbm(tx, rx, p_tx, g.loss_db, channel);
                    if (sigma[pi] > 0.0)
                        s.rx_power_dbm += sigma[pi] * message_gaussian(seed, tx.node_id, rx.node_id,
                                                                        static_cast<std::uint64_t>(msg[i]));
                    s.received = s.rx_power_dbm >= channel.sensitivity_dbm;
                    part.push_back(s);
                }
            }
        });
        out.clear();
        for (auto& part : parts) out.insert(out.end(), part.begin(), part.end());
        for (const auto& s : out) stats.received += s.received ? 1 : 0;
        stats.samples += out.size();
        if (!out.empty()) sink(out);
    }
    for (std::size_t d = 0; d < n_nodes; ++d) stats.emissions.emplace_back(scenario.node_ids()[d], emitted[d]);
    return stats;
}

SimLog simulate(const Scenario& scenario, const BeaconConfig& beacon, const ChannelConfig& channel, std::uint64_t seed,
                int workers)
{
    SimLog log;
    log.stats = run(
        scenario, beacon, channel, seed,
        [&](std::span<const LinkSample> s) { log.samples.insert(log.samples.end(), s.begin(), s.end()); }, workers);
    return log;
}

// ---------------------------------------------------------------------------
// CSV

struct LogWriter::Impl {
    std::filesystem::path path;
    std::filesystem::path tmp;
    std::FILE* file = nullptr;
    fmt::memory_buffer buf;

    void flush()
    {
        if (buf.size() > 0 && std::fwrite(buf.data(), 1, buf.size(), file) != buf.size())
            throw IoError(fmt::format("cannot write '{}'", tmp.string()));
        buf.clear();
    }
};

LogWriter::LogWriter(const std::filesystem::path& path) : impl_(std::make_unique<Impl>())
{
    impl_->path = path;
    impl_->tmp = path;
    impl_->tmp += ".tmp";
    impl_->file = std::fopen(impl_->tmp.c_str(), "wb");
    if (!impl_->file) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    fmt::format_to(std::back_inserter(impl_->buf), "{}\n", kLogHeader);
}

LogWriter::~LogWriter()
{
    if (impl_ && impl_->file) {
        std::fclose(impl_->file);
        std::error_code ec;
        std::filesystem::remove(impl_->tmp, ec);
    }
}

void LogWriter::write(std::span<const LinkSample> samples)
{
    auto out = std::back_inserter(impl_->buf);
    for (const auto& s : samples)
        fmt::format_to(out, "{:.3f},{},{},{:.3f},{},{:.4f},{}\n", s.time_s, s.tx_id, s.rx_id, s.distance_m,
                       to_string(s.link_class), s.rx_power_dbm, s.received ? 1 : 0);
    if (impl_->buf.size() > (1u << 20)) impl_->flush();
}

void LogWriter::close()
{
    impl_->flush();
    const bool ok = std::fclose(impl_->file) == 0;
    impl_->file = nullptr;
    if (!ok) throw IoError(fmt::format("cannot write '{}'", impl_->tmp.string()));
    std::filesystem::rename(impl_->tmp, impl_->path);
}

void write_log_csv(const std::filesystem::path& path, std::span<const LinkSample> samples)
{
    LogWriter w(path);
    w.write(samples);
    w.close();
}

void read_log_csv(const std::filesystem::path& path, const SampleSink& sink, std::size_t batch)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    const std::string source = path.string();
    std::vector<LinkSample> buf;
    buf.reserve(batch);
    std::string raw;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (csv::trim(line).empty() || line.front() == '#') continue;
        if (!header_seen) {
            if (csv::trim(line) != kLogHeader)
                throw ParseError(source, line_no, "expected header '" + std::string(kLogHeader) + "'");
            header_seen = true;
            continue;
        }
        const auto f = csv::split(line, ',');
        if (f.size() != 7) throw ParseError(source, line_no, fmt::format("expected 7 fields, got {}", f.size()));
        LinkSample s;
        s.time_s = csv::to_double(f[0], source, line_no);
        const auto tx = csv::to_int(f[1], source, line_no);
        const auto rx = csv::to_int(f[2], source, line_no);
        if (tx < 0 || rx < 0 || tx > 0xFFFFFFFFLL || rx > 0xFFFFFFFFLL) throw ParseError(source, line_no, "node id out of range");
        s.tx_id = static_cast<NodeId>(tx);
        s.rx_id = static_cast<NodeId>(rx);
        s.distance_m = csv::to_double(f[3], source, line_no);
        if (s.distance_m < 0.0) throw ParseError(source, line_no, "negative distance");
        try {
            s.link_class = parse_link_class(csv::trim(f[4]));
        } catch (const ConfigError& e) {
            throw ParseError(source, line_no, e.what());
        }
        s.rx_power_dbm = csv::to_double(f[5], source, line_no);
        const auto r = csv::trim(f[6]);
        if (r == "1" || r == "true") s.received = true;
        else if (r == "0" || r == "false") s.received = false;
        else throw ParseError(source, line_no, "received must be 0 or 1");
        buf.push_back(s);
        if (buf.size() == batch) {
            sink(buf);
            buf.clear();
        }
    }
    if (!header_seen) throw ParseError(source, line_no, "missing header");
    if (!buf.empty()) sink(buf);
}

std::vector<LinkSample> read_log_csv(const std::filesystem::path& path)
{
    std::vector<LinkSample> out;
    read_log_csv(path, [&](std::span<const LinkSample> b) { out.insert(out.end(), b.begin(), b.end()); });
    return out;
}

}  // namespace camsim
