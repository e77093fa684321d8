#include "scenario_config.hpp"

#include <fmt/format.h>

#include "camsim/csv.hpp"
#include "camsim/error.hpp"

namespace camsim::cli {

namespace fs = std::filesystem;

nlohmann::json read_json(const fs::path& path)
{
    const std::string text = csv::read_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
    }
}

FleetConfig fleet_from_json(const nlohmann::json& j)
{
    FleetConfig f;
    if (!j.is_object()) throw ConfigError("fleet must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        const double x = v.get<double>();
        if (k == "car_length_m") f.car_length_m = x;
        else if (k == "car_width_m") f.car_width_m = x;
        else if (k == "car_height_m") f.car_height_m = x;
        else if (k == "car_height_spread_m") f.car_height_spread_m = x;
        else if (k == "tall_fraction") f.tall_fraction = x;
        else if (k == "tall_length_m") f.tall_length_m = x;
        else if (k == "tall_width_m") f.tall_width_m = x;
        else if (k == "tall_height_m") f.tall_height_m = x;
        else if (k == "antenna_above_roof_m") f.antenna_above_roof_m = x;
        else throw ConfigError(fmt::format("unknown key '{}' in fleet", k));
    }
    return f;
}

namespace {

// Keys shared by every scenario kind.
bool common_key(const std::string& k) { return k == "kind" || k == "static_nodes"; }

}  // namespace

HighwayConfig highway_from_json(const nlohmann::json& j)
{
    HighwayConfig h;
    for (const auto& [k, v] : j.items()) {
        if (common_key(k)) continue;
        if (k == "length_m") h.length_m = v.get<double>();
        else if (k == "lanes") h.lanes = v.get<int>();
        else if (k == "vehicles") h.vehicles = v.get<int>();
        else if (k == "mean_speed_mps") h.mean_speed_mps = v.get<double>();
        else if (k == "lane_width_m") h.lane_width_m = v.get<double>();
        else if (k == "duration_s") h.duration_s = v.get<double>();
        else if (k == "tick_s") h.tick_s = v.get<double>();
        else if (k == "fleet") h.fleet = fleet_from_json(v);
        else throw ConfigError(fmt::format("unknown key '{}' in highway scenario", k));
    }
    return h;
}

UrbanConfig urban_from_json(const nlohmann::json& j)
{
    UrbanConfig u;
    for (const auto& [k, v] : j.items()) {
        if (common_key(k)) continue;
        if (k == "blocks_x") u.blocks_x = v.get<int>();
        else if (k == "blocks_y") u.blocks_y = v.get<int>();
        else if (k == "block_m") u.block_m = v.get<double>();
        else if (k == "street_m") u.street_m = v.get<double>();
        else if (k == "vehicles") u.vehicles = v.get<int>();
        else if (k == "mean_speed_mps") u.mean_speed_mps = v.get<double>();
        else if (k == "max_setback_m") u.max_setback_m = v.get<double>();
        else if (k == "duration_s") u.duration_s = v.get<double>();
        else if (k == "tick_s") u.tick_s = v.get<double>();
        else if (k == "fleet") u.fleet = fleet_from_json(v);
        else throw ConfigError(fmt::format("unknown key '{}' in urban scenario", k));
    }
    return u;
}

namespace {

struct TraceSpec {
    fs::path trace;
    fs::path obstacles;
    Environment environment = Environment::urban;
    TraceOptions options;
    std::optional<double> duration_s;
};

fs::path resolve(const fs::path& base, const nlohmann::json& v)
{
    fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
}

TraceSpec trace_from_json(const nlohmann::json& j, const fs::path& base)
{
    TraceSpec t;
    for (const auto& [k, v] : j.items()) {
        if (common_key(k)) continue;
        if (k == "trace") t.trace = resolve(base, v);
        else if (k == "obstacles") t.obstacles = resolve(base, v);
        else if (k == "environment") t.environment = parse_environment(v.get<std::string>());
        else if (k == "tick_s") t.options.tick_s = v.get<double>();
        else if (k == "duration_s") t.duration_s = v.get<double>();
        else if (k == "max_gap_s") t.options.max_gap_s = v.get<double>();
        else if (k == "projection") {
            Projection p;
            for (const auto& [pk, pv] : v.items()) {
                if (pk == "origin_lat_deg") p.origin_lat_deg = pv.get<double>();
                else if (pk == "origin_lon_deg") p.origin_lon_deg = pv.get<double>();
                else throw ConfigError(fmt::format("unknown key '{}' in projection", pk));
            }
            t.options.projection = p;
        } else {
            throw ConfigError(fmt::format("unknown key '{}' in trace scenario", k));
        }
    }
    if (t.trace.empty()) throw ConfigError("trace scenario needs 'trace'");
    return t;
}

std::string kind_of(const nlohmann::json& doc)
{
    if (!doc.is_object()) throw ConfigError("scenario config must be a JSON object");
    if (!doc.contains("kind")) throw ConfigError("scenario config needs 'kind'");
    const auto kind = doc.at("kind").get<std::string>();
    if (kind != "highway" && kind != "urban" && kind != "trace")
        throw ConfigError(fmt::format("unknown scenario kind '{}'", kind));
    return kind;
}

template <typename F>
auto guarded(F&& f)
{
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("scenario config: {}", e.what()));
    }
}

}  // namespace

ScenarioConfig load_scenario_config(const fs::path& path)
{
    ScenarioConfig cfg{read_json(path), path.parent_path()};
    check(cfg);
    return cfg;
}

std::vector<fs::path> ScenarioConfig::inputs() const
{
    return guarded([&] {
        std::vector<fs::path> out;
        if (kind_of(doc) == "trace") {
            const auto t = trace_from_json(doc, base_dir);
            out.push_back(t.trace);
            if (!t.obstacles.empty()) out.push_back(t.obstacles);
        }
        if (doc.contains("static_nodes")) out.push_back(resolve(base_dir, doc.at("static_nodes")));
        return out;
    });
}

void check(const ScenarioConfig& cfg)
{
    guarded([&] {
        const auto kind = kind_of(cfg.doc);
        if (kind == "highway") highway_from_json(cfg.doc);
        else if (kind == "urban") urban_from_json(cfg.doc);
        else trace_from_json(cfg.doc, cfg.base_dir);
        return 0;
    });
}

Scenario build_scenario(const ScenarioConfig& cfg, std::uint64_t seed)
{
    return guarded([&] {
        const auto kind = kind_of(cfg.doc);
        Scenario scn;
        std::optional<Projection> projection;
        if (kind == "highway") {
            scn = gen_highway(highway_from_json(cfg.doc), seed);
        } else if (kind == "urban") {
            scn = gen_urban_grid(urban_from_json(cfg.doc), seed);
        } else {
            const auto t = trace_from_json(cfg.doc, cfg.base_dir);
            projection = t.options.projection;
            std::vector<ObstaclePolygon> obstacles;
            if (!t.obstacles.empty()) obstacles = load_obstacles(t.obstacles, projection);
            const auto rows = read_trace(t.trace, t.options);
            scn = assemble_scenario(t.environment, rows, std::move(obstacles), t.options, t.duration_s);
        }
        if (cfg.doc.contains("static_nodes")) {
            const auto nodes = load_static_nodes(resolve(cfg.base_dir, cfg.doc.at("static_nodes")), projection);
            add_static_nodes(scn, nodes);
        }
        return scn;
    });
}

}  // namespace camsim::cli
