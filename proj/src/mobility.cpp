#include "camsim/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <fmt/format.h>

#include "camsim/csv.hpp"
#include "camsim/error.hpp"
#include "camsim/rng.hpp"

namespace camsim {

namespace {

constexpr double kTimeEps = 1e-9;
constexpr std::string_view kTraceHeader =
    "time_s,node_id,x,y,speed_mps,heading_deg,length_m,width_m,body_height_m,antenna_height_m,role";

std::size_t steps_in(double duration_s, double tick_s)
{
    return static_cast<std::size_t>(std::floor(duration_s / tick_s + 1e-6));
}

double lerp(double a, double b, double f) { return a + (b - a) * f; }

double lerp_heading(double a, double b, double f)
{
    double d = std::fmod(b - a, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d < -180.0) d += 360.0;
    double h = std::fmod(a + d * f, 360.0);
    return h < 0.0 ? h + 360.0 : h;
}

}  // namespace

Scenario::Scenario(Environment env, double tick_s, double duration_s, std::vector<ObstaclePolygon> obstacles)
    : environment_(env), tick_s_(tick_s), duration_s_(duration_s), index_(build_index(std::move(obstacles)))
{
    if (!(tick_s > 0.0)) throw ConfigError("tick must be > 0");
    if (!(duration_s >= 0.0)) throw ConfigError("duration must be >= 0");
    ticks_.resize(steps_in(duration_s, tick_s) + 1);
}

int Scenario::ticks_per_second() const
{
    const double t = 1.0 / tick_s_;
    const double r = std::round(t);
    return std::abs(t - r) < 1e-6 ? static_cast<int>(r) : 0;
}

std::size_t Scenario::dense_index(NodeId id) const
{
    auto it = std::lower_bound(node_ids_.begin(), node_ids_.end(), id);
    if (it == node_ids_.end() || *it != id) throw ConfigError(fmt::format("unknown node id {}", id));
    return static_cast<std::size_t>(it - node_ids_.begin());
}

std::optional<std::size_t> Scenario::tick_of(double t) const
{
    if (t < -kTimeEps) return std::nullopt;
    const double k = std::round(t / tick_s_);
    if (std::abs(k * tick_s_ - t) > kTimeEps * std::max(1.0, std::abs(t))) return std::nullopt;
    const auto idx = static_cast<std::size_t>(k);
    if (idx >= ticks_.size()) return std::nullopt;
    return idx;
}

void Scenario::set_tick(std::size_t k, std::vector<NodeState> nodes)
{
    std::sort(nodes.begin(), nodes.end(), [](const NodeState& a, const NodeState& b) { return a.node_id < b.node_id; });
    for (std::size_t i = 1; i < nodes.size(); ++i)
        if (nodes[i].node_id == nodes[i - 1].node_id)
            throw ConfigError(fmt::format("node {} appears twice at tick {}", nodes[i].node_id, k));
    for (auto& n : nodes) n.time_s = static_cast<double>(k) * tick_s_;
    ticks_.at(k) = std::move(nodes);
}

void Scenario::finalize()
{
    std::vector<NodeId> ids;
    std::vector<Point2D> pts;
    for (const auto& tick : ticks_)
        for (const auto& n : tick) {
            ids.push_back(n.node_id);
            pts.push_back(n.position);
        }
    for (const auto& o : obstacles()) pts.insert(pts.end(), o.vertices.begin(), o.vertices.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    node_ids_ = std::move(ids);
    bounds_ = pts.empty() ? Box{} : bounding_box(pts);
}

std::span<const NodeState> snapshot(const Scenario& scenario, double t)
{
    const auto k = scenario.tick_of(t);
    if (!k) throw ConfigError(fmt::format("time {} is not on the tick grid of the scenario", t));
    return scenario.at_tick(*k);
}

// ---------------------------------------------------------------------------
// Trace ingestion

namespace {

NodeState parse_trace_row(std::span<const std::string_view> f, const std::string& source, std::size_t line,
                          const std::optional<Projection>& projection)
{
    NodeState n;
    n.time_s = csv::to_double(f[0], source, line);
    const auto id = csv::to_int(f[1], source, line);
    if (id < 0 || id > 0xFFFFFFFFLL) throw ParseError(source, line, "node_id out of range");
    n.node_id = static_cast<NodeId>(id);
    const double x = csv::to_double(f[2], source, line);
    const double y = csv::to_double(f[3], source, line);
    n.position = projection ? projection->project(y, x) : Point2D{x, y};
    n.speed_mps = csv::to_double(f[4], source, line);
    n.heading_deg = csv::to_double(f[5], source, line);
    n.length_m = csv::to_double(f[6], source, line);
    n.width_m = csv::to_double(f[7], source, line);
    n.body_height_m = csv::to_double(f[8], source, line);
    n.antenna_height_m = csv::to_double(f[9], source, line);
    try {
        n.role = parse_role(f[10]);
        validate_node(n);
    } catch (const ConfigError& e) {
        throw ParseError(source, line, e.what());
    }
    return n;
}

}  // namespace

std::vector<TraceRows> read_trace(const std::filesystem::path& path, const TraceOptions& options)
{
    const std::string text = csv::read_file(path);
    const std::string source = path.string();
    std::map<NodeId, TraceRows> by_node;
    std::size_t line_no = 0;
    bool header_seen = false;
    for (auto line : csv::lines(text)) {
        ++line_no;
        if (csv::trim(line).empty() || line.front() == '#') continue;
        if (!header_seen) {
            if (csv::trim(line) != kTraceHeader)
                throw ParseError(source, line_no, "expected header '" + std::string(kTraceHeader) + "'");
            header_seen = true;
            continue;
        }
        const auto fields = csv::split(line, ',');
        if (fields.size() != 11) throw ParseError(source, line_no, fmt::format("expected 11 fields, got {}", fields.size()));
        NodeState n = parse_trace_row(fields, source, line_no, options.projection);
        auto& rows = by_node[n.node_id];
        if (!rows.empty() && !(n.time_s > rows.back().time_s))
            throw ParseError(source, line_no, fmt::format("non-monotonic time for node {}", n.node_id));
        rows.push_back(n);
    }
    if (!header_seen) throw ParseError(source, line_no, "missing header");
    std::vector<TraceRows> out;
    for (auto& [id, rows] : by_node) out.push_back(std::move(rows));
    return out;
}

Scenario assemble_scenario(Environment env, std::span<const TraceRows> nodes, std::vector<ObstaclePolygon> obstacles,
                           const TraceOptions& options, std::optional<double> duration_s)
{
    double end = 0.0;
    for (const auto& rows : nodes)
        if (!rows.empty()) end = std::max(end, rows.back().time_s);
    const double tick = options.tick_s;
    const double duration = duration_s.value_or(static_cast<double>(steps_in(end, tick)) * tick);
    Scenario scn(env, tick, duration, std::move(obstacles));
    std::vector<std::vector<NodeState>> per_tick(scn.tick_count());
    for (const auto& rows : nodes) {
        std::size_t j = 0;
        for (std::size_t k = 0; k < per_tick.size(); ++k) {
            const double t = static_cast<double>(k) * tick;
            while (j < rows.size() && rows[j].time_s < t - kTimeEps) ++j;
            if (j == rows.size()) break;
            const NodeState& next = rows[j];
            if (std::abs(next.time_s - t) <= kTimeEps) {
                per_tick[k].push_back(next);
                continue;
            }
            if (j == 0) continue;
            const NodeState& prev = rows[j - 1];
            if (next.time_s - prev.time_s > options.max_gap_s + kTimeEps) continue;
            const double f = (t - prev.time_s) / (next.time_s - prev.time_s);
            NodeState s = prev;
            s.position = {lerp(prev.position.x, next.position.x, f), lerp(prev.position.y, next.position.y, f)};
            s.speed_mps = lerp(prev.speed_mps, next.speed_mps, f);
            s.heading_deg = lerp_heading(prev.heading_deg, next.heading_deg, f);
            per_tick[k].push_back(s);
        }
    }
    for (std::size_t k = 0; k < per_tick.size(); ++k) scn.set_tick(k, std::move(per_tick[k]));
    scn.finalize();
    return scn;
}

Scenario load_trace(const std::filesystem::path& path, const TraceOptions& options, Environment env)
{
    const auto rows = read_trace(path, options);
    return assemble_scenario(env, rows, {}, options);
}

void save_trace(const std::filesystem::path& path, const Scenario& scenario)
{
    std::string out(kTraceHeader);
    out += '\n';
    for (std::size_t k = 0; k < scenario.tick_count(); ++k)
        for (const auto& n : scenario.at_tick(k))
            out += fmt::format("{:.3f},{},{:.4f},{:.4f},{:.4f},{:.4f},{},{},{},{},{}\n", n.time_s, n.node_id,
                               n.position.x, n.position.y, n.speed_mps, n.heading_deg, n.length_m, n.width_m,
                               n.body_height_m, n.antenna_height_m, to_string(n.role));
    csv::write_atomic(path, out);
}

void add_static_nodes(Scenario& scenario, std::span<const NodeState> nodes)
{
    for (std::size_t k = 0; k < scenario.tick_count(); ++k) {
        auto tick = scenario.at_tick(k);
        std::vector<NodeState> merged(tick.begin(), tick.end());
        for (auto n : nodes) {
            n.role = Role::roadside;
            n.speed_mps = 0.0;
            merged.push_back(n);
        }
        scenario.set_tick(k, std::move(merged));
    }
    scenario.finalize();
}

std::vector<NodeState> load_static_nodes(const std::filesystem::path& path, std::optional<Projection> projection)
{
    TraceOptions opts;
    opts.projection = projection;
    std::vector<NodeState> out;
    for (const auto& rows : read_trace(path, opts)) {
        NodeState n = rows.front();
        if (n.role != Role::roadside)
            throw ParseError(path.string(), 0, fmt::format("static node {} must have role=roadside", n.node_id));
        for (const auto& r : rows)
            if (r.position != n.position)
                throw ParseError(path.string(), 0, fmt::format("static node {} changes position", n.node_id));
        out.push_back(n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generators

namespace {

NodeState draw_vehicle(NodeId id, const FleetConfig& fleet, std::uint64_t seed)
{
    const std::uint64_t k = rng::key(seed, rng::Stream::fleet, id);
    NodeState n;
    n.node_id = id;
    n.role = Role::vehicle;
    if (rng::uniform(k, 0) <= fleet.tall_fraction && fleet.tall_fraction > 0.0) {
        n.length_m = fleet.tall_length_m;
        n.width_m = fleet.tall_width_m;
        n.body_height_m = fleet.tall_height_m;
    } else {
        n.length_m = fleet.car_length_m;
        n.width_m = fleet.car_width_m;
        n.body_height_m = fleet.car_height_m + fleet.car_height_spread_m * (1.0 - rng::uniform(k, 1));
    }
    n.antenna_height_m = n.body_height_m + fleet.antenna_above_roof_m;
    return n;
}

double heading_of(Point2D dir) { return std::fmod(std::atan2(dir.x, dir.y) * 180.0 / std::numbers::pi + 360.0, 360.0); }

}  // namespace

Scenario gen_highway(const HighwayConfig& c, std::uint64_t seed)
{
    if (c.vehicles < 1) throw ConfigError("highway: vehicles must be >= 1");
    if (c.lanes < 1) throw ConfigError("highway: lanes must be >= 1");
    if (!(c.length_m > 0.0) || !(c.mean_speed_mps >= 0.0)) throw ConfigError("highway: bad length or speed");

    struct Car {
        NodeState proto;
        double x0;
        double dir;
        double speed;
        double y;
    };
    std::vector<Car> cars;
    NodeId next_id = 1;
    for (int lane = 0; lane < c.lanes; ++lane) {
        const int m = c.vehicles / c.lanes + (lane < c.vehicles % c.lanes ? 1 : 0);
        if (m == 0) continue;
        std::vector<NodeState> protos;
        double occupied = 0.0;
        for (int i = 0; i < m; ++i) {
            protos.push_back(draw_vehicle(next_id++, c.fleet, seed));
            occupied += protos.back().length_m;
        }
        if (occupied >= c.length_m)
            throw ConfigError(fmt::format("highway: lane {} cannot hold {} vehicles in {} m", lane, m, c.length_m));
        const std::uint64_t lk = rng::key(seed, rng::Stream::placement, static_cast<std::uint64_t>(lane));
        std::vector<double> gaps(static_cast<std::size_t>(m));
        double gap_sum = 0.0;
        for (int i = 0; i < m; ++i) {
            gaps[static_cast<std::size_t>(i)] = -std::log(rng::uniform(lk, static_cast<std::uint64_t>(i) + 1));
            gap_sum += gaps[static_cast<std::size_t>(i)];
        }
        const double free_space = c.length_m - occupied;
        double x = rng::uniform(lk, 0) * c.length_m;
        const double dir = lane % 2 == 0 ? 1.0 : -1.0;
        for (int i = 0; i < m; ++i) {
            const auto& p = protos[static_cast<std::size_t>(i)];
            const double sk = rng::uniform(rng::key(seed, rng::Stream::speed, p.node_id), 0);
            cars.push_back({p, std::fmod(x, c.length_m), dir, c.mean_speed_mps * (0.9 + 0.2 * sk),
                            (lane + 0.5) * c.lane_width_m});
            const double next_len = protos[static_cast<std::size_t>((i + 1) % m)].length_m;
            x += 0.5 * p.length_m + free_space * gaps[static_cast<std::size_t>(i)] / gap_sum + 0.5 * next_len;
        }
    }

    Scenario scn(Environment::highway, c.tick_s, c.duration_s, {});
    for (std::size_t k = 0; k < scn.tick_count(); ++k) {
        const double t = static_cast<double>(k) * c.tick_s;
        std::vector<NodeState> nodes;
        nodes.reserve(cars.size());
        for (const auto& car : cars) {
            NodeState n = car.proto;
            double x = std::fmod(car.x0 + car.dir * car.speed * t, c.length_m);
            if (x < 0.0) x += c.length_m;
            n.position = {x, car.y};
            n.speed_mps = car.speed;
            n.heading_deg = car.dir > 0 ? 90.0 : 270.0;
            nodes.push_back(n);
        }
        scn.set_tick(k, std::move(nodes));
    }
    scn.finalize();
    return scn;
}

namespace {

struct Grid {
    int nx;  // intersections along x
    int ny;
    double pitch;
    double half_street;

    Point2D at(int i, int j) const { return {i * pitch + half_street, j * pitch + half_street}; }
    bool valid(int i, int j) const { return i >= 0 && j >= 0 && i < nx && j < ny; }
};

struct UrbanCar {
    NodeState proto;
    int i, j;    // intersection the current edge starts from
    int dx, dy;  // unit direction of the current edge
    double s;    // progress along the edge
    double speed;
    std::uint64_t turns = 0;
};

}  // namespace

Scenario gen_urban_grid(const UrbanConfig& c, std::uint64_t seed)
{
    if (c.blocks_x < 1 || c.blocks_y < 1 || !(c.block_m > 0.0) || !(c.street_m > 0.0) || c.vehicles < 0 ||
        !(c.mean_speed_mps > 0.0))
        throw ConfigError("urban grid: all dimensions must be > 0");
    const double max_width = std::max(c.fleet.car_width_m, c.fleet.tall_width_m);
    if (c.street_m < 2.0 * max_width)
        throw ConfigError("urban grid: street narrower than two vehicle widths");
    if (c.max_setback_m < 0.0 || 2.0 * c.max_setback_m >= c.block_m)
        throw ConfigError("urban grid: setback must be in [0, block/2)");

    const double pitch = c.block_m + c.street_m;
    const Grid g{c.blocks_x + 1, c.blocks_y + 1, pitch, 0.5 * c.street_m};

    std::vector<ObstaclePolygon> buildings;
    for (int j = 0; j < c.blocks_y; ++j)
        for (int i = 0; i < c.blocks_x; ++i) {
            const std::uint64_t bk = rng::key(seed, rng::Stream::placement, 1000000 + static_cast<std::uint64_t>(j),
                                              static_cast<std::uint64_t>(i));
            const double x0 = i * pitch + c.street_m + c.max_setback_m * (1.0 - rng::uniform(bk, 0));
            const double x1 = (i + 1) * pitch - c.max_setback_m * (1.0 - rng::uniform(bk, 1));
            const double y0 = j * pitch + c.street_m + c.max_setback_m * (1.0 - rng::uniform(bk, 2));
            const double y1 = (j + 1) * pitch - c.max_setback_m * (1.0 - rng::uniform(bk, 3));
            buildings.push_back({fmt::format("b{}_{}", i, j), ObstacleKind::building,
                                 {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}});
        }

    // Directed edges: horizontal and vertical unit steps between adjacent intersections.
    struct Edge {
        int i, j, dx, dy;
    };
    std::vector<Edge> edges;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (i + 1 < g.nx) {
                edges.push_back({i, j, 1, 0});
                edges.push_back({i + 1, j, -1, 0});
            }
            if (j + 1 < g.ny) {
                edges.push_back({i, j, 0, 1});
                edges.push_back({i, j + 1, 0, -1});
            }
        }
    const double lane_length = static_cast<double>(edges.size()) * pitch;
    const double need = c.vehicles * (std::max(c.fleet.car_length_m, c.fleet.tall_length_m) + 2.0);
    if (need > lane_length)
        throw ConfigError(fmt::format("urban grid: {} vehicles exceed street capacity", c.vehicles));

    std::vector<UrbanCar> cars;
    for (int v = 0; v < c.vehicles; ++v) {
        const NodeId id = static_cast<NodeId>(v + 1);
        const std::uint64_t pk = rng::key(seed, rng::Stream::placement, id);
        const auto e = edges[static_cast<std::size_t>(rng::bits(pk, 0) % edges.size())];
        const double sk = rng::uniform(rng::key(seed, rng::Stream::speed, id), 0);
        cars.push_back({draw_vehicle(id, c.fleet, seed), e.i, e.j, e.dx, e.dy, rng::uniform(pk, 1) * pitch,
                        c.mean_speed_mps * (0.9 + 0.2 * sk)});
    }

    const double lane_offset = 0.25 * c.street_m;
    Scenario scn(Environment::urban, c.tick_s, c.duration_s, std::move(buildings));
    for (std::size_t k = 0; k < scn.tick_count(); ++k) {
        std::vector<NodeState> nodes;
        nodes.reserve(cars.size());
        for (auto& car : cars) {
            if (k > 0) {
                car.s += car.speed * c.tick_s;
                while (car.s >= pitch) {
                    car.s -= pitch;
                    car.i += car.dx;
                    car.j += car.dy;
                    // Straight, left, right (left of (dx,dy) is (-dy,dx)).
                    const int opts[3][2] = {{car.dx, car.dy}, {-car.dy, car.dx}, {car.dy, -car.dx}};
                    int valid[3];
                    int n_valid = 0;
                    for (int o = 0; o < 3; ++o)
                        if (g.valid(car.i + opts[o][0], car.j + opts[o][1])) valid[n_valid++] = o;
                    const std::uint64_t tk = rng::key(seed, rng::Stream::turn, car.proto.node_id, car.turns++);
                    const int pick = valid[rng::bits(tk, 0) % static_cast<std::uint64_t>(n_valid)];
                    car.dx = opts[pick][0];
                    car.dy = opts[pick][1];
                }
            }
            const Point2D start = g.at(car.i, car.j);
            const Point2D dir{static_cast<double>(car.dx), static_cast<double>(car.dy)};
            const Point2D right{dir.y, -dir.x};
            NodeState n = car.proto;
            n.position = start + car.s * dir + lane_offset * right;
            n.speed_mps = car.speed;
            n.heading_deg = heading_of(dir);
            nodes.push_back(n);
        }
        scn.set_tick(k, std::move(nodes));
    }
    scn.finalize();
    return scn;
}

}  // namespace camsim
