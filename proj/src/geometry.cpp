#include "camsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numbers>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <boost/iterator/function_output_iterator.hpp>
#include <fmt/format.h>

#include "camsim/csv.hpp"
#include "camsim/error.hpp"

namespace camsim {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

using BPoint = bg::model::point<double, 2, bg::cs::cartesian>;
using BBox = bg::model::box<BPoint>;
using BSegment = bg::model::segment<BPoint>;
using Entry = std::pair<BBox, std::size_t>;
using Tree = bgi::rtree<Entry, bgi::quadratic<16>>;

BBox to_bbox(const Box& b) { return BBox(BPoint(b.lo.x, b.lo.y), BPoint(b.hi.x, b.hi.y)); }

BSegment to_segment(Point2D a, Point2D b) { return BSegment(BPoint(a.x, a.y), BPoint(b.x, b.y)); }

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

double orient(Point2D a, Point2D b, Point2D c) { return cross(b - a, c - a); }

bool on_segment(Point2D p, Point2D a, Point2D b)
{
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

bool point_on_boundary(Point2D p, std::span<const Point2D> ring)
{
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2D a = ring[i];
        const Point2D b = ring[(i + 1) % n];
        if (orient(a, b, p) == 0.0 && on_segment(p, a, b)) return true;
    }
    return false;
}

// Closed segment vs axis-aligned box, padded slightly so it never rejects a true contact.
bool segment_meets_box(Point2D a, Point2D b, const Box& box)
{
    constexpr double kPad = 1e-7;
    const Point2D d = b - a;
    double t0 = 0.0, t1 = 1.0;
    const double p[4] = {-d.x, d.x, -d.y, d.y};
    const double q[4] = {a.x - (box.lo.x - kPad), (box.hi.x + kPad) - a.x, a.y - (box.lo.y - kPad), (box.hi.y + kPad) - a.y};
    for (int k = 0; k < 4; ++k) {
        if (p[k] == 0.0) {
            if (q[k] < 0.0) return false;
            continue;
        }
        const double r = q[k] / p[k];
        if (p[k] < 0.0) t0 = std::max(t0, r);
        else t1 = std::min(t1, r);
        if (t0 > t1) return false;
    }
    return true;
}

// Uniform grid over small boxes, walked cell by cell along a segment. Faster
// than the R-tree for the many short vehicle footprints queried per tick.
class BoxGrid {
public:
    BoxGrid() = default;

    BoxGrid(const std::vector<std::pair<Box, std::size_t>>& boxes, double cell_m)
    {
        if (boxes.empty()) return;
        constexpr double kPad = 1e-6;
        Box all = boxes.front().first;
        for (const auto& [b, i] : boxes) {
            all.lo = {std::min(all.lo.x, b.lo.x), std::min(all.lo.y, b.lo.y)};
            all.hi = {std::max(all.hi.x, b.hi.x), std::max(all.hi.y, b.hi.y)};
        }
        x0_ = all.lo.x - 2 * kPad;
        y0_ = all.lo.y - 2 * kPad;
        const double w = all.hi.x - all.lo.x + 4 * kPad;
        const double h = all.hi.y - all.lo.y + 4 * kPad;
        cell_ = cell_m;
        while ((w / cell_ + 1) * (h / cell_ + 1) > double(1 << 20)) cell_ *= 2.0;
        nx_ = std::max(1, static_cast<int>(std::ceil(w / cell_)));
        ny_ = std::max(1, static_cast<int>(std::ceil(h / cell_)));
        std::vector<std::uint32_t> count(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
        auto span_of = [&](const Box& b) {
            return std::array<int, 4>{cx(b.lo.x - kPad), cy(b.lo.y - kPad), cx(b.hi.x + kPad), cy(b.hi.y + kPad)};
        };
        for (const auto& [b, i] : boxes) {
            const auto r = span_of(b);
            for (int y = r[1]; y <= r[3]; ++y)
                for (int x = r[0]; x <= r[2]; ++x) ++count[slot(x, y) + 1];
        }
        for (std::size_t c = 1; c < count.size(); ++c) count[c] += count[c - 1];
        start_ = count;
        items_.resize(count.back());
        for (const auto& [b, i] : boxes) {
            const auto r = span_of(b);
            for (int y = r[1]; y <= r[3]; ++y)
                for (int x = r[0]; x <= r[2]; ++x) items_[count[slot(x, y)]++] = static_cast<std::uint32_t>(i);
        }
    }

    std::vector<std::size_t> query(Point2D a, Point2D b) const
    {
        std::vector<std::size_t> out;
        if (nx_ == 0) return out;
        out.reserve(32);
        // Clip the segment to the grid rectangle.
        const double x1 = x0_ + nx_ * cell_, y1 = y0_ + ny_ * cell_;
        const Point2D d = b - a;
        double t0 = 0.0, t1 = 1.0;
        const double p[4] = {-d.x, d.x, -d.y, d.y};
        const double q[4] = {a.x - x0_, x1 - a.x, a.y - y0_, y1 - a.y};
        for (int k = 0; k < 4; ++k) {
            if (p[k] == 0.0) {
                if (q[k] < 0.0) return out;
                continue;
            }
            const double r = q[k] / p[k];
            if (p[k] < 0.0) t0 = std::max(t0, r);
            else t1 = std::min(t1, r);
            if (t0 > t1) return out;
        }
        const Point2D s = a + t0 * d;
        const Point2D e = a + t1 * d;
        int ix = cx(s.x), iy = cy(s.y);
        const int ex = cx(e.x), ey = cy(e.y);
        const int step_x = d.x > 0 ? 1 : (d.x < 0 ? -1 : 0);
        const int step_y = d.y > 0 ? 1 : (d.y < 0 ? -1 : 0);
        constexpr double inf = std::numeric_limits<double>::infinity();
        double t_max_x = step_x == 0 ? inf : ((x0_ + (ix + (step_x > 0)) * cell_) - s.x) / d.x;
        double t_max_y = step_y == 0 ? inf : ((y0_ + (iy + (step_y > 0)) * cell_) - s.y) / d.y;
        const double t_dx = step_x == 0 ? inf : cell_ / std::abs(d.x);
        const double t_dy = step_y == 0 ? inf : cell_ / std::abs(d.y);
        for (int guard = nx_ + ny_ + 2; guard > 0; --guard) {
            const std::size_t c = slot(ix, iy);
            for (std::uint32_t k = start_[c]; k < start_[c + 1]; ++k) out.push_back(items_[k]);
            if (ix == ex && iy == ey) break;
            if (t_max_x < t_max_y) {
                ix += step_x;
                t_max_x += t_dx;
            } else {
                iy += step_y;
                t_max_y += t_dy;
            }
            if (ix < 0 || iy < 0 || ix >= nx_ || iy >= ny_) break;
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

private:
    int cx(double x) const { return std::clamp(static_cast<int>(std::floor((x - x0_) / cell_)), 0, nx_ - 1); }
    int cy(double y) const { return std::clamp(static_cast<int>(std::floor((y - y0_) / cell_)), 0, ny_ - 1); }
    std::size_t slot(int x, int y) const { return static_cast<std::size_t>(y) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(x); }

    double x0_ = 0.0, y0_ = 0.0, cell_ = 20.0;
    int nx_ = 0, ny_ = 0;
    std::vector<std::uint32_t> start_;
    std::vector<std::uint32_t> items_;
};

std::vector<std::size_t> query(const Tree& tree, Point2D a, Point2D b)
{
    std::vector<std::size_t> out;
    tree.query(bgi::intersects(to_segment(a, b)),
               boost::make_function_output_iterator([&out](const Entry& e) { out.push_back(e.second); }));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

double distance(Point2D a, Point2D b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::string_view to_string(Role role) { return role == Role::vehicle ? "vehicle" : "roadside"; }

Role parse_role(std::string_view text)
{
    text = csv::trim(text);
    if (text == "vehicle") return Role::vehicle;
    if (text == "roadside") return Role::roadside;
    throw ConfigError("unknown role: '" + std::string(text) + "'");
}

void validate_node(const NodeState& n)
{
    if (!std::isfinite(n.position.x) || !std::isfinite(n.position.y))
        throw ConfigError(fmt::format("node {}: non-finite position", n.node_id));
    if (!(n.antenna_height_m > 0.0)) throw ConfigError(fmt::format("node {}: antenna height must be > 0", n.node_id));
    if (n.role == Role::vehicle && !(n.length_m > 0.0 && n.width_m > 0.0 && n.body_height_m > 0.0))
        throw ConfigError(fmt::format("node {}: vehicle dimensions must be > 0", n.node_id));
    if (n.role == Role::roadside && n.speed_mps != 0.0)
        throw ConfigError(fmt::format("node {}: roadside nodes must have zero speed", n.node_id));
}

std::string_view to_string(Environment env) { return env == Environment::urban ? "urban" : "highway"; }

Environment parse_environment(std::string_view text)
{
    if (text == "urban") return Environment::urban;
    if (text == "highway") return Environment::highway;
    throw ConfigError("unknown environment: '" + std::string(text) + "'");
}

std::string_view to_string(ObstacleKind kind) { return kind == ObstacleKind::building ? "building" : "foliage"; }

ObstacleKind parse_obstacle_kind(std::string_view text)
{
    text = csv::trim(text);
    if (text == "building") return ObstacleKind::building;
    if (text == "foliage") return ObstacleKind::foliage;
    throw ConfigError("unknown obstacle kind: '" + std::string(text) + "'");
}

std::string_view to_string(LinkClass cls)
{
    switch (cls) {
    case LinkClass::LOS: return "LOS";
    case LinkClass::NLOSv: return "NLOSv";
    case LinkClass::NLOSb: return "NLOSb";
    }
    return "LOS";
}

LinkClass parse_link_class(std::string_view text)
{
    text = csv::trim(text);
    if (text == "LOS") return LinkClass::LOS;
    if (text == "NLOSv") return LinkClass::NLOSv;
    if (text == "NLOSb") return LinkClass::NLOSb;
    throw ConfigError("unknown link class: '" + std::string(text) + "'");
}

Box bounding_box(std::span<const Point2D> points)
{
    Box b{{INFINITY, INFINITY}, {-INFINITY, -INFINITY}};
    for (auto p : points) {
        b.lo.x = std::min(b.lo.x, p.x);
        b.lo.y = std::min(b.lo.y, p.y);
        b.hi.x = std::max(b.hi.x, p.x);
        b.hi.y = std::max(b.hi.y, p.y);
    }
    return b;
}

bool segments_intersect(Point2D a, Point2D b, Point2D c, Point2D d)
{
    const int o1 = sign_of(orient(a, b, c));
    const int o2 = sign_of(orient(a, b, d));
    const int o3 = sign_of(orient(c, d, a));
    const int o4 = sign_of(orient(c, d, b));
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(c, a, b)) return true;
    if (o2 == 0 && on_segment(d, a, b)) return true;
    if (o3 == 0 && on_segment(a, c, d)) return true;
    if (o4 == 0 && on_segment(b, c, d)) return true;
    return false;
}

bool point_in_polygon(Point2D p, std::span<const Point2D> ring)
{
    if (point_on_boundary(p, ring)) return true;
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2D pi = ring[i];
        const Point2D pj = ring[j];
        if ((pi.y > p.y) != (pj.y > p.y)) {
            const double x_cross = pi.x + (p.y - pi.y) * (pj.x - pi.x) / (pj.y - pi.y);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

bool segment_intersects_polygon(Point2D a, Point2D b, const ObstaclePolygon& polygon)
{
    const auto& ring = polygon.vertices;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i)
        if (segments_intersect(a, b, ring[i], ring[(i + 1) % n])) return true;
    // No boundary contact: the segment is either wholly inside or wholly outside.
    return point_in_polygon(a, ring);
}

void validate_polygon(const ObstaclePolygon& polygon)
{
    const auto& v = polygon.vertices;
    const std::size_t n = v.size();
    if (n < 3) throw GeometryError(fmt::format("polygon '{}': needs at least 3 vertices, got {}", polygon.id, n));
    for (const auto& p : v)
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw GeometryError(fmt::format("polygon '{}': non-finite vertex", polygon.id));
    bool all_collinear = true;
    for (std::size_t i = 2; i < n && all_collinear; ++i)
        if (orient(v[0], v[1], v[i]) != 0.0) all_collinear = false;
    if (all_collinear || v[0] == v[1])
        throw GeometryError(fmt::format("polygon '{}': vertices are collinear or degenerate", polygon.id));
    for (std::size_t i = 0; i < n; ++i) {
        if (v[i] == v[(i + 1) % n]) throw GeometryError(fmt::format("polygon '{}': repeated vertex", polygon.id));
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]))
                throw GeometryError(fmt::format("polygon '{}': self-intersecting boundary", polygon.id));
        }
    }
}

// ---------------------------------------------------------------------------

struct SpatialIndex::Impl {
    std::vector<ObstaclePolygon> obstacles;
    std::vector<Box> boxes;
    Tree tree;
    BoxGrid grid;
};

SpatialIndex::SpatialIndex() : impl_(std::make_shared<Impl>()) {}

SpatialIndex::SpatialIndex(std::vector<ObstaclePolygon> obstacles)
{
    auto impl = std::make_shared<Impl>();
    std::vector<Entry> entries;
    std::vector<std::pair<Box, std::size_t>> boxes;
    entries.reserve(obstacles.size());
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
        boxes.emplace_back(bounding_box(obstacles[i].vertices), i);
        entries.emplace_back(to_bbox(boxes.back().first), i);
        impl->boxes.push_back(boxes.back().first);
    }
    impl->obstacles = std::move(obstacles);
    impl->tree = Tree(entries.begin(), entries.end());
    std::vector<double> sizes;
    for (const auto& [b, i] : boxes) sizes.push_back(std::max(b.hi.x - b.lo.x, b.hi.y - b.lo.y));
    double cell = 50.0;
    if (!sizes.empty()) {
        std::nth_element(sizes.begin(), sizes.begin() + static_cast<std::ptrdiff_t>(sizes.size() / 2), sizes.end());
        cell = std::clamp(sizes[sizes.size() / 2], 20.0, 200.0);
    }
    impl->grid = BoxGrid(boxes, cell);
    impl_ = std::move(impl);
}

std::vector<std::size_t> SpatialIndex::candidates(Point2D a, Point2D b) const { return query(impl_->tree, a, b); }

std::vector<std::size_t> SpatialIndex::intersecting(Point2D a, Point2D b) const
{
    // The grid walk is a cheaper superset filter than the R-tree segment query.
    auto c = impl_->grid.query(a, b);
    std::erase_if(c, [&](std::size_t i) {
        return !segment_meets_box(a, b, impl_->boxes[i]) || !segment_intersects_polygon(a, b, impl_->obstacles[i]);
    });
    return c;
}

const std::vector<ObstaclePolygon>& SpatialIndex::obstacles() const { return impl_->obstacles; }

SpatialIndex build_index(std::vector<ObstaclePolygon> obstacles)
{
    for (const auto& p : obstacles) validate_polygon(p);
    return SpatialIndex(std::move(obstacles));
}

// ---------------------------------------------------------------------------

namespace {

struct Frame {
    Point2D center;
    Point2D along;  // unit vector along the heading
    Point2D across;
    double half_length;
    double half_width;
};

Frame frame_of(const NodeState& n)
{
    const double h = n.heading_deg * std::numbers::pi / 180.0;
    const Point2D along{std::sin(h), std::cos(h)};
    return {n.position, along, {along.y, -along.x}, 0.5 * n.length_m, 0.5 * n.width_m};
}

}  // namespace

std::array<Point2D, 4> footprint_corners(const NodeState& node)
{
    const Frame f = frame_of(node);
    const Point2D l = f.half_length * f.along;
    const Point2D w = f.half_width * f.across;
    return {f.center + l + w, f.center + l - w, f.center - l - w, f.center - l + w};
}

std::optional<std::array<double, 2>> clip_to_footprint(Point2D a, Point2D b, const NodeState& node)
{
    const Frame f = frame_of(node);
    const Point2D da = a - f.center;
    const Point2D d = b - a;
    // Liang-Barsky against the closed rectangle in the vehicle frame.
    const double p0[2] = {dot(da, f.along), dot(da, f.across)};
    const double dp[2] = {dot(d, f.along), dot(d, f.across)};
    const double half[2] = {f.half_length, f.half_width};
    double t0 = 0.0, t1 = 1.0;
    for (int k = 0; k < 2; ++k) {
        if (dp[k] == 0.0) {
            if (p0[k] < -half[k] || p0[k] > half[k]) return std::nullopt;
            continue;
        }
        double ta = (-half[k] - p0[k]) / dp[k];
        double tb = (half[k] - p0[k]) / dp[k];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
    }
    return std::array<double, 2>{t0, t1};
}

bool blocks_ray(const NodeState& blocker, const NodeState& tx, const NodeState& rx)
{
    if (blocker.role != Role::vehicle || blocker.node_id == tx.node_id || blocker.node_id == rx.node_id) return false;
    const auto span = clip_to_footprint(tx.position, rx.position, blocker);
    if (!span) return false;
    const double h0 = tx.antenna_height_m;
    const double dh = rx.antenna_height_m - h0;
    // The ray height is linear in t, so its minimum over the clipped span is at an end.
    const double ray = std::min(h0 + dh * (*span)[0], h0 + dh * (*span)[1]);
    return blocker.body_height_m > ray;
}

struct NodeSet::Impl {
    BoxGrid grid;
};

NodeSet::NodeSet() : impl_(std::make_shared<Impl>()) {}

NodeSet::NodeSet(std::span<const NodeState> nodes) : nodes_(nodes)
{
    auto impl = std::make_shared<Impl>();
    std::vector<std::pair<Box, std::size_t>> entries;
    entries.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].role != Role::vehicle) continue;
        const auto c = footprint_corners(nodes[i]);
        entries.emplace_back(bounding_box(c), i);
    }
    impl->grid = BoxGrid(entries, 20.0);
    impl_ = std::move(impl);
}

std::vector<std::size_t> NodeSet::candidates(Point2D a, Point2D b) const { return impl_->grid.query(a, b); }

int obstructing_vehicle_count(const NodeState& tx, const NodeState& rx, const NodeSet& nodes)
{
    int count = 0;
    const auto all = nodes.nodes();
    for (std::size_t i : nodes.candidates(tx.position, rx.position))
        if (blocks_ray(all[i], tx, rx)) ++count;
    return count;
}

Obstruction inspect_link(const NodeState& tx, const NodeState& rx, const NodeSet& nodes, const SpatialIndex& index)
{
    Obstruction o;
    for (std::size_t i : index.intersecting(tx.position, rx.position)) {
        if (index.obstacles()[i].kind == ObstacleKind::building)
            ++o.buildings;
        else
            ++o.foliage;
    }
    // Vehicles do not change the class or loss of a polygon-obstructed link.
    if (o.buildings + o.foliage == 0) o.vehicles = obstructing_vehicle_count(tx, rx, nodes);
    if (o.buildings + o.foliage > 0)
        o.link_class = LinkClass::NLOSb;
    else if (o.vehicles > 0)
        o.link_class = LinkClass::NLOSv;
    return o;
}

LinkClass classify_link(const NodeState& tx, const NodeState& rx, const NodeSet& nodes, const SpatialIndex& index)
{
    return inspect_link(tx, rx, nodes, index).link_class;
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kEarthRadiusM = 6371008.8;
}

Point2D Projection::project(double lat_deg, double lon_deg) const
{
    constexpr double rad = std::numbers::pi / 180.0;
    return {kEarthRadiusM * (lon_deg - origin_lon_deg) * rad * std::cos(origin_lat_deg * rad),
            kEarthRadiusM * (lat_deg - origin_lat_deg) * rad};
}

std::vector<ObstaclePolygon> load_obstacles(const std::filesystem::path& path, std::optional<Projection> projection)
{
    const std::string text = csv::read_file(path);
    const std::string source = path.string();
    bool latlon = false;
    std::vector<ObstaclePolygon> out;
    std::size_t line_no = 0;
    for (auto line : csv::lines(text)) {
        ++line_no;
        line = csv::trim(line);
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.find("coords=latlon") != std::string_view::npos) latlon = true;
            continue;
        }
        const auto fields = csv::split(line, ',');
        if (fields.size() != 3) throw ParseError(source, line_no, "expected 3 fields: id,kind,vertices");
        if (csv::trim(fields[0]) == "id") continue;
        ObstaclePolygon poly;
        poly.id = std::string(csv::trim(fields[0]));
        try {
            poly.kind = parse_obstacle_kind(fields[1]);
        } catch (const ConfigError& e) {
            throw ParseError(source, line_no, e.what());
        }
        for (auto vertex : csv::split(csv::trim(fields[2]), '|')) {
            const auto xy = csv::split(vertex, ';');
            if (xy.size() != 2) throw ParseError(source, line_no, "vertex must be 'x;y'");
            poly.vertices.push_back({csv::to_double(xy[0], source, line_no), csv::to_double(xy[1], source, line_no)});
        }
        out.push_back(std::move(poly));
    }
    if (latlon) {
        Projection proj;
        if (projection) {
            proj = *projection;
        } else {
            double lat = 0.0, lon = 0.0;
            std::size_t n = 0;
            for (const auto& p : out)
                for (const auto& v : p.vertices) {
                    lat += v.x;
                    lon += v.y;
                    ++n;
                }
            if (n > 0) proj = {lat / static_cast<double>(n), lon / static_cast<double>(n)};
        }
        for (auto& p : out)
            for (auto& v : p.vertices) v = proj.project(v.x, v.y);
    }
    return out;
}

void save_obstacles(const std::filesystem::path& path, std::span<const ObstaclePolygon> obstacles)
{
    std::string out = "id,kind,vertices\n";
    for (const auto& p : obstacles) {
        out += fmt::format("{},{},", p.id, to_string(p.kind));
        for (std::size_t i = 0; i < p.vertices.size(); ++i)
            out += fmt::format("{}{};{}", i ? "|" : "", p.vertices[i].x, p.vertices[i].y);
        out += '\n';
    }
    csv::write_atomic(path, out);
}

}  // namespace camsim
