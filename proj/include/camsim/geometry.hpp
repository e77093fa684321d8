#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "camsim/types.hpp"

namespace camsim {

enum class ObstacleKind : std::uint8_t { building, foliage };

std::string_view to_string(ObstacleKind kind);
ObstacleKind parse_obstacle_kind(std::string_view text);

struct ObstaclePolygon {
    std::string id;
    ObstacleKind kind = ObstacleKind::building;
    std::vector<Point2D> vertices;
};

/// Rejects polygons with fewer than 3 vertices, collinear vertex sets, or
/// self-intersecting boundaries. The message names the polygon id.
void validate_polygon(const ObstaclePolygon& polygon);

enum class LinkClass : std::uint8_t { LOS, NLOSv, NLOSb };

std::string_view to_string(LinkClass cls);
LinkClass parse_link_class(std::string_view text);

struct Box {
    Point2D lo;
    Point2D hi;
};

Box bounding_box(std::span<const Point2D> points);

bool point_in_polygon(Point2D p, std::span<const Point2D> ring);

/// Closed-segment intersection test; touching endpoints and collinear overlap count.
bool segments_intersect(Point2D a, Point2D b, Point2D c, Point2D d);

/// True when segment ab crosses, touches, or lies inside the polygon.
/// Tangency along an edge or at a vertex counts as an intersection.
bool segment_intersects_polygon(Point2D a, Point2D b, const ObstaclePolygon& polygon);

/// R-tree over obstacle bounding boxes. Immutable and safe to share across threads.
class SpatialIndex {
public:
    SpatialIndex();
    explicit SpatialIndex(std::vector<ObstaclePolygon> obstacles);

    /// Obstacles whose bounding box meets segment ab (a superset of the true hits).
    std::vector<std::size_t> candidates(Point2D a, Point2D b) const;

    /// Obstacles actually intersected by ab, in ascending index order.
    std::vector<std::size_t> intersecting(Point2D a, Point2D b) const;

    const std::vector<ObstaclePolygon>& obstacles() const;
    std::size_t size() const { return obstacles().size(); }

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

/// Validates every polygon and builds the index.
SpatialIndex build_index(std::vector<ObstaclePolygon> obstacles);

/// Vehicle footprint: a length x width rectangle centered on the position and
/// aligned with the heading.
std::array<Point2D, 4> footprint_corners(const NodeState& node);

/// Parameter interval [t0, t1] along ab (0 at a, 1 at b) that lies inside the
/// node footprint, or nothing when the segment misses it.
std::optional<std::array<double, 2>> clip_to_footprint(Point2D a, Point2D b, const NodeState& node);

/// True when `blocker` is a vehicle whose footprint meets the tx-rx segment and
/// whose body rises above the straight antenna-to-antenna ray there.
bool blocks_ray(const NodeState& blocker, const NodeState& tx, const NodeState& rx);

/// Immutable per-tick node snapshot with a footprint R-tree.
class NodeSet {
public:
    NodeSet();
    explicit NodeSet(std::span<const NodeState> nodes);

    std::span<const NodeState> nodes() const { return nodes_; }

    /// Indices of vehicles whose footprint bounding box may meet segment ab (a superset).
    std::vector<std::size_t> candidates(Point2D a, Point2D b) const;

private:
    struct Impl;
    std::span<const NodeState> nodes_;
    std::shared_ptr<const Impl> impl_;
};

/// Everything the channel needs to know about what lies between two antennas.
struct Obstruction {
    LinkClass link_class = LinkClass::LOS;
    /// Blocking vehicles; only counted when no polygon obstructs the link.
    int vehicles = 0;
    int buildings = 0;
    int foliage = 0;
};

Obstruction inspect_link(const NodeState& tx, const NodeState& rx, const NodeSet& nodes, const SpatialIndex& index);

LinkClass classify_link(const NodeState& tx, const NodeState& rx, const NodeSet& nodes, const SpatialIndex& index);

int obstructing_vehicle_count(const NodeState& tx, const NodeState& rx, const NodeSet& nodes);

/// Local equirectangular projection around an origin; adequate for extents of a few tens of km.
struct Projection {
    double origin_lat_deg = 0.0;
    double origin_lon_deg = 0.0;

    Point2D project(double lat_deg, double lon_deg) const;
};

/// Obstacle CSV: `id,kind,x1;y1|x2;y2|...`. A leading `#coords=latlon` line marks
/// vertices as `lat;lon`, which are projected around `projection` (or their own
/// centroid when no projection is supplied).
std::vector<ObstaclePolygon> load_obstacles(const std::filesystem::path& path,
                                            std::optional<Projection> projection = std::nullopt);
void save_obstacles(const std::filesystem::path& path, std::span<const ObstaclePolygon> obstacles);

}  // namespace camsim
