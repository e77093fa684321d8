#pragma once

#include <cstdint>
#include <string_view>

namespace camsim {

/// Planar coordinates in meters.
struct Point2D {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2D&, const Point2D&) = default;
};

inline Point2D operator-(Point2D a, Point2D b) { return {a.x - b.x, a.y - b.y}; }
inline Point2D operator+(Point2D a, Point2D b) { return {a.x + b.x, a.y + b.y}; }
inline Point2D operator*(double s, Point2D p) { return {s * p.x, s * p.y}; }
inline double dot(Point2D a, Point2D b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2D a, Point2D b) { return a.x * b.y - a.y * b.x; }
double distance(Point2D a, Point2D b);

using NodeId = std::uint32_t;

enum class Role : std::uint8_t { vehicle, roadside };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

/// State of one node at one instant. Heading is in degrees clockwise from north.
struct NodeState {
    NodeId node_id = 0;
    Role role = Role::vehicle;
    double time_s = 0.0;
    Point2D position;
    double speed_mps = 0.0;
    double heading_deg = 0.0;
    double length_m = 4.5;
    double width_m = 1.8;
    double body_height_m = 1.5;
    double antenna_height_m = 1.55;
};

/// Throws ConfigError when the state violates the per-role invariants.
void validate_node(const NodeState& node);

enum class Environment : std::uint8_t { urban, highway };

std::string_view to_string(Environment env);
Environment parse_environment(std::string_view text);

}  // namespace camsim
