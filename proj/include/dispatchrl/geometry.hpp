#pragma once

#include <algorithm>
#include <cmath>

namespace dispatchrl {

/// A position in the square world, in kilometres.
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point& a, const Point& b) {
        return a.x == b.x && a.y == b.y;
    }
};

inline double distance(const Point& a, const Point& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

inline double clamp_coord(double v, double world_size) {
    return std::clamp(v, 0.0, world_size);
}

inline Point clamp_to_world(Point p, double world_size) {
    return {clamp_coord(p.x, world_size), clamp_coord(p.y, world_size)};
}

} // namespace dispatchrl
