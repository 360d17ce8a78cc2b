#pragma once

#include <compare>
#include <cstdint>

namespace dmap::tx {

/// Fixed-point micro-degrees.
struct GeoPoint {
    std::int32_t lat_micro = 0;
    std::int32_t lon_micro = 0;

    [[nodiscard]] bool in_range() const;
    auto operator<=>(const GeoPoint&) const = default;
};

/// Inclusive lat/lon box.
struct GeoBox {
    GeoPoint min;
    GeoPoint max;

    [[nodiscard]] bool contains(const GeoPoint& p) const {
        return p.lat_micro >= min.lat_micro && p.lat_micro <= max.lat_micro &&
               p.lon_micro >= min.lon_micro && p.lon_micro <= max.lon_micro;
    }
    [[nodiscard]] bool degenerate() const {
        return min.lat_micro >= max.lat_micro || min.lon_micro >= max.lon_micro;
    }
    bool operator==(const GeoBox&) const = default;
};

inline constexpr double kMetersPerDegree = 111320.0;

/// Equirectangular distance in metres, accurate at city scale.
double distance_m(const GeoPoint& a, const GeoPoint& b);

/// Offset a point by (east, north) metres.
GeoPoint offset_m(const GeoPoint& origin, double east_m, double north_m);

/// Square cell of a global grid with side `cell_m` metres. Rows are latitude
/// bands; columns are measured at the band's centre latitude.
struct GridCell {
    std::int64_t row = 0;
    std::int64_t col = 0;
    auto operator<=>(const GridCell&) const = default;
};

GridCell grid_cell(const GeoPoint& p, double cell_m);
/// Column of a longitude within a given row band.
std::int64_t grid_col(std::int64_t row, std::int32_t lon_micro, double cell_m);
GeoPoint cell_center(const GridCell& cell, double cell_m);

/// grid_cell(p) -> cell_center; idempotent.
inline GeoPoint snap_to_cell_center(const GeoPoint& p, double cell_m) {
    return cell_center(grid_cell(p, cell_m), cell_m);
}

}  // namespace dmap::tx
