#include "dmap/geo.hpp"

#include <cmath>
#include <numbers>

namespace dmap::tx {

namespace {
constexpr double kRadPerDeg = std::numbers::pi / 180.0;

double band_cos(std::int64_t row, double cell_m) {
    const double center_lat_deg = (static_cast<double>(row) + 0.5) * cell_m / kMetersPerDegree;
    return std::cos(center_lat_deg * kRadPerDeg);
}

std::int32_t to_micro(double degrees) {
    return static_cast<std::int32_t>(std::llround(degrees * 1e6));
}
}  // namespace

bool GeoPoint::in_range() const {
    return lat_micro >= -90'000'000 && lat_micro <= 90'000'000 && lon_micro >= -180'000'000 &&
           lon_micro <= 180'000'000;
}

double distance_m(const GeoPoint& a, const GeoPoint& b) {
    const double mean_lat = (a.lat_micro + static_cast<double>(b.lat_micro)) * 0.5e-6;
    const double dy = (a.lat_micro - static_cast<double>(b.lat_micro)) * 1e-6 * kMetersPerDegree;
    const double dx = (a.lon_micro - static_cast<double>(b.lon_micro)) * 1e-6 * kMetersPerDegree *
                      std::cos(mean_lat * kRadPerDeg);
    return std::hypot(dx, dy);
}

GeoPoint offset_m(const GeoPoint& origin, double east_m, double north_m) {
    const double lat_deg = origin.lat_micro * 1e-6;
    const double new_lat = lat_deg + north_m / kMetersPerDegree;
    const double new_lon = origin.lon_micro * 1e-6 +
                           east_m / (kMetersPerDegree * std::cos(lat_deg * kRadPerDeg));
    return {to_micro(new_lat), to_micro(new_lon)};
}

std::int64_t grid_col(std::int64_t row, std::int32_t lon_micro, double cell_m) {
    const double x = lon_micro * 1e-6 * kMetersPerDegree * band_cos(row, cell_m);
    return static_cast<std::int64_t>(std::floor(x / cell_m));
}

GridCell grid_cell(const GeoPoint& p, double cell_m) {
    const double y = p.lat_micro * 1e-6 * kMetersPerDegree;
    const auto row = static_cast<std::int64_t>(std::floor(y / cell_m));
    return {row, grid_col(row, p.lon_micro, cell_m)};
}

GeoPoint cell_center(const GridCell& cell, double cell_m) {
    const double y = (static_cast<double>(cell.row) + 0.5) * cell_m;
    const double x = (static_cast<double>(cell.col) + 0.5) * cell_m;
    return {to_micro(y / kMetersPerDegree),
            to_micro(x / (kMetersPerDegree * band_cos(cell.row, cell_m)))};
}

}  // namespace dmap::tx
