#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace dtdms {

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
  bool operator==(const LatLon&) const = default;
};

inline constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle distance in kilometres on a sphere of radius 6371.0 km.
inline double haversine_km(LatLon a, LatLon b) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * deg;
  const double dlon = (b.lon - a.lon) * deg;
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * deg) * std::cos(b.lat * deg) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::fmin(1.0, s)));
}

/// Person counts are rounded half away from zero everywhere.
inline std::int64_t round_persons(double x) { return static_cast<std::int64_t>(std::round(x)); }

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

/// FNV-1a over raw bytes, continuing from `h`.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Per-asset jitter hash: mix64(seed XOR fnv1a64(asset_id)).
///
/// Fixed across platforms so a given (seed, asset) always yields the same
/// damage draw.
inline std::uint64_t hash64(std::uint64_t seed, std::string_view asset_id) {
  return mix64(seed ^ fnv1a64(asset_id));
}

/// Maps a 64-bit hash to [0,1) as h / 2^64, truncated to 53 bits so the
/// result never rounds up to 1.0.
inline double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace dtdms
