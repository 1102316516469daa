#include <espf/orbit.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace espf::orbit {

namespace {

struct DensityBand {
    double base;   // km
    double rho;    // kg/m^3
    double height; // scale height, km
};

// Vallado, Fundamentals of Astrodynamics, exponential model.
constexpr std::array<DensityBand, 28> kBands{{
    {0, 1.225, 7.249},          {25, 3.899e-2, 6.349},     {30, 1.774e-2, 6.682},
    {40, 3.972e-3, 7.554},      {50, 1.057e-3, 8.382},     {60, 3.206e-4, 7.714},
    {70, 8.770e-5, 6.549},      {80, 1.905e-5, 5.799},     {90, 3.396e-6, 5.382},
    {100, 5.297e-7, 5.877},     {110, 9.661e-8, 7.263},    {120, 2.438e-8, 9.473},
    {130, 8.484e-9, 12.636},    {140, 3.845e-9, 16.149},   {150, 2.070e-9, 22.523},
    {180, 5.464e-10, 29.740},   {200, 2.789e-10, 37.105},  {250, 7.248e-11, 45.546},
    {300, 2.418e-11, 53.628},   {350, 9.518e-12, 53.298},  {400, 3.725e-12, 58.515},
    {450, 1.585e-12, 60.828},   {500, 6.967e-13, 63.822},  {600, 1.454e-13, 71.835},
    {700, 3.614e-14, 88.667},   {800, 1.170e-14, 124.64},  {900, 5.245e-15, 181.05},
    {1000, 3.019e-15, 268.00},
}};

Vec6 derivative(const Vec6 &x, double t, const SpacecraftParams &params, const ForceModel &forces) {
    OrbitalState s;
    s.position = x.head<3>();
    s.velocity = x.tail<3>();
    s.epoch = t;
    if (s.position.norm() < kEarthRadius) throw ReentryError("propagate: trajectory fell below the surface");
    Vec6 d;
    d.head<3>() = s.velocity;
    d.tail<3>() = acceleration(s, params, forces);
    return d;
}

} // namespace

Vec6 OrbitalState::packed() const {
    Vec6 x;
    x << position, velocity;
    return x;
}

OrbitalState OrbitalState::unpack(const Eigen::Ref<const Eigen::VectorXd> &x, double epoch) {
    detail::require_same_size(x.size(), 6, "OrbitalState::unpack");
    OrbitalState s;
    s.position = x.head<3>();
    s.velocity = x.tail<3>();
    s.epoch = epoch;
    return s;
}

void SpacecraftParams::validate() const {
    if (!(mass > 0 && area > 0 && cd > 0)) throw ArgumentError("spacecraft mass, area and cd must be positive");
}

void Station::validate() const {
    if (std::abs(latitude) > std::numbers::pi / 2 + 1e-15) throw ArgumentError("station latitude out of range: " + name);
    if (!(noise_sigma >= 0)) throw ArgumentError("station noise must be non-negative: " + name);
}

double atmosphere_density(double altitude) {
    if (altitude < 0) return kBands.front().rho;
    auto it = std::upper_bound(kBands.begin(), kBands.end(), altitude,
                               [](double h, const DensityBand &b) { return h < b.base; });
    const DensityBand &band = *std::prev(it);
    return band.rho * std::exp(-(altitude - band.base) / band.height);
}

Vec3 two_body_acceleration(const Vec3 &r) {
    const double rn = r.norm();
    return -kMu / (rn * rn * rn) * r;
}

Vec3 j2_acceleration(const Vec3 &r) {
    const double r2 = r.squaredNorm();
    const double rn = std::sqrt(r2);
    const double z2 = r.z() * r.z() / r2;
    const double k = -1.5 * kJ2 * kMu * kEarthRadius * kEarthRadius / (r2 * r2 * rn);
    return Vec3(k * r.x() * (1 - 5 * z2), k * r.y() * (1 - 5 * z2), k * r.z() * (3 - 5 * z2));
}

Vec3 drag_acceleration(const Vec3 &r, const Vec3 &v, const SpacecraftParams &params, double earth_rate) {
    const Vec3 v_rel = v - Vec3(0, 0, earth_rate).cross(r);
    const double rho = atmosphere_density(r.norm() - kEarthRadius);
    // rho [kg/m^3] * (A/m) [m^2/kg] * v^2 [km^2/s^2] -> 1e3 km/s^2
    return -0.5 * params.cd * params.area / params.mass * rho * 1e3 * v_rel.norm() * v_rel;
}

Vec3 acceleration(const OrbitalState &s, const SpacecraftParams &params, const ForceModel &forces) {
    Vec3 a = two_body_acceleration(s.position);
    if (forces.j2) a += j2_acceleration(s.position);
    if (forces.drag) a += drag_acceleration(s.position, s.velocity, params);
    if (forces.extra) a += forces.extra(s, params);
    return a;
}

OrbitalState propagate(const OrbitalState &state, const SpacecraftParams &params, double dt, int substeps,
                       const ForceModel &forces) {
    if (!(dt > 0)) throw ArgumentError("propagate: dt must be positive");
    if (substeps < 1) throw ArgumentError("propagate: substeps must be >= 1");
    const double h = dt / substeps;
    Vec6 x = state.packed();
    double t = state.epoch;
    for (int k = 0; k < substeps; ++k) {
        const Vec6 k1 = derivative(x, t, params, forces);
        const Vec6 k2 = derivative(x + 0.5 * h * k1, t + 0.5 * h, params, forces);
        const Vec6 k3 = derivative(x + 0.5 * h * k2, t + 0.5 * h, params, forces);
        const Vec6 k4 = derivative(x + h * k3, t + h, params, forces);
        x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        t = state.epoch + (k + 1) * h;
    }
    if (x.head<3>().norm() < kEarthRadius) throw ReentryError("propagate: trajectory fell below the surface");
    return OrbitalState::unpack(x, state.epoch + dt);
}

double specific_energy(const OrbitalState &s) {
    return 0.5 * s.velocity.squaredNorm() - kMu / s.position.norm();
}

Vec3 angular_momentum(const OrbitalState &s) { return s.position.cross(s.velocity); }

double orbital_period(const OrbitalState &s) {
    const double a = -kMu / (2 * specific_energy(s));
    if (!(a > 0)) throw ArgumentError("orbital_period: trajectory is not bound");
    return 2 * std::numbers::pi * std::sqrt(a * a * a / kMu);
}

Vec3 station_ecef(const Station &station) {
    const double e2 = kFlattening * (2 - kFlattening);
    const double sl = std::sin(station.latitude), cl = std::cos(station.latitude);
    const double n = kEarthRadius / std::sqrt(1 - e2 * sl * sl);
    return Vec3((n + station.altitude) * cl * std::cos(station.longitude),
                (n + station.altitude) * cl * std::sin(station.longitude),
                (n * (1 - e2) + station.altitude) * sl);
}

namespace {

Eigen::Matrix3d rotation_z(double angle) {
    return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

Vec3 local_up(const Station &station, double theta) {
    const double cl = std::cos(station.latitude);
    const double lon = station.longitude + theta;
    return Vec3(cl * std::cos(lon), cl * std::sin(lon), std::sin(station.latitude));
}

} // namespace

Vec3 station_eci(const Station &station, const EarthRotation &earth, double t) {
    return rotation_z(earth.angle(t)) * station_ecef(station);
}

double elevation(const Vec3 &target, const Station &station, const EarthRotation &earth, double t) {
    const Vec3 los = target - station_eci(station, earth, t);
    return std::asin(std::clamp(los.normalized().dot(local_up(station, earth.angle(t))), -1.0, 1.0));
}

Angles line_of_sight_angles(const Vec3 &los) {
    Angles a;
    a.ra = std::atan2(los.y(), los.x());
    a.dec = std::asin(std::clamp(los.z() / los.norm(), -1.0, 1.0));
    return a;
}

Angles observe(const Vec3 &target, const Station &station, const EarthRotation &earth, double t) {
    const Vec3 los = target - station_eci(station, earth, t);
    const double el = std::asin(std::clamp(los.dot(local_up(station, earth.angle(t))) / los.norm(), -1.0, 1.0));
    if (!(el > station.min_elevation)) throw VisibilityError("target below the horizon of " + station.name);

    Angles a = line_of_sight_angles(los);
    a.ra += station.ra_bias * kArcsec;
    a.dec += station.dec_bias * kArcsec;
    a.ra = std::fmod(a.ra, 2 * std::numbers::pi);
    if (a.ra < 0) a.ra += 2 * std::numbers::pi;
    return a;
}

SpacecraftParams apply_event(const SpacecraftParams &params, const AreaEvent &event) {
    SpacecraftParams out = params;
    out.area = event.area;
    out.validate();
    return out;
}

double wrap_pi(double a) {
    a = std::remainder(a, 2 * std::numbers::pi);
    return a <= -std::numbers::pi ? a + 2 * std::numbers::pi : a;
}

} // namespace espf::orbit
