// Orbital dynamics and ground-station angle measurements (km, s, rad).
#pragma once

#include <espf/types.hpp>

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace espf::orbit {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kMu = 398600.4418;          // km^3/s^2
inline constexpr double kEarthRadius = 6378.137;    // km
inline constexpr double kJ2 = 1.08262668e-3;
inline constexpr double kEarthRate = 7.292115e-5;   // rad/s
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kArcsec = 3.14159265358979323846 / 648000.0;

/// Trajectory left the atmosphere from below: altitude went negative.
class ReentryError : public Error {
public:
    using Error::Error;
};

/// Target below the station horizon.
class VisibilityError : public Error {
public:
    using Error::Error;
};

struct OrbitalState {
    Vec3 position = Vec3::Zero(); // km, ECI
    Vec3 velocity = Vec3::Zero(); // km/s, ECI
    double epoch = 0.0;           // s since scenario start

    Vec6 packed() const;
    static OrbitalState unpack(const Eigen::Ref<const Eigen::VectorXd> &x, double epoch = 0.0);
};

struct SpacecraftParams {
    double mass = 1000.0; // kg
    double area = 1.0;    // m^2
    double cd = 2.0;

    void validate() const;
};

using ExtraAcceleration = std::function<Vec3(const OrbitalState &, const SpacecraftParams &)>;

struct ForceModel {
    bool j2 = true;
    bool drag = true;
    ExtraAcceleration extra; ///< third-body, higher harmonics, ... (off when empty)
};

struct Station {
    std::string name;
    double latitude = 0.0;  // rad, geodetic
    double longitude = 0.0; // rad, east positive
    double altitude = 0.0;  // km above the ellipsoid
    double ra_bias = 0.0;   // arcsec
    double dec_bias = 0.0;  // arcsec
    double noise_sigma = 1.0; // arcsec per angle
    double min_elevation = 0.0; // rad

    void validate() const;
};

/// Earth orientation: Greenwich angle theta_g0 at t = 0 and constant rotation.
struct EarthRotation {
    double theta0 = 0.0;
    double rate = kEarthRate;

    double angle(double t) const { return theta0 + rate * t; }
};

/// Area change at a given measurement index.
struct AreaEvent {
    long index = 0;
    double area = 1.0; // m^2
};

/// Piecewise-exponential atmosphere density (kg/m^3) at geometric altitude h (km).
double atmosphere_density(double altitude);

Vec3 two_body_acceleration(const Vec3 &r);
Vec3 j2_acceleration(const Vec3 &r);
Vec3 drag_acceleration(const Vec3 &r, const Vec3 &v, const SpacecraftParams &params,
                       double earth_rate = kEarthRate);
Vec3 acceleration(const OrbitalState &s, const SpacecraftParams &params, const ForceModel &forces);

/// Fixed-step RK4 over dt split into `substeps` equal steps.
OrbitalState propagate(const OrbitalState &state, const SpacecraftParams &params, double dt, int substeps,
                       const ForceModel &forces = {});

double specific_energy(const OrbitalState &s);
Vec3 angular_momentum(const OrbitalState &s);
double orbital_period(const OrbitalState &s);

/// Station position (km) in the Earth-fixed frame.
Vec3 station_ecef(const Station &station);
Vec3 station_eci(const Station &station, const EarthRotation &earth, double t);

struct Angles {
    double ra = 0.0;  // rad in [0, 2 pi)
    double dec = 0.0; // rad
};

/// RA/DEC of a line-of-sight vector, no horizon check and no bias.
Angles line_of_sight_angles(const Vec3 &los);

double elevation(const Vec3 &target, const Station &station, const EarthRotation &earth, double t);

/// Topocentric right ascension / declination with the station biases added.
Angles observe(const Vec3 &target, const Station &station, const EarthRotation &earth, double t);

inline Angles observe(const OrbitalState &s, const Station &station, const EarthRotation &earth) {
    return observe(s.position, station, earth, s.epoch);
}

SpacecraftParams apply_event(const SpacecraftParams &params, const AreaEvent &event);

/// Wrap an angle into (-pi, pi].
double wrap_pi(double a);

} // namespace espf::orbit
