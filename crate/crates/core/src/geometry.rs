//! Satellite-pass and user-drop geometry on a spherical Earth.
//!
//! The satellite flies a great-circle ground track at constant altitude. Its
//! direct radiating array looks at nadir; the array x-axis points along-track and
//! the y-axis completes a right-handed frame with z toward nadir. `(u, v)` are the
//! direction cosines of a user in that frame.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, StandardNormal};

use crate::math::{self, PI};
use crate::seed::SimRng;

/// Standard gravitational parameter of the Earth, km³/s².
pub const EARTH_GM_KM3_S2: f64 = 398_600.441_8;

pub type Vec3 = [f64; 3];

#[inline]
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
fn norm(a: Vec3) -> f64 {
    math::sqrt(dot(a, a))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("user is below the horizon (elevation {elevation_deg:.3} deg)")]
    NotVisible { elevation_deg: f64 },
    #[error("all mixture weights are zero or invalid")]
    DegenerateMixture,
    #[error("user drop rejected {attempts} candidates outside the footprint")]
    FootprintRejection { attempts: usize },
    #[error("invalid geometry configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct OrbitConfig {
    pub altitude_km: f64,
    pub earth_radius_km: f64,
    pub min_elevation_deg: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            altitude_km: 1000.0,
            earth_radius_km: 6371.0,
            min_elevation_deg: 30.0,
        }
    }
}

impl OrbitConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.altitude_km > 0.0) {
            return Err(GeometryError::InvalidConfig("altitude must be positive"));
        }
        if !(self.earth_radius_km > 0.0) {
            return Err(GeometryError::InvalidConfig("earth radius must be positive"));
        }
        if !(self.min_elevation_deg > 0.0 && self.min_elevation_deg < 90.0) {
            return Err(GeometryError::InvalidConfig("min elevation must lie in (0, 90) deg"));
        }
        Ok(())
    }

    pub fn orbit_radius_km(&self) -> f64 {
        self.earth_radius_km + self.altitude_km
    }

    /// Speed of the sub-satellite point for a circular orbit, km/s.
    pub fn ground_speed_km_s(&self) -> f64 {
        let r = self.orbit_radius_km();
        math::sqrt(EARTH_GM_KM3_S2 / r) * self.earth_radius_km / r
    }

    /// Off-nadir angle (rad) under which a user at elevation `elevation_rad` is seen.
    pub fn off_nadir_at_elevation(&self, elevation_rad: f64) -> f64 {
        math::asin(self.earth_radius_km * math::cos(elevation_rad) / self.orbit_radius_km())
    }

    /// Earth-central angle (rad) between sub-satellite point and a user at the
    /// given elevation.
    pub fn central_angle_at_elevation(&self, elevation_rad: f64) -> f64 {
        PI / 2.0 - elevation_rad - self.off_nadir_at_elevation(elevation_rad)
    }

    /// Elevation (rad) as a function of Earth-central angle.
    pub fn elevation_at_central_angle(&self, gamma_rad: f64) -> f64 {
        let ratio = self.earth_radius_km / self.orbit_radius_km();
        math::atan2(math::cos(gamma_rad) - ratio, math::sin(gamma_rad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GroundPosition {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl GroundPosition {
    /// Latitude is clamped to ±90 deg and longitude wrapped into [-180, 180).
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Self {
        let mut lon = (longitude_deg + 180.0) % 360.0;
        if lon < 0.0 {
            lon += 360.0;
        }
        Self {
            latitude_deg: latitude_deg.clamp(-90.0, 90.0),
            longitude_deg: lon - 180.0,
        }
    }

    pub fn unit_vector(&self) -> Vec3 {
        let lat = math::to_radians(self.latitude_deg);
        let lon = math::to_radians(self.longitude_deg);
        [
            math::cos(lat) * math::cos(lon),
            math::cos(lat) * math::sin(lon),
            math::sin(lat),
        ]
    }

    pub fn from_vector(v: Vec3) -> Self {
        let n = norm(v);
        let lat = math::asin(v[2] / n);
        let lon = math::atan2(v[1], v[0]);
        Self::new(math::to_degrees(lat), math::to_degrees(lon))
    }

    fn north_east(&self) -> (Vec3, Vec3) {
        let lat = math::to_radians(self.latitude_deg);
        let lon = math::to_radians(self.longitude_deg);
        let north = [
            -math::sin(lat) * math::cos(lon),
            -math::sin(lat) * math::sin(lon),
            math::cos(lat),
        ];
        let east = [-math::sin(lon), math::cos(lon), 0.0];
        (north, east)
    }

    /// Point reached by travelling `central_angle_rad` along a great circle with
    /// initial azimuth `bearing_rad` (clockwise from north).
    pub fn destination(&self, bearing_rad: f64, central_angle_rad: f64) -> Self {
        let p = self.unit_vector();
        let (n, e) = self.north_east();
        let dir = add(scale(n, math::cos(bearing_rad)), scale(e, math::sin(bearing_rad)));
        Self::from_vector(add(
            scale(p, math::cos(central_angle_rad)),
            scale(dir, math::sin(central_angle_rad)),
        ))
    }

    pub fn central_angle_to(&self, other: &GroundPosition) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        math::atan2(norm(cross(a, b)), dot(a, b))
    }

    pub fn great_circle_km(&self, other: &GroundPosition, earth_radius_km: f64) -> f64 {
        self.central_angle_to(other) * earth_radius_km
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvCoordinate {
    pub u: f64,
    pub v: f64,
}

impl UvCoordinate {
    pub fn radius(&self) -> f64 {
        math::sqrt(self.u * self.u + self.v * self.v)
    }

    /// Off-nadir angle recovered from the direction cosines.
    pub fn off_nadir(&self) -> f64 {
        math::asin(self.radius())
    }
}

/// A great-circle pass whose closest approach is directly above `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SatellitePass {
    pub center: GroundPosition,
    /// Ground-track azimuth at the center, deg clockwise from north.
    pub heading_deg: f64,
}

impl SatellitePass {
    /// Half the along-track angle over which `center` sees the satellite above
    /// the minimum elevation.
    pub fn half_span_rad(&self, orbit: &OrbitConfig) -> f64 {
        orbit.central_angle_at_elevation(math::to_radians(orbit.min_elevation_deg))
    }

    pub fn duration_s(&self, orbit: &OrbitConfig) -> f64 {
        2.0 * self.half_span_rad(orbit) * orbit.earth_radius_km / orbit.ground_speed_km_s()
    }

    pub fn instant_at(&self, orbit: &OrbitConfig, along_track_rad: f64) -> PassInstant {
        let c = self.center.unit_vector();
        let (n, e) = self.center.north_east();
        let h = math::to_radians(self.heading_deg);
        let t = add(scale(n, math::cos(h)), scale(e, math::sin(h)));
        let (s, co) = (math::sin(along_track_rad), math::cos(along_track_rad));
        let p = add(scale(c, co), scale(t, s));
        let tangent = add(scale(c, -s), scale(t, co));
        let sub = GroundPosition::from_vector(p);
        let (pn, pe) = sub.north_east();
        let azimuth = math::atan2(dot(tangent, pe), dot(tangent, pn));
        let start = -self.half_span_rad(orbit);
        PassInstant {
            time_s: (along_track_rad - start) * orbit.earth_radius_km / orbit.ground_speed_km_s(),
            along_track_rad,
            sub_satellite_point: sub,
            track_azimuth_deg: math::to_degrees(azimuth),
        }
    }

    /// `fraction` in [0, 1] maps linearly onto the visibility interval of `center`.
    pub fn instant_at_fraction(&self, orbit: &OrbitConfig, fraction: f64) -> PassInstant {
        let half = self.half_span_rad(orbit);
        self.instant_at(orbit, -half + 2.0 * half * fraction.clamp(0.0, 1.0))
    }

    /// Uniformly sampled instant in the visibility interval.
    pub fn sample_instant<R: Rng + ?Sized>(&self, orbit: &OrbitConfig, rng: &mut R) -> PassInstant {
        let f: f64 = rng.random();
        self.instant_at_fraction(orbit, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassInstant {
    /// Seconds since the start of the visibility interval of the pass center.
    pub time_s: f64,
    pub along_track_rad: f64,
    pub sub_satellite_point: GroundPosition,
    pub track_azimuth_deg: f64,
}

/// Satellite position and array axes in Earth-centered coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ArrayFrame {
    pub position_km: Vec3,
    pub x_axis: Vec3,
    pub y_axis: Vec3,
    pub z_axis: Vec3,
}

impl PassInstant {
    /// Satellite straight above `point`, flying along `track_azimuth_deg`.
    pub fn overhead(point: GroundPosition, track_azimuth_deg: f64) -> Self {
        Self {
            time_s: 0.0,
            along_track_rad: 0.0,
            sub_satellite_point: point,
            track_azimuth_deg,
        }
    }

    pub fn frame(&self, orbit: &OrbitConfig) -> ArrayFrame {
        let p = self.sub_satellite_point.unit_vector();
        let (n, e) = self.sub_satellite_point.north_east();
        let az = math::to_radians(self.track_azimuth_deg);
        let x = add(scale(n, math::cos(az)), scale(e, math::sin(az)));
        let z = scale(p, -1.0);
        ArrayFrame {
            position_km: scale(p, orbit.orbit_radius_km()),
            x_axis: x,
            y_axis: cross(z, x),
            z_axis: z,
        }
    }
}

/// Everything the channel model needs to know about one user at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineOfSight {
    pub slant_range_m: f64,
    pub elevation_deg: f64,
    pub off_nadir_rad: f64,
    pub uv: UvCoordinate,
}

fn user_position_km(user: &GroundPosition, orbit: &OrbitConfig) -> Vec3 {
    scale(user.unit_vector(), orbit.earth_radius_km)
}

/// Elevation of the satellite seen from `user`, deg; negative below the horizon.
pub fn elevation_angle(sat: &PassInstant, orbit: &OrbitConfig, user: &GroundPosition) -> f64 {
    let frame = sat.frame(orbit);
    let up = user.unit_vector();
    let to_sat = sub(frame.position_km, user_position_km(user, orbit));
    math::to_degrees(math::asin(dot(to_sat, up) / norm(to_sat)))
}

/// Straight-line satellite-to-user distance, m.
pub fn slant_range(sat: &PassInstant, orbit: &OrbitConfig, user: &GroundPosition) -> f64 {
    let frame = sat.frame(orbit);
    norm(sub(user_position_km(user, orbit), frame.position_km)) * 1e3
}

pub fn uv_of_user(
    sat: &PassInstant,
    orbit: &OrbitConfig,
    user: &GroundPosition,
) -> Result<UvCoordinate, GeometryError> {
    observe(sat, orbit, user).map(|los| los.uv)
}

pub fn observe(
    sat: &PassInstant,
    orbit: &OrbitConfig,
    user: &GroundPosition,
) -> Result<LineOfSight, GeometryError> {
    let frame = sat.frame(orbit);
    let up = user.unit_vector();
    let to_user = sub(user_position_km(user, orbit), frame.position_km);
    let range_km = norm(to_user);
    let elevation_deg = math::to_degrees(math::asin(-dot(to_user, up) / range_km));
    if elevation_deg < 0.0 {
        return Err(GeometryError::NotVisible { elevation_deg });
    }
    let dir = scale(to_user, 1.0 / range_km);
    let uv = UvCoordinate {
        u: dot(dir, frame.x_axis),
        v: dot(dir, frame.y_axis),
    };
    Ok(LineOfSight {
        slant_range_m: range_km * 1e3,
        elevation_deg,
        off_nadir_rad: math::acos(dot(dir, frame.z_axis)),
        uv,
    })
}

/// Seconds until `user` sees the satellite below the minimum elevation, counted
/// from the instant at `along_track_rad` of `pass`. Zero if it already does;
/// capped at one full pass duration.
pub fn remaining_visibility_s(
    pass: &SatellitePass,
    orbit: &OrbitConfig,
    along_track_rad: f64,
    user: &GroundPosition,
) -> f64 {
    let visible = |a: f64| elevation_angle(&pass.instant_at(orbit, a), orbit, user) >= orbit.min_elevation_deg;
    if !visible(along_track_rad) {
        return 0.0;
    }
    let span = 2.0 * pass.half_span_rad(orbit);
    let steps = 64;
    let mut lo = along_track_rad;
    let mut hi = None;
    for i in 1..=steps {
        let a = along_track_rad + span * i as f64 / steps as f64;
        if visible(a) {
            lo = a;
        } else {
            hi = Some(a);
            break;
        }
    }
    let Some(mut hi) = hi else {
        return span * orbit.earth_radius_km / orbit.ground_speed_km_s();
    };
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if visible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo - along_track_rad) * orbit.earth_radius_km / orbit.ground_speed_km_s()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Cluster {
    /// Offset of the cluster center from the mixture anchor on the local ground plane, km.
    pub east_km: f64,
    pub north_km: f64,
    pub sigma_km: f64,
    pub weight: f64,
}

/// Gaussian mixture on the tangent plane at `anchor`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct UserMixture {
    pub anchor: GroundPosition,
    pub clusters: Vec<Cluster>,
}

impl UserMixture {
    /// Mixture density at plane offset `(east, north)` km, weights normalized.
    pub fn density(&self, east_km: f64, north_km: f64) -> f64 {
        let total: f64 = self.clusters.iter().map(|c| c.weight.max(0.0)).sum();
        self.clusters
            .iter()
            .map(|c| {
                let de = east_km - c.east_km;
                let dn = north_km - c.north_km;
                let s2 = c.sigma_km * c.sigma_km;
                c.weight.max(0.0) / total / (2.0 * PI * s2) * math::exp(-(de * de + dn * dn) / (2.0 * s2))
            })
            .sum()
    }

    pub fn to_ground(&self, east_km: f64, north_km: f64, earth_radius_km: f64) -> GroundPosition {
        let dist = math::sqrt(east_km * east_km + north_km * north_km);
        if dist == 0.0 {
            return self.anchor;
        }
        self.anchor
            .destination(math::atan2(east_km, north_km), dist / earth_radius_km)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserPopulation {
    pub positions: Vec<GroundPosition>,
    /// Mixture density at each user, divided by the population maximum.
    pub density_weight: Vec<f64>,
}

impl UserPopulation {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Candidates per requested user before giving up on footprint rejection.
const MAX_ATTEMPTS_PER_USER: usize = 1000;

/// Draws `count` users from `mixture`, keeping only those that see a satellite
/// overhead the anchor at or above the minimum elevation.
pub fn drop_users(
    seed: u64,
    count: usize,
    mixture: &UserMixture,
    orbit: &OrbitConfig,
) -> Result<UserPopulation, GeometryError> {
    use rand::SeedableRng;
    if count == 0 {
        return Err(GeometryError::InvalidConfig("user count must be positive"));
    }
    let weights: Vec<f64> = mixture
        .clusters
        .iter()
        .map(|c| if c.weight.is_finite() && c.weight > 0.0 { c.weight } else { 0.0 })
        .collect();
    let picker = WeightedIndex::new(&weights).map_err(|_| GeometryError::DegenerateMixture)?;
    let mut rng = SimRng::seed_from_u64(seed);
    let overhead = PassInstant::overhead(mixture.anchor, 0.0);

    let mut positions = Vec::with_capacity(count);
    let mut raw_density = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while positions.len() < count {
        attempts += 1;
        if attempts > count * MAX_ATTEMPTS_PER_USER {
            return Err(GeometryError::FootprintRejection { attempts });
        }
        let c = &mixture.clusters[picker.sample(&mut rng)];
        let ze: f64 = StandardNormal.sample(&mut rng);
        let zn: f64 = StandardNormal.sample(&mut rng);
        let east = c.east_km + c.sigma_km * ze;
        let north = c.north_km + c.sigma_km * zn;
        let pos = mixture.to_ground(east, north, orbit.earth_radius_km);
        if elevation_angle(&overhead, orbit, &pos) < orbit.min_elevation_deg {
            continue;
        }
        positions.push(pos);
        raw_density.push(mixture.density(east, north));
    }
    let peak = raw_density.iter().copied().fold(0.0, f64::max);
    let density_weight = raw_density
        .iter()
        .map(|d| if peak > 0.0 { d / peak } else { 1.0 })
        .collect();
    Ok(UserPopulation {
        positions,
        density_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn orbit() -> OrbitConfig {
        OrbitConfig::default()
    }

    fn nadir() -> PassInstant {
        PassInstant::overhead(GroundPosition::new(44.5, 11.3), 30.0)
    }

    /// Law-of-cosines slant range for elevation `e` (rad), km.
    fn oracle_range_km(o: &OrbitConfig, e: f64) -> f64 {
        let r = o.earth_radius_km;
        let h = o.altitude_km;
        libm::sqrt(r * r * libm::sin(e).powi(2) + 2.0 * r * h + h * h) - r * libm::sin(e)
    }

    fn user_at_elevation(sat: &PassInstant, o: &OrbitConfig, elev_deg: f64, bearing_deg: f64) -> GroundPosition {
        let gamma = o.central_angle_at_elevation(elev_deg.to_radians());
        sat.sub_satellite_point.destination(bearing_deg.to_radians(), gamma)
    }

    #[test]
    fn nadir_slant_range_equals_altitude() {
        let sat = nadir();
        let r = slant_range(&sat, &orbit(), &sat.sub_satellite_point);
        assert!((r - 1_000_000.0).abs() < 1e-6);
        assert!((elevation_angle(&sat, &orbit(), &sat.sub_satellite_point) - 90.0).abs() < 1e-9);
    }

    #[test]
    fn slant_range_at_30_and_0_degrees() {
        let o = orbit();
        let sat = nadir();
        for (elev, expected_m) in [(30.0, 1_702_200.0), (0.0, 3_707_700.0)] {
            let user = user_at_elevation(&sat, &o, elev, 75.0);
            let got = slant_range(&sat, &o, &user);
            let oracle = oracle_range_km(&o, f64::to_radians(elev)) * 1e3;
            assert!(((got - oracle) / oracle).abs() < 1e-9, "{got} vs {oracle}");
            assert!(((got - expected_m) / expected_m).abs() < 1e-3, "{got}");
        }
    }

    #[test]
    fn horizon_grazing_user_has_zero_elevation() {
        let o = orbit();
        let sat = nadir();
        let gamma = libm::acos(o.earth_radius_km / o.orbit_radius_km());
        let user = sat.sub_satellite_point.destination(1.0, gamma);
        assert!(elevation_angle(&sat, &o, &user).abs() < 1e-6);
        assert!(o.elevation_at_central_angle(gamma).abs() < 1e-12);
    }

    #[test]
    fn far_side_user_is_below_horizon() {
        let o = orbit();
        let sat = nadir();
        let user = sat.sub_satellite_point.destination(0.0, 2.0);
        assert!(elevation_angle(&sat, &o, &user) < 0.0);
        assert!(matches!(uv_of_user(&sat, &o, &user), Err(GeometryError::NotVisible { .. })));
    }

    #[test]
    fn boresight_user_has_zero_uv() {
        let sat = nadir();
        let uv = uv_of_user(&sat, &orbit(), &sat.sub_satellite_point).unwrap();
        assert!(uv.u.abs() < 1e-12 && uv.v.abs() < 1e-12);
    }

    #[test]
    fn along_track_user_at_30_deg_off_nadir() {
        let o = orbit();
        let sat = nadir();
        let theta = 30f64.to_radians();
        let elev = libm::acos(o.orbit_radius_km() * libm::sin(theta) / o.earth_radius_km);
        let gamma = PI / 2.0 - theta - elev;
        let user = sat
            .sub_satellite_point
            .destination(sat.track_azimuth_deg.to_radians(), gamma);
        let uv = uv_of_user(&sat, &o, &user).unwrap();
        assert!((uv.u - 0.5).abs() < 1e-9, "{uv:?}");
        assert!(uv.v.abs() < 1e-9, "{uv:?}");
        // cross-track user lands on the v axis
        let user = sat
            .sub_satellite_point
            .destination((sat.track_azimuth_deg + 90.0).to_radians(), gamma);
        let uv = uv_of_user(&sat, &o, &user).unwrap();
        assert!(uv.u.abs() < 1e-9 && (uv.v.abs() - 0.5).abs() < 1e-9, "{uv:?}");
    }

    #[test]
    fn pass_instants_sweep_the_visibility_interval() {
        let o = orbit();
        let pass = SatellitePass {
            center: GroundPosition::new(10.0, 20.0),
            heading_deg: 15.0,
        };
        let start = pass.instant_at_fraction(&o, 0.0);
        let mid = pass.instant_at_fraction(&o, 0.5);
        let end = pass.instant_at_fraction(&o, 1.0);
        assert!(start.time_s.abs() < 1e-9);
        assert!((end.time_s - pass.duration_s(&o)).abs() < 1e-6);
        assert!((elevation_angle(&mid, &o, &pass.center) - 90.0).abs() < 1e-6);
        assert!((elevation_angle(&start, &o, &pass.center) - 30.0).abs() < 1e-6);
        assert!((elevation_angle(&end, &o, &pass.center) - 30.0).abs() < 1e-6);
        assert!((mid.track_azimuth_deg - 15.0).abs() < 1e-9);
    }

    fn tight_cluster(sigma: f64) -> UserMixture {
        UserMixture {
            anchor: GroundPosition::new(45.0, 9.0),
            clusters: vec![Cluster {
                east_km: 100.0,
                north_km: -50.0,
                sigma_km: sigma,
                weight: 1.0,
            }],
        }
    }

    #[test]
    fn tight_cluster_concentrates_users() {
        let o = orbit();
        let mix = tight_cluster(10.0);
        let pop = drop_users(3, 100, &mix, &o).unwrap();
        let center = mix.to_ground(100.0, -50.0, o.earth_radius_km);
        let inside = pop
            .positions
            .iter()
            .filter(|p| p.great_circle_km(&center, o.earth_radius_km) <= 30.0)
            .count();
        assert!(inside >= 90, "{inside}");
        assert!(pop.density_weight.iter().all(|w| (0.0..=1.0).contains(w)));
        assert!(pop.density_weight.contains(&1.0));
    }

    #[test]
    fn single_user_and_determinism() {
        let o = orbit();
        let mix = tight_cluster(200.0);
        assert_eq!(drop_users(1, 1, &mix, &o).unwrap().len(), 1);
        assert_eq!(drop_users(9, 40, &mix, &o).unwrap(), drop_users(9, 40, &mix, &o).unwrap());
        assert_ne!(drop_users(9, 40, &mix, &o).unwrap(), drop_users(10, 40, &mix, &o).unwrap());
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let mut mix = tight_cluster(10.0);
        mix.clusters[0].weight = 0.0;
        assert_eq!(drop_users(1, 5, &mix, &orbit()), Err(GeometryError::DegenerateMixture));
    }

    #[test]
    fn footprint_is_respected() {
        let o = orbit();
        let mix = tight_cluster(600.0);
        let pop = drop_users(5, 300, &mix, &o).unwrap();
        let overhead = PassInstant::overhead(mix.anchor, 0.0);
        for p in &pop.positions {
            assert!(elevation_angle(&overhead, &o, p) >= o.min_elevation_deg);
        }
    }

    proptest! {
        #[test]
        fn slant_range_decreases_with_elevation(e1 in 0.0f64..89.0, de in 0.01f64..1.0) {
            let o = orbit();
            let sat = nadir();
            let lo = slant_range(&sat, &o, &user_at_elevation(&sat, &o, e1, 10.0));
            let hi = slant_range(&sat, &o, &user_at_elevation(&sat, &o, e1 + de, 10.0));
            prop_assert!(hi < lo);
        }

        #[test]
        fn uv_round_trip_recovers_off_nadir(elev in 1.0f64..89.9, bearing in 0.0f64..360.0) {
            let o = orbit();
            let sat = nadir();
            let user = user_at_elevation(&sat, &o, elev, bearing);
            let los = observe(&sat, &o, &user).unwrap();
            prop_assert!(los.uv.radius() <= 1.0);
            let geometric = o.off_nadir_at_elevation(elev.to_radians());
            prop_assert!((los.uv.off_nadir() - geometric).abs() < 1e-9);
            prop_assert!((los.off_nadir_rad - geometric).abs() < 1e-9);
        }
    }

    #[test]
    fn remaining_visibility_of_pass_center() {
        let o = orbit();
        let pass = SatellitePass {
            center: GroundPosition::new(40.0, 5.0),
            heading_deg: 20.0,
        };
        let start = pass.instant_at_fraction(&o, 0.0).along_track_rad;
        let full = remaining_visibility_s(&pass, &o, start + 1e-9, &pass.center);
        assert!((full - pass.duration_s(&o)).abs() < 1e-3, "{full}");
        let mid = remaining_visibility_s(&pass, &o, 0.0, &pass.center);
        assert!((mid - 0.5 * pass.duration_s(&o)).abs() < 1e-3);
        let after = pass.instant_at_fraction(&o, 1.0).along_track_rad + 1e-6;
        assert_eq!(remaining_visibility_s(&pass, &o, after, &pass.center), 0.0);
    }
}
