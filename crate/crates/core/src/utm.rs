//! WGS-84 geodetic to UTM conversion (transverse Mercator, Krüger series).

use thiserror::Error;

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const UTM_SCALE: f64 = 0.9996;
pub const FALSE_EASTING: f64 = 500_000.0;
pub const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

#[derive(Debug, Error)]
pub enum UtmError {
    #[error("latitude {0} outside the UTM domain (|lat| <= 84)")]
    PolarLatitude(f64),
    #[error("invalid zone {0} (1-60)")]
    BadZone(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hemisphere {
    North,
    South,
}

/// Projected position in a UTM zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtmPoint {
    pub easting_m: f64,
    pub northing_m: f64,
    pub zone: u8,
    pub hemisphere: Hemisphere,
    pub altitude_m: f64,
}

impl UtmPoint {
    pub fn horizontal_distance(&self, other: &UtmPoint) -> f64 {
        let de = self.easting_m - other.easting_m;
        let dn = self.northing_m - other.northing_m;
        (de * de + dn * dn).sqrt()
    }
}

pub fn zone_for(lat_deg: f64, lon_deg: f64) -> u8 {
    let _ = lat_deg; // Norway/Svalbard exceptions intentionally not applied
    let z = ((lon_deg + 180.0) / 6.0).floor() as i32 + 1;
    z.clamp(1, 60) as u8
}

pub fn central_meridian_deg(zone: u8) -> f64 {
    f64::from(zone) * 6.0 - 183.0
}

// Third flattening and series coefficients for the Krüger transverse
// Mercator expansion, to sixth order in n.
struct Kruger {
    radius: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

fn kruger() -> Kruger {
    let n = WGS84_F / (2.0 - WGS84_F);
    let n2 = n * n;
    let n3 = n2 * n;
    let n4 = n3 * n;
    let n5 = n4 * n;
    let n6 = n5 * n;
    let radius = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
    let alpha = [
        n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
            + 7891.0 * n6 / 37800.0,
        13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
            - 1_983_433.0 * n6 / 1_935_360.0,
        61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0
            + 167_603.0 * n6 / 181_440.0,
        49561.0 * n4 / 161_280.0 - 179.0 * n5 / 168.0 + 6_601_661.0 * n6 / 7_257_600.0,
        34729.0 * n5 / 80640.0 - 3_418_889.0 * n6 / 1_995_840.0,
        212_378_941.0 * n6 / 319_334_400.0,
    ];
    let beta = [
        n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
            + 96199.0 * n6 / 604_800.0,
        n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0
            - 1_118_711.0 * n6 / 3_870_720.0,
        17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
        4397.0 * n4 / 161_280.0 - 11.0 * n5 / 504.0 - 830_251.0 * n6 / 7_257_600.0,
        4583.0 * n5 / 161_280.0 - 108_847.0 * n6 / 3_991_680.0,
        20_648_693.0 * n6 / 638_668_800.0,
    ];
    Kruger {
        radius,
        alpha,
        beta,
    }
}

/// Converts geodetic coordinates to UTM in the natural zone of `lon_deg`.
pub fn latlon_to_utm(lat_deg: f64, lon_deg: f64, altitude_m: f64) -> Result<UtmPoint, UtmError> {
    latlon_to_utm_zone(lat_deg, lon_deg, altitude_m, zone_for(lat_deg, lon_deg))
}

/// Converts geodetic coordinates to UTM, forcing the zone (needed when a
/// flight straddles a zone boundary).
pub fn latlon_to_utm_zone(
    lat_deg: f64,
    lon_deg: f64,
    altitude_m: f64,
    zone: u8,
) -> Result<UtmPoint, UtmError> {
    if lat_deg.abs() > 84.0 {
        return Err(UtmError::PolarLatitude(lat_deg));
    }
    if !(1..=60).contains(&zone) {
        return Err(UtmError::BadZone(zone));
    }
    let k = kruger();
    let e = (WGS84_F * (2.0 - WGS84_F)).sqrt();
    let phi = lat_deg.to_radians();
    let lam = (lon_deg - central_meridian_deg(zone)).to_radians();

    let s = phi.sin();
    // conformal latitude via the isometric form
    let t = (s.atanh() - e * (e * s).atanh()).sinh();
    let xi_p = t.atan2(lam.cos());
    let eta_p = (lam.sin() / (t * t + lam.cos() * lam.cos()).sqrt()).asinh();

    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, &a) in k.alpha.iter().enumerate() {
        let m = 2.0 * (j as f64 + 1.0);
        xi += a * (m * xi_p).sin() * (m * eta_p).cosh();
        eta += a * (m * xi_p).cos() * (m * eta_p).sinh();
    }

    let hemisphere = if lat_deg >= 0.0 {
        Hemisphere::North
    } else {
        Hemisphere::South
    };
    let false_northing = match hemisphere {
        Hemisphere::North => 0.0,
        Hemisphere::South => FALSE_NORTHING_SOUTH,
    };
    Ok(UtmPoint {
        easting_m: FALSE_EASTING + UTM_SCALE * k.radius * eta,
        northing_m: false_northing + UTM_SCALE * k.radius * xi,
        zone,
        hemisphere,
        altitude_m,
    })
}

/// Inverse projection: UTM to geodetic latitude/longitude in degrees.
pub fn utm_to_latlon(p: &UtmPoint) -> Result<(f64, f64), UtmError> {
    if !(1..=60).contains(&p.zone) {
        return Err(UtmError::BadZone(p.zone));
    }
    let k = kruger();
    let e = (WGS84_F * (2.0 - WGS84_F)).sqrt();
    let false_northing = match p.hemisphere {
        Hemisphere::North => 0.0,
        Hemisphere::South => FALSE_NORTHING_SOUTH,
    };
    let xi = (p.northing_m - false_northing) / (UTM_SCALE * k.radius);
    let eta = (p.easting_m - FALSE_EASTING) / (UTM_SCALE * k.radius);

    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, &b) in k.beta.iter().enumerate() {
        let m = 2.0 * (j as f64 + 1.0);
        xi_p -= b * (m * xi).sin() * (m * eta).cosh();
        eta_p -= b * (m * xi).cos() * (m * eta).sinh();
    }

    let chi = (xi_p.sin() / eta_p.cosh()).asin();
    // invert the conformal latitude by fixed point on sin(phi)
    let psi = chi.tan().asinh();
    let mut s = chi.sin();
    for _ in 0..12 {
        s = (psi + e * (e * s).atanh()).tanh();
    }
    let lat = s.asin().to_degrees();
    let lon_d = (eta_p.sinh()).atan2(xi_p.cos()).to_degrees();
    Ok((lat, central_meridian_deg(p.zone) + lon_d))
}
