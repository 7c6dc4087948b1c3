//! Circular two-body propagation of near-circular LEO elements.

use serde::{Deserialize, Serialize};

use super::{
    normalize_lon, GeoCoord, GeoError, EARTH_MU_KM3_S2, EARTH_RADIUS_KM, EARTH_ROTATION_RAD_S,
};

/// Elements older or newer than this relative to the propagation time
/// trigger a staleness warning.
pub const STALE_EPOCH_SECONDS: f64 = 30.0 * 86_400.0;

/// Unix time of J2000.0 (2000-01-01 12:00:00).
const J2000_UNIX: f64 = 946_728_000.0;
/// Greenwich mean sidereal angle at J2000.0, degrees.
const GMST_J2000_DEG: f64 = 280.460_618_37;

const MAX_NEAR_CIRCULAR_ECC: f64 = 0.05;

/// Position of a satellite in its orbital shell, used for +Grid ISL wiring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneSlot {
    pub shell: u32,
    pub plane: u32,
    pub planes_in_shell: u32,
    /// Argument of latitude at the propagation time, degrees in [0, 360).
    pub phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitalElements {
    pub sat_id: String,
    pub catalog_number: u32,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub eccentricity: f64,
    pub arg_perigee_deg: f64,
    pub mean_anomaly_deg: f64,
    /// Revolutions per day.
    pub mean_motion: f64,
    /// Unix seconds.
    pub epoch: f64,
    /// `(shell, plane, planes_in_shell)` when known.
    #[serde(default)]
    pub plane: Option<(u32, u32, u32)>,
}

impl OrbitalElements {
    fn mean_motion_rad_s(&self) -> f64 {
        self.mean_motion * std::f64::consts::TAU / 86_400.0
    }

    pub fn period_s(&self) -> f64 {
        86_400.0 / self.mean_motion
    }

    pub fn semi_major_axis_km(&self) -> f64 {
        let n = self.mean_motion_rad_s();
        (EARTH_MU_KM3_S2 / (n * n)).cbrt()
    }

    pub fn altitude_km(&self) -> f64 {
        self.semi_major_axis_km() - EARTH_RADIUS_KM
    }

    pub fn is_stale_at(&self, t: f64) -> bool {
        (t - self.epoch).abs() > STALE_EPOCH_SECONDS
    }

    fn validate(&self) -> Result<(), GeoError> {
        if !(self.mean_motion.is_finite() && self.mean_motion > 0.0) {
            return Err(GeoError::InvalidElements {
                sat_id: self.sat_id.clone(),
                reason: format!("mean motion {} must be positive", self.mean_motion),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatState {
    pub sat_id: String,
    pub position: GeoCoord,
    pub altitude_km: f64,
    /// Unix seconds.
    pub epoch: f64,
    #[serde(default)]
    pub plane: Option<PlaneSlot>,
}

fn gmst_deg(t: f64) -> f64 {
    GMST_J2000_DEG + EARTH_ROTATION_RAD_S.to_degrees() * (t - J2000_UNIX)
}

/// Propagates `elem` to unix time `t` assuming a circular orbit.
///
/// The argument of latitude advances linearly with the mean motion; the
/// sub-satellite longitude subtracts the Earth's rotation angle.
pub fn propagate(elem: &OrbitalElements, t: f64) -> Result<SatState, GeoError> {
    elem.validate()?;
    let dt = t - elem.epoch;
    let advance_deg = (elem.mean_motion_rad_s() * dt).to_degrees();
    let u = (elem.arg_perigee_deg + elem.mean_anomaly_deg + advance_deg).rem_euclid(360.0);
    let (su, cu) = u.to_radians().sin_cos();
    let inc = elem.inclination_deg.to_radians();

    let lat = (inc.sin() * su).clamp(-1.0, 1.0).asin().to_degrees();
    let node_offset = (inc.cos() * su).atan2(cu).to_degrees();
    let lon = normalize_lon(elem.raan_deg + node_offset - gmst_deg(t));

    Ok(SatState {
        sat_id: elem.sat_id.clone(),
        position: GeoCoord { lat, lon },
        altitude_km: elem.altitude_km(),
        epoch: t,
        plane: elem.plane.map(|(shell, plane, planes_in_shell)| PlaneSlot {
            shell,
            plane,
            planes_in_shell,
            phase_deg: u,
        }),
    })
}

/// Propagates a whole constellation, logging one warning per batch for
/// stale epochs or implausible altitudes.
pub fn propagate_all(elements: &[OrbitalElements], t: f64) -> Result<Vec<SatState>, GeoError> {
    let states = elements
        .iter()
        .map(|e| propagate(e, t))
        .collect::<Result<Vec<_>, _>>()?;
    let stale = elements.iter().filter(|e| e.is_stale_at(t)).count();
    if stale > 0 {
        log::warn!("{stale} element set(s) are more than 30 days from t={t}");
    }
    let odd = states
        .iter()
        .filter(|s| !(100.0..3000.0).contains(&s.altitude_km))
        .count();
    if odd > 0 {
        log::warn!("{odd} satellite(s) outside the 100-3000 km LEO band");
    }
    Ok(states)
}

pub(crate) fn check_eccentricity(elem: &OrbitalElements) {
    if elem.eccentricity > MAX_NEAR_CIRCULAR_ECC {
        log::warn!(
            "{}: eccentricity {} exceeds the near-circular assumption",
            elem.sat_id,
            elem.eccentricity
        );
    }
}

/// A Walker-delta shell `inclination: total/planes/phasing`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerShell {
    pub total: u32,
    pub planes: u32,
    pub phasing: u32,
    pub inclination_deg: f64,
    pub altitude_km: f64,
    pub epoch: f64,
    pub first_catalog_number: u32,
    pub shell: u32,
}

/// Generates the element sets of a Walker-delta shell.
pub fn walker_delta(shell: &WalkerShell) -> Vec<OrbitalElements> {
    assert!(shell.planes > 0 && shell.total.is_multiple_of(shell.planes));
    let per_plane = shell.total / shell.planes;
    let a = EARTH_RADIUS_KM + shell.altitude_km;
    let n_rad = (EARTH_MU_KM3_S2 / (a * a * a)).sqrt();
    let mean_motion = n_rad * 86_400.0 / std::f64::consts::TAU;

    let mut out = Vec::with_capacity(shell.total as usize);
    for p in 0..shell.planes {
        let raan = 360.0 * p as f64 / shell.planes as f64;
        for s in 0..per_plane {
            let m = 360.0 * s as f64 / per_plane as f64
                + 360.0 * (shell.phasing * p) as f64 / shell.total as f64;
            let idx = p * per_plane + s;
            out.push(OrbitalElements {
                sat_id: format!("WALKER-{}-{p:02}-{s:02}", shell.shell),
                catalog_number: shell.first_catalog_number + idx,
                inclination_deg: shell.inclination_deg,
                raan_deg: raan,
                eccentricity: 0.0,
                arg_perigee_deg: 0.0,
                mean_anomaly_deg: m.rem_euclid(360.0),
                mean_motion,
                epoch: shell.epoch,
                plane: Some((shell.shell, p, shell.planes)),
            });
        }
    }
    out
}

/// Groups element sets into orbital planes: same inclination (within
/// `incl_tol_deg`) forms a shell, and RAAN clusters within a shell form
/// planes numbered in RAAN order.
pub fn assign_planes(elements: &mut [OrbitalElements], incl_tol_deg: f64, raan_tol_deg: f64) {
    let mut order: Vec<usize> = (0..elements.len()).collect();
    order.sort_by(|&a, &b| {
        elements[a]
            .inclination_deg
            .total_cmp(&elements[b].inclination_deg)
            .then(elements[a].raan_deg.total_cmp(&elements[b].raan_deg))
    });

    let mut shells: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match shells.last_mut() {
            Some(shell)
                if (elements[i].inclination_deg - elements[shell[0]].inclination_deg).abs()
                    <= incl_tol_deg =>
            {
                shell.push(i)
            }
            _ => shells.push(vec![i]),
        }
    }

    for (shell_id, mut members) in shells.into_iter().enumerate() {
        members.sort_by(|&a, &b| elements[a].raan_deg.total_cmp(&elements[b].raan_deg));
        let mut plane_of = vec![0u32; members.len()];
        let mut plane = 0u32;
        for k in 1..members.len() {
            let gap = elements[members[k]].raan_deg - elements[members[k - 1]].raan_deg;
            if gap > raan_tol_deg {
                plane += 1;
            }
            plane_of[k] = plane;
        }
        let mut planes = plane + 1;
        // RAAN wraps: merge the last cluster into the first when they touch
        if planes > 1 && members.len() > 1 {
            let first = elements[members[0]].raan_deg;
            let last = elements[members[members.len() - 1]].raan_deg;
            if first + 360.0 - last <= raan_tol_deg {
                for p in plane_of.iter_mut() {
                    if *p == planes - 1 {
                        *p = 0;
                    }
                }
                planes -= 1;
            }
        }
        for (k, &i) in members.iter().enumerate() {
            elements[i].plane = Some((shell_id as u32, plane_of[k], planes));
        }
    }
}
