//! Sphere–cylinder intersection volumes around the nano-router.
//!
//! Coordinate frame: the nano-router sits at the origin on the vessel wall,
//! the vein is the cylinder `x² + (y + D/2)² ≤ (D/2)²` with its axis along
//! `z` (flow direction, +z), and the coverage sphere has radius `r` centred
//! at the origin. A frame lasts `t_f`, during which a node moves
//! `shift = v · t_f` along +z.
//!
//! The z-extent of each region is closed-form over the (x, y) cross-section,
//! so the volumes are 2-D adaptive integrals of a thickness function:
//!
//! * coverage: `2h`, with `h = √(r² − x² − y²)`
//! * transmission: `max(2h − shift, 0)` (start and end inside the sphere)
//! * collision: `2h + shift` (sphere swept backwards by `shift`)

use std::cell::Cell;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ValidParams;
use crate::quadrature::{self, QuadError};

/// Default relative tolerance of the volume quadrature.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Integrand evaluation budget shared by the inner and outer integrals.
pub const EVAL_BUDGET: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Coverage,
    Transmission,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub r: f64,
    pub d: f64,
    /// Axial offset `v · t_f`; ignored for [`RegionKind::Coverage`].
    pub shift: f64,
    pub kind: RegionKind,
}

impl RegionSpec {
    pub fn new(kind: RegionKind, r: f64, d: f64, shift: f64) -> Result<Self, GeometryError> {
        if !(r.is_finite() && r > 0.0) {
            return Err(GeometryError::InvalidInput(format!("r must be > 0 (got {r})")));
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(GeometryError::InvalidInput(format!("D must be > 0 (got {d})")));
        }
        if !(shift.is_finite() && shift >= 0.0) {
            return Err(GeometryError::InvalidInput(format!(
                "shift must be >= 0 (got {shift})"
            )));
        }
        let shift = if kind == RegionKind::Coverage { 0.0 } else { shift };
        Ok(Self { r, d, shift, kind })
    }

    /// Point membership, written directly from the set definitions.
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let half = 0.5 * self.d;
        if x * x + (y + half) * (y + half) > half * half {
            return false;
        }
        let r2 = self.r * self.r;
        let rho2 = x * x + y * y;
        match self.kind {
            RegionKind::Coverage => rho2 + z * z <= r2,
            RegionKind::Transmission => {
                let zs = z + self.shift;
                rho2 + z * z <= r2 && rho2 + zs * zs <= r2
            }
            RegionKind::Collision => {
                if rho2 > r2 {
                    return false;
                }
                let h = (r2 - rho2).sqrt();
                z <= h && z >= -h - self.shift
            }
        }
    }

    /// Sampling box `[−a, a] × [max(−D, −r), 0] × [−r − shift, r]` with
    /// `a = min(r, D/2)`; it encloses the region.
    fn bounding_box(&self) -> [(f64, f64); 3] {
        let a = self.r.min(0.5 * self.d);
        [
            (-a, a),
            ((-self.d).max(-self.r), 0.0),
            (-self.r - self.shift, self.r),
        ]
    }

    fn thickness(&self, x: f64, y: f64) -> f64 {
        let h = (self.r * self.r - x * x - y * y).max(0.0).sqrt();
        match self.kind {
            RegionKind::Coverage => 2.0 * h,
            // A negative thickness means the shifted cap is empty here.
            RegionKind::Transmission => (2.0 * h - self.shift).max(0.0),
            RegionKind::Collision => 2.0 * h + self.shift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    /// Volume (m³).
    pub value: f64,
    /// Estimated absolute quadrature error (m³).
    pub abs_error: f64,
}

impl VolumeEstimate {
    const ZERO: Self = Self {
        value: 0.0,
        abs_error: 0.0,
    };
}

/// The three volumes that drive the link probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeSet {
    pub coverage: VolumeEstimate,
    pub transmission: VolumeEstimate,
    pub collision: VolumeEstimate,
}

impl VolumeSet {
    /// Builds a set from bare values (zero error), e.g. when reading
    /// volumes back from a file.
    pub fn from_values(coverage: f64, transmission: f64, collision: f64) -> Self {
        let e = |value| VolumeEstimate {
            value,
            abs_error: 0.0,
        };
        Self {
            coverage: e(coverage),
            transmission: e(transmission),
            collision: e(collision),
        }
    }

    /// `transmission ≤ coverage ≤ collision`, up to the quadrature errors.
    pub fn is_nested(&self) -> bool {
        let (t, c, x) = (self.transmission, self.coverage, self.collision);
        t.value <= c.value + t.abs_error + c.abs_error
            && c.value <= x.value + c.abs_error + x.abs_error
    }
}

/// Volume of a region by iterated adaptive quadrature over the explicit
/// cross-section bounds.
pub fn region_volume(spec: &RegionSpec, tol: f64) -> Result<VolumeEstimate, GeometryError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(GeometryError::InvalidInput(format!("tol must be > 0 (got {tol})")));
    }
    let RegionSpec { r, d, shift, kind } = *spec;

    // Squared radius of the disc in (x, y) over which the region is nonempty.
    let rho2 = match kind {
        RegionKind::Transmission => {
            if shift >= 2.0 * r {
                return Ok(VolumeEstimate::ZERO);
            }
            r * r - 0.25 * shift * shift
        }
        _ => r * r,
    };
    if rho2 <= 0.0 {
        return Ok(VolumeEstimate::ZERO);
    }

    // x-extent: branch on whether the widest chord of the vein is inside
    // the disc; ties take the first branch.
    let chi = if rho2 >= 0.5 * d * d {
        0.5 * d
    } else {
        (rho2 * (1.0 - rho2 / (d * d))).sqrt()
    };

    let narrow = r.min(d);
    let inner_abs_tol = tol * 1e-3 * r * narrow;
    let outer_abs_tol = tol * 1e-3 * r * narrow * narrow;
    let inner_rel_tol = 0.1 * tol;

    let evaluations = Cell::new(0u64);
    let worst_inner = Cell::new(0.0f64);
    let failure: Cell<Option<QuadError>> = Cell::new(None);

    let cross_section = |x: f64| -> f64 {
        let disc = (d * d - 4.0 * x * x).max(0.0).sqrt();
        let y_hi = 0.5 * (-d + disc);
        let y_lo = (0.5 * (-d - disc)).max(-(rho2 - x * x).max(0.0).sqrt());
        if y_hi <= y_lo {
            return 0.0;
        }
        let remaining = EVAL_BUDGET.saturating_sub(evaluations.get());
        match quadrature::integrate(
            |y| spec.thickness(x, y),
            y_lo,
            y_hi,
            inner_rel_tol,
            inner_abs_tol,
            remaining,
        ) {
            Ok(res) => {
                evaluations.set(evaluations.get() + res.evaluations);
                worst_inner.set(worst_inner.get().max(res.abs_error));
                res.value
            }
            Err(e) => {
                if let QuadError::NoConvergence { evaluations: n, .. } = e {
                    evaluations.set(evaluations.get() + n);
                }
                failure.set(Some(e));
                0.0
            }
        }
    };

    let outer = quadrature::integrate(cross_section, -chi, chi, tol, outer_abs_tol, EVAL_BUDGET);
    if let Some(e) = failure.take() {
        return Err(e.into());
    }
    let outer = outer?;
    if evaluations.get() > EVAL_BUDGET {
        return Err(QuadError::NoConvergence {
            value: outer.value,
            abs_error: outer.abs_error,
            evaluations: evaluations.get(),
        }
        .into());
    }
    let value = outer.value;
    // Inner errors integrate to at most (chord width) × (worst inner error).
    let abs_error = outer.abs_error + 2.0 * chi * worst_inner.get();
    Ok(VolumeEstimate { value, abs_error })
}

pub fn coverage_volume(r: f64, d: f64, tol: f64) -> Result<VolumeEstimate, GeometryError> {
    region_volume(&RegionSpec::new(RegionKind::Coverage, r, d, 0.0)?, tol)
}

pub fn transmission_volume(
    r: f64,
    d: f64,
    v: f64,
    t_f: f64,
    tol: f64,
) -> Result<VolumeEstimate, GeometryError> {
    region_volume(&RegionSpec::new(RegionKind::Transmission, r, d, v * t_f)?, tol)
}

pub fn collision_volume(
    r: f64,
    d: f64,
    v: f64,
    t_f: f64,
    tol: f64,
) -> Result<VolumeEstimate, GeometryError> {
    region_volume(&RegionSpec::new(RegionKind::Collision, r, d, v * t_f)?, tol)
}

/// All three volumes for a validated scenario.
pub fn volumes(params: &ValidParams, tol: f64) -> Result<VolumeSet, GeometryError> {
    let (r, d, v, t_f) = (
        params.range,
        params.vein_diameter,
        params.velocity,
        params.frame_time,
    );
    Ok(VolumeSet {
        coverage: coverage_volume(r, d, tol)?,
        transmission: transmission_volume(r, d, v, t_f, tol)?,
        collision: collision_volume(r, d, v, t_f, tol)?,
    })
}

/// Rejection-sampling estimate of a region volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    /// `box_volume · √(p(1 − p)/samples)`.
    pub std_error: f64,
    pub hits: u64,
    pub samples: u64,
}

const MC_BATCH: u64 = 100_000;

/// Monte-Carlo volume oracle, independent of the quadrature path.
///
/// Deterministic for a given seed: batch `i` draws from ChaCha stream `i`,
/// so the result does not depend on the thread schedule.
pub fn mc_volume_oracle(
    spec: &RegionSpec,
    samples: u64,
    seed: u64,
) -> Result<McEstimate, GeometryError> {
    if samples < 10_000 {
        return Err(GeometryError::InvalidInput(format!(
            "oracle needs at least 1e4 samples (got {samples})"
        )));
    }
    let bbox = spec.bounding_box();
    let box_volume: f64 = bbox.iter().map(|(lo, hi)| hi - lo).product();
    let batches = samples.div_ceil(MC_BATCH);
    let hits: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let count = MC_BATCH.min(samples - b * MC_BATCH);
            let mut hits = 0u64;
            for _ in 0..count {
                let x = rng.random_range(bbox[0].0..=bbox[0].1);
                let y = rng.random_range(bbox[1].0..=bbox[1].1);
                let z = rng.random_range(bbox[2].0..=bbox[2].1);
                if spec.contains(x, y, z) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(McEstimate {
        value: box_volume * p,
        std_error: box_volume * (p * (1.0 - p) / samples as f64).sqrt(),
        hits,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const R: f64 = 1e-3;
    const D: f64 = 6e-3;
    const V: f64 = 0.109;
    const TF: f64 = 64e-6;

    fn half_sphere(r: f64) -> f64 {
        2.0 / 3.0 * PI * r * r * r
    }

    #[test]
    fn coverage_inside_half_sphere() {
        let v = coverage_volume(R, D, DEFAULT_TOL).unwrap();
        assert!(v.value > 0.0 && v.value < half_sphere(R));
        assert!(v.abs_error <= 1e-6 * v.value, "{v:?}");
    }

    #[test]
    fn tiny_range_gives_vanishing_volume() {
        let v = coverage_volume(1e-9, D, DEFAULT_TOL).unwrap();
        assert!(v.value < 1e-26);
    }

    #[test]
    fn zero_shift_collapses_to_coverage() {
        let c = coverage_volume(R, D, DEFAULT_TOL).unwrap().value;
        let t = transmission_volume(R, D, 0.0, TF, DEFAULT_TOL).unwrap().value;
        let x = collision_volume(R, D, V, 0.0, DEFAULT_TOL).unwrap().value;
        assert!((t - c).abs() <= 1e-9 * c);
        assert!((x - c).abs() <= 1e-9 * c);
    }

    #[test]
    fn long_shift_empties_transmission() {
        let t = transmission_volume(R, D, 1.0, 2.0 * R, DEFAULT_TOL).unwrap();
        assert_eq!(t.value, 0.0);
        let spec = RegionSpec::new(RegionKind::Transmission, R, D, 2.5 * R).unwrap();
        let mc = mc_volume_oracle(&spec, 100_000, 1).unwrap();
        assert_eq!(mc.hits, 0);
    }

    #[test]
    fn default_transmission_close_to_coverage() {
        let c = coverage_volume(R, D, DEFAULT_TOL).unwrap().value;
        let t = transmission_volume(R, D, V, TF, DEFAULT_TOL).unwrap().value;
        assert!(t < c && t > 0.98 * c);
    }

    #[test]
    fn flat_wall_limit() {
        let v = coverage_volume(0.5, 1e9, DEFAULT_TOL).unwrap().value;
        assert!((v - half_sphere(0.5)).abs() < 1e-6 * half_sphere(0.5));
    }

    #[test]
    fn thin_vein_approaches_cylinder_segment() {
        // r ≫ D: the sphere cuts the cylinder near its full cross-section.
        let v = coverage_volume(10e-3, 1e-3, DEFAULT_TOL).unwrap().value;
        let area = PI * 0.25e-6;
        assert!(v < area * 20e-3 && v > area * 19.9e-3);
    }

    #[test]
    fn invalid_inputs() {
        assert!(coverage_volume(0.0, D, DEFAULT_TOL).is_err());
        assert!(coverage_volume(R, -1.0, DEFAULT_TOL).is_err());
        assert!(coverage_volume(R, D, 0.0).is_err());
        let spec = RegionSpec::new(RegionKind::Coverage, R, D, 0.0).unwrap();
        assert!(mc_volume_oracle(&spec, 10, 0).is_err());
    }

    #[test]
    fn oracle_is_deterministic() {
        let spec = RegionSpec::new(RegionKind::Collision, R, D, V * TF).unwrap();
        let a = mc_volume_oracle(&spec, 200_000, 42).unwrap();
        let b = mc_volume_oracle(&spec, 200_000, 42).unwrap();
        assert_eq!(a, b);
    }
}
