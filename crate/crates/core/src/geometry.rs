//! Scenario geometry: BS, MS and RIS element positions, the angles they
//! induce, and the Jacobian of the AoA parameters w.r.t. the MS position.
//!
//! Conventions used throughout the crate:
//!
//! * the BS and MS sit in the horizontal plane `z = 0`;
//! * the RIS is a vertical planar array whose columns run along `x` and
//!   rows along `z` (constant `y`);
//! * elevation is measured from the vertical through the RIS element,
//!   `ϑ = atan(‖q₁:₂ − s₁:₂‖ / s_z)`, azimuth is
//!   `φ = acos((s_x − q_x) / ‖q₁:₂ − s₁:₂‖)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Horizontal distances below this are rejected as degenerate (meters).
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
#[serde(bound(
    serialize = "T: Serialize + Clone",
    deserialize = "T: Deserialize<'de>"
))]
pub struct Position3D<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T> From<[T; 3]> for Position3D<T> {
    fn from([x, y, z]: [T; 3]) -> Self {
        Position3D { x, y, z }
    }
}

impl<T> From<Position3D<T>> for [T; 3] {
    fn from(p: Position3D<T>) -> Self {
        [p.x, p.y, p.z]
    }
}

impl<T: Real> Position3D<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Position3D { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Euclidean distance between the `(x, y)` projections.
    pub fn horizontal_distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translated(&self, dx: T, dy: T, dz: T) -> Self {
        Position3D::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

/// Uniform planar RIS in the vertical `x–z` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(
    serialize = "T: Serialize + Clone",
    deserialize = "T: Deserialize<'de>"
))]
pub struct RisLayout<T> {
    pub rows: usize,
    pub cols: usize,
    pub spacing: T,
    pub reference: Position3D<T>,
}

impl<T: Real> RisLayout<T> {
    pub fn square(side: usize, spacing: T, reference: Position3D<T>) -> Self {
        RisLayout {
            rows: side,
            cols: side,
            spacing,
            reference,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::param("ris", "rows and cols must be positive"));
        }
        if !(self.spacing > T::zero()) || !self.spacing.is_finite() {
            return Err(Error::param(
                "ris.spacing",
                "element spacing must be positive",
            ));
        }
        if !self.reference.is_finite() {
            return Err(Error::param(
                "ris.reference",
                "reference position must be finite",
            ));
        }
        Ok(())
    }

    /// Element positions in index order `i = r·cols + c` (row-major, zero based).
    pub fn expand(&self) -> Vec<Position3D<T>> {
        let mut out = Vec::with_capacity(self.len());
        for r in 0..self.rows {
            let dz = T::lit(r as f64) * self.spacing;
            for c in 0..self.cols {
                let dx = T::lit(c as f64) * self.spacing;
                out.push(self.reference.translated(dx, T::zero(), dz));
            }
        }
        out
    }

    /// Geometric centre of the array.
    pub fn centroid(&self) -> Position3D<T> {
        let half = T::lit(0.5);
        let dx = T::lit((self.cols - 1) as f64) * self.spacing * half;
        let dz = T::lit((self.rows - 1) as f64) * self.spacing * half;
        self.reference.translated(dx, T::zero(), dz)
    }
}

pub fn expand_layout<T: Real>(layout: &RisLayout<T>) -> Result<Vec<Position3D<T>>> {
    layout.validate()?;
    Ok(layout.expand())
}

/// Elevation/azimuth angle of arrival at the MS for one RIS path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaPair<T> {
    pub elevation: T,
    pub azimuth: T,
}

/// Elevation/azimuth angle of departure at the BS for one RIS path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AodPair<T> {
    pub elevation: T,
    pub azimuth: T,
}

fn angles_to<T: Real>(
    ground: &Position3D<T>,
    element: &Position3D<T>,
    what: &str,
) -> Result<(T, T)> {
    let dist = ground.horizontal_distance(element);
    if !(dist.as_f64() >= DEGENERACY_TOLERANCE) {
        return Err(Error::DegenerateGeometry {
            what: format!("{what} directly below RIS element"),
            distance: dist.as_f64(),
        });
    }
    if !(element.z > T::zero()) {
        return Err(Error::InvalidGeometry(format!(
            "RIS element height must be positive, got {}",
            element.z
        )));
    }
    let elevation = (dist / element.z).atan();
    let cos_az = ((element.x - ground.x) / dist).max(-T::one()).min(T::one());
    Ok((elevation, cos_az.acos()))
}

/// AoA of the path through RIS element `s` as seen from the MS at `q`.
pub fn compute_aoa<T: Real>(q: &Position3D<T>, s: &Position3D<T>) -> Result<AoaPair<T>> {
    let (elevation, azimuth) = angles_to(q, s, "MS")?;
    Ok(AoaPair { elevation, azimuth })
}

/// AoD of the path through RIS element `s` as seen from the BS at `p`;
/// same construction as [`compute_aoa`].
pub fn compute_aod<T: Real>(p: &Position3D<T>, s: &Position3D<T>) -> Result<AodPair<T>> {
    let (elevation, azimuth) = angles_to(p, s, "BS")?;
    Ok(AodPair { elevation, azimuth })
}

/// BS, MS and RIS element positions. Construct with [`ScenarioGeometry::new`],
/// which enforces the placement invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGeometry<T> {
    bs: Position3D<T>,
    ms: Position3D<T>,
    ris: Vec<Position3D<T>>,
}

impl<T: Real> ScenarioGeometry<T> {
    pub fn new(bs: Position3D<T>, ms: Position3D<T>, ris: Vec<Position3D<T>>) -> Result<Self> {
        if ris.is_empty() {
            return Err(Error::InvalidGeometry(
                "at least one RIS element is required".into(),
            ));
        }
        for (name, p) in [("BS", &bs), ("MS", &ms)] {
            if !p.is_finite() {
                return Err(Error::InvalidGeometry(format!(
                    "{name} position is not finite"
                )));
            }
            if p.z != T::zero() {
                return Err(Error::InvalidGeometry(format!(
                    "{name} must lie in the plane z = 0"
                )));
            }
        }
        for (i, s) in ris.iter().enumerate() {
            if !s.is_finite() || !(s.z > T::zero()) {
                return Err(Error::InvalidGeometry(format!(
                    "RIS element {i} must be finite with positive height"
                )));
            }
            for (name, p) in [("MS", &ms), ("BS", &bs)] {
                let d = p.horizontal_distance(s);
                if !(d.as_f64() >= DEGENERACY_TOLERANCE) {
                    return Err(Error::DegenerateGeometry {
                        what: format!("{name} directly below RIS element {i}"),
                        distance: d.as_f64(),
                    });
                }
            }
        }
        Ok(ScenarioGeometry { bs, ms, ris })
    }

    pub fn from_layout(
        bs: Position3D<T>,
        ms: Position3D<T>,
        layout: &RisLayout<T>,
    ) -> Result<Self> {
        Self::new(bs, ms, expand_layout(layout)?)
    }

    pub fn bs(&self) -> &Position3D<T> {
        &self.bs
    }

    pub fn ms(&self) -> &Position3D<T> {
        &self.ms
    }

    pub fn ris(&self) -> &[Position3D<T>] {
        &self.ris
    }

    /// Number of RIS paths `N`.
    pub fn paths(&self) -> usize {
        self.ris.len()
    }

    /// Same BS and RIS, MS moved to `ms`.
    pub fn with_ms(&self, ms: Position3D<T>) -> Result<Self> {
        Self::new(self.bs, ms, self.ris.clone())
    }

    pub fn aoa(&self) -> Result<Vec<AoaPair<T>>> {
        self.ris.iter().map(|s| compute_aoa(&self.ms, s)).collect()
    }

    pub fn aod(&self) -> Result<Vec<AodPair<T>>> {
        self.ris.iter().map(|s| compute_aod(&self.bs, s)).collect()
    }
}

/// Non-zero part of the parameter-to-position Jacobian: for each path the
/// derivative of its elevation (`[𝓔]_i = (αˣ, αʸ)`) and azimuth
/// (`[𝓕]_i = (βˣ, βʸ)`) w.r.t. `(q_x, q_y)`. The gain columns vanish and are
/// not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix<T> {
    elevation: Vec<[T; 2]>,
    azimuth: Vec<[T; 2]>,
}

impl<T: Real> TransformMatrix<T> {
    pub fn from_columns(elevation: Vec<[T; 2]>, azimuth: Vec<[T; 2]>) -> Result<Self> {
        if elevation.len() != azimuth.len() {
            return Err(Error::DimensionMismatch {
                context: "transform matrix columns",
                expected: elevation.len(),
                found: azimuth.len(),
            });
        }
        Ok(TransformMatrix { elevation, azimuth })
    }

    /// Builds the Jacobian from AoA values and the (known) RIS element
    /// positions. The horizontal distance is recovered as `s_z·tan ϑ`, so this
    /// also works for estimated angles.
    ///
    /// `y_side` carries `sign(q_y − s_y)` per path; the azimuth only sees
    /// `|q_y − s_y|`, so both `y` derivatives flip sign on the far side of
    /// the RIS plane.
    pub fn from_angles(aoa: &[AoaPair<T>], ris: &[Position3D<T>], y_side: &[T]) -> Result<Self> {
        if aoa.len() != ris.len() || y_side.len() != ris.len() {
            return Err(Error::DimensionMismatch {
                context: "transform matrix inputs",
                expected: ris.len(),
                found: aoa.len().min(y_side.len()),
            });
        }
        let mut elevation = Vec::with_capacity(aoa.len());
        let mut azimuth = Vec::with_capacity(aoa.len());
        for ((a, s), &side) in aoa.iter().zip(ris).zip(y_side) {
            let dist = s.z * a.elevation.tan();
            if !(dist.as_f64() >= DEGENERACY_TOLERANCE) || !dist.is_finite() {
                return Err(Error::DegenerateGeometry {
                    what: "elevation implies zero horizontal distance".into(),
                    distance: dist.as_f64(),
                });
            }
            let (sin_az, cos_az) = a.azimuth.sin_cos();
            let e = s.z / (dist * dist + s.z * s.z);
            elevation.push([-e * cos_az, side * e * sin_az]);
            azimuth.push([sin_az / dist, side * cos_az / dist]);
        }
        Ok(TransformMatrix { elevation, azimuth })
    }

    pub fn paths(&self) -> usize {
        self.elevation.len()
    }

    /// `(αˣ_i, αʸ_i)`: derivative of path `i`'s elevation w.r.t. `(q_x, q_y)`.
    pub fn alpha(&self, i: usize) -> [T; 2] {
        self.elevation[i]
    }

    /// `(βˣ_i, βʸ_i)`: derivative of path `i`'s azimuth w.r.t. `(q_x, q_y)`.
    pub fn beta(&self, i: usize) -> [T; 2] {
        self.azimuth[i]
    }

    /// Dense `2 × 2N` matrix `[𝓔 | 𝓕]`.
    pub fn dense(&self) -> ndarray::Array2<T> {
        let n = self.paths();
        let mut t = ndarray::Array2::zeros((2, 2 * n));
        for i in 0..n {
            for r in 0..2 {
                t[[r, i]] = self.elevation[i][r];
                t[[r, n + i]] = self.azimuth[i][r];
            }
        }
        t
    }
}

/// Jacobian of the AoA parameters w.r.t. the MS horizontal position.
pub fn transform_matrix<T: Real>(geometry: &ScenarioGeometry<T>) -> Result<TransformMatrix<T>> {
    let aoa = geometry.aoa()?;
    let side: Vec<T> = geometry
        .ris()
        .iter()
        .map(|s| {
            if geometry.ms().y < s.y {
                -T::one()
            } else {
                T::one()
            }
        })
        .collect();
    TransformMatrix::from_angles(&aoa, geometry.ris(), &side)
}
