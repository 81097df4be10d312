//! Finite rotation groups in two and three dimensions.
//!
//! A [`RotationGroup`] is an ordered list of proper orthonormal matrices with
//! the identity at index 0, together with its Cayley table and inverse map.
//! The constructors cover the cyclic groups about the z-axis, the Klein
//! four-group, the tetrahedral rotation group and the full cube group. Element
//! order is fixed so that tests and checkpoints are reproducible:
//!
//! * cyclic: ascending angle `2πi/k`;
//! * Klein four-group: identity, then 180° about x, y, z;
//! * tetrahedral: identity, ±120° about the four body diagonals, 180° about x, y, z;
//! * cube: identity, 90°/180°/270° about x, y, z, ±120° about the four body
//!   diagonals, 180° about the six edge axes.
//!
//! The right-multiplication action `i ↦ idx(r_i · r)` is exposed through
//! [`RotationGroup::expected_permutation`]. It is exactly the row permutation a
//! group-wrapped network applies to its branch features when the input is
//! rotated by `r`.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

/// Frobenius distance under which two matrices are treated as the same element.
pub const MATCH_TOL: f64 = 1e-6;
/// Largest closure residual accepted by [`verify_group`].
pub const CLOSURE_TOL: f64 = 1e-9;
/// Per-entry tolerance for orthonormality and determinant checks.
pub const ORTHO_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("group order must be at least 1")]
    EmptyGroup,
    #[error("rotation dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("matrix is not orthonormal (worst residual {0:.3e})")]
    NotOrthonormal(f64),
    #[error("matrix is not a proper rotation (det = {0})")]
    NotProper(f64),
    #[error("element index {index} out of range for group of order {order}")]
    IndexOutOfRange { index: usize, order: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("group `{0}` exists only in 3D")]
    RequiresThreeDimensions(String),
    #[error("element list does not form a group: {0}")]
    NotAGroup(String),
}

/// A proper rotation in 2D or 3D.
///
/// Storage is always 3×3; a 2D rotation occupies the upper-left 2×2 block and
/// the remaining entries are those of the identity.
#[derive(Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    dim: usize,
    m: [[f64; 3]; 3],
}

impl fmt::Debug for RotationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.dim).map(|r| &self.m[r][..self.dim]).collect();
        f.debug_struct("RotationMatrix")
            .field("dim", &self.dim)
            .field("rows", &rows)
            .finish()
    }
}

impl RotationMatrix {
    pub fn identity(dim: usize) -> Result<Self, GroupError> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        })
    }

    /// Builds a rotation from `dim` rows of `dim` entries and validates it.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GroupError> {
        let dim = rows.len();
        check_dim(dim)?;
        let mut out = Self::identity(dim)?;
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(GroupError::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            out.m[r][..dim].copy_from_slice(row);
        }
        out.validate()?;
        Ok(out)
    }

    /// Counter-clockwise rotation about the plane origin (2D) or the z-axis (3D).
    pub fn about_z(angle: f64, dim: usize) -> Result<Self, GroupError> {
        let mut out = Self::identity(dim)?;
        let (s, c) = angle.sin_cos();
        out.m[0][0] = c;
        out.m[0][1] = -s;
        out.m[1][0] = s;
        out.m[1][1] = c;
        Ok(out)
    }

    /// Rodrigues rotation by `angle` about `axis` (need not be normalized).
    pub fn axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Self {
            dim: 3,
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    /// Unit quaternion `(w, x, y, z)` to rotation matrix.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
        Self {
            dim: 3,
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|r| self.m[r][..self.dim].to_vec()).collect()
    }

    /// Matrix product `self · rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|l| self.m[i][l] * rhs.m[l][j]).sum();
            }
        }
        Self { dim: self.dim, m }
    }

    pub fn transpose(&self) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[j][i];
            }
        }
        Self { dim: self.dim, m }
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Frobenius norm of `self - other` over the active `dim×dim` block.
    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        let d = self.dim.max(other.dim);
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let e = self.m[i][j] - other.m[i][j];
                acc += e * e;
            }
        }
        acc.sqrt()
    }

    /// `r · v` for a column vector of length `dim`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.m[i][j] * v[j]).sum())
            .collect()
    }

    /// Worst entry of `MᵀM − I`.
    pub fn orthonormality_residual(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.m[i][j] - target).abs());
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<(), GroupError> {
        // NaN residuals must fail too
        let res = self.orthonormality_residual();
        if res.is_nan() || res > ORTHO_TOL {
            return Err(GroupError::NotOrthonormal(res));
        }
        let det = self.determinant();
        if det.is_nan() || (det - 1.0).abs() > ORTHO_TOL {
            return Err(GroupError::NotProper(det));
        }
        Ok(())
    }

    /// Rounds entries within `1e-14` of an integer to that integer, so that
    /// rotations by multiples of 90° are represented exactly.
    fn snapped(mut self) -> Self {
        for row in self.m.iter_mut() {
            for v in row.iter_mut() {
                let r = v.round();
                if (*v - r).abs() < 1e-14 {
                    *v = r + 0.0;
                }
            }
        }
        self
    }
}

fn check_dim(dim: usize) -> Result<(), GroupError> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(GroupError::BadDimension(dim))
    }
}

/// A finite rotation group with precomputed multiplication structure.
#[derive(Debug, Clone)]
pub struct RotationGroup {
    name: String,
    elements: Vec<RotationMatrix>,
    cayley: Vec<Vec<usize>>,
    inverse: Vec<usize>,
}

impl RotationGroup {
    /// Builds a group from an element list whose first entry is the identity.
    ///
    /// Fails unless every axiom check of [`verify_elements`] passes.
    pub fn from_elements(
        name: impl Into<String>,
        elements: Vec<RotationMatrix>,
    ) -> Result<Self, GroupError> {
        let name = name.into();
        let report = verify_elements(&elements);
        if !report.passed() {
            return Err(GroupError::NotAGroup(report.summary()));
        }
        let cayley = report
            .cayley
            .ok_or_else(|| GroupError::NotAGroup("no Cayley table".into()))?;
        let k = elements.len();
        let inverse = (0..k)
            .map(|i| (0..k).find(|&j| cayley[i][j] == 0).expect("inverse checked"))
            .collect();
        Ok(Self {
            name,
            elements,
            cayley,
            inverse,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn elements(&self) -> &[RotationMatrix] {
        &self.elements
    }

    pub fn element(&self, index: usize) -> Result<&RotationMatrix, GroupError> {
        self.elements.get(index).ok_or(GroupError::IndexOutOfRange {
            index,
            order: self.order(),
        })
    }

    /// `cayley()[i][j]` is the index of `r_i · r_j`.
    pub fn cayley(&self) -> &[Vec<usize>] {
        &self.cayley
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    pub fn is_abelian(&self) -> bool {
        let k = self.order();
        (0..k).all(|i| (0..k).all(|j| self.cayley[i][j] == self.cayley[j][i]))
    }

    /// Index of the element within [`MATCH_TOL`] of `m`, if any.
    pub fn match_element(&self, m: &RotationMatrix) -> Option<usize> {
        match_in(&self.elements, m, MATCH_TOL)
    }

    /// Branch permutation induced by rotating the input with element `r_index`.
    ///
    /// Branch `i` of the rotated input sees `r_i · r`, i.e. branch
    /// `cayley[i][r_index]` of the original input.
    pub fn expected_permutation(&self, r_index: usize) -> Result<GroupPermutation, GroupError> {
        if r_index >= self.order() {
            return Err(GroupError::IndexOutOfRange {
                index: r_index,
                order: self.order(),
            });
        }
        let mapping = (0..self.order())
            .map(|i| self.cayley[i][r_index])
            .collect();
        Ok(GroupPermutation {
            mapping,
            source: r_index,
        })
    }

    /// True when every element of `self` appears in `other`.
    pub fn is_subgroup_of(&self, other: &RotationGroup) -> bool {
        self.dim() == other.dim()
            && self
                .elements
                .iter()
                .all(|e| other.match_element(e).is_some())
    }

    /// Looks up a built-in group by name: `c<k>`, `klein4`, `tetra12`, `cube24`.
    pub fn by_name(name: &str, dim: usize) -> Result<Self, GroupError> {
        match name {
            "klein4" | "tetra12" | "cube24" if dim != 3 => {
                Err(GroupError::RequiresThreeDimensions(name.to_string()))
            }
            "klein4" => Ok(build_klein4()),
            "tetra12" => Ok(build_tetra12()),
            "cube24" => Ok(build_cube24()),
            _ => {
                let k = name
                    .strip_prefix('c')
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| GroupError::UnknownGroup(name.to_string()))?;
                build_cyclic_z(k, dim)
            }
        }
    }
}

/// Names of the built-in groups, in listing order.
pub const BUILTIN_GROUPS: [&str; 8] = [
    "c1", "c4", "c6", "c9", "c12", "klein4", "tetra12", "cube24",
];

/// Group name used for an ablation entry of a given size.
///
/// 3D data uses the polyhedral groups for sizes 4, 12 and 24; everything else
/// maps onto a cyclic group about z.
pub fn group_name_for_size(size: usize, dim: usize) -> String {
    match (dim, size) {
        (3, 4) => "klein4".into(),
        (3, 12) => "tetra12".into(),
        (3, 24) => "cube24".into(),
        _ => format!("c{size}"),
    }
}

fn match_in(elements: &[RotationMatrix], m: &RotationMatrix, tol: f64) -> Option<usize> {
    if elements.first().map(|e| e.dim()) != Some(m.dim()) {
        return None;
    }
    let (best, dist) = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.frobenius_distance(m)))
        .fold((usize::MAX, f64::INFINITY), |acc, cur| {
            if cur.1 < acc.1 {
                cur
            } else {
                acc
            }
        });
    (dist < tol).then_some(best)
}

fn build_unchecked(name: &str, elements: Vec<RotationMatrix>) -> RotationGroup {
    RotationGroup::from_elements(name, elements)
        .unwrap_or_else(|e| panic!("built-in group {name} failed verification: {e}"))
}

/// Cyclic group of `k` rotations about the z-axis (3D) or the origin (2D).
pub fn build_cyclic_z(k: usize, dim: usize) -> Result<RotationGroup, GroupError> {
    if k == 0 {
        return Err(GroupError::EmptyGroup);
    }
    check_dim(dim)?;
    let elements = (0..k)
        .map(|i| {
            RotationMatrix::about_z(2.0 * PI * i as f64 / k as f64, dim).map(RotationMatrix::snapped)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_unchecked(&format!("c{k}"), elements))
}

const AXES: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
const DIAGONALS: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, -1.0],
];
const EDGES: [[f64; 3]; 6] = [
    [1.0, 1.0, 0.0],
    [1.0, -1.0, 0.0],
    [1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0],
    [0.0, 1.0, 1.0],
    [0.0, 1.0, -1.0],
];

fn rot(axis: [f64; 3], degrees: f64) -> RotationMatrix {
    RotationMatrix::axis_angle(axis, degrees.to_radians()).snapped()
}

fn identity3() -> RotationMatrix {
    RotationMatrix::identity(3).expect("3 is a valid dimension")
}

fn diagonal_rotations() -> impl Iterator<Item = RotationMatrix> {
    DIAGONALS
        .into_iter()
        .flat_map(|d| [rot(d, 120.0), rot(d, -120.0)])
}

/// Identity plus the three 180° face-axis rotations.
pub fn build_klein4() -> RotationGroup {
    let elements = std::iter::once(identity3())
        .chain(AXES.into_iter().map(|a| rot(a, 180.0)))
        .collect();
    build_unchecked("klein4", elements)
}

/// The 12 rotations preserving a tetrahedron inscribed in the unit cube.
pub fn build_tetra12() -> RotationGroup {
    let elements = std::iter::once(identity3())
        .chain(diagonal_rotations())
        .chain(AXES.into_iter().map(|a| rot(a, 180.0)))
        .collect();
    build_unchecked("tetra12", elements)
}

/// The 24 rotational symmetries of the cube.
pub fn build_cube24() -> RotationGroup {
    let faces = AXES
        .into_iter()
        .flat_map(|a| [rot(a, 90.0), rot(a, 180.0), rot(a, 270.0)]);
    let edges = EDGES.into_iter().map(|e| rot(e, 180.0));
    let elements = std::iter::once(identity3())
        .chain(faces)
        .chain(diagonal_rotations())
        .chain(edges)
        .collect();
    build_unchecked("cube24", elements)
}

/// A bijection on branch indices induced by a group element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPermutation {
    pub mapping: Vec<usize>,
    pub source: usize,
}

impl GroupPermutation {
    pub fn identity(k: usize) -> Self {
        Self {
            mapping: (0..k).collect(),
            source: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.mapping.len()];
        for &p in &self.mapping {
            if p >= seen.len() || seen[p] {
                return false;
            }
            seen[p] = true;
        }
        true
    }

    pub fn fixed_points(&self) -> usize {
        self.mapping
            .iter()
            .enumerate()
            .filter(|(i, &p)| *i == p)
            .count()
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &GroupPermutation) -> Vec<usize> {
        other.mapping.iter().map(|&o| self.mapping[o]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axiom {
    Closure,
    Associativity,
    Identity,
    Inverse,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axiom::Closure => "closure",
            Axiom::Associativity => "associativity",
            Axiom::Identity => "identity",
            Axiom::Inverse => "inverse",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub passed: bool,
    /// Worst Frobenius residual observed for this axiom.
    pub residual: f64,
    pub detail: String,
}

/// Outcome of [`verify_group`] / [`verify_elements`].
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub order: usize,
    pub checks: Vec<AxiomCheck>,
    /// Smallest Frobenius distance between two distinct elements.
    pub min_separation: f64,
    pub distinct: bool,
    /// Available when closure holds.
    pub cayley: Option<Vec<Vec<usize>>>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.distinct && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, axiom: Axiom) -> &AxiomCheck {
        self.checks
            .iter()
            .find(|c| c.axiom == axiom)
            .expect("every axiom is checked")
    }

    pub fn summary(&self) -> String {
        let mut parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                format!(
                    "{}={} ({:.3e})",
                    c.axiom,
                    if c.passed { "pass" } else { "FAIL" },
                    c.residual
                )
            })
            .collect();
        parts.push(format!(
            "distinct={} ({:.3e})",
            if self.distinct { "pass" } else { "FAIL" },
            self.min_separation
        ));
        parts.join(", ")
    }
}

pub fn verify_group(group: &RotationGroup) -> VerificationReport {
    verify_elements(group.elements())
}

/// Checks the four group axioms on a raw element list.
///
/// Associativity is checked on the Cayley table when closure holds, and
/// numerically on every triple of matrices in all cases.
pub fn verify_elements(elements: &[RotationMatrix]) -> VerificationReport {
    let k = elements.len();
    let mut min_separation = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            min_separation = min_separation.min(elements[i].frobenius_distance(&elements[j]));
        }
    }
    let distinct = min_separation > MATCH_TOL;
    let same_dim = k > 0 && elements.iter().all(|e| e.dim() == elements[0].dim());
    if !same_dim {
        let fail = |axiom| AxiomCheck {
            axiom,
            passed: false,
            residual: f64::INFINITY,
            detail: "empty list or mixed dimensions".into(),
        };
        return VerificationReport {
            order: k,
            checks: vec![
                fail(Axiom::Closure),
                fail(Axiom::Associativity),
                fail(Axiom::Identity),
                fail(Axiom::Inverse),
            ],
            min_separation,
            distinct,
            cayley: None,
        };
    }

    // closure
    let mut closure_residual: f64 = 0.0;
    let mut table = vec![vec![usize::MAX; k]; k];
    let mut closure_detail = String::new();
    for i in 0..k {
        for j in 0..k {
            let p = elements[i].mul(&elements[j]);
            let (idx, dist) = nearest(elements, &p);
            closure_residual = closure_residual.max(dist);
            if dist < CLOSURE_TOL {
                table[i][j] = idx;
            } else if closure_detail.is_empty() {
                closure_detail = format!("r{i}·r{j} matches no element (distance {dist:.3e})");
            }
        }
    }
    let closed = closure_residual < CLOSURE_TOL;
    let closure = AxiomCheck {
        axiom: Axiom::Closure,
        passed: closed,
        residual: closure_residual,
        detail: closure_detail,
    };

    // associativity
    let mut assoc_residual: f64 = 0.0;
    for a in elements {
        for b in elements {
            let ab = a.mul(b);
            for c in elements {
                let lhs = ab.mul(c);
                let rhs = a.mul(&b.mul(c));
                assoc_residual = assoc_residual.max(lhs.frobenius_distance(&rhs));
            }
        }
    }
    let mut table_consistent = true;
    if closed {
        'outer: for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    if table[table[i][j]][l] != table[i][table[j][l]] {
                        table_consistent = false;
                        break 'outer;
                    }
                }
            }
        }
    }
    let associativity = AxiomCheck {
        axiom: Axiom::Associativity,
        passed: closed && table_consistent && assoc_residual < CLOSURE_TOL,
        residual: assoc_residual,
        detail: if closed {
            String::new()
        } else {
            "Cayley table unavailable without closure".into()
        },
    };

    // identity must sit at index 0
    let eye = RotationMatrix::identity(elements[0].dim()).expect("validated dim");
    let id_residual = elements[0].frobenius_distance(&eye);
    let id_table = closed && (0..k).all(|j| table[0][j] == j && table[j][0] == j);
    let identity = AxiomCheck {
        axiom: Axiom::Identity,
        passed: id_residual < CLOSURE_TOL && (id_table || !closed),
        residual: id_residual,
        detail: if id_residual < CLOSURE_TOL {
            String::new()
        } else {
            "element 0 is not the identity".into()
        },
    };

    // every element needs some r_j with r_i · r_j = e
    let mut inv_residual: f64 = 0.0;
    let mut inv_detail = String::new();
    for (i, a) in elements.iter().enumerate() {
        let best = elements
            .iter()
            .map(|b| a.mul(b).frobenius_distance(&eye))
            .fold(f64::INFINITY, f64::min);
        if best >= CLOSURE_TOL && inv_detail.is_empty() {
            inv_detail = format!("r{i} has no inverse in the set");
        }
        inv_residual = inv_residual.max(best);
    }
    let inverse = AxiomCheck {
        axiom: Axiom::Inverse,
        passed: inv_residual < CLOSURE_TOL,
        residual: inv_residual,
        detail: inv_detail,
    };

    VerificationReport {
        order: k,
        checks: vec![closure, associativity, identity, inverse],
        min_separation,
        distinct,
        cayley: (closed && distinct).then_some(table),
    }
}

fn nearest(elements: &[RotationMatrix], m: &RotationMatrix) -> (usize, f64) {
    elements
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.frobenius_distance(m)))
        .fold((usize::MAX, f64::INFINITY), |acc, cur| {
            if cur.1 < acc.1 {
                cur
            } else {
                acc
            }
        })
}

/// Plain-text dump used by `groups print`.
///
/// Each element is a block headed `element <i>` with one matrix row per line
/// (entries in `%.15e`-style scientific notation); the Cayley table follows as
/// `k` lines of `k` space-separated indices.
pub fn format_group(group: &RotationGroup) -> String {
    let mut out = format!(
        "group {} order {} dim {}\n",
        group.name(),
        group.order(),
        group.dim()
    );
    for (i, e) in group.elements().iter().enumerate() {
        out.push_str(&format!("element {i}\n"));
        for row in e.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{:.14e}", v)).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
    }
    out.push_str("cayley\n");
    for row in group.cayley() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}
