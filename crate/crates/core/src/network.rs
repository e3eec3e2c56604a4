//! Coefficient matrices of the linear particle network, the core/periphery
//! layout and the scalar summaries that feed every constant.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Which of the eight coefficient matrices a block fills.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixRole {
    ACore,
    APeriphery,
    SigmaCore,
    SigmaPeriphery,
    FCore,
    FPeriphery,
    RhoCore,
    RhoPeriphery,
}

impl MatrixRole {
    pub const ALL: [MatrixRole; 8] = [
        MatrixRole::ACore,
        MatrixRole::APeriphery,
        MatrixRole::SigmaCore,
        MatrixRole::SigmaPeriphery,
        MatrixRole::FCore,
        MatrixRole::FPeriphery,
        MatrixRole::RhoCore,
        MatrixRole::RhoPeriphery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatrixRole::ACore => "a_core",
            MatrixRole::APeriphery => "a_periphery",
            MatrixRole::SigmaCore => "sigma_core",
            MatrixRole::SigmaPeriphery => "sigma_periphery",
            MatrixRole::FCore => "f_core",
            MatrixRole::FPeriphery => "f_periphery",
            MatrixRole::RhoCore => "rho_core",
            MatrixRole::RhoPeriphery => "rho_periphery",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }

    /// `a` and `sigma` are particle-by-particle, `f` and `rho` particle-by-noise.
    pub fn is_square(self) -> bool {
        matches!(self, MatrixRole::ACore | MatrixRole::APeriphery | MatrixRole::SigmaCore | MatrixRole::SigmaPeriphery)
    }

    pub fn is_periphery(self) -> bool {
        matches!(
            self,
            MatrixRole::APeriphery | MatrixRole::SigmaPeriphery | MatrixRole::FPeriphery | MatrixRole::RhoPeriphery
        )
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MatrixRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The eight time-constant coefficient matrices for `n` particles driven by
/// `m` noise columns.
/// `(role, [(i, j, value), ...])` blocks for [`CoefficientSet::from_triplets`].
pub type RoleTriplets<T> = Vec<(MatrixRole, Vec<(usize, usize, T)>)>;

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet<T> {
    n: usize,
    m: usize,
    mats: [SparseMatrix<T>; 8],
}

/// Assembles a coefficient set; roles not listed are zero.
pub fn build_coefficients<T: Scalar>(
    n: usize,
    m: usize,
    blocks: Vec<(MatrixRole, SparseMatrix<T>)>,
) -> Result<CoefficientSet<T>> {
    let mut set = CoefficientSet::zeros(n, m);
    let mut seen = [false; 8];
    for (role, mat) in blocks {
        if seen[role.index()] {
            return Err(Error::InvalidParameter(format!("role {role} supplied twice")));
        }
        seen[role.index()] = true;
        set.set_role(role, mat)?;
    }
    Ok(set)
}

impl<T: Scalar> CoefficientSet<T> {
    pub fn zeros(n: usize, m: usize) -> Self {
        let sq = || SparseMatrix::zeros(n, n);
        let rect = || SparseMatrix::zeros(n, m);
        Self { n, m, mats: [sq(), sq(), sq(), sq(), rect(), rect(), rect(), rect()] }
    }

    /// Builds from per-role `(row, col, value)` triples. Duplicate positions
    /// within a role are reported with the role name.
    pub fn from_triplets(n: usize, m: usize, roles: RoleTriplets<T>) -> Result<Self> {
        let mut blocks = Vec::with_capacity(roles.len());
        for (role, trip) in roles {
            let cols = if role.is_square() { n } else { m };
            let mat = SparseMatrix::from_triplets(n, cols, trip).map_err(|e| match e {
                Error::DuplicateEntry { row, col, .. } => Error::DuplicateEntry { what: role.name().into(), row, col },
                other => other,
            })?;
            blocks.push((role, mat));
        }
        build_coefficients(n, m, blocks)
    }

    fn expected_shape(&self, role: MatrixRole) -> (usize, usize) {
        (self.n, if role.is_square() { self.n } else { self.m })
    }

    /// Replaces one block after checking its shape.
    pub fn set_role(&mut self, role: MatrixRole, mat: SparseMatrix<T>) -> Result<()> {
        let (r, c) = self.expected_shape(role);
        if mat.n_rows() != r || mat.n_cols() != c {
            return Err(Error::DimensionMismatch(format!(
                "{role} is {}x{}, expected {r}x{c}",
                mat.n_rows(),
                mat.n_cols()
            )));
        }
        self.mats[role.index()] = mat;
        Ok(())
    }

    pub fn with_role(mut self, role: MatrixRole, mat: SparseMatrix<T>) -> Result<Self> {
        self.set_role(role, mat)?;
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, role: MatrixRole) -> &SparseMatrix<T> {
        &self.mats[role.index()]
    }

    pub fn a_core(&self) -> &SparseMatrix<T> {
        self.get(MatrixRole::ACore)
    }
    pub fn a_periphery(&self) -> &SparseMatrix<T> {
        self.get(MatrixRole::APeriphery)
    }
    pub fn sigma_core(&self) -> &SparseMatrix<T> {
        self.get(MatrixRole::SigmaCore)
    }
    pub fn sigma_periphery(&self) -> &SparseMatrix<T> {
        self.get(MatrixRole::SigmaPeriphery)
    }
    pub fn f_core(&self) -> &SparseMatrix<T> {
        self.get(MatrixRole::FCore)
    }
    pub fn f_periphery(&self) -> &SparseMatrix<T> {
        self.get(MatrixRole::FPeriphery)
    }
    pub fn rho_core(&self) -> &SparseMatrix<T> {
        self.get(MatrixRole::RhoCore)
    }
    pub fn rho_periphery(&self) -> &SparseMatrix<T> {
        self.get(MatrixRole::RhoPeriphery)
    }

    /// `a = aC + aP`.
    pub fn a_total(&self) -> SparseMatrix<T> {
        self.a_core().add(self.a_periphery()).expect("shapes checked on construction")
    }

    pub fn sigma_total(&self) -> SparseMatrix<T> {
        self.sigma_core().add(self.sigma_periphery()).expect("shapes checked on construction")
    }

    pub fn f_total(&self) -> SparseMatrix<T> {
        self.f_core().add(self.f_periphery()).expect("shapes checked on construction")
    }

    pub fn rho_total(&self) -> SparseMatrix<T> {
        self.rho_core().add(self.rho_periphery()).expect("shapes checked on construction")
    }

    /// True when all four periphery blocks vanish.
    pub fn periphery_is_zero(&self) -> bool {
        MatrixRole::ALL.iter().filter(|r| r.is_periphery()).all(|&r| self.get(r).is_zero())
    }

    pub fn map(&self, f: impl Fn(MatrixRole, &SparseMatrix<T>) -> SparseMatrix<T>) -> Result<Self> {
        let mut out = Self::zeros(self.n, self.m);
        for role in MatrixRole::ALL {
            out.set_role(role, f(role, self.get(role)))?;
        }
        Ok(out)
    }

    /// Relabels particles by `pp` and noise columns by `pm`.
    pub fn permute(&self, pp: &[usize], pm: &[usize]) -> Result<Self> {
        let mut out = Self::zeros(self.n, self.m);
        for role in MatrixRole::ALL {
            let cols = if role.is_square() { pp } else { pm };
            out.set_role(role, self.get(role).permute(pp, cols)?)?;
        }
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> CoefficientSet<U> {
        CoefficientSet { n: self.n, m: self.m, mats: self.mats.clone().map(|m| m.cast()) }
    }

    /// Fails with a layout error if `aP` or `sigmaP` carries a diagonal entry.
    pub fn check_periphery_diagonals(&self) -> Result<()> {
        let mut v = Vec::new();
        for role in [MatrixRole::APeriphery, MatrixRole::SigmaPeriphery] {
            for (i, j, _) in self.get(role).triplets().filter(|&(i, j, _)| i == j) {
                v.push(Violation { role: Some(role), row: i, col: j, rule: LayoutRule::PeripheryDiagonal });
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Layout(v))
        }
    }
}

/// Particles `0..n0` form the core, the next `n_periphery` the periphery.
/// Noise columns `0..n00` are systematic; column `n00 + i` is the
/// idiosyncratic noise of particle `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorePeripheryLayout {
    pub n0: usize,
    pub n_periphery: usize,
    pub n00: usize,
}

impl CorePeripheryLayout {
    pub fn n(&self) -> usize {
        self.n0 + self.n_periphery
    }

    pub fn is_core(&self, i: usize) -> bool {
        i < self.n0
    }

    pub fn is_periphery(&self, i: usize) -> bool {
        i >= self.n0 && i < self.n()
    }

    pub fn periphery(&self) -> std::ops::Range<usize> {
        self.n0..self.n()
    }

    /// Whether column `j` of `f`/`rho` may be populated in the core block for row `i`.
    pub fn is_core_noise(&self, i: usize, j: usize) -> bool {
        j < self.n00 || j == self.n00 + i
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutRule {
    /// Particle count or noise count disagrees with the layout.
    Dimensions,
    /// Periphery interaction block touches a core column.
    PeripheryOnCoreColumn,
    /// Periphery interaction block has a diagonal entry.
    PeripheryDiagonal,
    /// Core interaction block has an off-diagonal entry in a periphery column.
    CoreOffDiagonalPeripheryColumn,
    /// Core noise loading outside the systematic and own idiosyncratic columns.
    CoreNoiseColumn,
    /// Periphery noise loading on a systematic or own idiosyncratic column.
    PeripheryNoiseColumn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub role: Option<MatrixRole>,
    pub row: usize,
    pub col: usize,
    pub rule: LayoutRule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            Some(r) => write!(f, "{r}[{}, {}]: {:?}", self.row, self.col, self.rule),
            None => write!(f, "{:?} ({} vs {})", self.rule, self.row, self.col),
        }
    }
}

/// Lists every support violation of `coeffs` against `layout`; empty when
/// the block pattern holds.
pub fn validate_layout<T: Scalar>(coeffs: &CoefficientSet<T>, layout: &CorePeripheryLayout) -> Vec<Violation> {
    let mut out = Vec::new();
    if layout.n() != coeffs.n() {
        out.push(Violation { role: None, row: layout.n(), col: coeffs.n(), rule: LayoutRule::Dimensions });
        return out;
    }
    let push = |out: &mut Vec<Violation>, role, row, col, rule| {
        out.push(Violation { role: Some(role), row, col, rule });
    };
    for role in [MatrixRole::APeriphery, MatrixRole::SigmaPeriphery] {
        for (i, j, _) in coeffs.get(role).triplets() {
            if layout.is_core(j) {
                push(&mut out, role, i, j, LayoutRule::PeripheryOnCoreColumn);
            } else if i == j {
                push(&mut out, role, i, j, LayoutRule::PeripheryDiagonal);
            }
        }
    }
    for role in [MatrixRole::ACore, MatrixRole::SigmaCore] {
        for (i, j, _) in coeffs.get(role).triplets() {
            if layout.is_periphery(j) && i != j {
                push(&mut out, role, i, j, LayoutRule::CoreOffDiagonalPeripheryColumn);
            }
        }
    }
    let noise_used = MatrixRole::ALL.iter().any(|&r| !r.is_square() && !coeffs.get(r).is_zero());
    if coeffs.m() != layout.n00 + coeffs.n() {
        if noise_used {
            out.push(Violation {
                role: None,
                row: layout.n00 + coeffs.n(),
                col: coeffs.m(),
                rule: LayoutRule::Dimensions,
            });
        }
        return out;
    }
    for role in [MatrixRole::FCore, MatrixRole::RhoCore] {
        for (i, j, _) in coeffs.get(role).triplets() {
            if !layout.is_core_noise(i, j) {
                push(&mut out, role, i, j, LayoutRule::CoreNoiseColumn);
            }
        }
    }
    for role in [MatrixRole::FPeriphery, MatrixRole::RhoPeriphery] {
        for (i, j, _) in coeffs.get(role).triplets() {
            if layout.is_core_noise(i, j) {
                push(&mut out, role, i, j, LayoutRule::PeripheryNoiseColumn);
            }
        }
    }
    out
}

/// Scalar summaries of coefficients, noises and initial data on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VQuantities<T> {
    pub v_a: T,
    pub v_a_d: T,
    pub v_sigma: T,
    pub v_l: T,
    pub v_b: T,
    pub v_x: T,
    pub v_f: T,
    pub v_rho_m: T,
    pub t: T,
}

fn max_combined_row_sum<T: Scalar>(a: &SparseMatrix<T>, b: &SparseMatrix<T>) -> T {
    (0..a.n_rows())
        .map(|i| {
            let sa: T = a.row(i).1.iter().map(|v| v.abs()).sum();
            let sb: T = b.row(i).1.iter().map(|v| v.abs()).sum();
            sa + sb
        })
        .fold(T::zero(), T::max)
}

pub(crate) fn check_noise_dims<T: Scalar>(coeffs: &CoefficientSet<T>, noise: &NoiseModel<T>) -> Result<()> {
    if noise.n() != coeffs.n() || noise.m() != coeffs.m() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients are {}x{} (particles x noises), noise model is {}x{}",
            coeffs.n(),
            coeffs.m(),
            noise.n(),
            noise.m()
        )));
    }
    Ok(())
}

pub fn compute_v_quantities<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    noise: &NoiseModel<T>,
    t: T,
) -> Result<VQuantities<T>> {
    if !(t > T::zero()) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon must be positive and finite, got {t}")));
    }
    check_noise_dims(coeffs, noise)?;
    let c = noise.m_variances();
    let rho_m = (0..coeffs.n())
        .map(|i| {
            let sum = |m: &SparseMatrix<T>| -> T {
                let (cols, vals) = m.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * v * c[j]).sum()
            };
            sum(coeffs.rho_core()) + sum(coeffs.rho_periphery())
        })
        .fold(T::zero(), T::max)
        .sqrt();
    let v_l = noise.l_variances().iter().fold(T::zero(), |m, &v| m.max(v)).sqrt();
    let v_x = (0..coeffs.n()).map(|i| noise.x0_mean()[i].powi(2) + noise.x0_variance(i)).fold(T::zero(), T::max).sqrt();
    let v_b = noise.drifts().iter().map(|d| d.sup_abs_mean(t).powi(2) + d.var()).fold(T::zero(), T::max).sqrt();
    Ok(VQuantities {
        v_a: max_combined_row_sum(coeffs.a_core(), coeffs.a_periphery()),
        v_a_d: coeffs.a_core().max_abs_diag(),
        v_sigma: max_combined_row_sum(coeffs.sigma_core(), coeffs.sigma_periphery()),
        v_l,
        v_b,
        v_x,
        v_f: max_combined_row_sum(coeffs.f_core(), coeffs.f_periphery()),
        v_rho_m: rho_m,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{DriftDensity, LevySpec};

    fn mckean(n: usize) -> CoefficientSet<f64> {
        let w = 1.0 / (n as f64 - 1.0);
        let ap = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j, w))).collect();
        let ac = (0..n).map(|i| (i, i, -1.0)).collect();
        let rc = (0..n).map(|i| (i, i, 1.0)).collect();
        CoefficientSet::from_triplets(
            n,
            n,
            vec![(MatrixRole::ACore, ac), (MatrixRole::APeriphery, ap), (MatrixRole::RhoCore, rc)],
        )
        .unwrap()
    }

    fn quiet_noise(n: usize, m: usize) -> NoiseModel<f64> {
        NoiseModel::independent(
            vec![LevySpec::brownian(0.0); n],
            vec![LevySpec::brownian(1.0); m],
            vec![DriftDensity::constant(0.0); m],
            vec![0.0; n],
            vec![0.0; n],
        )
        .unwrap()
    }

    #[test]
    fn empty_roles_are_zero() {
        let c = build_coefficients::<f64>(2, 3, vec![]).unwrap();
        for r in MatrixRole::ALL {
            assert!(c.get(r).is_zero());
        }
        assert_eq!(c.f_core().n_cols(), 3);
    }

    #[test]
    fn duplicate_entry_reports_role() {
        let e =
            CoefficientSet::<f64>::from_triplets(2, 2, vec![(MatrixRole::APeriphery, vec![(0, 1, 1.0), (0, 1, 2.0)])]);
        match e {
            Err(Error::DuplicateEntry { what, row: 0, col: 1 }) => assert_eq!(what, "a_periphery"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_shape_rejected() {
        let e = build_coefficients::<f64>(2, 3, vec![(MatrixRole::FCore, SparseMatrix::zeros(2, 2))]);
        assert!(matches!(e, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn mckean_v() {
        let n = 10;
        let v = compute_v_quantities(&mckean(n), &quiet_noise(n, n), 1.0).unwrap();
        assert!((v.v_a - 2.0).abs() < 1e-12);
        assert_eq!(v.v_a_d, 1.0);
        assert_eq!(v.v_rho_m, 1.0);
        assert_eq!(v.v_sigma, 0.0);
    }

    #[test]
    fn rho_single_term() {
        let c = CoefficientSet::from_triplets(1, 1, vec![(MatrixRole::RhoCore, vec![(0, 0, 2.0)])]).unwrap();
        let noise = NoiseModel::independent(
            vec![LevySpec::brownian(0.0)],
            vec![LevySpec::brownian(3.0)],
            vec![DriftDensity::constant(0.0)],
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let v = compute_v_quantities(&c, &noise, 1.0).unwrap();
        assert!((v.v_rho_m - 12f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_horizon_rejected() {
        assert!(compute_v_quantities(&mckean(3), &quiet_noise(3, 3), 0.0).is_err());
    }

    #[test]
    fn layout_pattern() {
        let lay = CorePeripheryLayout { n0: 1, n_periphery: 2, n00: 1 };
        let ok = CoefficientSet::<f64>::from_triplets(
            3,
            4,
            vec![
                (MatrixRole::ACore, vec![(0, 0, -1.0), (1, 0, 0.5), (1, 1, -1.0), (2, 2, -1.0)]),
                (MatrixRole::APeriphery, vec![(0, 1, 0.1), (1, 2, 0.1), (2, 1, 0.1)]),
                (MatrixRole::FCore, vec![(0, 0, 1.0), (1, 2, 1.0), (2, 0, 1.0)]),
                (MatrixRole::FPeriphery, vec![(0, 2, 1.0), (1, 3, 0.2)]),
            ],
        )
        .unwrap();
        assert!(validate_layout(&ok, &lay).is_empty());
        let bad = ok
            .clone()
            .with_role(MatrixRole::APeriphery, SparseMatrix::from_triplets(3, 3, [(2, 0, 1.0)]).unwrap())
            .unwrap();
        let v = validate_layout(&bad, &lay);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].row, v[0].col, v[0].rule), (2, 0, LayoutRule::PeripheryOnCoreColumn));
        let bad = ok.with_role(MatrixRole::FCore, SparseMatrix::from_triplets(3, 4, [(1, 3, 1.0)]).unwrap()).unwrap();
        assert_eq!(validate_layout(&bad, &lay)[0].rule, LayoutRule::CoreNoiseColumn);
    }

    #[test]
    fn zero_matrices_any_layout() {
        let c = CoefficientSet::<f64>::zeros(4, 1);
        let lay = CorePeripheryLayout { n0: 2, n_periphery: 2, n00: 3 };
        assert!(validate_layout(&c, &lay).is_empty());
    }
}
