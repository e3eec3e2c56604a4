//! The twelve error rates, their constants and the assembled error bound,
//! plus chaos-regime rates and support-count diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    check_noise_dims, compute_v_quantities, validate_layout, CoefficientSet, CorePeripheryLayout, VQuantities,
};
use crate::noise::NoiseModel;
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Factor by which the bound may exceed `v_X` before it is called vacuous.
pub const VACUOUS_FACTOR: f64 = 1e6;

fn max_sqrt<T: Scalar>(d: &[T]) -> T {
    d.iter().fold(T::zero(), |m, v| m.max(v.abs())).sqrt()
}

/// `|A C A'|_d^{1/2}`.
fn sandwich_rate<T: Scalar>(a: &SparseMatrix<T>, c: &SparseMatrix<T>) -> Result<T> {
    if a.is_zero() || c.is_zero() {
        return Ok(T::zero());
    }
    Ok(max_sqrt(&a.diag_sandwich(c)?))
}

/// `|F D F'|` for diagonal `D = diag(d)`, entrywise absolute.
fn abs_gram<T: Scalar>(f: &SparseMatrix<T>, d: &[T]) -> Result<SparseMatrix<T>> {
    let fd = f.matmul(&SparseMatrix::from_diagonal(d))?;
    Ok(fd.matmul(&f.transpose())?.abs())
}

/// `r_1, ..., r_12` on `[0, T]`.
pub fn compute_rates<T: Scalar>(coeffs: &CoefficientSet<T>, noise: &NoiseModel<T>, t: T) -> Result<[T; 12]> {
    check_noise_dims(coeffs, noise)?;
    if !(t > T::zero()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {t}")));
    }
    let ap = coeffs.a_periphery().abs();
    let sp = coeffs.sigma_periphery().abs();
    let ac_x = coeffs.a_core().abs().off_diagonal();
    let cov_x0 = noise.x0_cov().abs();
    let cov_l = noise.l_cov().abs();
    let b_var = SparseMatrix::from_diagonal(&noise.b_variances());
    let c = noise.m_variances();
    let c_mat = SparseMatrix::from_diagonal(&c);
    let q_f = abs_gram(coeffs.f_core(), &noise.b_variances())?;
    let q_rho = abs_gram(coeffs.rho_core(), &c)?;
    Ok([
        sandwich_rate(&ap, &cov_x0)?,
        sandwich_rate(&sp, &cov_x0)?,
        sandwich_rate(&ap, &cov_l)?,
        sandwich_rate(&sp, &cov_l)?,
        sandwich_rate(coeffs.f_periphery(), &b_var)?,
        sandwich_rate(coeffs.rho_periphery(), &c_mat)?,
        ap.matmul(&ac_x)?.max_abs_row_sum(),
        sp.matmul(&ac_x)?.max_abs_row_sum(),
        sandwich_rate(&ap, &q_f)?,
        sandwich_rate(&sp, &q_f)?,
        sandwich_rate(&ap, &q_rho)?,
        sandwich_rate(&sp, &q_rho)?,
    ])
}

/// Constants multiplying the rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants<T> {
    pub k: T,
    pub k_iota: [T; 12],
    pub e_t: T,
    pub v_t: T,
    /// Set when any constant overflowed to infinity.
    pub overflow: bool,
}

pub fn compute_constants<T: Scalar>(v: &VQuantities<T>, t: T) -> Constants<T> {
    let c = T::lit;
    let sqrt2 = c(2f64.sqrt());
    let st = t.sqrt();
    let t32 = t * st;
    let growth = sqrt2 * ((st * v.v_a + c(2.0) * v.v_sigma * v.v_l).powi(2) * t).exp();
    let k = growth;
    let e = v.v_a_d.exp();
    let vt = growth * (v.v_x + v.v_f * v.v_b * t + c(2.0) * v.v_rho_m * st);
    let k_iota = [
        e * t,
        c(2.0) * v.v_l * e * st,
        c(2.0 / 3.0) * e * v.v_sigma * vt * t32,
        sqrt2 * v.v_l * e * v.v_sigma * vt * t,
        t,
        c(2.0) * st,
        c(0.5) * e * vt * t * t,
        c(2.0 / 3f64.sqrt()) * v.v_l * e * vt,
        c(0.5) * e * t * t,
        c(2.0 / 3f64.sqrt()) * v.v_l * e * t32,
        c(2.0 / 3.0) * e * t32,
        sqrt2 * v.v_l * e * t,
    ];
    let overflow = !k.is_finite() || !e.is_finite() || !vt.is_finite() || k_iota.iter().any(|x| !x.is_finite());
    let inf = |x: T| if x.is_finite() { x } else { T::infinity() };
    Constants { k: inf(k), k_iota: k_iota.map(inf), e_t: inf(e), v_t: inf(vt), overflow }
}

/// `K * sum K_i r_i`; terms with a zero rate contribute nothing even when
/// their constant overflowed.
pub fn assemble_bound<T: Scalar>(k: T, k_iota: &[T; 12], r: &[T; 12]) -> T {
    let mut s = T::zero();
    for (ki, ri) in k_iota.iter().zip(r) {
        if *ri != T::zero() {
            s += *ki * *ri;
        }
    }
    if s == T::zero() {
        T::zero()
    } else {
        k * s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport<T> {
    pub r: [T; 12],
    pub v: VQuantities<T>,
    pub k: T,
    pub k_iota: [T; 12],
    pub e_t: T,
    pub v_t: T,
    pub bound: T,
    pub t: T,
    /// Bound is infinite, overflowed or larger than `1e6 * v_X`.
    pub vacuous: bool,
}

impl<T: Scalar> RateReport<T> {
    pub fn recompute_bound(&self) -> T {
        assemble_bound(self.k, &self.k_iota, &self.r)
    }
}

pub fn theorem_bound<T: Scalar>(coeffs: &CoefficientSet<T>, noise: &NoiseModel<T>, t: T) -> Result<RateReport<T>> {
    let v = compute_v_quantities(coeffs, noise, t)?;
    let r = compute_rates(coeffs, noise, t)?;
    let c = compute_constants(&v, t);
    let bound = assemble_bound(c.k, &c.k_iota, &r);
    let vacuous = !bound.is_finite() || bound > T::lit(VACUOUS_FACTOR) * v.v_x || (c.overflow && bound != T::zero());
    Ok(RateReport { r, v, k: c.k, k_iota: c.k_iota, e_t: c.e_t, v_t: c.v_t, bound, t, vacuous })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosRates<T> {
    pub r_a: T,
    pub r_sigma: T,
    pub r_f: T,
    pub r_rho_m: T,
}

pub fn chaos_rates<T: Scalar>(coeffs: &CoefficientSet<T>, noise: &NoiseModel<T>) -> Result<ChaosRates<T>> {
    check_noise_dims(coeffs, noise)?;
    let c = noise.m_variances();
    let rp = coeffs.rho_periphery();
    let r_rho_m = (0..coeffs.n())
        .map(|i| {
            let (cols, vals) = rp.row(i);
            cols.iter().zip(vals).map(|(&j, &x)| x * x * c[j]).sum::<T>()
        })
        .fold(T::zero(), T::max)
        .sqrt();
    Ok(ChaosRates {
        r_a: coeffs.a_periphery().max_row_norm(),
        r_sigma: coeffs.sigma_periphery().max_row_norm(),
        r_f: coeffs.f_periphery().max_row_norm(),
        r_rho_m,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosCheck<T> {
    /// Rate number, 1 to 12.
    pub index: usize,
    pub lhs: T,
    pub relation: Relation,
    /// Right-hand side expression in words, e.g. `v_X * r_a`.
    pub rhs_expr: String,
    pub rhs: T,
    pub holds: bool,
}

fn require_diagonal<T: Scalar>(m: &SparseMatrix<T>, what: &str) -> Result<()> {
    if m.is_diagonal() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{what} must be diagonal in the chaos regime")))
    }
}

/// Evaluates the twelve rate bounds of the chaos regime. Requires diagonal
/// core matrices and uncorrelated `L` and `X(0)`.
pub fn chaos_inequalities<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    noise: &NoiseModel<T>,
    t: T,
) -> Result<Vec<ChaosCheck<T>>> {
    require_diagonal(coeffs.a_core(), "a_core")?;
    require_diagonal(coeffs.sigma_core(), "sigma_core")?;
    require_diagonal(coeffs.f_core(), "f_core")?;
    require_diagonal(coeffs.rho_core(), "rho_core")?;
    require_diagonal(noise.l_cov(), "Cov[L(1)]")?;
    require_diagonal(noise.x0_cov(), "Cov[X(0)]")?;
    let r = compute_rates(coeffs, noise, t)?;
    let v = compute_v_quantities(coeffs, noise, t)?;
    let cr = chaos_rates(coeffs, noise)?;
    let rows: [(Relation, &str, T); 12] = [
        (Relation::Le, "v_X * r_a", v.v_x * cr.r_a),
        (Relation::Le, "v_X * r_sigma", v.v_x * cr.r_sigma),
        (Relation::Le, "v_L * r_a", v.v_l * cr.r_a),
        (Relation::Le, "v_L * r_sigma", v.v_l * cr.r_sigma),
        (Relation::Le, "v_b * r_f", v.v_b * cr.r_f),
        (Relation::Eq, "r_rhoM", cr.r_rho_m),
        (Relation::Eq, "0", T::zero()),
        (Relation::Eq, "0", T::zero()),
        (Relation::Le, "v_b * v_f * r_a", v.v_b * v.v_f * cr.r_a),
        (Relation::Le, "v_b * v_f * r_sigma", v.v_b * v.v_f * cr.r_sigma),
        (Relation::Le, "v_rhoM * r_a", v.v_rho_m * cr.r_a),
        (Relation::Le, "v_rhoM * r_sigma", v.v_rho_m * cr.r_sigma),
    ];
    let tol = T::lit(1e-12);
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(k, (rel, expr, rhs))| {
            let lhs = r[k];
            let holds = match rel {
                Relation::Le => lhs <= rhs + tol * rhs.abs(),
                Relation::Eq if rhs == T::zero() => lhs == T::zero(),
                Relation::Eq => (lhs - rhs).abs() <= tol * rhs.abs(),
            };
            ChaosCheck { index: k + 1, lhs, relation: rel, rhs_expr: expr.to_string(), rhs, holds }
        })
        .collect())
}

/// Support counts describing how sparse the periphery couplings and the
/// noise correlations are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport<T> {
    /// Correlated pairs `(i, j)` of periphery `L` components, self-pairs included.
    pub p_l: usize,
    /// Largest number of periphery columns used by one row of `aP`.
    pub p_a1: usize,
    pub p_sigma: usize,
    /// Largest number of periphery rows touched by one core column of `aC`.
    pub p_a2: usize,
    /// Largest number of periphery rows loading on one systematic column of `fC`.
    pub p_f: usize,
    pub p_rho: usize,
    pub r_a: T,
    pub r_sigma: T,
    /// `max |aP| * R_A`.
    pub phi_sup: T,
    pub psi_sup: T,
}

pub fn sparsity_report<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    layout: &CorePeripheryLayout,
    noise: &NoiseModel<T>,
    r_a: T,
    r_sigma: T,
) -> Result<SparsityReport<T>> {
    check_noise_dims(coeffs, noise)?;
    let violations = validate_layout(coeffs, layout);
    if !violations.is_empty() {
        return Err(Error::Layout(violations));
    }
    let per = |i: usize| layout.is_periphery(i);
    let p_l = noise.l_cov().triplets().filter(|&(i, j, _)| per(i) && per(j)).count();
    let row_periphery_max = |m: &SparseMatrix<T>| {
        (0..m.n_rows()).map(|i| m.row(i).0.iter().filter(|&&j| per(j)).count()).max().unwrap_or(0)
    };
    // count periphery rows per column
    let col_counts = |m: &SparseMatrix<T>, ncols: usize| {
        let mut cnt = vec![0usize; ncols];
        for (i, j, _) in m.triplets() {
            if per(i) {
                cnt[j] += 1;
            }
        }
        cnt
    };
    let p_a2 = col_counts(coeffs.a_core(), coeffs.n())[..layout.n0.min(coeffs.n())].iter().copied().max().unwrap_or(0);
    let sys = layout.n00.min(coeffs.m());
    let p_f = col_counts(coeffs.f_core(), coeffs.m())[..sys].iter().copied().max().unwrap_or(0);
    let p_rho = col_counts(coeffs.rho_core(), coeffs.m())[..sys].iter().copied().max().unwrap_or(0);
    Ok(SparsityReport {
        p_l,
        p_a1: row_periphery_max(coeffs.a_periphery()),
        p_sigma: row_periphery_max(coeffs.sigma_periphery()),
        p_a2,
        p_f,
        p_rho,
        r_a,
        r_sigma,
        phi_sup: coeffs.a_periphery().max_abs() * r_a,
        psi_sup: coeffs.sigma_periphery().max_abs() * r_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::MatrixRole;
    use crate::noise::{DriftDensity, LevySpec};

    fn mckean(n: usize, v: f64) -> (CoefficientSet<f64>, NoiseModel<f64>) {
        let w = 1.0 / (n as f64 - 1.0);
        let ap = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j, w))).collect();
        let c = CoefficientSet::from_triplets(
            n,
            n,
            vec![
                (MatrixRole::ACore, (0..n).map(|i| (i, i, -1.0)).collect()),
                (MatrixRole::APeriphery, ap),
                (MatrixRole::RhoCore, (0..n).map(|i| (i, i, 1.0)).collect()),
            ],
        )
        .unwrap();
        let noise = NoiseModel::independent(
            vec![LevySpec::brownian(0.0); n],
            vec![LevySpec::brownian(1.0); n],
            vec![DriftDensity::constant(0.0); n],
            vec![0.0; n],
            vec![v * v; n],
        )
        .unwrap();
        (c, noise)
    }

    #[test]
    fn mckean_rates() {
        let n = 17;
        let (c, noise) = mckean(n, 0.5);
        let r = compute_rates(&c, &noise, 1.0).unwrap();
        let s = (n as f64 - 1.0).sqrt();
        assert!((r[0] - 0.5 / s).abs() < 1e-14);
        assert!((r[10] - 1.0 / s).abs() < 1e-14);
        assert_eq!(r[6], 0.0);
        assert_eq!(r[1], 0.0);
    }

    #[test]
    fn zero_periphery_zero_bound() {
        let c =
            CoefficientSet::from_triplets(3, 3, vec![(MatrixRole::ACore, vec![(0, 1, 1.0), (1, 1, -2.0)])]).unwrap();
        let (_, noise) = mckean(3, 1.0);
        let rep = theorem_bound(&c, &noise, 1.0).unwrap();
        assert_eq!(rep.r, [0.0; 12]);
        assert_eq!(rep.bound, 0.0);
        assert!(!rep.vacuous);
    }

    #[test]
    fn constants_plug_in() {
        let zero = VQuantities {
            v_a: 0.0,
            v_a_d: 0.0,
            v_sigma: 0.0,
            v_l: 0.0,
            v_b: 0.0,
            v_x: 1.0,
            v_f: 0.0,
            v_rho_m: 0.0,
            t: 1.0,
        };
        let c = compute_constants(&zero, 1.0);
        assert!((c.k - 2f64.sqrt()).abs() < 1e-15);
        assert!((c.v_t - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.e_t, 1.0);
        let c = compute_constants(&zero, 4.0);
        assert_eq!(c.k_iota[4], 4.0);
        assert_eq!(c.k_iota[5], 4.0);
    }

    #[test]
    fn overflow_is_vacuous() {
        let v = VQuantities {
            v_a: 1e3_f64,
            v_a_d: 0.0,
            v_sigma: 0.0,
            v_l: 0.0,
            v_b: 0.0,
            v_x: 1.0,
            v_f: 0.0,
            v_rho_m: 0.0,
            t: 1.0,
        };
        let c = compute_constants(&v, 1.0);
        assert!(c.overflow && c.k.is_infinite());
    }

    #[test]
    fn classex_chaos_rate() {
        let n = 9;
        let a = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j, 1.0 / n as f64))).collect();
        let c = CoefficientSet::from_triplets(n, n, vec![(MatrixRole::APeriphery, a)]).unwrap();
        let (_, noise) = mckean(n, 1.0);
        let cr = chaos_rates(&c, &noise).unwrap();
        assert!((cr.r_a - (n as f64 - 1.0).sqrt() / n as f64).abs() < 1e-15);
        assert_eq!(cr.r_f, 0.0);
        assert_eq!(cr.r_rho_m, 0.0);
        let checks = chaos_inequalities(&c, &noise, 1.0).unwrap();
        assert_eq!(checks.len(), 12);
        assert!(checks.iter().all(|c| c.holds));
    }

    #[test]
    fn chaos_precondition() {
        let c = CoefficientSet::from_triplets(2, 2, vec![(MatrixRole::ACore, vec![(0, 1, 1.0)])]).unwrap();
        let (_, noise) = mckean(2, 1.0);
        assert!(matches!(chaos_inequalities(&c, &noise, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn sparsity_counts() {
        let lay = CorePeripheryLayout { n0: 1, n_periphery: 3, n00: 1 };
        let n = 4;
        let ap = (0..n).flat_map(|i| (1..n).filter(move |&j| j != i).map(move |j| (i, j, 0.1))).collect();
        let c = CoefficientSet::from_triplets(
            n,
            5,
            vec![
                (MatrixRole::ACore, vec![(0, 0, -1.0), (2, 0, 1.0), (3, 0, 1.0), (1, 1, -1.0)]),
                (MatrixRole::APeriphery, ap),
                (MatrixRole::FCore, vec![(1, 0, 1.0), (2, 0, 1.0), (1, 2, 1.0)]),
            ],
        )
        .unwrap();
        let noise = NoiseModel::independent(
            vec![LevySpec::brownian(1.0); n],
            vec![LevySpec::brownian(1.0); 5],
            vec![DriftDensity::constant(0.0); 5],
            vec![0.0; n],
            vec![1.0; n],
        )
        .unwrap();
        let s = sparsity_report(&c, &lay, &noise, 10.0_f64, 10.0).unwrap();
        assert_eq!(s.p_l, 3);
        assert_eq!(s.p_a1, 3);
        assert_eq!(s.p_a2, 2);
        assert_eq!(s.p_f, 2);
        assert!((s.phi_sup - 1.0).abs() < 1e-15);
    }
}
