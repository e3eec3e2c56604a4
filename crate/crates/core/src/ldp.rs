//! Large-deviation functionals at desk scale: response kernels, the test
//! functional `H_m`, the Cesàro cumulant `Λ`, and Monte Carlo tail probes.
//!
//! Kernels are tabulated on the uniform grid `t_k = k h`, `h = T / K`.
//! Test measures are atomic with atoms on that grid, so every `θ`-integral
//! is a finite sum and only the `ds` and `dr` integrals need quadrature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::{expm, matmul};
use crate::network::CoefficientSet;
use crate::noise::{LevySpec, NoiseModel};
use crate::scalar::Scalar;
use crate::simulate::{path_maxima, SimConfig};

/// Fewest exceedances for a tail probability to count as estimable.
pub const MIN_EXCEEDANCES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom<T> {
    pub coord: usize,
    pub time: T,
    pub weight: T,
}

/// Signed atomic measure on `[0, T]` for each of `d` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure<T> {
    pub d: usize,
    pub atoms: Vec<Atom<T>>,
}

impl<T: Scalar> AtomicMeasure<T> {
    pub fn new(d: usize, atoms: Vec<Atom<T>>) -> Result<Self> {
        for a in &atoms {
            if a.coord >= d {
                return Err(Error::InvalidParameter(format!("atom coordinate {} outside 0..{d}", a.coord)));
            }
            if !a.time.is_finite() || !a.weight.is_finite() {
                return Err(Error::InvalidParameter("atom time and weight must be finite".into()));
            }
        }
        Ok(Self { d, atoms })
    }

    pub fn zero(d: usize) -> Self {
        Self { d, atoms: Vec::new() }
    }

    pub fn point(d: usize, coord: usize, time: T, weight: T) -> Result<Self> {
        Self::new(d, vec![Atom { coord, time, weight }])
    }

    pub fn total_variation(&self) -> T {
        self.atoms.iter().map(|a| a.weight.abs()).sum()
    }

    pub fn scale(&self, s: T) -> Self {
        let atoms = self.atoms.iter().map(|a| Atom { weight: a.weight * s, ..*a }).collect();
        Self { d: self.d, atoms }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch("measures on different coordinate counts".into()));
        }
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Ok(Self { d: self.d, atoms })
    }

    /// Atoms as `(coord, grid index, weight)`; errors for atoms off the grid.
    fn on_grid(&self, horizon: T, steps: usize) -> Result<Vec<(usize, usize, T)>> {
        let h = horizon / T::from_count(steps);
        let tol = T::lit(1e-9) * horizon.max(T::one());
        self.atoms
            .iter()
            .map(|a| {
                if a.time < -tol || a.time > horizon + tol {
                    return Err(Error::InvalidParameter(format!("atom time {} outside [0, {horizon}]", a.time)));
                }
                let j = (a.time / h).round();
                if (j * h - a.time).abs() > tol {
                    return Err(Error::InvalidParameter(format!("atom time {} is not on the kernel grid", a.time)));
                }
                Ok((a.coord, j.to_usize().unwrap_or(0).min(steps), a.weight))
            })
            .collect()
    }
}

/// Number of noise columns carried at size `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaRule {
    Identity,
    /// `max(1, floor(factor * N))`.
    Scaled {
        factor: f64,
    },
}

impl GammaRule {
    pub fn gamma(&self, n: usize) -> usize {
        match *self {
            GammaRule::Identity => n.max(1),
            GammaRule::Scaled { factor } => ((factor * n as f64).floor() as usize).max(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LDConfig<T> {
    pub gamma: GammaRule,
    /// Observed coordinates; `min(n, 4)` when absent.
    pub d: Option<usize>,
    /// Reference Lévy process dominating every `M_m`.
    pub dominating: LevySpec<T>,
}

impl<T: Scalar> LDConfig<T> {
    pub fn new(gamma: GammaRule, dominating: LevySpec<T>) -> Self {
        Self { gamma, d: None, dominating }
    }

    pub fn observed(&self, n: usize) -> usize {
        self.d.unwrap_or(n.min(4)).min(n)
    }

    pub fn check_domination(&self, specs: &[LevySpec<T>]) -> Result<()> {
        match specs.iter().position(|s| !self.dominating.dominates(s)) {
            Some(m) => Err(Error::DominationViolated(format!(
                "noise column {m} is not dominated by the reference Lévy process"
            ))),
            None => Ok(()),
        }
    }
}

/// Tabulated `G^N(t, s) = γ e^{a t} aP e^{aC s} ρC` and `R^N(t) = γ e^{a t} ρP`
/// restricted to the first `d` rows.
#[derive(Clone, Debug)]
pub struct KernelSet<T> {
    pub size: usize,
    pub gamma: usize,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub horizon: T,
    pub steps: usize,
    /// Nonzero columns of `ρ` and of `a`.
    pub rho_columns: usize,
    pub a_columns: usize,
    /// Rows `i < d` of `e^{a t_k}`, `(K+1) * d * n`.
    p_rows: Vec<T>,
    /// `aP e^{aC t_l} ρC`, `(K+1) * n * m`.
    w: Vec<T>,
    /// Trapezoid values of `∫_0^{D h} G(D h - u, u) du`, `(K+1) * d * m`.
    f: Vec<T>,
    /// `R(t_k)`, `(K+1) * d * m`.
    r: Vec<T>,
}

fn dense<T: Scalar>(m: &crate::sparse::SparseMatrix<T>) -> Vec<T> {
    m.to_dense().into_iter().flatten().collect()
}

fn nonzero_columns<T: Scalar>(m: &crate::sparse::SparseMatrix<T>) -> usize {
    let mut seen = vec![false; m.n_cols()];
    for (_, j, _) in m.triplets() {
        seen[j] = true;
    }
    seen.into_iter().filter(|s| *s).count()
}

pub fn build_kernels<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    ld: &LDConfig<T>,
    size: usize,
    horizon: T,
    steps: usize,
) -> Result<KernelSet<T>> {
    if !coeffs.sigma_core().is_zero() || !coeffs.sigma_periphery().is_zero() {
        return Err(Error::Precondition("kernels require zero volatility coefficients".into()));
    }
    if steps == 0 || !(horizon > T::zero()) {
        return Err(Error::InvalidParameter("kernel grid needs positive horizon and steps".into()));
    }
    let (n, m) = (coeffs.n(), coeffs.m());
    let d = ld.observed(n);
    let gamma = ld.gamma.gamma(size);
    let h = horizon / T::from_count(steps);
    let a = coeffs.a_total();
    let eh = expm(&dense(&a).into_iter().map(|x| x * h).collect::<Vec<_>>(), n)?;
    let ech = expm(&dense(coeffs.a_core()).into_iter().map(|x| x * h).collect::<Vec<_>>(), n)?;

    let mut p_rows = Vec::with_capacity((steps + 1) * d * n);
    let mut cur: Vec<T> = (0..d * n).map(|x| if x % (n + 1) == 0 { T::one() } else { T::zero() }).collect();
    let mut w = Vec::with_capacity((steps + 1) * n * m);
    let mut wc = dense(coeffs.rho_core());
    let ap = coeffs.a_periphery();
    for k in 0..=steps {
        if k > 0 {
            cur = matmul(&cur, &eh, d, n, n);
            wc = matmul(&ech, &wc, n, n, m);
        }
        p_rows.extend_from_slice(&cur);
        let mut wl = vec![T::zero(); n * m];
        for i in 0..n {
            let (cols, vals) = ap.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for c in 0..m {
                    wl[i * m + c] += v * wc[j * m + c];
                }
            }
        }
        w.extend_from_slice(&wl);
    }
    let g = T::from_count(gamma);
    let rho_p = dense(coeffs.rho_periphery());
    let r: Vec<T> =
        (0..=steps).flat_map(|k| matmul(&p_rows[k * d * n..(k + 1) * d * n], &rho_p, d, n, m)).map(|x| x * g).collect();
    let half = T::lit(0.5) * h;
    let f: Vec<T> = (0..=steps)
        .into_par_iter()
        .map(|lag| {
            let mut acc = vec![T::zero(); d * m];
            if lag == 0 {
                return acc;
            }
            for l in 0..=lag {
                let tau = if l == 0 || l == lag { half } else { h };
                let pk = &p_rows[(lag - l) * d * n..(lag - l + 1) * d * n];
                let wl = &w[l * n * m..(l + 1) * n * m];
                let prod = matmul(pk, wl, d, n, m);
                for (a, p) in acc.iter_mut().zip(prod) {
                    *a += tau * g * p;
                }
            }
            acc
        })
        .flatten()
        .collect();
    if f.iter().chain(&r).any(|x| !x.is_finite()) {
        return Err(Error::Overflow("kernel tabulation overflowed".into()));
    }
    Ok(KernelSet {
        size,
        gamma,
        d,
        n,
        m,
        horizon,
        steps,
        rho_columns: nonzero_columns(&coeffs.rho_total()),
        a_columns: nonzero_columns(&a),
        p_rows,
        w,
        f,
        r,
    })
}

impl<T: Scalar> KernelSet<T> {
    pub fn h(&self) -> T {
        self.horizon / T::from_count(self.steps)
    }

    /// `G^N_{ij}(t_k, t_l)`.
    pub fn g(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        let (n, m, d) = (self.n, self.m, self.d);
        let p = &self.p_rows[k * d * n + i * n..k * d * n + (i + 1) * n];
        let w = &self.w[l * n * m..(l + 1) * n * m];
        T::from_count(self.gamma) * p.iter().enumerate().map(|(c, &x)| x * w[c * m + j]).sum::<T>()
    }

    /// `R^N_{ij}(t_k)`.
    pub fn r(&self, i: usize, j: usize, k: usize) -> T {
        self.r[(k * self.d + i) * self.m + j]
    }

    fn f(&self, i: usize, j: usize, lag: usize) -> T {
        self.f[(lag * self.d + i) * self.m + j]
    }

    fn grid_atoms(&self, theta: &AtomicMeasure<T>) -> Result<Vec<(usize, usize, T)>> {
        if theta.d > self.d {
            return Err(Error::DimensionMismatch(format!(
                "measure has {} coordinates, kernels observe {}",
                theta.d, self.d
            )));
        }
        theta.on_grid(self.horizon, self.steps)
    }

    /// `H_m` at grid point `q` using only atoms with index `>= from`.
    fn h_grid(&self, atoms: &[(usize, usize, T)], col: usize, q: usize, from: usize) -> T {
        atoms.iter().filter(|a| a.1 >= from).map(|&(i, j, w)| w * (self.f(i, col, j - q) + self.r(i, col, j - q))).sum()
    }

    /// `(H_m(t_q^+), H_m(t_{q+1}))` for every grid interval. The left value
    /// excludes atoms at `t_q`, so each pair brackets a continuous piece.
    fn interval_values(&self, atoms: &[(usize, usize, T)], col: usize) -> Vec<(T, T)> {
        (0..self.steps).map(|q| (self.h_grid(atoms, col, q, q + 1), self.h_grid(atoms, col, q + 1, q + 1))).collect()
    }

    /// `H_m(θ, r)`; exact at grid points, linear between them.
    pub fn h_m(&self, theta: &AtomicMeasure<T>, col: usize, r: T) -> Result<T> {
        if col >= self.m {
            return Err(Error::IndexOutOfBounds { row: 0, col, n_rows: 1, n_cols: self.m });
        }
        if r < T::zero() || r > self.horizon {
            return Err(Error::InvalidParameter(format!("r = {r} outside [0, {}]", self.horizon)));
        }
        let atoms = self.grid_atoms(theta)?;
        let x = r / self.h();
        let q = x.floor().to_usize().unwrap_or(0).min(self.steps);
        let frac = x - T::from_count(q);
        if frac <= T::lit(1e-12) || q == self.steps {
            return Ok(self.h_grid(&atoms, col, q, q));
        }
        let left = self.h_grid(&atoms, col, q, q + 1);
        let right = self.h_grid(&atoms, col, q + 1, q + 1);
        Ok(left + frac * (right - left))
    }

    /// `(1/γ) Σ_m ∫_0^T Ψ_m(H_m(θ, r)) dr` with piecewise trapezoid in `r`.
    pub fn lambda(&self, specs: &[LevySpec<T>], theta: &AtomicMeasure<T>) -> Result<T> {
        if specs.len() != self.m {
            return Err(Error::DimensionMismatch(format!("{} specs for {} noise columns", specs.len(), self.m)));
        }
        let atoms = self.grid_atoms(theta)?;
        if atoms.is_empty() {
            return Ok(T::zero());
        }
        let half = T::lit(0.5) * self.h();
        let per_col: Vec<T> = (0..self.m)
            .into_par_iter()
            .map(|c| {
                self.interval_values(&atoms, c)
                    .into_iter()
                    .map(|(l, r)| half * (specs[c].psi(l) + specs[c].psi(r)))
                    .sum::<T>()
            })
            .collect();
        Ok(per_col.into_iter().sum::<T>() / T::from_count(self.gamma))
    }
}

/// `(q_1(N), q_2(N))`.
pub fn q_quantities<T: Scalar>(coeffs: &CoefficientSet<T>, gamma: usize) -> Result<(T, T)> {
    let ap = coeffs.a_periphery().abs();
    let g = T::from_count(gamma);
    let q1 = ap.matmul(&coeffs.a_core().abs().off_diagonal())?.max_abs_row_sum() * g;
    let q2 = ap.matmul(&coeffs.rho_core().abs())?.max_abs() * g;
    Ok((q1, q2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CesaroRow {
    pub size: usize,
    pub gamma: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CesaroTable {
    pub rows: Vec<CesaroRow>,
    /// Largest-size average; a proxy for the limit, not a claimed limit.
    pub estimate: f64,
    /// Difference between the last two averages.
    pub cauchy_diff: Option<f64>,
}

/// Cesàro averages of `∫ Ψ_m(H_m) dr` along a family indexed by size.
pub fn lambda_cesaro<T, F>(
    family: F,
    ld: &LDConfig<T>,
    theta: &AtomicMeasure<T>,
    sizes: &[usize],
    horizon: T,
    steps: usize,
) -> Result<CesaroTable>
where
    T: Scalar,
    F: Fn(usize) -> Result<(CoefficientSet<T>, Vec<LevySpec<T>>)>,
{
    if sizes.is_empty() {
        return Err(Error::InvalidParameter("size grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let (coeffs, specs) = family(size)?;
        ld.check_domination(&specs)?;
        let k = build_kernels(&coeffs, ld, size, horizon, steps)?;
        rows.push(CesaroRow { size, gamma: k.gamma, value: k.lambda(&specs, theta)?.f64() });
    }
    let estimate = rows.last().map_or(0.0, |r| r.value);
    let cauchy_diff = (rows.len() >= 2).then(|| (rows[rows.len() - 1].value - rows[rows.len() - 2].value).abs());
    Ok(CesaroTable { rows, estimate, cauchy_diff })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelGap {
    pub g: f64,
    pub r: f64,
}

/// Sup-norm distance between two tabulations on shared indices.
pub fn kernel_gap<T: Scalar>(a: &KernelSet<T>, b: &KernelSet<T>) -> Result<KernelGap> {
    if a.steps != b.steps || a.horizon != b.horizon {
        return Err(Error::DimensionMismatch("kernel grids differ".into()));
    }
    let d = a.d.min(b.d);
    let m = a.m.min(b.m);
    let k = a.steps;
    let g = (0..=k)
        .into_par_iter()
        .map(|t| {
            let mut s = 0f64;
            for l in 0..=k {
                for i in 0..d {
                    for j in 0..m {
                        s = s.max((a.g(i, j, t, l) - b.g(i, j, t, l)).abs().f64());
                    }
                }
            }
            s
        })
        .reduce(|| 0.0, f64::max);
    let mut r = 0f64;
    for t in 0..=k {
        for i in 0..d {
            for j in 0..m {
                r = r.max((a.r(i, j, t) - b.r(i, j, t)).abs().f64());
            }
        }
    }
    Ok(KernelGap { g, r })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaStarProbe {
    /// Achieved `<θ, x> - Λ(θ)`; a lower bound for `Λ*(x)`.
    pub value: f64,
    pub weights: Vec<f64>,
}

/// Coordinate ascent on the atom weights of `template` for
/// `Σ w_a x_a - Λ(θ_w)`; starts from zero weights, so the result is never
/// below zero.
pub fn lambda_star_probe<T: Scalar>(
    kernels: &KernelSet<T>,
    specs: &[LevySpec<T>],
    template: &AtomicMeasure<T>,
    x_at_atoms: &[T],
    sweeps: usize,
) -> Result<LambdaStarProbe> {
    if x_at_atoms.len() != template.atoms.len() {
        return Err(Error::DimensionMismatch("one path value per atom is required".into()));
    }
    let mut theta = template.scale(T::zero());
    let objective = |th: &AtomicMeasure<T>| -> Result<f64> {
        let pair: T = th.atoms.iter().zip(x_at_atoms).map(|(a, &x)| a.weight * x).sum();
        Ok((pair - kernels.lambda(specs, th)?).f64())
    };
    let mut best = objective(&theta)?;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..sweeps {
        let before = best;
        for a in 0..theta.atoms.len() {
            let w0 = theta.atoms[a].weight.f64();
            let mut eval = |w: f64| -> Result<f64> {
                theta.atoms[a].weight = T::lit(w);
                objective(&theta)
            };
            // bracket the maximiser of a concave function
            let mut step = 1.0f64;
            let dir = if eval(w0 + 1e-3)? >= eval(w0 - 1e-3)? { 1.0 } else { -1.0 };
            let (mut lo, mut hi) = (w0 - 1e-3 * dir, w0 + step * dir);
            let mut f_prev = eval(w0)?;
            for _ in 0..60 {
                let f_hi = eval(hi)?;
                if f_hi < f_prev {
                    break;
                }
                f_prev = f_hi;
                lo = hi - step * dir;
                step *= 2.0;
                hi += step * dir;
            }
            let (mut a_, mut b_) = if lo < hi { (lo, hi) } else { (hi, lo) };
            for _ in 0..80 {
                let c = b_ - phi * (b_ - a_);
                let e = a_ + phi * (b_ - a_);
                if eval(c)? > eval(e)? {
                    b_ = e;
                } else {
                    a_ = c;
                }
            }
            let cand = 0.5 * (a_ + b_);
            let f_c = eval(cand)?;
            if f_c > best {
                best = f_c;
            } else {
                theta.atoms[a].weight = T::lit(w0);
            }
        }
        if best - before <= 1e-12 * best.abs().max(1.0) {
            break;
        }
    }
    Ok(LambdaStarProbe { value: best, weights: theta.atoms.iter().map(|a| a.weight.f64()).collect() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub size: usize,
    pub gamma: usize,
    pub paths: usize,
    pub exceedances: usize,
    pub p_hat: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// `(1/γ) log p_hat` when at least one exceedance was seen.
    pub normalized_log: Option<f64>,
    /// Fewer than `MIN_EXCEEDANCES` exceedances.
    pub below_floor: bool,
}

/// 95% Wilson score interval.
pub fn wilson(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054f64;
    let nf = n as f64;
    let p = k as f64 / nf;
    let den = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    let low = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (low, high)
}

/// Monte Carlo `P[sup_t max_{i<d} |X_i - X̄_i| > ε]` along a family.
pub fn tail_slope<T, F>(family: F, ld: &LDConfig<T>, eps: f64, sim: &SimConfig, sizes: &[usize]) -> Result<Vec<TailRow>>
where
    T: Scalar,
    F: Fn(usize) -> Result<(CoefficientSet<T>, NoiseModel<T>)>,
{
    sizes
        .iter()
        .map(|&size| {
            let (coeffs, noise) = family(size)?;
            let d = ld.observed(coeffs.n());
            let gamma = ld.gamma.gamma(size);
            let pm = path_maxima(&coeffs, &noise, sim)?;
            let valid: Vec<&Vec<T>> = pm.per_path.iter().flatten().collect();
            let paths = valid.len();
            let exceedances =
                if eps <= 0.0 { paths } else { valid.iter().filter(|m| m[..d].iter().any(|v| v.f64() > eps)).count() };
            let p_hat = if paths == 0 { 0.0 } else { exceedances as f64 / paths as f64 };
            let (wilson_low, wilson_high) = wilson(exceedances, paths);
            Ok(TailRow {
                size,
                gamma,
                paths,
                exceedances,
                p_hat,
                wilson_low,
                wilson_high,
                normalized_log: (exceedances > 0).then(|| p_hat.ln() / gamma as f64),
                below_floor: exceedances < MIN_EXCEEDANCES,
            })
        })
        .collect()
}
