//! Driving noises: Lévy processes with finitely many jump sizes, drift
//! densities, and the Gaussian initial law, plus reproducible sampling.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Mean-zero Lévy process: Brownian part with variance `brownian_var` per
/// unit time plus compensated compound-Poisson jumps of rate `jump_rate`
/// and size `z_k` with probability `p_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevySpec<T> {
    pub brownian_var: T,
    pub jump_rate: T,
    pub atoms: Vec<(T, T)>,
}

/// `e^x - 1 - x` without cancellation near zero.
pub(crate) fn exp_remainder<T: Scalar>(x: T) -> T {
    if x.abs() < T::lit(0.1) {
        let mut term = x * x / T::lit(2.0);
        let mut sum = term;
        for k in 3..=12 {
            term = term * x / T::from_count(k);
            sum += term;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

impl<T: Scalar> LevySpec<T> {
    pub fn brownian(var: T) -> Self {
        Self { brownian_var: var, jump_rate: T::zero(), atoms: Vec::new() }
    }

    pub fn new(brownian_var: T, jump_rate: T, atoms: Vec<(T, T)>) -> Result<Self> {
        let s = Self { brownian_var, jump_rate, atoms };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.brownian_var >= T::zero()) || !self.brownian_var.is_finite() {
            return bad(format!("brownian variance {} must be finite and >= 0", self.brownian_var));
        }
        if !(self.jump_rate >= T::zero()) || !self.jump_rate.is_finite() {
            return bad(format!("jump rate {} must be finite and >= 0", self.jump_rate));
        }
        if self.jump_rate > T::zero() && self.atoms.is_empty() {
            return bad("positive jump rate without jump atoms".into());
        }
        if !self.atoms.is_empty() {
            let mut total = T::zero();
            for &(z, p) in &self.atoms {
                if !z.is_finite() || !(p >= T::zero()) {
                    return bad(format!("jump atom ({z}, {p}) invalid"));
                }
                total += p;
            }
            if (total - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(16.0)) {
                return bad(format!("jump probabilities sum to {total}, not 1"));
            }
        }
        Ok(())
    }

    pub fn has_jumps(&self) -> bool {
        self.jump_rate > T::zero()
    }

    /// `lambda * E[z]`, removed per unit time so the process has mean zero.
    pub fn compensator(&self) -> T {
        self.jump_rate * self.atoms.iter().map(|&(z, p)| z * p).sum::<T>()
    }

    pub fn jump_variance(&self) -> T {
        self.jump_rate * self.atoms.iter().map(|&(z, p)| z * z * p).sum::<T>()
    }

    /// Variance of the process at time 1.
    pub fn variance(&self) -> T {
        self.brownian_var + self.jump_variance()
    }

    /// Log-Laplace exponent per unit time:
    /// `c u^2 / 2 + lambda * sum_k p_k (e^{u z_k} - 1 - u z_k)`.
    pub fn psi(&self, u: T) -> T {
        let jumps: T = self.atoms.iter().map(|&(z, p)| p * exp_remainder(u * z)).sum();
        T::lit(0.5) * self.brownian_var * u * u + self.jump_rate * jumps
    }

    /// Jump intensity `lambda * p` at size `z` (zero if `z` is not an atom).
    pub fn intensity_at(&self, z: T) -> T {
        self.atoms.iter().filter(|a| a.0 == z).map(|a| a.1).sum::<T>() * self.jump_rate
    }

    /// Whether `self` dominates `other`: larger Brownian variance and
    /// pointwise larger jump measure.
    pub fn dominates(&self, other: &Self) -> bool {
        let tol = T::lit(1e-12);
        if other.brownian_var > self.brownian_var * (T::one() + tol) + tol {
            return false;
        }
        let mut zs: Vec<T> = other.atoms.iter().map(|a| a.0).collect();
        zs.dedup();
        zs.into_iter().all(|z| other.intensity_at(z) <= self.intensity_at(z) * (T::one() + tol) + tol)
    }
}

/// Smallest spec dominating every input: maximal Brownian variance and
/// per-atom maximal jump intensity.
pub fn dominating_spec<T: Scalar>(specs: &[LevySpec<T>]) -> LevySpec<T> {
    let c0 = specs.iter().fold(T::zero(), |m, s| m.max(s.brownian_var));
    let mut zs: Vec<T> = specs
        .iter()
        .flat_map(|s| s.atoms.iter().filter(|a| a.1 > T::zero() && s.jump_rate > T::zero()).map(|a| a.0))
        .collect();
    zs.sort_by(|a, b| a.partial_cmp(b).expect("finite atoms"));
    zs.dedup();
    let weights: Vec<T> = zs.iter().map(|&z| specs.iter().fold(T::zero(), |m, s| m.max(s.intensity_at(z)))).collect();
    let rate: T = weights.iter().copied().sum();
    if rate == T::zero() {
        return LevySpec::brownian(c0);
    }
    LevySpec {
        brownian_var: c0,
        jump_rate: rate,
        atoms: zs.into_iter().zip(weights).map(|(z, w)| (z, w / rate)).collect(),
    }
}

/// Mean profile of a drift density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftShape<T> {
    Constant { value: T },
    Sinusoid { offset: T, amplitude: T, omega: T, phase: T },
}

/// Density `b_j` of `B_j`: deterministic mean profile plus optional
/// white-in-time noise of variance `var` (independent between time steps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftDensity<T> {
    pub shape: DriftShape<T>,
    pub var: T,
}

impl<T: Scalar> DriftDensity<T> {
    pub fn constant(value: T) -> Self {
        Self { shape: DriftShape::Constant { value }, var: T::zero() }
    }

    pub fn sinusoid(offset: T, amplitude: T, omega: T, phase: T) -> Self {
        Self { shape: DriftShape::Sinusoid { offset, amplitude, omega, phase }, var: T::zero() }
    }

    pub fn with_var(mut self, var: T) -> Self {
        self.var = var;
        self
    }

    pub fn var(&self) -> T {
        self.var
    }

    pub fn mean(&self, t: T) -> T {
        match self.shape {
            DriftShape::Constant { value } => value,
            DriftShape::Sinusoid { offset, amplitude, omega, phase } => offset + amplitude * (omega * t + phase).sin(),
        }
    }

    /// `sup_{t in [0, horizon]} |E b(t)|`, exact: endpoints plus every
    /// interior stationary point of the sinusoid.
    pub fn sup_abs_mean(&self, horizon: T) -> T {
        match self.shape {
            DriftShape::Constant { value } => value.abs(),
            DriftShape::Sinusoid { offset, amplitude, omega, phase } => {
                let mut best = self.mean(T::zero()).abs().max(self.mean(horizon).abs());
                if omega != T::zero() && amplitude != T::zero() {
                    let pi = T::lit(std::f64::consts::PI);
                    let half_pi = T::lit(std::f64::consts::FRAC_PI_2);
                    let (lo, hi) = {
                        let a = phase;
                        let b = omega * horizon + phase;
                        if a <= b {
                            (a, b)
                        } else {
                            (b, a)
                        }
                    };
                    // angles half_pi + k pi inside [lo, hi]
                    let k0 = ((lo - half_pi) / pi).ceil();
                    let k1 = ((hi - half_pi) / pi).floor();
                    if k1 >= k0 {
                        if k1 > k0 {
                            best = best.max((offset + amplitude).abs()).max((offset - amplitude).abs());
                        } else {
                            let s = (half_pi + k0 * pi).sin();
                            best = best.max((offset + amplitude * s).abs());
                        }
                    }
                }
                best
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match self.shape {
            DriftShape::Constant { value } => value.is_finite(),
            DriftShape::Sinusoid { offset, amplitude, omega, phase } => {
                offset.is_finite() && amplitude.is_finite() && omega.is_finite() && phase.is_finite()
            }
        };
        if !finite || !(self.var >= T::zero()) || !self.var.is_finite() {
            return Err(Error::InvalidParameter("drift density parameters must be finite, var >= 0".into()));
        }
        Ok(())
    }
}

/// Lower-triangular factor `F` with `F F' = C` for a symmetric PSD matrix,
/// or the entrywise square root of its diagonal when `C` is diagonal.
#[derive(Clone, Debug, PartialEq)]
enum Factor<T> {
    Diagonal(Vec<T>),
    Dense { n: usize, l: Vec<T> },
}

impl<T: Scalar> Factor<T> {
    fn new(c: &SparseMatrix<T>, what: &str) -> Result<Self> {
        let n = c.n_rows();
        if c.is_diagonal() {
            let d = c.diag();
            if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v >= T::zero())) {
                return Err(Error::NotPositiveSemidefinite(format!("{what}: diagonal entry {i} is {v}")));
            }
            return Ok(Factor::Diagonal(d.into_iter().map(|v| v.sqrt()).collect()));
        }
        if !c.is_symmetric(T::lit(1e-12)) {
            return Err(Error::NotPositiveSemidefinite(format!("{what}: not symmetric")));
        }
        let a = c.to_dense();
        let scale = a.iter().enumerate().fold(T::zero(), |m, (i, r)| m.max(r[i].abs()));
        let tol = scale * T::lit(1e-10);
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j][j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d < -tol {
                return Err(Error::NotPositiveSemidefinite(format!("{what}: negative pivot {d} at index {j}")));
            }
            if d <= tol {
                // semidefinite direction: the remaining column must vanish
                for i in j + 1..n {
                    let mut s = a[i][j];
                    for k in 0..j {
                        s -= l[i * n + k] * l[j * n + k];
                    }
                    if s.abs() > tol.sqrt() * scale.sqrt() + tol {
                        return Err(Error::NotPositiveSemidefinite(format!(
                            "{what}: inconsistent null direction at index {j}"
                        )));
                    }
                }
                continue;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Factor::Dense { n, l })
    }

    /// Number of standard normals consumed by `apply`.
    fn draws(&self) -> usize {
        match self {
            Factor::Diagonal(d) => d.iter().filter(|v| **v != T::zero()).count(),
            Factor::Dense { n, .. } => *n,
        }
    }

    /// Writes `scale * F z` into `out` with `z` drawn from `rng`.
    fn apply(&self, rng: &mut ChaCha8Rng, scale: T, z: &mut Vec<T>, out: &mut [T]) {
        match self {
            Factor::Diagonal(d) => {
                for (o, &s) in out.iter_mut().zip(d) {
                    *o = if s == T::zero() { T::zero() } else { scale * s * normal::<T>(rng) };
                }
            }
            Factor::Dense { n, l } => {
                z.clear();
                z.extend((0..*n).map(|_| normal::<T>(rng)));
                for i in 0..*n {
                    let mut s = T::zero();
                    for k in 0..=i {
                        s += l[i * n + k] * z[k];
                    }
                    out[i] = scale * s;
                }
            }
        }
    }
}

#[inline]
fn normal<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

/// Random generator for path `path_index` under master seed `seed`.
/// Paths use disjoint ChaCha streams, so results do not depend on which
/// thread draws which path.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Full description of the randomness driving one network.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel<T> {
    l_specs: Vec<LevySpec<T>>,
    m_specs: Vec<LevySpec<T>>,
    drifts: Vec<DriftDensity<T>>,
    x0_mean: Vec<T>,
    x0_cov: SparseMatrix<T>,
    l_cov: SparseMatrix<T>,
    l_factor: Factor<T>,
    x0_factor: Factor<T>,
}

fn symmetric_from<T: Scalar>(n: usize, diag: &[T], off: &[(usize, usize, T)], what: &str) -> Result<SparseMatrix<T>> {
    let mut trip: Vec<(usize, usize, T)> = diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
    for &(i, j, v) in off {
        if i == j {
            return Err(Error::InvalidParameter(format!(
                "{what}: diagonal ({i}, {i}) must come from the per-component variances"
            )));
        }
        trip.push((i, j, v));
        trip.push((j, i, v));
    }
    SparseMatrix::from_triplets(n, n, trip).map_err(|e| match e {
        Error::DuplicateEntry { row, col, .. } => Error::DuplicateEntry { what: what.into(), row, col },
        other => other,
    })
}

impl<T: Scalar> NoiseModel<T> {
    /// Independent components; `x0_var` holds per-particle variances.
    pub fn independent(
        l_specs: Vec<LevySpec<T>>,
        m_specs: Vec<LevySpec<T>>,
        drifts: Vec<DriftDensity<T>>,
        x0_mean: Vec<T>,
        x0_var: Vec<T>,
    ) -> Result<Self> {
        Self::new(l_specs, m_specs, drifts, x0_mean, x0_var, &[], &[])
    }

    /// General constructor. `l_offdiag` and `x0_offdiag` list covariances
    /// `(i, j, value)` with `i != j`; each pair is mirrored.
    pub fn new(
        l_specs: Vec<LevySpec<T>>,
        m_specs: Vec<LevySpec<T>>,
        drifts: Vec<DriftDensity<T>>,
        x0_mean: Vec<T>,
        x0_var: Vec<T>,
        l_offdiag: &[(usize, usize, T)],
        x0_offdiag: &[(usize, usize, T)],
    ) -> Result<Self> {
        let n = l_specs.len();
        let m = m_specs.len();
        if drifts.len() != m {
            return Err(Error::DimensionMismatch(format!("{} drift densities for {m} noise columns", drifts.len())));
        }
        if x0_mean.len() != n || x0_var.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial law has {} means and {} variances for {n} particles",
                x0_mean.len(),
                x0_var.len()
            )));
        }
        for s in l_specs.iter().chain(&m_specs) {
            s.validate()?;
        }
        for d in &drifts {
            d.validate()?;
        }
        if x0_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("initial means must be finite".into()));
        }
        let l_var: Vec<T> = l_specs.iter().map(|s| s.variance()).collect();
        let l_cov = symmetric_from(n, &l_var, l_offdiag, "l_cov")?;
        let x0_cov = symmetric_from(n, &x0_var, x0_offdiag, "x0_cov")?;
        // jumps are independent across components; correlations live in the
        // Brownian parts
        let bm_var: Vec<T> = l_specs.iter().map(|s| s.brownian_var).collect();
        let bm_cov = symmetric_from(n, &bm_var, l_offdiag, "l_cov")?;
        let l_factor = Factor::new(&bm_cov, "Brownian part of L covariance")?;
        let x0_factor = Factor::new(&x0_cov, "initial covariance")?;
        Ok(Self { l_specs, m_specs, drifts, x0_mean, x0_cov, l_cov, l_factor, x0_factor })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.l_specs.len()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m_specs.len()
    }

    pub fn l_specs(&self) -> &[LevySpec<T>] {
        &self.l_specs
    }

    pub fn m_specs(&self) -> &[LevySpec<T>] {
        &self.m_specs
    }

    pub fn drifts(&self) -> &[DriftDensity<T>] {
        &self.drifts
    }

    pub fn x0_mean(&self) -> &[T] {
        &self.x0_mean
    }

    /// `Cov[X(0)]`.
    pub fn x0_cov(&self) -> &SparseMatrix<T> {
        &self.x0_cov
    }

    /// `Cov[L(1)]`.
    pub fn l_cov(&self) -> &SparseMatrix<T> {
        &self.l_cov
    }

    pub fn x0_variance(&self, i: usize) -> T {
        self.x0_cov.get(i, i)
    }

    pub fn l_variances(&self) -> Vec<T> {
        self.l_cov.diag()
    }

    /// Diagonal of the covariance density `c` of `M`.
    pub fn m_variances(&self) -> Vec<T> {
        self.m_specs.iter().map(|s| s.variance()).collect()
    }

    /// Per-column variances of the drift densities.
    pub fn b_variances(&self) -> Vec<T> {
        self.drifts.iter().map(|d| d.var).collect()
    }

    pub fn b_mean(&self, t: T) -> Vec<T> {
        self.drifts.iter().map(|d| d.mean(t)).collect()
    }

    pub fn x0_is_deterministic(&self) -> bool {
        self.x0_cov.is_zero()
    }

    /// Relabels particles by `pp` and noise columns by `pm`.
    pub fn permute(&self, pp: &[usize], pm: &[usize]) -> Result<Self> {
        let inv = |p: &[usize]| {
            let mut q = vec![0; p.len()];
            for (i, &j) in p.iter().enumerate() {
                q[j] = i;
            }
            q
        };
        let (ip, im) = (inv(pp), inv(pm));
        let offdiag = |c: &SparseMatrix<T>| -> Vec<(usize, usize, T)> {
            c.triplets().filter(|&(i, j, _)| i < j).map(|(i, j, v)| (pp[i], pp[j], v)).collect()
        };
        Self::new(
            ip.iter().map(|&i| self.l_specs[i].clone()).collect(),
            im.iter().map(|&j| self.m_specs[j].clone()).collect(),
            im.iter().map(|&j| self.drifts[j].clone()).collect(),
            ip.iter().map(|&i| self.x0_mean[i]).collect(),
            ip.iter().map(|&i| self.x0_variance(i)).collect(),
            &offdiag(&self.l_cov),
            &offdiag(&self.x0_cov),
        )
    }

    /// Draws `X(0)`; must be the first use of a path generator.
    pub fn sample_x0(&self, rng: &mut ChaCha8Rng, scratch: &mut Vec<T>, out: &mut [T]) {
        self.x0_factor.apply(rng, T::one(), scratch, out);
        for (o, &mu) in out.iter_mut().zip(&self.x0_mean) {
            *o += mu;
        }
    }

    /// Draws one step `[t, t + dt]`: increments of `L` and `M` and the
    /// realized drift density `b(t)`, in that order.
    #[allow(clippy::too_many_arguments)]
    pub fn sample_step(
        &self,
        rng: &mut ChaCha8Rng,
        t: T,
        dt: T,
        scratch: &mut Vec<T>,
        dl: &mut [T],
        dm: &mut [T],
        b: &mut [T],
    ) {
        let sdt = dt.sqrt();
        self.l_factor.apply(rng, sdt, scratch, dl);
        for (x, s) in dl.iter_mut().zip(&self.l_specs) {
            if s.has_jumps() {
                *x += jump_increment(rng, s, dt);
            }
        }
        for (x, s) in dm.iter_mut().zip(&self.m_specs) {
            let mut v = T::zero();
            if s.brownian_var > T::zero() {
                v = sdt * s.brownian_var.sqrt() * normal::<T>(rng);
            }
            if s.has_jumps() {
                v += jump_increment(rng, s, dt);
            }
            *x = v;
        }
        for (x, d) in b.iter_mut().zip(&self.drifts) {
            *x = d.mean(t);
            if d.var > T::zero() {
                *x += d.var.sqrt() * normal::<T>(rng);
            }
        }
    }

    /// Normals consumed per step by the Brownian parts, for diagnostics.
    pub fn normals_per_step(&self) -> usize {
        self.l_factor.draws()
            + self.m_specs.iter().filter(|s| s.brownian_var > T::zero()).count()
            + self.drifts.iter().filter(|d| d.var > T::zero()).count()
    }

    /// Samples a complete realization on `grid`.
    pub fn sample_path(&self, grid: &[T], seed: u64, path_index: u64) -> Result<NoisePath<T>> {
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("grid must have at least two strictly increasing points".into()));
        }
        let mut rng = path_rng(seed, path_index);
        let mut scratch = Vec::new();
        let mut x0 = vec![T::zero(); self.n()];
        self.sample_x0(&mut rng, &mut scratch, &mut x0);
        let steps = grid.len() - 1;
        let mut dl = vec![vec![T::zero(); self.n()]; steps];
        let mut dm = vec![vec![T::zero(); self.m()]; steps];
        let mut b = vec![vec![T::zero(); self.m()]; steps];
        for k in 0..steps {
            let dt = grid[k + 1] - grid[k];
            self.sample_step(&mut rng, grid[k], dt, &mut scratch, &mut dl[k], &mut dm[k], &mut b[k]);
        }
        Ok(NoisePath { grid: grid.to_vec(), x0, dl, dm, b })
    }
}

fn jump_increment<T: Scalar>(rng: &mut ChaCha8Rng, s: &LevySpec<T>, dt: T) -> T {
    let mut v = -s.compensator() * dt;
    for &(z, p) in &s.atoms {
        let mean = (s.jump_rate * p * dt).f64();
        if mean > 0.0 {
            let k: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
            v += z * T::lit(k);
        }
    }
    v
}

/// One realization of the noise on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath<T> {
    pub grid: Vec<T>,
    pub x0: Vec<T>,
    /// `dl[k][i]`: increment of `L_i` over step `k`.
    pub dl: Vec<Vec<T>>,
    pub dm: Vec<Vec<T>>,
    /// Realized drift density at the left end of each step.
    pub b: Vec<Vec<T>>,
}

impl<T: Scalar> NoisePath<T> {
    /// CSV with columns `step,index,dL,dM,b`; fields beyond a component's
    /// range are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,index,dL,dM,b")?;
        let opt = |v: Option<&T>| v.map(|x| x.to_string()).unwrap_or_default();
        for k in 0..self.dl.len() {
            let width = self.dl[k].len().max(self.dm[k].len());
            for i in 0..width {
                writeln!(w, "{k},{i},{},{},{}", opt(self.dl[k].get(i)), opt(self.dm[k].get(i)), opt(self.b[k].get(i)))?;
            }
        }
        Ok(())
    }
}

/// Uniform grid `0, T/K, ..., T`.
pub fn uniform_grid<T: Scalar>(horizon: T, steps: usize) -> Vec<T> {
    let h = horizon / T::from_count(steps);
    (0..=steps).map(|k| if k == steps { horizon } else { h * T::from_count(k) }).collect()
}
