//! Euler–Maruyama integration of the interacting system and its partial
//! mean-field counterpart on shared noise, and Monte Carlo estimation of
//! their sup-L² distance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{check_noise_dims, CoefficientSet};
use crate::noise::{path_rng, uniform_grid, NoiseModel};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Keep every `record_stride`-th grid point in recorded trajectories.
    pub record_stride: usize,
}

impl SimConfig {
    pub fn new(horizon: f64, steps: usize, n_paths: usize, seed: u64) -> Self {
        Self { horizon, steps, n_paths, seed, record_stride: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon {} must be positive", self.horizon)));
        }
        if self.steps == 0 || self.n_paths == 0 || self.record_stride == 0 {
            return Err(Error::InvalidParameter("steps, n_paths and record_stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// Noise realized over one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise<T> {
    pub dl: Vec<T>,
    pub dm: Vec<T>,
    /// Drift density evaluated at the left end of the step.
    pub b: Vec<T>,
}

/// `E[X̄(t)]` on `grid` by classical RK4 applied to `m' = a m + f E[b(t)]`.
pub fn solve_mean_curve<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    noise: &NoiseModel<T>,
    grid: &[T],
) -> Result<Vec<Vec<T>>> {
    check_noise_dims(coeffs, noise)?;
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("grid must be non-empty and strictly increasing".into()));
    }
    let a = coeffs.a_total();
    let f = coeffs.f_total();
    let rhs = |t: T, x: &[T]| -> Vec<T> {
        let mut y = a.matvec(x);
        if !f.is_zero() {
            let fb = f.matvec(&noise.b_mean(t));
            for (yi, v) in y.iter_mut().zip(fb) {
                *yi += v;
            }
        }
        y
    };
    let axpy = |x: &[T], s: T, k: &[T]| -> Vec<T> { x.iter().zip(k).map(|(&a, &b)| a + s * b).collect() };
    let mut out = Vec::with_capacity(grid.len());
    let mut m = noise.x0_mean().to_vec();
    out.push(m.clone());
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    for w in grid.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let k1 = rhs(t, &m);
        let k2 = rhs(t + h / two, &axpy(&m, h / two, &k1));
        let k3 = rhs(t + h / two, &axpy(&m, h / two, &k2));
        let k4 = rhs(t + h, &axpy(&m, h, &k3));
        for i in 0..m.len() {
            m[i] += h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        out.push(m.clone());
    }
    Ok(out)
}

/// Linear operator on particle vectors, specialised for rows whose
/// off-diagonal entries all carry one value.
enum Op<'a, T> {
    Zero,
    Sparse(&'a SparseMatrix<T>),
    Uniform { off: Vec<T>, diag: Vec<T> },
}

impl<'a, T: Scalar> Op<'a, T> {
    fn new(mat: &'a SparseMatrix<T>) -> Self {
        if mat.is_zero() {
            return Op::Zero;
        }
        Self::uniform(mat).unwrap_or(Op::Sparse(mat))
    }

    fn rect(mat: &'a SparseMatrix<T>) -> Self {
        if mat.is_zero() {
            Op::Zero
        } else {
            Op::Sparse(mat)
        }
    }

    fn uniform(mat: &SparseMatrix<T>) -> Option<Self> {
        let n = mat.n_rows();
        if n < 8 || mat.n_cols() != n {
            return None;
        }
        let mut off = Vec::with_capacity(n);
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let (c, v) = mat.row(i);
            let mut d = T::zero();
            let mut w = None;
            let mut count = 0;
            for (&j, &x) in c.iter().zip(v) {
                if j == i {
                    d = x;
                } else {
                    count += 1;
                    match w {
                        None => w = Some(x),
                        Some(y) if y == x => {}
                        _ => return None,
                    }
                }
            }
            if count != n - 1 {
                return None;
            }
            off.push(w.unwrap_or(T::zero()));
            diag.push(d);
        }
        Some(Op::Uniform { off, diag })
    }

    fn is_zero(&self) -> bool {
        matches!(self, Op::Zero)
    }

    #[inline]
    fn apply(&self, x: &[T], out: &mut [T]) {
        match self {
            Op::Zero => {}
            Op::Sparse(m) => m.matvec_into(x, out),
            Op::Uniform { off, diag } => {
                let s: T = x.iter().copied().sum();
                for i in 0..out.len() {
                    out[i] = off[i] * (s - x[i]) + diag[i] * x[i];
                }
            }
        }
    }
}

struct Ops<'a, T> {
    ac: Op<'a, T>,
    ap: Op<'a, T>,
    sc: Op<'a, T>,
    sp: Op<'a, T>,
    fc: Op<'a, T>,
    fp: Op<'a, T>,
    rc: Op<'a, T>,
    rp: Op<'a, T>,
}

impl<'a, T: Scalar> Ops<'a, T> {
    fn new(c: &'a CoefficientSet<T>, specialise: bool) -> Self {
        let sq = |m: &'a SparseMatrix<T>| if specialise { Op::new(m) } else { Op::rect(m) };
        Self {
            ac: sq(c.a_core()),
            ap: sq(c.a_periphery()),
            sc: sq(c.sigma_core()),
            sp: sq(c.sigma_periphery()),
            fc: Op::rect(c.f_core()),
            fp: Op::rect(c.f_periphery()),
            rc: Op::rect(c.rho_core()),
            rp: Op::rect(c.rho_periphery()),
        }
    }
}

/// Scratch vectors for one step; entries for zero operators stay zero.
struct Work<T> {
    core_drift: Vec<T>,
    per_drift: Vec<T>,
    core_vol: Vec<T>,
    per_vol: Vec<T>,
    core_force: Vec<T>,
    per_force: Vec<T>,
    core_noise: Vec<T>,
    per_noise: Vec<T>,
}

impl<T: Scalar> Work<T> {
    fn new(n: usize) -> Self {
        let z = || vec![T::zero(); n];
        Self {
            core_drift: z(),
            per_drift: z(),
            core_vol: z(),
            per_vol: z(),
            core_force: z(),
            per_force: z(),
            core_noise: z(),
            per_noise: z(),
        }
    }
}

/// `x += h (aC x + P) + (sC x + Q) . dL + h (fC b + F) + (rC dM + G)`,
/// the common shape of both schemes.
#[inline]
fn advance<T: Scalar>(x: &mut [T], h: T, dl: &[T], w: &Work<T>) {
    for i in 0..x.len() {
        let drift = w.core_drift[i] + w.per_drift[i];
        let vol = w.core_vol[i] + w.per_vol[i];
        let force = w.core_force[i] + w.per_force[i];
        let noise = w.core_noise[i] + w.per_noise[i];
        x[i] = x[i] + h * drift + vol * dl[i] + h * force + noise;
    }
}

/// Deterministic periphery inputs of the mean-field scheme at one grid time.
struct MeanInputs<T> {
    ap_m: Vec<T>,
    sp_m: Vec<T>,
    fp_eb: Vec<T>,
}

fn mean_inputs<T: Scalar>(ops: &Ops<'_, T>, noise: &NoiseModel<T>, m: &[T], t: T) -> MeanInputs<T> {
    let n = m.len();
    let mut r = MeanInputs { ap_m: vec![T::zero(); n], sp_m: vec![T::zero(); n], fp_eb: vec![T::zero(); n] };
    ops.ap.apply(m, &mut r.ap_m);
    ops.sp.apply(m, &mut r.sp_m);
    if !ops.fp.is_zero() {
        ops.fp.apply(&noise.b_mean(t), &mut r.fp_eb);
    }
    r
}

/// Shared pieces (`fC b`, `rC dM`) enter both schemes identically.
fn shared_terms<T: Scalar>(ops: &Ops<'_, T>, inc: &StepNoise<T>, w: &mut Work<T>) {
    ops.fc.apply(&inc.b, &mut w.core_force);
    ops.rc.apply(&inc.dm, &mut w.core_noise);
}

fn ips_terms<T: Scalar>(ops: &Ops<'_, T>, x: &[T], inc: &StepNoise<T>, w: &mut Work<T>) {
    ops.ac.apply(x, &mut w.core_drift);
    ops.ap.apply(x, &mut w.per_drift);
    ops.sc.apply(x, &mut w.core_vol);
    ops.sp.apply(x, &mut w.per_vol);
    ops.fp.apply(&inc.b, &mut w.per_force);
    ops.rp.apply(&inc.dm, &mut w.per_noise);
}

fn pmfs_terms<T: Scalar>(ops: &Ops<'_, T>, x: &[T], mean: &MeanInputs<T>, w: &mut Work<T>) {
    ops.ac.apply(x, &mut w.core_drift);
    if !ops.ap.is_zero() {
        w.per_drift.copy_from_slice(&mean.ap_m);
    }
    ops.sc.apply(x, &mut w.core_vol);
    if !ops.sp.is_zero() {
        w.per_vol.copy_from_slice(&mean.sp_m);
    }
    if !ops.fp.is_zero() {
        w.per_force.copy_from_slice(&mean.fp_eb);
    }
    // rho periphery is absent from the mean-field system
    for v in &mut w.per_noise {
        *v = T::zero();
    }
}

/// One Euler–Maruyama step of the interacting system.
pub fn step_ips<T: Scalar>(state: &mut [T], coeffs: &CoefficientSet<T>, inc: &StepNoise<T>, dt: T) {
    let ops = Ops::new(coeffs, false);
    let mut w = Work::new(state.len());
    shared_terms(&ops, inc, &mut w);
    ips_terms(&ops, state, inc, &mut w);
    advance(state, dt, &inc.dl, &w);
}

/// One Euler–Maruyama step of the partial mean-field system; `mean` is
/// `E[X̄]` and `mean_b` is `E[b]` at the left end of the step.
pub fn step_pmfs<T: Scalar>(
    state: &mut [T],
    mean: &[T],
    mean_b: &[T],
    coeffs: &CoefficientSet<T>,
    inc: &StepNoise<T>,
    dt: T,
) {
    let ops = Ops::new(coeffs, false);
    let n = state.len();
    let mut mi = MeanInputs { ap_m: vec![T::zero(); n], sp_m: vec![T::zero(); n], fp_eb: vec![T::zero(); n] };
    ops.ap.apply(mean, &mut mi.ap_m);
    ops.sp.apply(mean, &mut mi.sp_m);
    ops.fp.apply(mean_b, &mut mi.fp_eb);
    let mut w = Work::new(n);
    shared_terms(&ops, inc, &mut w);
    pmfs_terms(&ops, state, &mi, &mut w);
    advance(state, dt, &inc.dl, &w);
}

/// Per-path coupled integrator with precomputed mean-field inputs.
struct Engine<'a, T> {
    noise: &'a NoiseModel<T>,
    ops: Ops<'a, T>,
    means: Vec<MeanInputs<T>>,
    curve: Vec<Vec<T>>,
    grid: Vec<T>,
    h: T,
    n: usize,
    m: usize,
}

/// What one path reports back.
struct PathOutcome<T> {
    /// `max_k |X_i(t_k) - X̄_i(t_k)|` per particle; `None` if the path blew up.
    maxima: Option<Vec<T>>,
}

impl<'a, T: Scalar> Engine<'a, T> {
    fn new(coeffs: &'a CoefficientSet<T>, noise: &'a NoiseModel<T>, sim: &SimConfig) -> Result<Self> {
        sim.validate()?;
        check_noise_dims(coeffs, noise)?;
        let grid = uniform_grid(T::lit(sim.horizon), sim.steps);
        let curve = solve_mean_curve(coeffs, noise, &grid)?;
        let ops = Ops::new(coeffs, true);
        let means = curve.iter().zip(&grid).map(|(m, &t)| mean_inputs(&ops, noise, m, t)).collect();
        Ok(Self { noise, ops, means, curve, h: T::lit(sim.dt()), grid, n: coeffs.n(), m: coeffs.m() })
    }

    fn run_path<F: FnMut(usize, &[T], &[T])>(&self, seed: u64, index: u64, mut observe: F) -> PathOutcome<T> {
        let (n, m) = (self.n, self.m);
        let mut rng = path_rng(seed, index);
        let mut scratch = Vec::new();
        let mut x = vec![T::zero(); n];
        self.noise.sample_x0(&mut rng, &mut scratch, &mut x);
        let mut xb = x.clone();
        let mut inc = StepNoise { dl: vec![T::zero(); n], dm: vec![T::zero(); m], b: vec![T::zero(); m] };
        let mut wi = Work::new(n);
        let mut wp = Work::new(n);
        let mut maxima = vec![T::zero(); n];
        observe(0, &x, &xb);
        for k in 0..self.grid.len() - 1 {
            let t = self.grid[k];
            self.noise.sample_step(&mut rng, t, self.h, &mut scratch, &mut inc.dl, &mut inc.dm, &mut inc.b);
            shared_terms(&self.ops, &inc, &mut wi);
            wp.core_force.copy_from_slice(&wi.core_force);
            wp.core_noise.copy_from_slice(&wi.core_noise);
            ips_terms(&self.ops, &x, &inc, &mut wi);
            pmfs_terms(&self.ops, &xb, &self.means[k], &mut wp);
            advance(&mut x, self.h, &inc.dl, &wi);
            advance(&mut xb, self.h, &inc.dl, &wp);
            let mut finite = true;
            for i in 0..n {
                let d = (x[i] - xb[i]).abs();
                finite &= d.is_finite();
                if d > maxima[i] {
                    maxima[i] = d;
                }
            }
            if !finite {
                return PathOutcome { maxima: None };
            }
            observe(k + 1, &x, &xb);
        }
        PathOutcome { maxima: Some(maxima) }
    }
}

/// Running maxima of `|X_i - X̄_i|` over the grid for every path, in path
/// order. Paths that produced non-finite values are `None`.
pub struct PathMaxima<T> {
    pub n: usize,
    pub per_path: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> PathMaxima<T> {
    pub fn flagged(&self) -> usize {
        self.per_path.iter().filter(|p| p.is_none()).count()
    }
}

const CHUNK: usize = 32;

/// Simulates `sim.n_paths` coupled path pairs. Work is spread over the
/// current rayon pool; results are independent of the thread count.
pub fn path_maxima<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    noise: &NoiseModel<T>,
    sim: &SimConfig,
) -> Result<PathMaxima<T>> {
    let engine = Engine::new(coeffs, noise, sim)?;
    let chunks = sim.n_paths.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<Option<Vec<T>>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(sim.n_paths);
            (lo..hi).map(|p| engine.run_path(sim.seed, p as u64, |_, _, _| {}).maxima).collect()
        })
        .collect();
    let per_path: Vec<Option<Vec<T>>> = per_chunk.into_iter().flatten().collect();
    let flagged = per_path.iter().filter(|p| p.is_none()).count();
    if flagged * 100 > sim.n_paths {
        return Err(Error::TooManyFlaggedPaths { flagged, total: sim.n_paths });
    }
    Ok(PathMaxima { n: coeffs.n(), per_path })
}

/// Monte Carlo estimate of `sup_i || sup_t |X_i - X̄_i| ||_{L^2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub delta_hat: f64,
    /// Path-level jackknife standard error of `delta_hat`.
    pub std_err: f64,
    pub per_particle: Vec<f64>,
    pub n_paths: usize,
    pub flagged: usize,
}

/// Reduces path maxima in path order.
pub fn summarize<T: Scalar>(pm: &PathMaxima<T>) -> ErrorEstimate {
    let n = pm.n;
    let rows: Vec<&Vec<T>> = pm.per_path.iter().flatten().collect();
    let p = rows.len();
    let mut sums = vec![0f64; n];
    for r in &rows {
        for (s, v) in sums.iter_mut().zip(r.iter()) {
            *s += v.f64() * v.f64();
        }
    }
    let pf = p as f64;
    let per_particle: Vec<f64> = sums.iter().map(|s| (s / pf).sqrt()).collect();
    let delta_hat = per_particle.iter().copied().fold(0.0, f64::max);
    let std_err = if p < 2 {
        0.0
    } else {
        let loo: Vec<f64> = rows
            .iter()
            .map(|r| {
                sums.iter()
                    .zip(r.iter())
                    .map(|(s, v)| ((s - v.f64() * v.f64()).max(0.0) / (pf - 1.0)).sqrt())
                    .fold(0.0, f64::max)
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / pf;
        let ss: f64 = loo.iter().map(|v| (v - mean) * (v - mean)).sum();
        ((pf - 1.0) / pf * ss).sqrt()
    };
    ErrorEstimate { delta_hat, std_err, per_particle, n_paths: p, flagged: pm.flagged() }
}

pub fn estimate_error<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    noise: &NoiseModel<T>,
    sim: &SimConfig,
) -> Result<ErrorEstimate> {
    coeffs.check_periphery_diagonals()?;
    Ok(summarize(&path_maxima(coeffs, noise, sim)?))
}

/// One recorded path pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTrajectory<T> {
    pub times: Vec<T>,
    pub x: Vec<Vec<T>>,
    pub xbar: Vec<Vec<T>>,
    pub mean_curve: Vec<Vec<T>>,
    /// False if the path produced non-finite values (recording stops there).
    pub finite: bool,
}

pub fn simulate_pair<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    noise: &NoiseModel<T>,
    sim: &SimConfig,
    path_index: u64,
) -> Result<PairTrajectory<T>> {
    let engine = Engine::new(coeffs, noise, sim)?;
    let stride = sim.record_stride;
    let mut tr =
        PairTrajectory { times: Vec::new(), x: Vec::new(), xbar: Vec::new(), mean_curve: Vec::new(), finite: true };
    let out = engine.run_path(sim.seed, path_index, |k, x, xb| {
        if k % stride == 0 || k == sim.steps {
            tr.times.push(engine.grid[k]);
            tr.x.push(x.to_vec());
            tr.xbar.push(xb.to_vec());
            tr.mean_curve.push(engine.curve[k].clone());
        }
    });
    tr.finite = out.maxima.is_some();
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::MatrixRole;
    use crate::noise::{DriftDensity, LevySpec};

    fn quiet(n: usize, m: usize, x0: Vec<f64>) -> NoiseModel<f64> {
        NoiseModel::independent(
            vec![LevySpec::brownian(0.0); n],
            vec![LevySpec::brownian(0.0); m],
            vec![DriftDensity::constant(0.0); m],
            x0,
            vec![0.0; n],
        )
        .unwrap()
    }

    fn inc(n: usize, m: usize) -> StepNoise<f64> {
        StepNoise { dl: vec![0.0; n], dm: vec![0.0; m], b: vec![0.0; m] }
    }

    #[test]
    fn scalar_euler() {
        let c = CoefficientSet::from_triplets(1, 1, vec![(MatrixRole::ACore, vec![(0, 0, -1.0)])]).unwrap();
        let mut x = vec![1.0];
        step_ips(&mut x, &c, &inc(1, 1), 0.01);
        assert_eq!(x, vec![0.99]);
        let mut z = vec![3.0];
        step_ips(&mut z, &CoefficientSet::zeros(1, 1), &inc(1, 1), 0.5);
        assert_eq!(z, vec![3.0]);
    }

    #[test]
    fn entrywise_volatility() {
        let c =
            CoefficientSet::from_triplets(2, 1, vec![(MatrixRole::SigmaCore, vec![(0, 0, 1.0), (1, 1, 1.0)])]).unwrap();
        let mut x = vec![2.0, -1.0];
        let mut s = inc(2, 1);
        s.dl = vec![0.1, 0.1];
        step_ips(&mut x, &c, &s, 0.01);
        assert!((x[0] - 2.2).abs() < 1e-15 && (x[1] + 1.1).abs() < 1e-15);
    }

    #[test]
    fn rho_periphery_absent_from_mean_field() {
        let c = CoefficientSet::from_triplets(1, 1, vec![(MatrixRole::RhoPeriphery, vec![(0, 0, 1.0)])]).unwrap();
        let mut s = inc(1, 1);
        s.dm = vec![0.3];
        let mut x = vec![1.0];
        let mut xb = vec![1.0];
        step_ips(&mut x, &c, &s, 0.1);
        step_pmfs(&mut xb, &[1.0], &[0.0], &c, &s, 0.1);
        assert_eq!(x, vec![1.3]);
        assert_eq!(xb, vec![1.0]);
    }

    #[test]
    fn exponential_mean_curve() {
        let c = CoefficientSet::from_triplets(1, 1, vec![(MatrixRole::ACore, vec![(0, 0, -1.0)])]).unwrap();
        let g = uniform_grid(1.0, 100);
        let mc = solve_mean_curve(&c, &quiet(1, 1, vec![1.0]), &g).unwrap();
        let err = mc.iter().zip(&g).map(|(m, &t)| (m[0] - (-t).exp()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_mean_without_drift() {
        let g = uniform_grid(1.0, 10);
        let mc = solve_mean_curve(&CoefficientSet::zeros(2, 1), &quiet(2, 1, vec![0.5, -2.0]), &g).unwrap();
        assert!(mc.iter().all(|m| m == &vec![0.5, -2.0]));
    }

    #[test]
    fn deterministic_start_follows_mean_curve() {
        let c = CoefficientSet::from_triplets(
            2,
            2,
            vec![
                (MatrixRole::ACore, vec![(0, 0, -1.0), (1, 1, -0.5)]),
                (MatrixRole::APeriphery, vec![(0, 1, 0.3), (1, 0, 0.2)]),
                (MatrixRole::FPeriphery, vec![(0, 0, 1.0)]),
            ],
        )
        .unwrap();
        let mut noise = quiet(2, 2, vec![1.0, -1.0]);
        noise = NoiseModel::independent(
            noise.l_specs().to_vec(),
            noise.m_specs().to_vec(),
            vec![DriftDensity::constant(0.7), DriftDensity::constant(0.0)],
            vec![1.0, -1.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let sim = SimConfig::new(1.0, 50, 1, 3);
        let tr = simulate_pair(&c, &noise, &sim, 0).unwrap();
        // Euler vs RK4 differ at O(h)
        for (xb, m) in tr.xbar.iter().zip(&tr.mean_curve) {
            for i in 0..2 {
                assert!((xb[i] - m[i]).abs() < 2e-2);
            }
        }
    }

    #[test]
    fn self_loop_periphery_rejected() {
        let c = CoefficientSet::from_triplets(1, 1, vec![(MatrixRole::APeriphery, vec![(0, 0, 1.0)])]).unwrap();
        let e = estimate_error(&c, &quiet(1, 1, vec![0.0]), &SimConfig::new(1.0, 10, 10, 0));
        assert!(matches!(e, Err(Error::Layout(_))));
    }

    #[test]
    fn uniform_operator_matches_sparse() {
        let n = 12;
        let trip: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j, if i == j { -1.0 - i as f64 } else { 0.1 * (i + 1) as f64 })))
            .collect();
        let a = SparseMatrix::from_triplets(n, n, trip).unwrap();
        let op = Op::new(&a);
        assert!(matches!(op, Op::Uniform { .. }));
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut y = vec![0.0; n];
        op.apply(&x, &mut y);
        for (u, v) in y.iter().zip(a.matvec(&x)) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn flags_blow_up() {
        let c = CoefficientSet::from_triplets(
            2,
            1,
            vec![(MatrixRole::ACore, vec![(0, 0, 1e6)]), (MatrixRole::APeriphery, vec![(0, 1, 1.0)])],
        )
        .unwrap();
        let noise = quiet(2, 1, vec![1.0, 1.0]);
        let e = estimate_error(&c, &noise, &SimConfig::new(100.0, 100, 10, 0));
        assert!(matches!(e, Err(Error::TooManyFlaggedPaths { flagged: 10, total: 10 })));
    }
}
