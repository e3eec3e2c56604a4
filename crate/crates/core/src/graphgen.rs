//! Directed preferential-attachment multigraphs, their degree extremes and
//! normalizer sequences, and conversion into interaction supports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{CoefficientSet, CorePeripheryLayout, MatrixRole};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PAParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta_in: f64,
    pub delta_out: f64,
    /// Starting edge set. Non-isolated vertices must be exactly `0..n(0)`.
    #[serde(default = "default_initial")]
    pub initial_edges: Vec<(usize, usize)>,
}

fn default_initial() -> Vec<(usize, usize)> {
    vec![(0, 0)]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeKind {
    In,
    Out,
}

impl PAParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta_in: f64, delta_out: f64) -> Result<Self> {
        let p = Self { alpha, beta, gamma, delta_in, delta_out, initial_edges: default_initial() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_initial_edges(mut self, edges: Vec<(usize, usize)>) -> Result<Self> {
        self.initial_edges = edges;
        self.validate()?;
        Ok(self)
    }

    /// Full model validation, including `alpha + gamma > 0`.
    pub fn validate(&self) -> Result<()> {
        self.validate_for_generation()?;
        if !(self.alpha + self.gamma > 0.0) {
            return Err(Error::InvalidParameter("alpha + gamma must be positive".into()));
        }
        Ok(())
    }

    /// Growth is well defined without `alpha + gamma > 0`; the pure-beta
    /// chain keeps a single vertex.
    pub fn validate_for_generation(&self) -> Result<()> {
        let probs = [self.alpha, self.beta, self.gamma];
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter("alpha, beta, gamma must be non-negative".into()));
        }
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("alpha + beta + gamma must equal 1".into()));
        }
        if !(self.delta_in >= 0.0 && self.delta_out >= 0.0 && self.delta_in.is_finite() && self.delta_out.is_finite()) {
            return Err(Error::InvalidParameter("degree shifts must be finite and non-negative".into()));
        }
        if self.initial_edges.is_empty() {
            return Err(Error::InvalidParameter("initial graph needs at least one edge".into()));
        }
        let n0 = self.n0_active();
        let mut seen = vec![false; n0];
        for &(s, d) in &self.initial_edges {
            seen[s] = true;
            seen[d] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidParameter(format!("initial non-isolated vertices must be 0..{n0}")));
        }
        Ok(())
    }

    /// `nu`.
    pub fn nu0(&self) -> usize {
        self.initial_edges.len()
    }

    /// `n(0)`.
    pub fn n0_active(&self) -> usize {
        self.initial_edges.iter().map(|&(s, d)| s.max(d) + 1).max().unwrap_or(0)
    }

    pub fn delta(&self, kind: DegreeKind) -> f64 {
        match kind {
            DegreeKind::In => self.delta_in,
            DegreeKind::Out => self.delta_out,
        }
    }

    /// `s^in = alpha + beta`, `s^out = beta + gamma`.
    pub fn s(&self, kind: DegreeKind) -> f64 {
        match kind {
            DegreeKind::In => self.alpha + self.beta,
            DegreeKind::Out => self.beta + self.gamma,
        }
    }

    /// Growth exponent of the maximal degree.
    pub fn exponent(&self, kind: DegreeKind) -> f64 {
        self.s(kind) / (1.0 + self.delta(kind) * (self.alpha + self.gamma))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub m_in: usize,
    pub m_out: usize,
    pub n_active: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Alpha,
    Beta,
    Gamma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub branch: Branch,
    pub src: usize,
    pub dst: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PAGraph {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub in_deg: Vec<usize>,
    pub out_deg: Vec<usize>,
    pub n_active: usize,
    pub max_in: usize,
    pub max_out: usize,
    pub history: Vec<HistoryRow>,
}

impl PAGraph {
    pub fn initial(params: &PAParams) -> Self {
        let n0 = params.n0_active();
        let mut g = Self {
            src: Vec::new(),
            dst: Vec::new(),
            in_deg: vec![0; n0],
            out_deg: vec![0; n0],
            n_active: n0,
            max_in: 0,
            max_out: 0,
            history: Vec::new(),
        };
        for &(s, d) in &params.initial_edges {
            g.push_edge(s, d);
        }
        g.record();
        g
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    /// Completed steps.
    pub fn steps(&self) -> usize {
        self.history.last().map_or(0, |h| h.step)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }

    pub fn max_degree(&self, kind: DegreeKind) -> usize {
        match kind {
            DegreeKind::In => self.max_in,
            DegreeKind::Out => self.max_out,
        }
    }

    fn push_edge(&mut self, s: usize, d: usize) {
        let need = s.max(d) + 1;
        if self.in_deg.len() < need {
            self.in_deg.resize(need, 0);
            self.out_deg.resize(need, 0);
        }
        self.src.push(s);
        self.dst.push(d);
        self.out_deg[s] += 1;
        self.in_deg[d] += 1;
        self.max_out = self.max_out.max(self.out_deg[s]);
        self.max_in = self.max_in.max(self.in_deg[d]);
    }

    fn record(&mut self) {
        let step = self.history.last().map_or(0, |h| h.step + 1);
        self.history.push(HistoryRow { step, m_in: self.max_in, m_out: self.max_out, n_active: self.n_active });
    }

    /// Exact mass function of the vertex drawn ∝ degree + delta among the
    /// active vertices.
    pub fn mass_function(&self, kind: DegreeKind, delta: f64) -> Vec<f64> {
        let deg = match kind {
            DegreeKind::In => &self.in_deg,
            DegreeKind::Out => &self.out_deg,
        };
        let total = self.n_edges() as f64 + delta * self.n_active as f64;
        (0..self.n_active).map(|v| (deg[v] as f64 + delta) / total).collect()
    }

    /// Draws a vertex ∝ degree + delta: a uniform edge endpoint with
    /// probability `E / (E + delta n)`, otherwise a uniform active vertex.
    fn draw<R: Rng + ?Sized>(&self, kind: DegreeKind, delta: f64, rng: &mut R) -> usize {
        let e = self.n_edges() as f64;
        let total = e + delta * self.n_active as f64;
        if rng.random::<f64>() * total < e {
            let k = rng.random_range(0..self.n_edges());
            match kind {
                DegreeKind::In => self.dst[k],
                DegreeKind::Out => self.src[k],
            }
        } else {
            rng.random_range(0..self.n_active)
        }
    }
}

/// One growth step; appends exactly one edge and a history row.
pub fn pa_step<R: Rng + ?Sized>(graph: &mut PAGraph, params: &PAParams, rng: &mut R) -> StepRecord {
    let u: f64 = rng.random();
    let rec = if u < params.alpha {
        let w = graph.draw(DegreeKind::In, params.delta_in, rng);
        let v = graph.n_active;
        graph.n_active += 1;
        StepRecord { branch: Branch::Alpha, src: v, dst: w }
    } else if u < params.alpha + params.beta {
        let v = graph.draw(DegreeKind::Out, params.delta_out, rng);
        let w = graph.draw(DegreeKind::In, params.delta_in, rng);
        StepRecord { branch: Branch::Beta, src: v, dst: w }
    } else {
        let v = graph.draw(DegreeKind::Out, params.delta_out, rng);
        let w = graph.n_active;
        graph.n_active += 1;
        StepRecord { branch: Branch::Gamma, src: v, dst: w }
    };
    graph.push_edge(rec.src, rec.dst);
    graph.record();
    rec
}

pub fn pa_generate(params: &PAParams, steps: usize, seed: u64) -> Result<PAGraph> {
    params.validate_for_generation()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = PAGraph::initial(params);
    g.history.reserve(steps);
    g.src.reserve(steps);
    g.dst.reserve(steps);
    for _ in 0..steps {
        pa_step(&mut g, params, &mut rng);
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizerSeq {
    pub kind: DegreeKind,
    pub k: f64,
    /// `c(0), ..., c(N)`.
    pub values: Vec<f64>,
}

/// `c(N+1, k) = c(N, k) S(N) / (S(N) + s k)` with `S(N) = nu + N + delta n(N)`.
pub fn normalizers(params: &PAParams, history: &[HistoryRow], kind: DegreeKind, k: f64) -> Result<NormalizerSeq> {
    if history.is_empty() {
        return Err(Error::InvalidParameter("degree history is empty".into()));
    }
    let nu = params.nu0() as f64;
    let delta = params.delta(kind);
    let sk = params.s(kind) * k;
    let mut values = Vec::with_capacity(history.len());
    let mut c = 1.0;
    values.push(c);
    for row in &history[..history.len() - 1] {
        let s = nu + row.step as f64 + delta * row.n_active as f64;
        c *= s / (s + sk);
        values.push(c);
    }
    Ok(NormalizerSeq { kind, k, values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub kind: DegreeKind,
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub per_seed: Vec<f64>,
    pub grid: Vec<usize>,
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Seed-averaged least-squares slope of `log M(N)` against `log N`, with a
/// 95% percentile bootstrap interval over seeds.
pub fn fit_exponent(histories: &[Vec<HistoryRow>], grid: &[usize], kind: DegreeKind) -> Result<ExponentFit> {
    if grid.len() < 3 {
        return Err(Error::InvalidParameter("exponent fit needs at least 3 grid points".into()));
    }
    if histories.len() < 10 {
        return Err(Error::InvalidParameter("exponent fit needs at least 10 seeds".into()));
    }
    if grid.contains(&0) {
        return Err(Error::InvalidParameter("grid points must be positive".into()));
    }
    let x: Vec<f64> = grid.iter().map(|&g| (g as f64).ln()).collect();
    let per_seed = histories
        .iter()
        .map(|h| {
            let y = grid
                .iter()
                .map(|&g| {
                    let row = h.get(g).filter(|r| r.step == g).or_else(|| h.iter().find(|r| r.step == g));
                    let row = row.ok_or_else(|| Error::InvalidParameter(format!("history lacks step {g}")))?;
                    let m = match kind {
                        DegreeKind::In => row.m_in,
                        DegreeKind::Out => row.m_out,
                    };
                    Ok((m as f64).ln())
                })
                .collect::<Result<Vec<_>>>()?;
            if y.iter().all(|v| *v == y[0]) {
                Ok(0.0)
            } else {
                Ok(ls_slope(&x, &y))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let slope = mean(&per_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut boot: Vec<f64> = (0..2000)
        .map(|_| {
            let s: f64 = (0..per_seed.len()).map(|_| per_seed[rng.random_range(0..per_seed.len())]).sum();
            s / per_seed.len() as f64
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = (boot[49].min(slope), boot[1949].max(slope));
    Ok(ExponentFit { kind, slope, ci_low, ci_high, per_seed, grid: grid.to_vec() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrajectory {
    pub seed: u64,
    /// `c(N, 1) (M(N) + delta)` on the grid.
    pub values: Vec<f64>,
    /// `(max - min) / mean` over the upper half of the grid.
    pub top_half_fluctuation: f64,
}

pub fn convergence_probe(
    params: &PAParams,
    grid: &[usize],
    seeds: &[u64],
    kind: DegreeKind,
) -> Result<Vec<ProbeTrajectory>> {
    params.validate_for_generation()?;
    let n_max = grid.iter().copied().max().unwrap_or(0);
    let delta = params.delta(kind);
    seeds
        .par_iter()
        .map(|&seed| {
            let g = pa_generate(params, n_max, seed)?;
            let c = normalizers(params, &g.history, kind, 1.0)?;
            let values: Vec<f64> =
                grid.iter().map(|&n| c.values[n] * (g.history[n].max(kind) as f64 + delta)).collect();
            let top = &values[values.len() / 2..];
            let mean = top.iter().sum::<f64>() / top.len().max(1) as f64;
            let (lo, hi) = top.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
            let top_half_fluctuation = if top.is_empty() || mean == 0.0 { 0.0 } else { (hi - lo) / mean };
            Ok(ProbeTrajectory { seed, values, top_half_fluctuation })
        })
        .collect()
}

impl HistoryRow {
    pub fn max(&self, kind: DegreeKind) -> usize {
        match kind {
            DegreeKind::In => self.m_in,
            DegreeKind::Out => self.m_out,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// Each parallel edge adds `phi / R_A`.
    Multiplicity,
    /// Any number of parallel edges gives `phi / R_A`.
    Binary,
}

/// Reads edge `i -> j` as "particle `i` is driven by particle `j`" with
/// weight `phi / R_A`. Periphery columns go to `a_periphery`, core columns
/// and self-loops to `a_core`.
pub fn graph_to_coefficients<T: Scalar>(
    graph: &PAGraph,
    layout: &CorePeripheryLayout,
    rule: WeightRule,
    phi: T,
    r_a: T,
) -> Result<CoefficientSet<T>> {
    if !(r_a > T::zero()) {
        return Err(Error::InvalidParameter("R_A must be positive".into()));
    }
    let n = layout.n();
    let w = phi / r_a;
    let mut mult = std::collections::BTreeMap::<(usize, usize), usize>::new();
    for (i, j) in graph.edges() {
        if i >= n || j >= n {
            return Err(Error::IndexOutOfBounds { row: i, col: j, n_rows: n, n_cols: n });
        }
        *mult.entry((i, j)).or_default() += 1;
    }
    let mut core = Vec::new();
    let mut per = Vec::new();
    for ((i, j), k) in mult {
        let v = match rule {
            WeightRule::Multiplicity => w * T::from_count(k),
            WeightRule::Binary => w,
        };
        if i == j || layout.is_core(j) {
            core.push((i, j, v));
        } else {
            per.push((i, j, v));
        }
    }
    CoefficientSet::from_triplets(n, layout.n00 + n, vec![(MatrixRole::ACore, core), (MatrixRole::APeriphery, per)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_one_keeps_out_degree_one() {
        let p = PAParams::new(1.0, 0.0, 0.0, 0.5, 0.5).unwrap();
        let g = pa_generate(&p, 2000, 1).unwrap();
        assert!(g.history.iter().all(|h| h.m_out == 1));
        assert_eq!(g.n_active, 2001);
    }

    #[test]
    fn beta_one_single_vertex() {
        let p = PAParams::new(0.0, 1.0, 0.0, 0.0, 0.0);
        assert!(p.is_err());
        let p =
            PAParams { alpha: 0.0, beta: 1.0, gamma: 0.0, delta_in: 0.0, delta_out: 0.0, initial_edges: vec![(0, 0)] };
        let g = pa_generate(&p, 100, 3).unwrap();
        assert_eq!(g.in_deg[0], 101);
        assert_eq!(g.out_deg[0], 101);
    }

    #[test]
    fn alpha_gamma_half_adds_vertex_each_step() {
        let p = PAParams::new(0.5, 0.0, 0.5, 1.0, 1.0).unwrap();
        let g = pa_generate(&p, 1000, 9).unwrap();
        assert_eq!(g.n_active, 1 + 1000);
        assert_eq!(g.n_edges(), 1001);
    }

    #[test]
    fn zero_steps() {
        let p = PAParams::new(0.3, 0.4, 0.3, 1.0, 1.0).unwrap();
        let g = pa_generate(&p, 0, 9).unwrap();
        assert_eq!(g.src, vec![0]);
        assert_eq!(g.history.len(), 1);
    }

    #[test]
    fn normalizer_edge_cases() {
        let p = PAParams::new(1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let g = pa_generate(&p, 50, 1).unwrap();
        let c = normalizers(&p, &g.history, DegreeKind::Out, 1.0).unwrap();
        assert!(c.values.iter().all(|v| *v == 1.0));
        let c = normalizers(&p, &g.history, DegreeKind::In, 0.0).unwrap();
        assert!(c.values.iter().all(|v| *v == 1.0));
        let c = normalizers(&p, &g.history, DegreeKind::In, 1.0).unwrap();
        assert!(c.values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn beta_one_normalizer_closed_form() {
        // S(i) = 1 + i, s = 1: c(N) = prod (1+i)/(2+i) = 1/(N+1).
        let p =
            PAParams { alpha: 0.0, beta: 1.0, gamma: 0.0, delta_in: 0.0, delta_out: 0.0, initial_edges: vec![(0, 0)] };
        let hist: Vec<HistoryRow> =
            (0..=20).map(|s| HistoryRow { step: s, m_in: s + 1, m_out: s + 1, n_active: 1 }).collect();
        let c = normalizers(&p, &hist, DegreeKind::In, 1.0).unwrap();
        for (n, v) in c.values.iter().enumerate() {
            assert!((v - 1.0 / (n as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn single_edge_coefficient() {
        let p = PAParams::new(0.5, 0.0, 0.5, 0.0, 0.0).unwrap().with_initial_edges(vec![(1, 2), (0, 0)]).unwrap();
        let g = PAGraph::initial(&p);
        let lay = CorePeripheryLayout { n0: 1, n_periphery: 3, n00: 0 };
        let c = graph_to_coefficients(&g, &lay, WeightRule::Multiplicity, 1.0_f64, 10.0).unwrap();
        assert_eq!(c.a_periphery().get(1, 2), 0.1);
        assert_eq!(c.a_core().get(0, 0), 0.1);
        let small = CorePeripheryLayout { n0: 1, n_periphery: 1, n00: 0 };
        assert!(graph_to_coefficients(&g, &small, WeightRule::Binary, 1.0_f64, 10.0).is_err());
    }

    #[test]
    fn degree_conservation() {
        let p = PAParams::new(0.2, 0.5, 0.3, 0.7, 1.3).unwrap();
        let g = pa_generate(&p, 5000, 4).unwrap();
        assert_eq!(g.in_deg.iter().sum::<usize>(), 5001);
        assert_eq!(g.out_deg.iter().sum::<usize>(), 5001);
        assert_eq!(g.history.len(), 5001);
    }
}
