//! Reference configurations and seeded random generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{CoefficientSet, CorePeripheryLayout, MatrixRole};
use crate::noise::{DriftDensity, LevySpec, NoiseModel};
use crate::scalar::Scalar;

/// A coefficient set together with its noise model and particle layout.
#[derive(Clone, Debug)]
pub struct Preset<T> {
    pub coeffs: CoefficientSet<T>,
    pub noise: NoiseModel<T>,
    pub layout: CorePeripheryLayout,
}

fn all_periphery(n: usize) -> CorePeripheryLayout {
    CorePeripheryLayout { n0: 0, n_periphery: n, n00: 0 }
}

/// McKean's model: `dX_i = (mean of the others - X_i) dt + dW_i`, with
/// i.i.d. normal starting values.
pub fn mckean<T: Scalar>(n: usize, x0_mean: T, x0_var: T) -> Result<Preset<T>> {
    let w = T::one() / T::from_count(n.saturating_sub(1).max(1));
    let ap = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j, w))).collect();
    let coeffs = CoefficientSet::from_triplets(
        n,
        n,
        vec![
            (MatrixRole::ACore, (0..n).map(|i| (i, i, -T::one())).collect()),
            (MatrixRole::APeriphery, ap),
            (MatrixRole::RhoCore, (0..n).map(|i| (i, i, T::one())).collect()),
        ],
    )?;
    let noise = NoiseModel::independent(
        vec![LevySpec::brownian(T::zero()); n],
        vec![LevySpec::brownian(T::one()); n],
        vec![DriftDensity::constant(T::zero()); n],
        vec![x0_mean; n],
        vec![x0_var; n],
    )?;
    Ok(Preset { coeffs, noise, layout: all_periphery(n) })
}

/// Classical mean-field network: all pair interactions of order `1/n`,
/// diagonal core and independent noises.
pub fn classex<T: Scalar>(n: usize, a: T, s: T) -> Result<Preset<T>> {
    let c = T::lit;
    let nn = T::from_count(n);
    let off = |v: T| -> Vec<(usize, usize, T)> {
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j, v / nn))).collect()
    };
    let diag = |v: T| -> Vec<(usize, usize, T)> { (0..n).map(|i| (i, i, v)).collect() };
    let coeffs = CoefficientSet::from_triplets(
        n,
        n,
        vec![
            (MatrixRole::ACore, diag(-T::one())),
            (MatrixRole::APeriphery, off(a)),
            (MatrixRole::SigmaCore, diag(c(0.2))),
            (MatrixRole::SigmaPeriphery, off(s)),
            (MatrixRole::FCore, diag(c(0.5))),
            (MatrixRole::RhoCore, diag(T::one())),
        ],
    )?;
    let noise = NoiseModel::independent(
        vec![LevySpec::brownian(T::one()); n],
        vec![LevySpec::brownian(T::one()); n],
        vec![DriftDensity::constant(c(0.1)).with_var(c(0.1)); n],
        vec![T::one(); n],
        vec![c(0.25); n],
    )?;
    Ok(Preset { coeffs, noise, layout: all_periphery(n) })
}

/// Parameters of the sparse core/periphery family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseFamily {
    /// Core particles.
    pub n0: usize,
    /// Systematic noise columns.
    pub n00: usize,
    /// Periphery neighbours per row of `aP`, `σP`, `fP`, `ρP`.
    pub neighbors: usize,
    /// Numerators of `aP` and `σP`; the denominators are `R_A = R_Σ = N`.
    pub phi: f64,
    pub psi: f64,
}

impl Default for SparseFamily {
    fn default() -> Self {
        Self { n0: 2, n00: 2, neighbors: 3, phi: 1.0, psi: 0.5 }
    }
}

/// Sparse family with `N` periphery particles: every row is driven by a
/// fixed number of periphery neighbours with weight `phi / N`, every
/// periphery particle hears every core particle, and systematic noises
/// load on all rows.
pub fn sparse_family<T: Scalar>(big_n: usize, fam: &SparseFamily) -> Result<Preset<T>> {
    let c = T::lit;
    let n0 = fam.n0;
    let n = n0 + big_n;
    let m = fam.n00 + n;
    let nn = c(big_n as f64);
    let k = fam.neighbors.min(big_n.saturating_sub(1));
    // periphery neighbours of row i, never i itself
    let neigh = |i: usize| -> Vec<usize> {
        let base = if i >= n0 { i - n0 } else { i };
        (1..=k).map(|o| n0 + (base + o) % big_n).filter(|&j| j != i).collect()
    };
    let mut a_core = Vec::new();
    let mut s_core = Vec::new();
    for i in 0..n {
        a_core.push((i, i, -T::one()));
        s_core.push((i, i, c(0.1)));
        for j in 0..n0 {
            if j == i {
                continue;
            }
            if i < n0 {
                a_core.push((i, j, c(0.2)));
            } else {
                a_core.push((i, j, c(0.5 / n0 as f64)));
                s_core.push((i, j, c(0.05 / n0 as f64)));
            }
        }
    }
    let mut a_per = Vec::new();
    let mut s_per = Vec::new();
    let mut f_per = Vec::new();
    let mut r_per = Vec::new();
    let mut f_core = Vec::new();
    let mut r_core = Vec::new();
    for i in 0..n {
        for j in neigh(i) {
            a_per.push((i, j, c(fam.phi) / nn));
            s_per.push((i, j, c(fam.psi) / nn));
            f_per.push((i, fam.n00 + j, T::one() / nn));
            r_per.push((i, fam.n00 + j, T::one() / nn));
        }
        for l in 0..fam.n00 {
            f_core.push((i, l, c(0.3)));
            r_core.push((i, l, c(0.3)));
        }
        f_core.push((i, fam.n00 + i, c(0.2)));
        r_core.push((i, fam.n00 + i, c(0.5)));
    }
    let coeffs = CoefficientSet::from_triplets(
        n,
        m,
        vec![
            (MatrixRole::ACore, a_core),
            (MatrixRole::APeriphery, a_per),
            (MatrixRole::SigmaCore, s_core),
            (MatrixRole::SigmaPeriphery, s_per),
            (MatrixRole::FCore, f_core),
            (MatrixRole::FPeriphery, f_per),
            (MatrixRole::RhoCore, r_core),
            (MatrixRole::RhoPeriphery, r_per),
        ],
    )?;
    let noise = NoiseModel::independent(
        vec![LevySpec::brownian(c(0.5)); n],
        vec![LevySpec::brownian(T::one()); m],
        vec![DriftDensity::constant(c(0.1)).with_var(c(0.2)); m],
        vec![T::one(); n],
        vec![c(0.3); n],
    )?;
    Ok(Preset { coeffs, noise, layout: CorePeripheryLayout { n0, n_periphery: big_n, n00: fam.n00 } })
}

/// Knobs for random configurations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n: usize,
    pub m: usize,
    /// Probability that an off-diagonal entry is present.
    pub density: f64,
    /// Core matrices carry only `(i, i)` entries.
    pub diagonal_core: bool,
    /// All four periphery matrices are zero.
    pub zero_periphery: bool,
    /// Correlated Brownian parts of `L` and correlated `X(0)`.
    pub correlated: bool,
    /// Compound-Poisson jumps in `L` and `M`.
    pub jumps: bool,
    /// Multiplier on every drift and volatility coefficient. Values well
    /// below 1 keep the error bound informative.
    pub coupling: f64,
}

impl RandomSpec {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            density: 0.3,
            diagonal_core: false,
            zero_periphery: false,
            correlated: true,
            jumps: true,
            coupling: 1.0,
        }
    }
}

fn sym_pairs(rng: &mut ChaCha8Rng, n: usize, var: &[f64]) -> Vec<(usize, usize, f64)> {
    // each index joins at most two pairs with |corr| < 0.3, keeping the
    // correlation matrix diagonally dominant
    let mut used = vec![0u8; n];
    let mut out = Vec::new();
    for _ in 0..n {
        if n < 2 {
            break;
        }
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || used[i] >= 2 || used[j] >= 2 || out.iter().any(|&(a, b, _)| (a, b) == (i.min(j), i.max(j))) {
            continue;
        }
        let v = rng.random_range(-0.3..0.3) * (var[i] * var[j]).sqrt();
        if v != 0.0 {
            used[i] += 1;
            used[j] += 1;
            out.push((i.min(j), i.max(j), v));
        }
    }
    out
}

fn random_levy(rng: &mut ChaCha8Rng, jumps: bool) -> Result<LevySpec<f64>> {
    let bv = rng.random_range(0.05..1.0);
    if jumps && rng.random_bool(0.5) {
        let z = rng.random_range(0.1..0.8);
        LevySpec::new(bv, rng.random_range(0.1..2.0), vec![(z, 0.4), (-0.5 * z, 0.6)])
    } else {
        Ok(LevySpec::brownian(bv))
    }
}

/// Seeded random configuration with zero periphery diagonals.
pub fn random_config(spec: &RandomSpec, seed: u64) -> Result<(CoefficientSet<f64>, NoiseModel<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (spec.n, spec.m);
    let row_scale = 1.0 / (spec.density * n as f64).max(1.0);
    let mut blocks = Vec::new();
    for role in MatrixRole::ALL {
        if role.is_periphery() && spec.zero_periphery {
            continue;
        }
        let cols = if role.is_square() { n } else { m };
        let (mag, diag_range) = match role {
            MatrixRole::ACore => (0.8, (-1.0, 0.3)),
            MatrixRole::APeriphery => (0.8, (0.0, 0.0)),
            MatrixRole::SigmaCore => (0.3, (-0.3, 0.3)),
            MatrixRole::SigmaPeriphery => (0.3, (0.0, 0.0)),
            MatrixRole::FCore | MatrixRole::RhoCore => (0.6, (-0.8, 0.8)),
            MatrixRole::FPeriphery | MatrixRole::RhoPeriphery => (0.6, (0.0, 0.0)),
        };
        let k = if role.is_square() { spec.coupling } else { 1.0 };
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..cols {
                let on_diag = i == j;
                if on_diag && role.is_square() && role.is_periphery() {
                    continue;
                }
                let v = if on_diag && !role.is_periphery() {
                    rng.random_range(diag_range.0..=diag_range.1)
                } else if spec.diagonal_core && !role.is_periphery() {
                    continue;
                } else if rng.random_bool(spec.density) {
                    rng.random_range(-mag..mag) * row_scale
                } else {
                    continue;
                };
                if v != 0.0 {
                    t.push((i, j, k * v));
                }
            }
        }
        blocks.push((role, t));
    }
    let coeffs = CoefficientSet::from_triplets(n, m, blocks)?;
    let l_specs = (0..n).map(|_| random_levy(&mut rng, spec.jumps)).collect::<Result<Vec<_>>>()?;
    let m_specs = (0..m).map(|_| random_levy(&mut rng, spec.jumps)).collect::<Result<Vec<_>>>()?;
    let drifts = (0..m)
        .map(|_| {
            let var = rng.random_range(0.0..0.3);
            if rng.random_bool(0.5) {
                DriftDensity::constant(rng.random_range(-0.5..0.5)).with_var(var)
            } else {
                DriftDensity::sinusoid(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(0.0..0.5),
                    rng.random_range(0.5..6.0),
                    rng.random_range(0.0..6.3),
                )
                .with_var(var)
            }
        })
        .collect();
    let x0_mean: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x0_var: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
    let (l_off, x_off) = if spec.correlated {
        let bv: Vec<f64> = l_specs.iter().map(|s| s.brownian_var).collect();
        (sym_pairs(&mut rng, n, &bv), sym_pairs(&mut rng, n, &x0_var))
    } else {
        (Vec::new(), Vec::new())
    };
    let noise = NoiseModel::new(l_specs, m_specs, drifts, x0_mean, x0_var, &l_off, &x_off)?;
    Ok((coeffs, noise))
}
