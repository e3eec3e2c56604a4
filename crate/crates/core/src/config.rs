//! Human-editable TOML description of a network and its noise model.
//!
//! ```toml
//! [dimensions]
//! n = 2          # particles
//! m = 2          # noise columns
//!
//! [layout]       # optional core/periphery split
//! n0 = 0
//! n00 = 0
//!
//! [coefficients] # (row, col, value) triples per role
//! a_core = [[0, 0, -1.0], [1, 1, -1.0]]
//! a_periphery = [[0, 1, 1.0], [1, 0, 1.0]]
//! rho_core = [[0, 0, 1.0], [1, 1, 1.0]]
//!
//! [noise]        # every entry is either one value for all or a full list
//! l = { brownian_var = 0.0 }
//! m = [{ brownian_var = 1.0 }, { brownian_var = 1.0, jump_rate = 0.5, atoms = [[0.3, 1.0]] }]
//! drift = { kind = "constant", value = 0.0, var = 0.0 }
//! x0_mean = 0.0
//! x0_var = 1.0
//! l_offdiag = []
//! x0_offdiag = []
//! ```
//!
//! Other top-level tables are allowed only when the caller names them.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::network::{CoefficientSet, CorePeripheryLayout, MatrixRole};
use crate::noise::{DriftDensity, DriftShape, LevySpec, NoiseModel};
use crate::sparse::SparseMatrix;

/// Network, noise and optional layout loaded from one document.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub coeffs: CoefficientSet<f64>,
    pub noise: NoiseModel<f64>,
    pub layout: Option<CorePeripheryLayout>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDims {
    n: usize,
    m: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    n0: usize,
    n00: usize,
}

#[derive(Deserialize)]
struct Triple(usize, usize, f64);

type Triples = Option<Spanned<Vec<Spanned<Triple>>>>;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    a_core: Triples,
    a_periphery: Triples,
    sigma_core: Triples,
    sigma_periphery: Triples,
    f_core: Triples,
    f_periphery: Triples,
    rho_core: Triples,
    rho_periphery: Triples,
}

impl RawCoefficients {
    fn take(&mut self, role: MatrixRole) -> Triples {
        match role {
            MatrixRole::ACore => self.a_core.take(),
            MatrixRole::APeriphery => self.a_periphery.take(),
            MatrixRole::SigmaCore => self.sigma_core.take(),
            MatrixRole::SigmaPeriphery => self.sigma_periphery.take(),
            MatrixRole::FCore => self.f_core.take(),
            MatrixRole::FPeriphery => self.f_periphery.take(),
            MatrixRole::RhoCore => self.rho_core.take(),
            MatrixRole::RhoPeriphery => self.rho_periphery.take(),
        }
    }
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct RawLevy {
    #[serde(default)]
    brownian_var: f64,
    #[serde(default)]
    jump_rate: f64,
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    #[serde(default = "constant_kind")]
    kind: String,
    #[serde(default)]
    value: f64,
    #[serde(default)]
    offset: f64,
    #[serde(default)]
    amplitude: f64,
    #[serde(default)]
    omega: f64,
    #[serde(default)]
    phase: f64,
    #[serde(default)]
    var: f64,
}

fn constant_kind() -> String {
    "constant".into()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<V> {
    Many(Vec<V>),
    One(V),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    l: Option<Spanned<OneOrMany<RawLevy>>>,
    m: Option<Spanned<OneOrMany<RawLevy>>>,
    drift: Option<Spanned<OneOrMany<RawDrift>>>,
    x0_mean: Option<Spanned<OneOrMany<f64>>>,
    x0_var: Option<Spanned<OneOrMany<f64>>>,
    l_offdiag: Triples,
    x0_offdiag: Triples,
}

#[derive(Deserialize)]
struct RawDoc {
    dimensions: Spanned<RawDims>,
    layout: Option<Spanned<RawLayout>>,
    #[serde(default)]
    coefficients: Option<Spanned<RawCoefficients>>,
    #[serde(default)]
    noise: Option<Spanned<RawNoise>>,
    #[serde(flatten)]
    rest: BTreeMap<String, toml::Value>,
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn line(&self, offset: usize) -> usize {
        self.src[..offset.min(self.src.len())].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err(&self, offset: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::ConfigAt { line: self.line(offset), field: field.into(), message: message.into() }
    }

    fn expand<V: Clone>(
        &self,
        v: Option<Spanned<OneOrMany<V>>>,
        len: usize,
        default: V,
        field: &str,
    ) -> Result<Vec<V>> {
        let Some(v) = v else { return Ok(vec![default; len]) };
        let at = v.span().start;
        match v.into_inner() {
            OneOrMany::One(x) => Ok(vec![x; len]),
            OneOrMany::Many(xs) if xs.len() == len => Ok(xs),
            OneOrMany::Many(xs) => Err(self.err(at, field, format!("expected {len} entries, found {}", xs.len()))),
        }
    }

    fn triples(&self, t: Triples, rows: usize, cols: usize, field: &str) -> Result<Vec<(usize, usize, f64)>> {
        let Some(t) = t else { return Ok(Vec::new()) };
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (k, e) in t.into_inner().into_iter().enumerate() {
            let at = e.span().start;
            let Triple(i, j, v) = e.into_inner();
            let f = format!("{field}[{k}]");
            if i >= rows || j >= cols {
                return Err(self.err(at, f, format!("index ({i}, {j}) outside {rows}x{cols}")));
            }
            if !seen.insert((i, j)) {
                return Err(self.err(at, f, format!("duplicate entry ({i}, {j})")));
            }
            if !v.is_finite() {
                return Err(self.err(at, f, format!("value {v} is not finite")));
            }
            out.push((i, j, v));
        }
        Ok(out)
    }
}

fn drift(d: RawDrift) -> std::result::Result<DriftDensity<f64>, String> {
    let base = match d.kind.as_str() {
        "constant" => DriftDensity::constant(d.value),
        "sinusoid" => DriftDensity::sinusoid(d.offset, d.amplitude, d.omega, d.phase),
        other => return Err(format!("unknown drift kind `{other}` (constant | sinusoid)")),
    };
    Ok(base.with_var(d.var))
}

impl NetworkConfig {
    /// Parses a document that contains only the network sections.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        Self::from_toml_str_with(src, &[])
    }

    /// Parses a document that may also carry the named extra tables.
    pub fn from_toml_str_with(src: &str, extra_sections: &[&str]) -> Result<Self> {
        let ctx = Ctx { src };
        let doc: RawDoc = toml::from_str(src).map_err(|e| {
            let line = e.span().map_or(0, |s| ctx.line(s.start));
            Error::ConfigAt { line, field: "(document)".into(), message: e.message().trim().to_string() }
        })?;
        if let Some(key) = doc.rest.keys().find(|k| !extra_sections.contains(&k.as_str())) {
            let line = src
                .lines()
                .position(|l| {
                    let l = l.trim_start();
                    l.starts_with(&format!("[{key}")) || l.starts_with(key.as_str())
                })
                .map_or(0, |p| p + 1);
            return Err(Error::ConfigAt { line, field: key.clone(), message: "unknown section".into() });
        }
        let dims_at = doc.dimensions.span().start;
        let RawDims { n, m } = doc.dimensions.into_inner();
        if n == 0 || m == 0 {
            return Err(ctx.err(dims_at, "dimensions", "n and m must be at least 1"));
        }
        let layout = match doc.layout {
            None => None,
            Some(l) => {
                let at = l.span().start;
                let RawLayout { n0, n00 } = l.into_inner();
                if n0 > n {
                    return Err(ctx.err(at, "layout.n0", format!("{n0} core particles exceed n = {n}")));
                }
                if n00 + n != m {
                    return Err(ctx.err(at, "layout.n00", format!("n00 + n = {} but m = {m}", n00 + n)));
                }
                Some(CorePeripheryLayout { n0, n_periphery: n - n0, n00 })
            }
        };

        let (coef_at, mut raw) = match doc.coefficients {
            Some(c) => (c.span().start, c.into_inner()),
            None => (dims_at, RawCoefficients::default()),
        };
        let mut coeffs = CoefficientSet::zeros(n, m);
        for role in MatrixRole::ALL {
            let field = format!("coefficients.{}", role.name());
            let t = raw.take(role);
            let at = t.as_ref().map_or(coef_at, |t| t.span().start);
            let cols = if role.is_square() { n } else { m };
            let trip = ctx.triples(t, n, cols, &field)?;
            let mat = SparseMatrix::from_triplets(n, cols, trip).map_err(|e| ctx.err(at, &field, e.to_string()))?;
            coeffs.set_role(role, mat).map_err(|e| ctx.err(at, &field, e.to_string()))?;
        }
        coeffs.check_periphery_diagonals().map_err(|e| ctx.err(coef_at, "coefficients", e.to_string()))?;

        let (noise_at, rn) = match doc.noise {
            Some(x) => (x.span().start, x.into_inner()),
            None => (dims_at, RawNoise::default()),
        };
        let zero_levy = RawLevy { brownian_var: 0.0, jump_rate: 0.0, atoms: Vec::new() };
        let levy = |v: Vec<RawLevy>, field: &str, at: usize| -> Result<Vec<LevySpec<f64>>> {
            v.into_iter()
                .enumerate()
                .map(|(k, r)| {
                    LevySpec::new(r.brownian_var, r.jump_rate, r.atoms)
                        .map_err(|e| ctx.err(at, format!("{field}[{k}]"), e.to_string()))
                })
                .collect()
        };
        let at_of = |s: &Option<Spanned<OneOrMany<RawLevy>>>| s.as_ref().map_or(noise_at, |x| x.span().start);
        let (l_at, m_at) = (at_of(&rn.l), at_of(&rn.m));
        let l_specs = levy(ctx.expand(rn.l, n, zero_levy.clone(), "noise.l")?, "noise.l", l_at)?;
        let m_specs = levy(ctx.expand(rn.m, m, zero_levy, "noise.m")?, "noise.m", m_at)?;
        let drift_at = rn.drift.as_ref().map_or(noise_at, |x| x.span().start);
        let drifts = ctx
            .expand(
                rn.drift,
                m,
                RawDrift {
                    kind: constant_kind(),
                    value: 0.0,
                    offset: 0.0,
                    amplitude: 0.0,
                    omega: 0.0,
                    phase: 0.0,
                    var: 0.0,
                },
                "noise.drift",
            )?
            .into_iter()
            .enumerate()
            .map(|(k, d)| drift(d).map_err(|e| ctx.err(drift_at, format!("noise.drift[{k}]"), e)))
            .collect::<Result<Vec<_>>>()?;
        let x0_mean = ctx.expand(rn.x0_mean, n, 0.0, "noise.x0_mean")?;
        let x0_var = ctx.expand(rn.x0_var, n, 0.0, "noise.x0_var")?;
        let l_off = ctx.triples(rn.l_offdiag, n, n, "noise.l_offdiag")?;
        let x_off = ctx.triples(rn.x0_offdiag, n, n, "noise.x0_offdiag")?;
        let noise = NoiseModel::new(l_specs, m_specs, drifts, x0_mean, x0_var, &l_off, &x_off)
            .map_err(|e| ctx.err(noise_at, "noise", e.to_string()))?;
        Ok(Self { coeffs, noise, layout })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Writes the canonical form; parsing it back yields the same values.
    pub fn to_toml_string(&self) -> String {
        let (n, m) = (self.coeffs.n(), self.coeffs.m());
        let mut s = String::new();
        let _ = writeln!(s, "[dimensions]\nn = {n}\nm = {m}\n");
        if let Some(l) = &self.layout {
            let _ = writeln!(s, "[layout]\nn0 = {}\nn00 = {}\n", l.n0, l.n00);
        }
        s.push_str("[coefficients]\n");
        for role in MatrixRole::ALL {
            let t: Vec<String> =
                self.coeffs.get(role).triplets().map(|(i, j, v)| format!("[{i}, {j}, {}]", num(v))).collect();
            let _ = writeln!(s, "{} = [{}]", role.name(), t.join(", "));
        }
        let nz = &self.noise;
        let levy = |v: &LevySpec<f64>| {
            let atoms: Vec<String> = v.atoms.iter().map(|(z, p)| format!("[{}, {}]", num(*z), num(*p))).collect();
            format!(
                "  {{ brownian_var = {}, jump_rate = {}, atoms = [{}] }},\n",
                num(v.brownian_var),
                num(v.jump_rate),
                atoms.join(", ")
            )
        };
        s.push_str("\n[noise]\nl = [\n");
        nz.l_specs().iter().for_each(|v| s.push_str(&levy(v)));
        s.push_str("]\nm = [\n");
        nz.m_specs().iter().for_each(|v| s.push_str(&levy(v)));
        s.push_str("]\ndrift = [\n");
        for d in nz.drifts() {
            let body = match d.shape {
                DriftShape::Constant { value } => format!("kind = \"constant\", value = {}", num(value)),
                DriftShape::Sinusoid { offset, amplitude, omega, phase } => format!(
                    "kind = \"sinusoid\", offset = {}, amplitude = {}, omega = {}, phase = {}",
                    num(offset),
                    num(amplitude),
                    num(omega),
                    num(phase)
                ),
            };
            let _ = writeln!(s, "  {{ {body}, var = {} }},", num(d.var));
        }
        let list = |v: &[f64]| v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ");
        let x0_var: Vec<f64> = (0..n).map(|i| nz.x0_variance(i)).collect();
        let _ = writeln!(s, "]\nx0_mean = [{}]\nx0_var = [{}]", list(nz.x0_mean()), list(&x0_var));
        let upper = |c: &SparseMatrix<f64>| {
            c.triplets()
                .filter(|&(i, j, _)| i < j)
                .map(|(i, j, v)| format!("[{i}, {j}, {}]", num(v)))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(s, "l_offdiag = [{}]\nx0_offdiag = [{}]", upper(nz.l_cov()), upper(nz.x0_cov()));
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_toml_string())?)
    }
}

/// Shortest round-trip decimal, always a TOML float.
fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}
