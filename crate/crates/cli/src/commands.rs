//! One function per experiment kind.

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use pmfs_core::graphgen::{fit_exponent, normalizers, pa_generate, DegreeKind, PAParams};
use pmfs_core::ldp::{lambda_cesaro, tail_slope, Atom, AtomicMeasure, GammaRule, LDConfig, MIN_EXCEEDANCES};
use pmfs_core::presets::{classex, mckean, sparse_family, Preset, SparseFamily};
use pmfs_core::rates::{chaos_inequalities, chaos_rates, sparsity_report, theorem_bound};
use pmfs_core::simulate::{estimate_error, simulate_pair, SimConfig};
use pmfs_core::{LevySpec, NetworkConfig};

use crate::error::{CliError, CliResult};
use crate::experiment::{read_config, ExperimentSpec, Family, Kind, Outcome};
use crate::output::{Cell, Table};

/// Tables allowed next to the network sections of a config file.
const EXTRA_SECTIONS: &[&str] = &["pa", "ldp"];

/// Margin, in standard errors, added to the simulated distance by `certify`.
pub const CERTIFY_MARGIN: f64 = 3.0;

/// Tolerance on fitted degree exponents reported by `pafit`.
pub const EXPONENT_TOLERANCE: f64 = 0.1;

pub fn dispatch(spec: &ExperimentSpec) -> CliResult<Outcome> {
    match spec.kind {
        Kind::Simulate => simulate(spec),
        Kind::Rates => rates(spec),
        Kind::Certify => certify(spec),
        Kind::ChaosSweep => chaos_sweep(spec),
        Kind::Pagen => pagen(spec),
        Kind::Pafit => pafit(spec),
        Kind::LdpLambda => ldp_lambda(spec),
        Kind::LdpTail => ldp_tail(spec),
        Kind::MckeanSweep => mckean_sweep(spec),
    }
}

fn value<T: serde::Serialize>(x: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(x)?)
}

/// Least-squares slope of `log y` on `log x`; `None` unless every `y > 0`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || y.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

/// splitmix64 of `master` and `index`: independent-looking child seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn network(spec: &ExperimentSpec) -> CliResult<NetworkConfig> {
    let path =
        spec.config.as_ref().ok_or_else(|| CliError::Config(format!("`{}` needs --config", spec.kind.name())))?;
    Ok(NetworkConfig::from_toml_str_with(&read_config(path)?, EXTRA_SECTIONS)?)
}

fn sim_config(spec: &ExperimentSpec, paths: usize, steps: usize) -> SimConfig {
    SimConfig::new(spec.horizon, spec.steps.unwrap_or(steps), spec.paths.unwrap_or(paths), spec.seed)
}

fn toml_error(src: &str, e: toml::de::Error) -> CliError {
    let line = e.span().map_or(0, |s| src[..s.start.min(src.len())].matches('\n').count() + 1);
    pmfs_core::Error::ConfigAt { line, field: "(document)".into(), message: e.message().trim().to_string() }.into()
}

fn pa_params(spec: &ExperimentSpec) -> CliResult<PAParams> {
    #[derive(Deserialize)]
    struct Doc {
        pa: Option<PAParams>,
    }
    let Some(path) = &spec.config else {
        return Ok(PAParams::new(0.3, 0.4, 0.3, 1.0, 1.0)?);
    };
    let src = read_config(path)?;
    let doc: Doc = toml::from_str(&src).map_err(|e| toml_error(&src, e))?;
    let p = doc.pa.ok_or_else(|| CliError::Config(format!("{}: missing [pa] section", path.display())))?;
    p.validate_for_generation().map_err(|e| CliError::Config(format!("[pa]: {e}")))?;
    Ok(p)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LdpSection {
    #[serde(default = "identity")]
    gamma: GammaRule,
    d: Option<usize>,
    dominating: Option<LevySpec<f64>>,
    /// `(coordinate, time, weight)` atoms of the test measure.
    #[serde(default)]
    theta: Vec<(usize, f64, f64)>,
}

fn identity() -> GammaRule {
    GammaRule::Identity
}

fn ldp_section(src: Option<&str>) -> CliResult<LdpSection> {
    #[derive(Deserialize)]
    struct Doc {
        ldp: Option<LdpSection>,
    }
    let default = || LdpSection { gamma: GammaRule::Identity, d: None, dominating: None, theta: Vec::new() };
    let Some(src) = src else { return Ok(default()) };
    let doc: Doc = toml::from_str(src).map_err(|e| toml_error(src, e))?;
    Ok(doc.ldp.unwrap_or_else(default))
}

fn ld_config(s: &LdpSection) -> LDConfig<f64> {
    let mut ld = LDConfig::new(s.gamma, s.dominating.clone().unwrap_or_else(|| LevySpec::brownian(1.0)));
    ld.d = s.d;
    ld
}

fn simulate(spec: &ExperimentSpec) -> CliResult<Outcome> {
    let net = network(spec)?;
    let sim = sim_config(spec, 2000, 200);
    let est = estimate_error(&net.coeffs, &net.noise, &sim)?;
    let mut tables = Vec::new();
    if spec.traces > 0 {
        let mut t = Table::new(
            "traces",
            "recorded trajectories of the network and its approximation",
            &[
                ("path", "path index"),
                ("t", "time"),
                ("particle", "particle index"),
                ("x", "network state"),
                ("xbar", "mean-field approximation"),
                ("mean", "deterministic mean curve"),
            ],
        );
        for p in 0..spec.traces {
            let tr = simulate_pair(&net.coeffs, &net.noise, &sim, p as u64)?;
            for (k, &time) in tr.times.iter().enumerate() {
                for i in 0..net.coeffs.n() {
                    t.push(vec![
                        p.into(),
                        time.into(),
                        i.into(),
                        tr.x[k][i].into(),
                        tr.xbar[k][i].into(),
                        tr.mean_curve[k][i].into(),
                    ]);
                }
            }
        }
        tables.push(t);
    }
    let summary = format!("delta_hat = {:.6e} ± {:.2e} over {} paths", est.delta_hat, est.std_err, est.n_paths);
    Ok(Outcome {
        payload: json!({
            "kind": "simulate",
            "n": net.coeffs.n(),
            "m": net.coeffs.m(),
            "sim": value(&sim)?,
            "estimate": value(&est)?,
        }),
        tables,
        summary,
        exit_code: 0,
    })
}

fn rates(spec: &ExperimentSpec) -> CliResult<Outcome> {
    let net = network(spec)?;
    let report = theorem_bound(&net.coeffs, &net.noise, spec.horizon)?;
    // optional extras: only meaningful under their own hypotheses
    let chaos = match chaos_inequalities(&net.coeffs, &net.noise, spec.horizon) {
        Ok(c) => json!({ "rates": value(&chaos_rates(&net.coeffs, &net.noise)?)?, "checks": value(&c)? }),
        Err(pmfs_core::Error::Precondition(_)) => Value::Null,
        Err(e) => return Err(e.into()),
    };
    let summary = format!("bound = {:.6e}{}", report.bound, if report.vacuous { " (vacuous)" } else { "" });
    Ok(Outcome {
        payload: json!({ "kind": "rates", "n": net.coeffs.n(), "m": net.coeffs.m(), "report": value(&report)?, "chaos": chaos }),
        tables: Vec::new(),
        summary,
        exit_code: 0,
    })
}

fn certify(spec: &ExperimentSpec) -> CliResult<Outcome> {
    let net = network(spec)?;
    let sim = sim_config(spec, 2000, 200);
    let est = estimate_error(&net.coeffs, &net.noise, &sim)?;
    let report = theorem_bound(&net.coeffs, &net.noise, spec.horizon)?;
    let upper = est.delta_hat + CERTIFY_MARGIN * est.std_err;
    let pass = upper <= report.bound;
    let verdict = if pass { "PASS" } else { "FAIL" };
    Ok(Outcome {
        payload: json!({
            "kind": "certify",
            "verdict": verdict,
            "delta_hat": est.delta_hat,
            "std_err": est.std_err,
            "margin_std_errs": CERTIFY_MARGIN,
            "delta_upper": upper,
            "bound": report.bound,
            "vacuous": report.vacuous,
            "sim": value(&sim)?,
            "report": value(&report)?,
        }),
        tables: Vec::new(),
        summary: format!("{verdict}: delta_hat + {CERTIFY_MARGIN}·se = {upper:.6e} vs bound {:.6e}", report.bound),
        exit_code: if pass { 0 } else { 3 },
    })
}

fn family_preset(family: Family, n: usize) -> CliResult<Preset<f64>> {
    Ok(match family {
        Family::Mckean => mckean(n, 0.0, 1.0)?,
        Family::Classex => classex(n, 1.0, 0.5)?,
        Family::Sparse => sparse_family(n, &SparseFamily::default())?,
    })
}

fn chaos_sweep(spec: &ExperimentSpec) -> CliResult<Outcome> {
    let family = spec.family.unwrap_or(Family::Sparse);
    let grid = spec.grid_or(&[25, 50, 100, 200]);
    let mut cols: Vec<(String, String)> = vec![("N".into(), "family size".into())];
    for k in 1..=12 {
        cols.push((format!("r{k}"), format!("rate r{k} at the horizon")));
    }
    cols.push(("bound".into(), "error bound".into()));
    let mut table = Table::new("rate_vs_n", "error rates along the family", &[]);
    table.columns = cols;
    let mut rows = Vec::new();
    let mut series = vec![Vec::new(); 12];
    for &n in &grid {
        let p = family_preset(family, n)?;
        let report = theorem_bound(&p.coeffs, &p.noise, spec.horizon)?;
        let extra = match family {
            Family::Classex => json!({
                "chaos_rates": value(&chaos_rates(&p.coeffs, &p.noise)?)?,
                "checks_hold": chaos_inequalities(&p.coeffs, &p.noise, spec.horizon)?.iter().all(|c| c.holds),
            }),
            Family::Sparse => {
                let nn = n as f64;
                json!({ "sparsity": value(&sparsity_report(&p.coeffs, &p.layout, &p.noise, nn, nn)?)? })
            }
            Family::Mckean => Value::Null,
        };
        let mut row: Vec<Cell> = vec![n.into()];
        row.extend(report.r.iter().map(|&r| Cell::from(r)));
        row.push(report.bound.into());
        table.push(row);
        for (s, &r) in series.iter_mut().zip(&report.r) {
            s.push(r);
        }
        rows.push(json!({ "n": n, "rates": value(&report.r)?, "bound": report.bound, "vacuous": report.vacuous, "extra": extra }));
    }
    let x: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let slopes: Vec<Option<f64>> = series.iter().map(|s| loglog_slope(&x, s)).collect();
    let decreasing: Vec<bool> = series.iter().map(|s| s.windows(2).all(|w| w[1] < w[0])).collect();
    let summary =
        format!("{} sizes; rates strictly decreasing: {}/12", grid.len(), decreasing.iter().filter(|&&d| d).count());
    Ok(Outcome {
        payload: json!({
            "kind": "chaos-sweep",
            "family": value(&family)?,
            "horizon": spec.horizon,
            "n_grid": grid,
            "rows": rows,
            "slopes": slopes,
            "strictly_decreasing": decreasing,
        }),
        tables: vec![table],
        summary,
        exit_code: 0,
    })
}

fn pagen(spec: &ExperimentSpec) -> CliResult<Outcome> {
    let params = pa_params(spec)?;
    let steps = spec.steps.unwrap_or(10_000);
    let g = pa_generate(&params, steps, spec.seed)?;
    let mut edges = Table::new(
        "edges",
        "edge list in insertion order",
        &[
            ("step", "growth step that added the edge (0 = initial graph)"),
            ("src", "source vertex"),
            ("dst", "target vertex"),
        ],
    );
    let n_init = params.initial_edges.len();
    for (k, (s, d)) in g.edges().enumerate() {
        let step = if k < n_init { 0 } else { k + 1 - n_init };
        edges.push(vec![step.into(), s.into(), d.into()]);
    }
    let c_in = normalizers(&params, &g.history, DegreeKind::In, 1.0)?;
    let c_out = normalizers(&params, &g.history, DegreeKind::Out, 1.0)?;
    let mut hist = Table::new(
        "history",
        "degree history of one graph",
        &[
            ("N", "growth step"),
            ("M_in", "maximum in-degree"),
            ("M_out", "maximum out-degree"),
            ("n", "active vertices"),
            ("c_in", "in-degree normalizer c(N, 1)"),
            ("c_out", "out-degree normalizer c(N, 1)"),
            ("edges", "total degree (= number of edges)"),
        ],
    );
    for (k, row) in g.history.iter().enumerate() {
        hist.push(vec![
            row.step.into(),
            row.m_in.into(),
            row.m_out.into(),
            row.n_active.into(),
            c_in.values[k].into(),
            c_out.values[k].into(),
            (n_init + row.step).into(),
        ]);
    }
    let last = c_in.values.len() - 1;
    Ok(Outcome {
        payload: json!({
            "kind": "pagen",
            "params": value(&params)?,
            "steps": steps,
            "seed": spec.seed,
            "n_edges": g.n_edges(),
            "n_active": g.n_active,
            "max_in": g.max_in,
            "max_out": g.max_out,
            "exponent_in": params.exponent(DegreeKind::In),
            "exponent_out": params.exponent(DegreeKind::Out),
            "scaled_max_in": g.max_in as f64 * c_in.values[last],
            "scaled_max_out": g.max_out as f64 * c_out.values[last],
        }),
        tables: vec![edges, hist],
        summary: format!("{steps} steps: max in {} / max out {}, {} active vertices", g.max_in, g.max_out, g.n_active),
        exit_code: 0,
    })
}

/// Eleven log-spaced sizes from `10^3` to `10^5`.
pub fn default_pa_grid() -> Vec<usize> {
    (0..=10).map(|k| 10f64.powf(3.0 + 0.2 * k as f64).round() as usize).collect()
}

fn pafit(spec: &ExperimentSpec) -> CliResult<Outcome> {
    let params = pa_params(spec)?;
    let grid = spec.n_grid.clone().unwrap_or_else(default_pa_grid);
    let reps = spec.replicates.unwrap_or(20);
    let steps = *grid.last().unwrap_or(&0);
    let seeds: Vec<u64> = (0..reps as u64).map(|r| derive_seed(spec.seed, r)).collect();
    let histories = seeds
        .par_iter()
        .map(|&s| pa_generate(&params, steps, s).map(|g| g.history))
        .collect::<pmfs_core::Result<Vec<_>>>()?;
    let mut fits = serde_json::Map::new();
    let mut all_ok = true;
    for kind in [DegreeKind::In, DegreeKind::Out] {
        let fit = fit_exponent(&histories, &grid, kind)?;
        let target = params.exponent(kind);
        let within = (fit.slope - target).abs() <= EXPONENT_TOLERANCE;
        // s = 0: the maximum never moves
        let constant =
            (params.s(kind) == 0.0).then(|| histories.iter().all(|h| h.iter().all(|r| r.max(kind) == h[0].max(kind))));
        all_ok &= within && constant.unwrap_or(true);
        let key = if kind == DegreeKind::In { "in" } else { "out" };
        fits.insert(
            key.into(),
            json!({ "fit": value(&fit)?, "target": target, "within_tolerance": within, "constant_maxima": constant }),
        );
    }
    let mut table = Table::new(
        "degree_vs_n",
        "seed-averaged maximum degrees",
        &[
            ("N", "growth step"),
            ("mean_log_max_in", "mean of log max in-degree over seeds"),
            ("mean_log_max_out", "mean of log max out-degree over seeds"),
        ],
    );
    for &n in &grid {
        let mean = |kind| histories.iter().map(|h| (h[n].max(kind) as f64).max(1.0).ln()).sum::<f64>() / reps as f64;
        table.push(vec![n.into(), mean(DegreeKind::In).into(), mean(DegreeKind::Out).into()]);
    }
    Ok(Outcome {
        payload: json!({
            "kind": "pafit",
            "params": value(&params)?,
            "grid": grid,
            "replicates": reps,
            "master_seed": spec.seed,
            "tolerance": EXPONENT_TOLERANCE,
            "fits": Value::Object(fits),
            "all_within_tolerance": all_ok,
        }),
        tables: vec![table],
        summary: format!("{reps} replicates; all within ±{EXPONENT_TOLERANCE}: {all_ok}"),
        exit_code: 0,
    })
}

fn ldp_lambda(spec: &ExperimentSpec) -> CliResult<Outcome> {
    let src = spec.config.as_ref().map(|p| read_config(p)).transpose()?;
    let section = ldp_section(src.as_deref())?;
    let ld = ld_config(&section);
    let steps = spec.steps.unwrap_or(50);
    let fixed = match &src {
        Some(s) if s.lines().any(|l| l.trim() == "[dimensions]") => {
            Some(NetworkConfig::from_toml_str_with(s, EXTRA_SECTIONS)?)
        }
        _ => None,
    };
    let sizes = match &fixed {
        Some(net) => vec![net.coeffs.n()],
        None => spec.grid_or(&[10, 20, 40, 80]),
    };
    let family = spec.family.unwrap_or(Family::Mckean);
    let d = ld.observed(sizes[0]);
    let theta = if section.theta.is_empty() {
        AtomicMeasure::point(d, 0, spec.horizon, 1.0)?
    } else {
        AtomicMeasure::new(
            d,
            section.theta.iter().map(|&(coord, time, weight)| Atom { coord, time, weight }).collect(),
        )?
    };
    let table_res = lambda_cesaro(
        |n| match &fixed {
            Some(net) => Ok((net.coeffs.clone(), net.noise.m_specs().to_vec())),
            None => {
                let p = family_preset(family, n).map_err(|e| match e {
                    CliError::Core(c) => c,
                    other => pmfs_core::Error::Config(other.to_string()),
                })?;
                Ok((p.coeffs, p.noise.m_specs().to_vec()))
            }
        },
        &ld,
        &theta,
        &sizes,
        spec.horizon,
        steps,
    )?;
    let mut table = Table::new(
        "cesaro_vs_n",
        "cumulant along the family",
        &[("N", "size"), ("gamma", "noise columns carried"), ("value", "integrated cumulant at size N")],
    );
    for r in &table_res.rows {
        table.push(vec![r.size.into(), r.gamma.into(), r.value.into()]);
    }
    Ok(Outcome {
        payload: json!({
            "kind": "ldp-lambda",
            "source": if fixed.is_some() { "config".to_string() } else { family.name().to_string() },
            "ld": value(&ld)?,
            "theta": value(&theta)?,
            "horizon": spec.horizon,
            "steps": steps,
            "table": value(&table_res)?,
        }),
        tables: vec![table],
        summary: format!("estimate {:.6e} at N = {}", table_res.estimate, sizes[sizes.len() - 1]),
        exit_code: 0,
    })
}

fn ldp_tail(spec: &ExperimentSpec) -> CliResult<Outcome> {
    let family = spec.family.unwrap_or(Family::Mckean);
    if family != Family::Mckean {
        return Err(CliError::Config("ldp-tail supports only --family mckean".into()));
    }
    let src = spec.config.as_ref().map(|p| read_config(p)).transpose()?;
    let ld = ld_config(&ldp_section(src.as_deref())?);
    let grid = spec.grid_or(&[10, 20, 40, 80]);
    let eps = spec.eps.unwrap_or(0.3);
    let sim = sim_config(spec, 20_000, 100);
    let rows = tail_slope(
        |n| {
            let p = mckean(n, 0.0, 1.0)?;
            Ok((p.coeffs, p.noise))
        },
        &ld,
        eps,
        &sim,
        &grid,
    )?;
    let mut table = Table::new(
        "tail_vs_n",
        "normalized log exceedance probabilities",
        &[
            ("N", "size"),
            ("gamma", "normalization"),
            ("paths", "valid paths"),
            ("exceedances", "paths exceeding eps"),
            ("p_hat", "exceedance frequency"),
            ("wilson_low", "95% Wilson lower limit"),
            ("wilson_high", "95% Wilson upper limit"),
            ("normalized_log", "log(p_hat) / gamma (empty when p_hat = 0)"),
            ("below_floor", "fewer exceedances than the estimability floor"),
        ],
    );
    for r in &rows {
        table.push(vec![
            r.size.into(),
            r.gamma.into(),
            r.paths.into(),
            r.exceedances.into(),
            r.p_hat.into(),
            r.wilson_low.into(),
            r.wilson_high.into(),
            r.normalized_log.into(),
            r.below_floor.into(),
        ]);
    }
    let est: Vec<f64> = rows.iter().filter(|r| !r.below_floor).filter_map(|r| r.normalized_log).collect();
    let non_increasing = est.windows(2).all(|w| w[1] <= w[0]);
    Ok(Outcome {
        payload: json!({
            "kind": "ldp-tail",
            "family": value(&family)?,
            "eps": eps,
            "sim": value(&sim)?,
            "ld": value(&ld)?,
            "floor": MIN_EXCEEDANCES,
            "rows": value(&rows)?,
            "estimable": est.len(),
            "non_increasing": non_increasing,
        }),
        tables: vec![table],
        summary: format!("{} estimable sizes; non-increasing: {non_increasing}", est.len()),
        exit_code: 0,
    })
}

fn mckean_sweep(spec: &ExperimentSpec) -> CliResult<Outcome> {
    let grid = spec.grid_or(&[20, 40, 80, 160]);
    let sim = sim_config(spec, 4000, 200);
    let mut table = Table::new(
        "error_vs_n",
        "distance between McKean's model and its mean-field limit",
        &[
            ("N", "particles"),
            ("delta_hat", "Monte Carlo distance"),
            ("std_err", "standard error of delta_hat"),
            ("bound", "error bound"),
        ],
    );
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for &n in &grid {
        let p = mckean(n, 0.0, 1.0)?;
        let est = estimate_error(&p.coeffs, &p.noise, &sim)?;
        let report = theorem_bound(&p.coeffs, &p.noise, spec.horizon)?;
        table.push(vec![n.into(), est.delta_hat.into(), est.std_err.into(), report.bound.into()]);
        deltas.push(est.delta_hat);
        rows.push(json!({
            "n": n,
            "delta_hat": est.delta_hat,
            "std_err": est.std_err,
            "bound": report.bound,
            "vacuous": report.vacuous,
        }));
    }
    let x: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&x, &deltas);
    Ok(Outcome {
        payload: json!({ "kind": "mckean-sweep", "sim": value(&sim)?, "n_grid": grid, "rows": rows, "slope": slope }),
        tables: vec![table],
        summary: format!("log-log slope of delta_hat: {}", slope.map_or("n/a".into(), |s| format!("{s:.4}"))),
        exit_code: 0,
    })
}
