//! Verification suites: each one measures a family of quantities on the
//! model catalog, fits exponents where a rate is claimed, and emits a
//! deterministic pass/fail report. Reports are plain data (no clocks, no
//! host state), so identical configurations produce identical bytes.

use crate::error::{Error, Result};
use crate::geometry::{build_grid_domain, DomainKind, DomainSpec, GridDomain, Stencil};
use crate::kernel::feature_lipschitz_ratio;
use crate::measure::{
    catalog_specs, fit_lower_bound, monte_carlo_density, pushforward_density, source_mass, WeightField,
};
use crate::metric::{inner_lipschitz_seminorm, InnerMetricGraph, SeminormMode};
use crate::retraction::{
    check_density_comparison, check_jacobian_bounds, check_lipschitz_cs, check_partial_s,
    Retraction,
};
use crate::rng::Rng;
use crate::sobolev::{
    assemble_operator, level_norms, slice_lemma_ratio, sobolev_norm, support_mask,
};
use crate::stencil::GridDeriv;
use serde::Serialize;
use std::sync::Arc;

/// Least-squares slope of log y against log x.
/// Returns (slope, intercept, stderr of the slope).
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "fit needs at least 3 matched points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "fit points must be positive and finite".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 1e-30 {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let stderr = (ss_res / (n - 2.0).max(1.0) / sxx).sqrt();
    Ok((slope, intercept, stderr))
}

#[derive(Debug, Clone, Serialize)]
pub struct Record {
    /// Stable check identifier, the machine-checkable anchor of the claim.
    pub check: String,
    pub input: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// (x, y) points behind the fit, for chart emission.
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub parameters: serde_json::Value,
    pub records: Vec<Record>,
    pub fits: Vec<FitRecord>,
    pub verdict: String,
}

impl ExperimentReport {
    fn new(name: &str, parameters: serde_json::Value) -> ExperimentReport {
        ExperimentReport {
            name: name.to_string(),
            parameters,
            records: Vec::new(),
            fits: Vec::new(),
            verdict: String::new(),
        }
    }

    /// |measured - expected| <= tolerance (scaled).
    fn close(&mut self, check: &str, input: String, measured: f64, expected: f64, tol: f64, scale: f64) {
        let pass = (measured - expected).abs() <= tol * scale;
        self.records.push(Record {
            check: check.into(),
            input,
            measured,
            expected,
            tolerance: tol * scale,
            pass,
        });
    }

    /// measured <= bound, with the scale widening or shrinking the room.
    fn le(&mut self, check: &str, input: String, measured: f64, bound: f64, scale: f64) {
        let pass = measured - bound <= (scale - 1.0) * bound.abs();
        self.records.push(Record {
            check: check.into(),
            input,
            measured,
            expected: bound,
            tolerance: (scale - 1.0) * bound.abs(),
            pass,
        });
    }

    /// measured >= bound.
    fn ge(&mut self, check: &str, input: String, measured: f64, bound: f64, scale: f64) {
        let pass = bound - measured <= (scale - 1.0) * bound.abs();
        self.records.push(Record {
            check: check.into(),
            input,
            measured,
            expected: bound,
            tolerance: (scale - 1.0) * bound.abs(),
            pass,
        });
    }

    fn fit(
        &mut self,
        name: &str,
        slope: f64,
        intercept: f64,
        stderr: f64,
        xs: &[f64],
        ys: &[f64],
    ) {
        let points = xs.iter().zip(ys).map(|(&x, &y)| [x, y]).collect();
        self.fits.push(FitRecord { name: name.into(), slope, intercept, stderr, points });
    }

    fn finalize(mut self) -> ExperimentReport {
        self.verdict = if self.records.iter().all(|r| r.pass) {
            "pass".into()
        } else {
            "fail".into()
        };
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// One line per record plus a verdict line, for terminal output.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "[{}] {} {} measured={:.11e} expected={:.11e} tol={:.3e}\n",
                if r.pass { "pass" } else { "FAIL" },
                r.check,
                r.input,
                r.measured,
                r.expected,
                r.tolerance
            ));
        }
        out.push_str(&format!("{}: {}\n", self.name, self.verdict));
        out
    }
}

/// Shared suite configuration. `tol_scale` widens (>1) or collapses (<1)
/// every pass band; 1 is the calibrated default.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    pub tol_scale: f64,
    pub mc_samples: usize,
    pub resolution: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: 2024, tol_scale: 1.0, mc_samples: 1_000_000, resolution: 512 }
    }
}

fn grid(kind: DomainKind, eps: f64, h: f64, stencil: Stencil) -> Result<Arc<GridDomain>> {
    Ok(Arc::new(build_grid_domain(
        DomainSpec::with_eps_cut(kind, eps),
        h,
        stencil,
    )?))
}

// ---------------------------------------------------------------------------
// coarea suite
// ---------------------------------------------------------------------------

/// Coarea identity on the catalog maps for g in {1, x1^2, xi}, plus mass
/// conservation of the push-forward densities.
pub fn run_coarea_suite(cfg: &SuiteConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(
        "coarea",
        serde_json::json!({ "resolution": cfg.resolution, "integrands": ["one", "x1-squared", "source-density"] }),
    );
    let s = cfg.tol_scale;
    for (name, spec) in catalog_specs(64) {
        let src = spec.source;
        let integrands: Vec<(&str, Box<dyn Fn(&[f64]) -> f64>)> = vec![
            ("one", Box::new(|_: &[f64]| 1.0)),
            ("x1-squared", Box::new(|p: &[f64]| p[0] * p[0])),
            ("source-density", Box::new(move |p: &[f64]| src.xi(p))),
        ];
        for (gname, g) in integrands {
            let (lhs, rhs) = crate::measure::coarea_check(&spec, &g, cfg.resolution)?;
            let rel = if rhs != 0.0 { (lhs - rhs).abs() / rhs.abs() } else { lhs.abs() };
            rep.le(
                "coarea-identity",
                format!("map={name} g={gname}"),
                rel,
                0.02,
                s,
            );
        }
        let dens = pushforward_density(&spec, cfg.resolution.min(256), false)?;
        let pushed: f64 = dens
            .values
            .iter()
            .zip(&spec.target.weights)
            .map(|(v, w)| v * w)
            .sum();
        let mass = source_mass(&spec.source, cfg.resolution)?;
        rep.le(
            "pushforward-mass-conservation",
            format!("map={name}"),
            (pushed - mass).abs() / mass,
            0.02,
            s,
        );
    }
    Ok(rep.finalize())
}

// ---------------------------------------------------------------------------
// density suite
// ---------------------------------------------------------------------------

/// Push-forward vanishing for the quadratic-norm map in dimension 4: the
/// density is linear in the target variable, vanishes at 0, and the
/// quadrature agrees with the Monte Carlo histogram where counting noise
/// permits a 5% comparison.
pub fn run_density_suite(cfg: &SuiteConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(
        "density",
        serde_json::json!({
            "map": "norm-squared-d4", "bins": 64,
            "mc_samples": cfg.mc_samples, "seed": cfg.seed
        }),
    );
    let s = cfg.tol_scale;
    let spec = catalog_specs(64)
        .into_iter()
        .find(|(n, _)| n == "norm-squared-d4")
        .unwrap()
        .1;
    let dens = pushforward_density(&spec, 256, false)?;
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let mut worst = 0.0f64;
    for (t, v) in spec.target.points.iter().zip(&dens.values) {
        worst = worst.max((v - pi2 * t).abs() / (pi2 * t));
    }
    rep.le("density-matches-closed-form", "pi^2 t on 64 bins".into(), worst, 0.02, s);

    let mc = monte_carlo_density(&spec, cfg.mc_samples, 64, cfg.seed)?;
    let mass = source_mass(&spec.source, 512)?;
    let mut worst_mc = 0.0f64;
    let mut gated = 0usize;
    for i in 2..64 {
        let expected_count =
            dens.values[i] * spec.target.weights[i] / mass * cfg.mc_samples as f64;
        if expected_count < 3600.0 {
            continue;
        }
        worst_mc = worst_mc.max((dens.values[i] - mc.values[i]).abs() / mc.values[i]);
        gated += 1;
    }
    rep.le(
        "density-matches-monte-carlo",
        format!("{gated} bins with counting power"),
        worst_mc,
        0.05,
        s,
    );

    let (slope, intercept, stderr) =
        fit_exponent(&spec.target.points, &dens.values)?;
    rep.fit("vanishing-exponent", slope, intercept, stderr, &spec.target.points, &dens.values);
    rep.close("density-vanishing-exponent", "log f vs log t".into(), slope, 1.0, 0.1, s);

    let lb = fit_lower_bound(&dens, &[])?;
    rep.close(
        "density-lower-bound-exponent",
        format!("envelope over {} points", lb.points_used),
        lb.alpha,
        1.0,
        0.1,
        s,
    );
    rep.le("density-lower-bound-residual", "violations".into(), lb.residual, 1e-9, s);
    Ok(rep.finalize())
}

// ---------------------------------------------------------------------------
// flat cusp counterexample
// ---------------------------------------------------------------------------

/// u = 1/x on the flat cusp: every weighted Sobolev norm stays finite and
/// stable as the tip truncation shrinks, while the inner-Lipschitz seminorm
/// blows up like eps^-2.
pub fn run_flat_cusp_counterexample(
    cfg: &SuiteConfig,
    k_max: usize,
    p: f64,
    eps_list: &[f64],
    h: f64,
) -> Result<ExperimentReport> {
    if eps_list.len() < 2 {
        return Err(Error::InvalidArgument("need at least two eps values".into()));
    }
    let mut rep = ExperimentReport::new(
        "flat-cusp",
        serde_json::json!({ "k_max": k_max, "p": p, "eps_cut": eps_list, "h": h }),
    );
    let s = cfg.tol_scale;
    let mut norms: Vec<Vec<f64>> = Vec::new(); // per eps, per k
    let mut seminorms: Vec<f64> = Vec::new();
    let mut eff_eps: Vec<f64> = Vec::new();
    for &eps in eps_list {
        let g = grid(DomainKind::FlatCusp, eps, h, Stencil::Eight)?;
        let w = WeightField::constant_on_grid(g.clone(), 1.0);
        let u: Vec<f64> = g.nodes.iter().map(|q| 1.0 / q[0]).collect();
        let levels = level_norms(&u, &w, k_max, p)?;
        let mut per_k = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            per_k.push(levels[..=k].iter().sum::<f64>());
        }
        norms.push(per_k);
        let graph = InnerMetricGraph::new(g.clone());
        seminorms.push(inner_lipschitz_seminorm(&graph, &u, SeminormMode::EdgeQuotient)?);
        // the profile width underflows below x ~ 0.0366, freezing the grid;
        // fits use the effective truncation actually realized
        eff_eps.push(g.nodes.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min));
    }
    let last = eps_list.len() - 1;
    for k in 1..=k_max {
        let a = norms[last - 1][k];
        let b = norms[last][k];
        rep.le(
            "flat-cusp-norm-stable",
            format!("k={k} eps {} -> {}", eps_list[last - 1], eps_list[last]),
            (a - b).abs() / b,
            0.01,
            s,
        );
    }
    if k_max == 0 {
        let a = norms[last - 1][0];
        let b = norms[last][0];
        rep.le(
            "flat-cusp-norm-stable",
            format!("k=0 eps {} -> {}", eps_list[last - 1], eps_list[last]),
            (a - b).abs() / b,
            0.01,
            s,
        );
    }
    // seminorm divergence: slope vs the effective truncation; grids frozen
    // by the width underflow carry no new information and are deduplicated
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, (&e, &v)) in eff_eps.iter().zip(&seminorms).enumerate() {
        if i == 0 || (e - xs[xs.len() - 1] as f64).abs() > 1e-12 {
            xs.push(e);
            ys.push(v);
        }
    }
    let (slope, intercept, stderr) = if xs.len() >= 3 {
        fit_exponent(&xs, &ys)?
    } else if xs.len() == 2 {
        let slope = (ys[1] / ys[0]).ln() / (xs[1] / xs[0]).ln();
        (slope, ys[0].ln() - slope * xs[0].ln(), 0.0)
    } else {
        return Err(Error::DegenerateFit);
    };
    rep.fit("seminorm-vs-eps", slope, intercept, stderr, &xs, &ys);
    rep.close(
        "flat-cusp-seminorm-divergence",
        format!("{} truncations", xs.len()),
        slope,
        -2.0,
        0.1,
        s,
    );
    Ok(rep.finalize())
}

// ---------------------------------------------------------------------------
// threshold sweep
// ---------------------------------------------------------------------------

/// p-th-power mass of the order-k derivative tuple of x^-gamma over tip
/// shells r in [2^-(j+1), 2^-j]. Only the top level enters: its finiteness
/// threshold is the norm's threshold, and the lower levels' geometric shell
/// decay would otherwise pollute the slope right at criticality.
fn shell_masses(
    g: &Arc<GridDomain>,
    w: &WeightField,
    gamma: f64,
    k: usize,
    p: f64,
    shells: &[usize],
) -> Result<Vec<f64>> {
    let u: Vec<f64> = g.nodes.iter().map(|q| q[0].powf(-gamma)).collect();
    let mask = support_mask(w);
    let deriv = GridDeriv::new(g, Some(&mask));
    let mut sums = vec![0.0f64; shells.len()];
    let r_hi = 2.0f64.powi(-(shells[0] as i32));
    for node in 0..g.len() {
        if !mask[node] {
            continue;
        }
        let q = g.nodes[node];
        let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
        if r > r_hi || r <= 0.0 {
            continue;
        }
        let j = (-r.log2()).floor() as usize;
        if let Some(slot) = shells.iter().position(|&sj| sj == j) {
            let fw = w.values[node] * w.domain.quad_weight(node);
            let mut t = 0.0;
            for mx in 0..=k {
                let d = deriv.derivative(node, (mx, k - mx), &u)?;
                t += d * d;
            }
            sums[slot] += t.sqrt().powf(p) * fw;
        }
    }
    Ok(sums)
}

/// Decay slope of the shell masses against the shell index: negative means
/// the tip contribution converges (the norm is finite), positive means it
/// diverges. Crossing zero locates the finiteness threshold.
fn shell_slope(masses: &[f64]) -> f64 {
    // least squares of ln T_j against j ln 2, ignoring empty shells
    let pts: Vec<(f64, f64)> = masses
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(j, &m)| (j as f64 * std::f64::consts::LN_2, m.ln()))
        .collect();
    if pts.len() < 2 {
        return -1.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

/// Empirical finiteness threshold gamma* for x^-gamma in W^{k,p} on the
/// power cusp, found as the zero crossing of the shell-decay slope over the
/// gamma grid (linear interpolation between neighboring grid values).
fn detect_threshold(
    g: &Arc<GridDomain>,
    w: &WeightField,
    gammas: &[f64],
    k: usize,
    p: f64,
) -> Result<f64> {
    if gammas.is_empty() {
        return Err(Error::InvalidArgument("empty gamma grid".into()));
    }
    let shells: Vec<usize> = vec![2, 3, 4, 5];
    let mut slopes: Vec<(f64, f64)> = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let masses = shell_masses(g, w, gamma, k, p, &shells)?;
        slopes.push((gamma, shell_slope(&masses)));
    }
    // largest stable gamma, refined by interpolating the sign change
    let mut cross = f64::NEG_INFINITY;
    for win in slopes.windows(2) {
        let (g0, s0) = win[0];
        let (g1, s1) = win[1];
        if s0 <= 0.0 && s1 > 0.0 {
            cross = g0 + (g1 - g0) * (0.0 - s0) / (s1 - s0);
        }
    }
    if cross.is_finite() {
        Ok(cross)
    } else if slopes.iter().all(|&(_, s)| s <= 0.0) {
        Ok(slopes.last().unwrap().0)
    } else {
        Ok(slopes.first().unwrap().0)
    }
}

/// Finiteness thresholds gamma*(l, p, k) for the monomial family on power
/// cusps, against the analytic value (l+1)/p - k, plus the induced
/// embedding gain beta and its p-independent lower bound.
pub fn run_threshold_sweep(
    cfg: &SuiteConfig,
    l_list: &[f64],
    p_list: &[f64],
    k_list: &[usize],
    gamma_grid: Option<&[f64]>,
    h: f64,
) -> Result<ExperimentReport> {
    if let Some(gg) = gamma_grid {
        if gg.is_empty() {
            return Err(Error::InvalidArgument("empty gamma grid".into()));
        }
    }
    if l_list.is_empty() || p_list.is_empty() || k_list.is_empty() {
        return Err(Error::InvalidArgument("empty sweep lists".into()));
    }
    let mut rep = ExperimentReport::new(
        "thresholds",
        serde_json::json!({ "l": l_list, "p": p_list, "k": k_list, "h": h }),
    );
    let s = cfg.tol_scale;
    for &l in l_list {
        let g = grid(DomainKind::PowerCusp { l }, 0.0, h, Stencil::Eight)?;
        let w = WeightField::constant_on_grid(g.clone(), 1.0);
        let mut beta_min = f64::INFINITY;
        for &p in p_list {
            let mut prev_gamma_star: Option<f64> = None;
            for &k in k_list {
                let analytic = (l + 1.0) / p - k as f64;
                let local: Vec<f64>;
                let gammas: &[f64] = match gamma_grid {
                    Some(gg) => gg,
                    None => {
                        local = (0..=24)
                            .map(|i| analytic - 0.3 + 0.025 * i as f64)
                            .collect();
                        &local
                    }
                };
                let gamma_star = detect_threshold(&g, &w, gammas, k, p)?;
                rep.close(
                    "threshold-gamma-star",
                    format!("l={l} p={p} k={k}"),
                    gamma_star,
                    analytic,
                    0.05,
                    s,
                );
                if let Some(prev) = prev_gamma_star {
                    rep.le(
                        "threshold-monotone-in-k",
                        format!("l={l} p={p} k={k}"),
                        gamma_star,
                        prev + 1e-9,
                        s,
                    );
                }
                prev_gamma_star = Some(gamma_star);
                if k == 1 && p < l + 1.0 {
                    // largest q with x^-gamma in L^q at gamma just under the
                    // W^{1,p} threshold: q = (l+1)/gamma*, giving the gain
                    // beta = q - p
                    let beta = (l + 1.0) / gamma_star.max(1e-9) - p;
                    beta_min = beta_min.min(beta);
                }
            }
        }
        if beta_min.is_finite() {
            rep.ge(
                "embedding-gain-uniform-lower-bound",
                format!("l={l} min over p"),
                beta_min,
                1.0 / l - 0.05,
                s,
            );
        }
    }
    Ok(rep.finalize())
}

// ---------------------------------------------------------------------------
// slice lemma
// ---------------------------------------------------------------------------

/// Slice norms of the tip-supported bump against the one-step bound, over a
/// dyadic eta range.
pub fn run_slice_lemma(
    cfg: &SuiteConfig,
    l_list: &[f64],
    p_list: &[f64],
    eta_range: (i32, i32),
    h: f64,
) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(
        "slice-lemma",
        serde_json::json!({
            "l": l_list, "p": p_list,
            "eta": format!("2^{} .. 2^{}", eta_range.0, eta_range.1),
            "h": h, "bump_radius": 0.5
        }),
    );
    let s = cfg.tol_scale;
    let etas: Vec<f64> = (eta_range.0..=eta_range.1)
        .rev()
        .map(|e| 2.0f64.powi(e))
        .collect();
    for &l in l_list {
        let g = grid(DomainKind::PowerCusp { l }, 0.0, h, Stencil::Eight)?;
        let w = WeightField::constant_on_grid(g.clone(), 1.0);
        let u: Vec<f64> = g
            .nodes
            .iter()
            .map(|q| (1.0 - (q[0] * q[0] + q[1] * q[1]).sqrt() / 0.5).max(0.0))
            .collect();
        for &p in p_list {
            let rows = slice_lemma_ratio(&g, &w, &u, p, &etas, 1e-9)?;
            let rmax = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
            let rmin = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
            rep.le(
                "slice-ratio-spread",
                format!("l={l} p={p}"),
                rmax / rmin.max(1e-300),
                20.0,
                s,
            );
            let xs: Vec<f64> = rows.iter().map(|r| r.eta).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.slice_norm).collect();
            let (slope, intercept, stderr) = fit_exponent(&xs, &ys)?;
            rep.fit(&format!("slice-norm-slope-l{l}-p{p}"), slope, intercept, stderr, &xs, &ys);
            let a = 2.0f64.min(p);
            rep.ge(
                "slice-norm-slope",
                format!("l={l} p={p}"),
                slope,
                (a - 1.0) / p - 0.1,
                s,
            );
        }
    }
    Ok(rep.finalize())
}

// ---------------------------------------------------------------------------
// morrey shells and sup bound
// ---------------------------------------------------------------------------

/// Dyadic tip-shell measure bounds, the shell-wise density lower-bound
/// exponent, and the sup-versus-norm stability probe for the monomial
/// family; reports the smallest exponent p at which the sup bound holds.
pub fn run_morrey_sup(cfg: &SuiteConfig, l_list: &[f64], h: f64) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(
        "morrey",
        serde_json::json!({ "l": l_list, "h": h, "shells": "i = 1..8", "density": "2 x^l" }),
    );
    let s = cfg.tol_scale;
    for &l in l_list {
        let g = grid(DomainKind::PowerCusp { l }, 0.0, h, Stencil::Eight)?;
        let w = WeightField::from_grid_fn(g.clone(), move |p| 2.0 * p[0].powf(l));

        // tip-centered dyadic shells V_i = { 2^-i <= |x| <= 2^(1-i) }
        let mut c_fit = 0.0f64;
        let mut shell_radii = Vec::new();
        let mut shell_fmin = Vec::new();
        for i in 1..=8 {
            let r_lo = 2.0f64.powi(-i);
            let r_hi = 2.0f64.powi(1 - i);
            let mut mu = 0.0;
            let mut fmin = f64::INFINITY;
            for (node, q) in g.nodes.iter().enumerate() {
                let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
                if r >= r_lo && r <= r_hi {
                    mu += g.node_weights[node];
                    fmin = fmin.min(w.values[node]);
                }
            }
            rep.le(
                "morrey-shell-mass",
                format!("l={l} i={i}"),
                mu,
                4.0 * 2.0f64.powi(-i),
                s,
            );
            c_fit = c_fit.max(mu * 2.0f64.powi(i));
            if fmin.is_finite() {
                shell_radii.push(r_lo);
                shell_fmin.push(fmin);
            }
        }
        rep.le("morrey-shell-mass-constant", format!("l={l}"), c_fit, 4.0, s);
        let (alpha, intercept, stderr) = fit_exponent(&shell_radii, &shell_fmin)?;
        rep.fit(&format!("shell-density-exponent-l{l}"), alpha, intercept, stderr, &shell_radii, &shell_fmin);
        rep.close(
            "morrey-shell-density-exponent",
            format!("l={l} min f over V_i vs 2^-i"),
            alpha,
            l,
            0.2,
            s,
        );

        // sup |u| <= C ||u||_{W^{1,p}_f}: probe stability of the quotient
        // under tip truncation for the monomial family. A witness x^-gamma
        // has sup growing like 2^gamma per truncation halving, so the
        // stable/divergent cut sits at the geometric midpoint 2^(gamma/2).
        let eps_grids: Vec<(Arc<GridDomain>, WeightField)> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&eps| {
                let ge = grid(DomainKind::PowerCusp { l }, eps, h, Stencil::Eight)?;
                let we = WeightField::from_grid_fn(ge.clone(), move |q| 2.0 * q[0].powf(l));
                Ok((ge, we))
            })
            .collect::<Result<_>>()?;
        let quotient_growth = |gamma: f64, p: f64| -> Result<f64> {
            let mut quotients = Vec::new();
            for (ge, we) in &eps_grids {
                let u: Vec<f64> = ge.nodes.iter().map(|q| q[0].powf(-gamma)).collect();
                let sup = u.iter().fold(0.0f64, |m, &v| m.max(v));
                let norm = sobolev_norm(&u, we, 1, p)?;
                quotients.push(sup / norm);
            }
            Ok(quotients[2] / quotients[1])
        };
        let cut = |gamma: f64| 2.0f64.powf(gamma / 2.0);
        // a bounded test function passes at every p
        let bounded_growth = quotient_growth(-1.0, 1.0)?;
        rep.le(
            "morrey-sup-bounded-function",
            format!("l={l} u=x p=1"),
            bounded_growth,
            cut(0.1),
            s,
        );
        // the slightly singular monomial defeats p = 1
        let singular_growth = quotient_growth(0.1, 1.0)?;
        rep.ge(
            "morrey-sup-fails-at-p1",
            format!("l={l} u=x^-0.1"),
            singular_growth,
            cut(0.1),
            s,
        );
        // smallest integer p at which the quotient stabilizes for the probes
        let mut p0_emp = None;
        for p_int in 1..=8usize {
            let p = p_int as f64;
            let ok = quotient_growth(0.1, p)? <= cut(0.1)
                && quotient_growth(0.25, p)? <= cut(0.25);
            if ok {
                p0_emp = Some(p_int);
                break;
            }
        }
        let p0 = p0_emp.unwrap_or(9) as f64;
        rep.le("morrey-sup-smallest-p", format!("l={l}"), p0, 8.0, s);
        rep.fit(&format!("morrey-p0-l{l}"), p0, 0.0, 0.0, &[], &[]);
    }
    Ok(rep.finalize())
}

// ---------------------------------------------------------------------------
// kernel threshold
// ---------------------------------------------------------------------------

/// Max feature-distance / inner-distance ratio for the order-k operator on
/// a grid. The pair sample mixes consecutive near-tip nodes, tip-to-anchor
/// pairs (whose feature distance is dominated by the tip's diagonal kernel
/// entry and cannot cancel), and seeded random pairs.
fn max_feature_ratio(g: &Arc<GridDomain>, k: usize, seed: u64) -> Result<f64> {
    let w = WeightField::constant_on_grid(g.clone(), 1.0);
    let op = assemble_operator(&w, k)?;
    let graph = InnerMetricGraph::new(g.clone());
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = g.nodes[a][0] * g.nodes[a][0] + g.nodes[a][1] * g.nodes[a][1];
        let rb = g.nodes[b][0] * g.nodes[b][0] + g.nodes[b][1] * g.nodes[b][1];
        ra.partial_cmp(&rb).unwrap()
    });
    let anchor = g.nearest_node([0.75, 0.0]);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for w in order.windows(2).take(16) {
        if w[0] != w[1] {
            pairs.push((w[0], w[1]));
        }
    }
    for &t in order.iter().take(16) {
        if t != anchor && graph.components[t] == graph.components[anchor] {
            pairs.push((t, anchor));
        }
    }
    let mut rng = Rng::seed_from(seed);
    while pairs.len() < 64 {
        let a = rng.below(g.len());
        let b = rng.below(g.len());
        if a != b && graph.components[a] == graph.components[b] {
            pairs.push((a, b));
        }
    }
    let rows = feature_lipschitz_ratio(&op, &graph, &pairs)?;
    Ok(rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max))
}

/// Admissibility of k over the domain catalog: the max feature ratio must
/// not grow by more than 1.5x under refinement. The square refines in h;
/// the cusp families refine by halving the tip truncation (h-refinement
/// cannot see the flat tip, whose width underflows below x ~ 0.037).
pub fn run_kernel_threshold(
    cfg: &SuiteConfig,
    l_list: &[f64],
    k_list: &[usize],
    h: f64,
) -> Result<ExperimentReport> {
    if k_list.is_empty() {
        return Err(Error::InvalidArgument("empty k list".into()));
    }
    let mut rep = ExperimentReport::new(
        "kernel-threshold",
        serde_json::json!({ "l": l_list, "k": k_list, "h": h, "growth_cap": 1.5 }),
    );
    let s = cfg.tol_scale;
    // high orders get slightly coarser grids to tame the h^-2k condition
    // growth, but the stencil width (k+2)h must stay well below the cusp
    // whisker length or the tip couples straight into the fat region and
    // the divergence signal vanishes
    let h_for = |k: usize| match k {
        0..=4 => h,
        _ => h * 4.0 / 3.0,
    };

    // square: classical regime, k = 2 admissible under h-refinement
    let ratio_coarse = max_feature_ratio(&grid(DomainKind::Square, 0.0, h, Stencil::Eight)?, 2, cfg.seed)?;
    let ratio_fine =
        max_feature_ratio(&grid(DomainKind::Square, 0.0, h / 2.0, Stencil::Eight)?, 2, cfg.seed)?;
    rep.le(
        "kernel-square-k2-admissible",
        format!("h {h} -> {}", h / 2.0),
        ratio_fine / ratio_coarse,
        1.5,
        s,
    );

    // flat cusp: no admissible k in the swept range
    for &k in k_list {
        let hk = h_for(k);
        let r1 = max_feature_ratio(&grid(DomainKind::FlatCusp, 0.1, hk, Stencil::Eight)?, k, cfg.seed)?;
        let r2 = max_feature_ratio(&grid(DomainKind::FlatCusp, 0.05, hk, Stencil::Eight)?, k, cfg.seed)?;
        rep.ge(
            "kernel-flat-cusp-inadmissible",
            format!("k={k} eps 0.1 -> 0.05"),
            r2 / r1,
            1.5,
            s,
        );
    }

    // power cusps: least admissible k, nondecreasing in l
    let mut prev_k_emp: Option<usize> = None;
    for &l in l_list {
        let mut k_emp: Option<usize> = None;
        for &k in k_list {
            let hk = h_for(k);
            let r1 =
                max_feature_ratio(&grid(DomainKind::PowerCusp { l }, 0.1, hk, Stencil::Eight)?, k, cfg.seed)?;
            let r2 =
                max_feature_ratio(&grid(DomainKind::PowerCusp { l }, 0.05, hk, Stencil::Eight)?, k, cfg.seed)?;
            if r2 / r1 <= 1.5 {
                k_emp = Some(k);
                break;
            }
        }
        let ke = k_emp.map(|k| k as f64).unwrap_or(1.0 + *k_list.last().unwrap() as f64);
        rep.fit(&format!("k-emp-l{l}"), ke, 0.0, 0.0, &[], &[]);
        if let Some(prev) = prev_k_emp {
            rep.ge(
                "kernel-threshold-monotone-in-l",
                format!("l={l}"),
                ke,
                prev as f64,
                s,
            );
        }
        prev_k_emp = Some(ke as usize);
    }
    Ok(rep.finalize())
}

// ---------------------------------------------------------------------------
// retraction suite
// ---------------------------------------------------------------------------

/// Contraction, Jacobian, velocity, and density-comparison fits for the
/// catalog retractions.
pub fn run_retraction_suite(cfg: &SuiteConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(
        "retraction",
        serde_json::json!({ "s_grid": "0.1 .. 1.0 step 0.1", "seed": cfg.seed }),
    );
    let s = cfg.tol_scale;
    let s_grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let etas = [0.25, 0.125, 0.0625, 0.03125];

    let disk = Retraction::for_domain(DomainSpec::new(DomainKind::Disk))?;
    let cusp = Retraction::for_domain(DomainSpec::new(DomainKind::PowerCusp { l: 2.0 }))?;

    let fit = check_lipschitz_cs(&disk, &s_grid, 400, cfg.seed)?;
    rep.close("retraction-lipschitz-constant", "disk".into(), fit.c, 1.0, 0.05, s);
    let fit = check_lipschitz_cs(&cusp, &s_grid, 600, cfg.seed)?;
    rep.close("retraction-lipschitz-constant", "power-cusp l=2".into(), fit.c, 1.0, 0.05, s);

    let (contr, expan) = check_jacobian_bounds(&disk, &s_grid, &etas)?;
    rep.close("retraction-jacobian-nu", "disk".into(), contr.nu as f64, 1.0, 0.0, s);
    rep.close("retraction-jacobian-constant", "disk".into(), contr.c, 1.0, 0.0, s);
    rep.close("retraction-expansion-m", "disk".into(), expan.nu as f64, 2.0, 0.0, s);
    let (contr, _) = check_jacobian_bounds(&cusp, &s_grid, &etas)?;
    rep.le("retraction-jacobian-nu", "power-cusp l=2".into(), contr.nu as f64, 3.0, s);
    rep.le("retraction-jacobian-constant", "power-cusp l=2".into(), contr.c, 2.0, s);

    for (a, expect_nu) in [(1.0f64, 1.0f64), (2.0, 2.0), (3.0, 3.0)] {
        let fit = check_density_comparison(
            &cusp,
            &move |p: [f64; 2]| p[0].powf(a),
            &s_grid,
            200,
            cfg.seed,
        )?;
        rep.close(
            "retraction-density-nu",
            format!("f=x^{a}"),
            fit.nu as f64,
            expect_nu,
            0.0,
            s,
        );
        rep.close("retraction-density-constant", format!("f=x^{a}"), fit.c, 1.0, 0.0, s);
    }
    let flat = Retraction::for_domain(DomainSpec::new(DomainKind::PowerCusp { l: 1.0 }))?;
    let out = check_density_comparison(
        &flat,
        &|p: [f64; 2]| (-1.0 / p[0].max(1e-12)).exp(),
        &s_grid,
        200,
        cfg.seed,
    );
    let no_fit = matches!(out, Err(Error::NoFitFound));
    rep.close(
        "retraction-flat-density-no-fit",
        "f=exp(-1/x)".into(),
        if no_fit { 1.0 } else { 0.0 },
        1.0,
        0.0,
        s,
    );

    let c = check_partial_s(&cusp, &s_grid, 400, cfg.seed)?;
    rep.le("retraction-velocity-constant", "power-cusp l=2".into(), c, 2.3, s);
    Ok(rep.finalize())
}

/// Self-contained log-log SVG chart of a fit: sample points plus the fitted
/// power law. Returns None when the fit carries no positive points.
pub fn fit_chart_svg(fit: &FitRecord) -> Option<String> {
    let pts: Vec<[f64; 2]> = fit
        .points
        .iter()
        .filter(|p| p[0] > 0.0 && p[1] > 0.0)
        .copied()
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (w, h, m) = (480.0, 360.0, 48.0);
    let lx: Vec<f64> = pts.iter().map(|p| p[0].ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p[1].ln()).collect();
    let (x0, x1) = (
        lx.iter().cloned().fold(f64::INFINITY, f64::min),
        lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = (
        ly.iter().cloned().fold(f64::INFINITY, f64::min),
        ly.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let sx = |x: f64| m + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * m);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"monospace\" font-size=\"13\">{} slope={:.4} stderr={:.2e}</text>\n",
        m, fit.name, fit.slope, fit.stderr
    ));
    let fit_pts: Vec<String> = [x0, x1]
        .iter()
        .map(|&x| format!("{:.2},{:.2}", sx(x), sy(fit.intercept + fit.slope * x)))
        .collect();
    s.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#888\" stroke-width=\"1.5\"/>\n",
        fit_pts.join(" ")
    ));
    for (x, y) in lx.iter().zip(&ly) {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"#1f77b4\"/>\n",
            sx(*x),
            sy(*y)
        ));
    }
    s.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - m,
        w - m,
        h - m
    ));
    s.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - m
    ));
    s.push_str("</svg>\n");
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_recovered() {
        let xs: Vec<f64> = (1..=6).map(|i| 1.0 / (1 << i) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|h| 3.0 * h * h).collect();
        let (slope, intercept, stderr) = fit_exponent(&xs, &ys).unwrap();
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept.exp() - 3.0).abs() < 1e-10);
        assert!(stderr < 1e-12);
    }

    #[test]
    fn perturbed_power_law_slope_within_band() {
        let xs: Vec<f64> = (1..=8).map(|i| 1.0 / (1 << i) as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, h)| h * h * (1.0 + 0.01 * (i as f64).sin()))
            .collect();
        let (slope, _, _) = fit_exponent(&xs, &ys).unwrap();
        assert!((slope - 2.0).abs() < 0.05);
    }

    #[test]
    fn two_points_rejected() {
        assert!(fit_exponent(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn constant_abscissae_rejected() {
        assert!(matches!(
            fit_exponent(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateFit)
        ));
    }

    #[test]
    fn threshold_detector_matches_analytic_on_a_small_case() {
        let cfg = SuiteConfig::default();
        let rep =
            run_threshold_sweep(&cfg, &[2.0], &[2.0], &[1], None, 1.0 / 256.0).unwrap();
        let rec = rep
            .records
            .iter()
            .find(|r| r.check == "threshold-gamma-star")
            .unwrap();
        assert!(
            (rec.measured - 0.5).abs() <= 0.05,
            "gamma* = {}",
            rec.measured
        );
    }

    #[test]
    fn empty_sweep_arguments_error() {
        let cfg = SuiteConfig::default();
        assert!(run_threshold_sweep(&cfg, &[2.0], &[2.0], &[1], Some(&[]), 0.125).is_err());
        assert!(run_threshold_sweep(&cfg, &[], &[2.0], &[1], None, 0.125).is_err());
        assert!(run_kernel_threshold(&cfg, &[2.0], &[], 0.125).is_err());
        assert!(run_flat_cusp_counterexample(&cfg, 1, 2.0, &[0.1], 0.125).is_err());
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = SuiteConfig::default();
        let a = run_retraction_suite(&cfg).unwrap().to_json();
        let b = run_retraction_suite(&cfg).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn tolerance_scale_zero_fails_everything_closeable() {
        let cfg = SuiteConfig { tol_scale: 0.0, ..SuiteConfig::default() };
        let rep = run_retraction_suite(&cfg).unwrap();
        assert_eq!(rep.verdict, "fail");
    }

    #[test]
    fn flat_cusp_trivial_k0_report() {
        let cfg = SuiteConfig::default();
        let rep =
            run_flat_cusp_counterexample(&cfg, 0, 2.0, &[0.2, 0.1], 1.0 / 128.0).unwrap();
        assert!(rep.records.iter().any(|r| r.check == "flat-cusp-norm-stable"));
    }
}
