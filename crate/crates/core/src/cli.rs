//! Command dispatch: builds the requested objects, writes artifacts
//! atomically (temp file + rename), and maps outcomes to exit codes.

use crate::config::{parse_config, Command, RunConfig, Suite};
use crate::error::{Error, Result};
use crate::experiments::{
    fit_chart_svg, run_coarea_suite, run_density_suite, run_flat_cusp_counterexample,
    run_kernel_threshold, run_morrey_sup, run_retraction_suite, run_slice_lemma,
    run_threshold_sweep, ExperimentReport, SuiteConfig,
};
use crate::geometry::GridDomain;
use crate::kernel::{feature_lipschitz_ratio, feature_rows_to_csv, kernel_matrix};
use crate::measure::{
    monte_carlo_density, pushforward_density, source_mass, DensityKind, MapKind,
    PushforwardSpec, SourceMeasure, SupportSet, WeightField,
};
use crate::metric::InnerMetricGraph;
use crate::rng::Rng;
use crate::sobolev::{assemble_operator, level_norms};
use std::path::{Path, PathBuf};
use std::sync::Arc;

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(name)
}

pub fn run(args: &[String], env_out_dir: Option<String>) -> Result<u8> {
    let cfg = parse_config(args, env_out_dir)?;
    dispatch(&cfg)
}

/// Execute a resolved configuration. 0 = success, 1 = verification failure;
/// configuration and runtime errors surface as Err (exit 2).
pub fn dispatch(cfg: &RunConfig) -> Result<u8> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    match cfg.command {
        Command::Density => cmd_density(cfg),
        Command::SobolevNorm => cmd_sobolev_norm(cfg),
        Command::Kernel => cmd_kernel(cfg),
        Command::Geodesic => cmd_geodesic(cfg),
        Command::Verify => cmd_verify(cfg),
    }
}

fn source_from(cfg: &RunConfig) -> Result<(SourceMeasure, MapKind)> {
    let a = cfg.density_pow;
    let (map, source) = match cfg.map.as_str() {
        "identity" => (
            MapKind::Identity,
            SourceMeasure {
                dim: 1,
                density: if a == 0.0 {
                    DensityKind::Const(1.0)
                } else {
                    DensityKind::CoordPow { a }
                },
                support: SupportSet::Interval { lo: 0.0, hi: 1.0 },
            },
        ),
        "project-x" => (
            MapKind::ProjectX,
            SourceMeasure {
                dim: 2,
                density: if a == 0.0 {
                    DensityKind::Const(1.0)
                } else {
                    DensityKind::CoordPow { a }
                },
                support: SupportSet::Band { l: cfg.l },
            },
        ),
        "norm-squared" => (
            MapKind::NormSquared,
            SourceMeasure {
                dim: cfg.dim,
                density: if a == 0.0 {
                    DensityKind::Const(1.0)
                } else {
                    DensityKind::RadialPow { a }
                },
                support: SupportSet::Ball { dim: cfg.dim, radius: 1.0 },
            },
        ),
        "radial" => (
            MapKind::Radial,
            SourceMeasure {
                dim: 2,
                density: DensityKind::Const(1.0),
                support: SupportSet::Annulus2d { r_in: 1.0, r_out: 2.0 },
            },
        ),
        other => {
            return Err(Error::Config {
                key: "map".into(),
                message: format!("unknown map `{other}`"),
            })
        }
    };
    Ok((source, map))
}

fn cmd_density(cfg: &RunConfig) -> Result<u8> {
    let (source, map) = source_from(cfg)?;
    let spec = PushforwardSpec::with_bins(source, map, cfg.bins)?;
    let dens = pushforward_density(&spec, cfg.resolution, false)?;
    write_atomic(&out_path(cfg, "density.csv"), &dens.to_csv())?;
    let mass = source_mass(&spec.source, cfg.resolution)?;
    let pushed: f64 = dens
        .values
        .iter()
        .zip(&spec.target.weights)
        .map(|(v, w)| v * w)
        .sum();
    println!("source mass      {mass:.11e}");
    println!("pushed mass      {pushed:.11e}");
    if cfg.mc_samples > 0 {
        let mc = monte_carlo_density(&spec, cfg.mc_samples, cfg.bins, cfg.seed)?;
        write_atomic(&out_path(cfg, "density_mc.csv"), &mc.to_csv())?;
        let mut worst = 0.0f64;
        for (c, m) in dens.values.iter().zip(&mc.values) {
            if *m > 0.0 {
                worst = worst.max((c - m).abs() / m);
            }
        }
        println!("max |coarea-mc|/mc {worst:.11e}");
    }
    println!("wrote {}", out_path(cfg, "density.csv").display());
    Ok(0)
}

fn catalog_function(cfg: &RunConfig, grid: &GridDomain) -> Result<Vec<f64>> {
    let f: Box<dyn Fn([f64; 2]) -> f64> = match cfg.function.as_str() {
        "inv-x" => Box::new(|p: [f64; 2]| 1.0 / p[0]),
        "coord-x" => Box::new(|p: [f64; 2]| p[0]),
        "const" => Box::new(|_| 1.0),
        "monomial" => {
            let g = cfg.gamma;
            Box::new(move |p: [f64; 2]| p[0].powf(-g))
        }
        other => {
            return Err(Error::Config {
                key: "function".into(),
                message: format!("unknown function `{other}`"),
            })
        }
    };
    Ok(grid.nodes.iter().map(|&p| f(p)).collect())
}

fn cmd_sobolev_norm(cfg: &RunConfig) -> Result<u8> {
    let grid = Arc::new(cfg.domain.build()?);
    let u = catalog_function(cfg, &grid)?;
    let w = WeightField::constant_on_grid(grid.clone(), 1.0);
    let levels = level_norms(&u, &w, cfg.k, cfg.p)?;
    for (i, v) in levels.iter().enumerate() {
        println!("level {i} norm    {v:.11e}");
    }
    let total: f64 = levels.iter().sum();
    println!("sobolev norm     {total:.11e}");
    Ok(0)
}

fn cmd_kernel(cfg: &RunConfig) -> Result<u8> {
    let grid = Arc::new(cfg.domain.build()?);
    let w = WeightField::constant_on_grid(grid.clone(), 1.0);
    let op = assemble_operator(&w, cfg.k)?;
    if cfg.dump_operator {
        write_atomic(&out_path(cfg, "operator.txt"), &op.to_coo_text())?;
    }
    let mut rng = Rng::seed_from(cfg.seed);
    let want = cfg.nodes.min(op.dim());
    let mut nodes: Vec<usize> = Vec::new();
    while nodes.len() < want {
        let c = op.support[rng.below(op.dim())] as usize;
        if !nodes.contains(&c) {
            nodes.push(c);
        }
    }
    let km = kernel_matrix(&op, &nodes)?;
    write_atomic(&out_path(cfg, "kernel.csv"), &km.to_csv())?;
    let eig = km.eigenvalues();
    println!("nodes            {}", km.n());
    println!("symmetry defect  {:.11e}", km.symmetry_defect());
    println!("min eigenvalue   {:.11e}", eig[0]);
    println!("max eigenvalue   {:.11e}", eig[eig.len() - 1]);
    println!("max residual     {:.11e}", km.stats.max_residual);
    let graph = InnerMetricGraph::new(grid);
    let mut pairs = Vec::new();
    for wdw in nodes.windows(2) {
        if graph.components[wdw[0]] == graph.components[wdw[1]] {
            pairs.push((wdw[0], wdw[1]));
        }
    }
    if !pairs.is_empty() {
        let rows = feature_lipschitz_ratio(&op, &graph, &pairs)?;
        write_atomic(&out_path(cfg, "feature_ratios.csv"), &feature_rows_to_csv(&rows))?;
        let rmax = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
        println!("max feature/d    {rmax:.11e}");
    }
    Ok(0)
}

fn cmd_geodesic(cfg: &RunConfig) -> Result<u8> {
    let grid = Arc::new(cfg.domain.build()?);
    let graph = InnerMetricGraph::new(grid.clone());
    let a = grid.nearest_node(cfg.point_a);
    let b = grid.nearest_node(cfg.point_b);
    let d = graph.inner_distance(a, b);
    let pa = grid.nodes[a];
    let pb = grid.nodes[b];
    let euclid = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
    println!("node a           ({:.11e}, {:.11e})", pa[0], pa[1]);
    println!("node b           ({:.11e}, {:.11e})", pb[0], pb[1]);
    println!("inner distance   {d:.11e}");
    println!("euclidean        {euclid:.11e}");
    if euclid > 0.0 && d.is_finite() {
        println!("stretch          {:.11e}", d / euclid);
    }
    if cfg.matrix {
        let n = grid.len();
        if n > 2000 {
            return Err(Error::InvalidArgument(format!(
                "distance matrix is quadratic: {n} nodes exceed the 2000-node cap"
            )));
        }
        let mut csv = String::new();
        for i in 0..n {
            let di = graph.distances_from(i);
            let row: Vec<String> = di.iter().map(|v| format!("{v:.11e}")).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        write_atomic(&out_path(cfg, "distance_matrix.csv"), &csv)?;
        println!("wrote {}", out_path(cfg, "distance_matrix.csv").display());
    }
    Ok(0)
}

fn records_csv(rep: &ExperimentReport) -> String {
    let mut out = String::from("check,input,measured,expected,tolerance,pass\n");
    for r in &rep.records {
        out.push_str(&format!(
            "{},\"{}\",{:.11e},{:.11e},{:.11e},{}\n",
            r.check, r.input, r.measured, r.expected, r.tolerance, r.pass
        ));
    }
    out
}

fn run_suite(cfg: &RunConfig, suite: Suite) -> Result<Vec<ExperimentReport>> {
    let sc = SuiteConfig {
        seed: cfg.seed,
        tol_scale: cfg.tolerance_scale,
        mc_samples: cfg.mc_samples,
        resolution: cfg.resolution,
    };
    Ok(match suite {
        // the coarea suite carries the push-forward density checks with it
        Suite::Coarea => vec![run_coarea_suite(&sc)?, run_density_suite(&sc)?],
        Suite::Retraction => vec![run_retraction_suite(&sc)?],
        Suite::FlatCusp => {
            let eps = cfg
                .eps_cut_list
                .clone()
                .unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]);
            let k_max = cfg.k_list.as_ref().map(|v| *v.iter().max().unwrap()).unwrap_or(4);
            vec![run_flat_cusp_counterexample(
                &sc,
                k_max,
                cfg.p,
                &eps,
                cfg.h.unwrap_or(1.0 / 1024.0),
            )?]
        }
        Suite::Thresholds => vec![run_threshold_sweep(
            &sc,
            &cfg.l_list.clone().unwrap_or_else(|| vec![2.0, 3.0, 5.0]),
            &cfg.p_list.clone().unwrap_or_else(|| vec![1.0, 2.0, 3.0]),
            &cfg.k_list.clone().unwrap_or_else(|| vec![1, 2]),
            cfg.gamma_grid.as_deref(),
            cfg.h.unwrap_or(1.0 / 512.0),
        )?],
        Suite::SliceLemma => vec![run_slice_lemma(
            &sc,
            &cfg.l_list.clone().unwrap_or_else(|| vec![2.0]),
            &cfg.p_list.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0]),
            (-8, -2),
            cfg.h.unwrap_or(1.0 / 512.0),
        )?],
        Suite::Morrey => vec![run_morrey_sup(
            &sc,
            &cfg.l_list.clone().unwrap_or_else(|| vec![2.0, 3.0]),
            cfg.h.unwrap_or(1.0 / 512.0),
        )?],
        Suite::KernelThreshold => vec![run_kernel_threshold(
            &sc,
            &cfg.l_list.clone().unwrap_or_else(|| vec![1.0, 2.0, 3.0, 5.0]),
            &cfg.k_list.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5, 6]),
            cfg.h.unwrap_or(1.0 / 32.0),
        )?],
        Suite::All => unreachable!("expanded by the caller"),
    })
}

fn cmd_verify(cfg: &RunConfig) -> Result<u8> {
    let suite = cfg.suite.expect("verify parsed with a suite");
    let suites: Vec<Suite> = match suite {
        Suite::All => vec![
            Suite::Coarea,
            Suite::FlatCusp,
            Suite::Thresholds,
            Suite::SliceLemma,
            Suite::Morrey,
            Suite::KernelThreshold,
            Suite::Retraction,
        ],
        s => vec![s],
    };
    let mut all_pass = true;
    for s in suites {
        for rep in run_suite(cfg, s)? {
            write_atomic(
                &out_path(cfg, &format!("{}.report.json", rep.name)),
                &rep.to_json(),
            )?;
            write_atomic(
                &out_path(cfg, &format!("{}.records.csv", rep.name)),
                &records_csv(&rep),
            )?;
            if cfg.emit_svg {
                for fit in &rep.fits {
                    if let Some(svg) = fit_chart_svg(fit) {
                        write_atomic(
                            &out_path(cfg, &format!("{}.{}.svg", rep.name, fit.name)),
                            &svg,
                        )?;
                    }
                }
            }
            print!("{}", rep.to_text());
            all_pass &= rep.passed();
        }
    }
    Ok(if all_pass { 0 } else { 1 })
}
