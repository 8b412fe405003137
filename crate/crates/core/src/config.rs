//! Run configuration: a JSON file plus command-line flag overrides.
//! Unknown keys and flags are rejected by name.

use crate::error::{Error, Result};
use crate::geometry::{GridRecipe, Stencil};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Density,
    SobolevNorm,
    Kernel,
    Geodesic,
    Verify,
}

impl Command {
    pub fn parse(s: &str) -> Result<Command> {
        Ok(match s {
            "density" => Command::Density,
            "sobolev-norm" => Command::SobolevNorm,
            "kernel" => Command::Kernel,
            "geodesic" => Command::Geodesic,
            "verify" => Command::Verify,
            other => {
                return Err(Error::Config {
                    key: "command".into(),
                    message: format!("unknown command `{other}`"),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    FlatCusp,
    Thresholds,
    SliceLemma,
    Morrey,
    KernelThreshold,
    Retraction,
    Coarea,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Suite> {
        Ok(match s {
            "flat-cusp" => Suite::FlatCusp,
            "thresholds" => Suite::Thresholds,
            "slice-lemma" => Suite::SliceLemma,
            "morrey" => Suite::Morrey,
            "kernel-threshold" => Suite::KernelThreshold,
            "retraction" => Suite::Retraction,
            "coarea" => Suite::Coarea,
            "all" => Suite::All,
            other => {
                return Err(Error::Config {
                    key: "suite".into(),
                    message: format!("unknown suite `{other}`"),
                })
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::FlatCusp => "flat-cusp",
            Suite::Thresholds => "thresholds",
            Suite::SliceLemma => "slice-lemma",
            Suite::Morrey => "morrey",
            Suite::KernelThreshold => "kernel-threshold",
            Suite::Retraction => "retraction",
            Suite::Coarea => "coarea",
            Suite::All => "all",
        }
    }
}

/// On-disk configuration. Every field is optional; flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<GridRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_pow: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_cut_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit_svg: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_a: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_b: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_operator: Option<bool>,
}

/// Fully resolved configuration with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub suite: Option<Suite>,
    pub domain: GridRecipe,
    pub map: String,
    pub dim: usize,
    pub l: f64,
    pub density_pow: f64,
    pub h: Option<f64>,
    pub k: usize,
    pub p: f64,
    pub bins: usize,
    pub resolution: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub tolerance_scale: f64,
    pub l_list: Option<Vec<f64>>,
    pub p_list: Option<Vec<f64>>,
    pub k_list: Option<Vec<usize>>,
    pub gamma_grid: Option<Vec<f64>>,
    pub eps_cut_list: Option<Vec<f64>>,
    pub out_dir: String,
    pub emit_svg: bool,
    pub nodes: usize,
    pub function: String,
    pub gamma: f64,
    pub point_a: [f64; 2],
    pub point_b: [f64; 2],
    pub matrix: bool,
    pub dump_operator: bool,
}

fn default_domain() -> GridRecipe {
    let mut params = std::collections::BTreeMap::new();
    params.insert("l".to_string(), 2.0);
    GridRecipe {
        kind: "power-cusp".into(),
        params,
        h: 1.0 / 256.0,
        stencil: Stencil::Eight,
        eps_cut: 0.0,
    }
}

impl RunConfig {
    fn resolve(command: Command, suite: Option<Suite>, f: FileConfig) -> Result<RunConfig> {
        Ok(RunConfig {
            command,
            suite,
            domain: f.domain.unwrap_or_else(default_domain),
            map: f.map.unwrap_or_else(|| "norm-squared".into()),
            dim: f.dim.unwrap_or(4),
            l: f.l.unwrap_or(2.0),
            density_pow: f.density_pow.unwrap_or(0.0),
            h: f.h,
            k: f.k.unwrap_or(2),
            p: f.p.unwrap_or(2.0),
            bins: f.bins.unwrap_or(64),
            resolution: f.resolution.unwrap_or(512),
            mc_samples: f.mc_samples.unwrap_or(1_000_000),
            seed: f.seed.unwrap_or(2024),
            tolerance_scale: f.tolerance_scale.unwrap_or(1.0),
            l_list: f.l_list,
            p_list: f.p_list,
            k_list: f.k_list,
            gamma_grid: f.gamma_grid,
            eps_cut_list: f.eps_cut_list,
            out_dir: f.out_dir.unwrap_or_else(|| "out".into()),
            emit_svg: f.emit_svg.unwrap_or(false),
            nodes: f.nodes.unwrap_or(50),
            function: f.function.unwrap_or_else(|| "inv-x".into()),
            gamma: f.gamma.unwrap_or(0.5),
            point_a: f.point_a.unwrap_or([0.1, 0.1]),
            point_b: f.point_b.unwrap_or([0.9, 0.9]),
            matrix: f.matrix.unwrap_or(false),
            dump_operator: f.dump_operator.unwrap_or(false),
        })
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config {
        key: key.into(),
        message: format!("cannot parse `{v}`"),
    })
}

fn parse_list_f64(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|t| parse_num(key, t.trim())).collect()
}

fn parse_list_usize(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|t| parse_num(key, t.trim())).collect()
}

/// Parse a command line (without the binary name) into a resolved
/// configuration. `env_out_dir` is the environment override for the output
/// directory, applied last.
pub fn parse_config(args: &[String], env_out_dir: Option<String>) -> Result<RunConfig> {
    if args.is_empty() {
        return Err(Error::Config {
            key: "command".into(),
            message: "missing command; see --help".into(),
        });
    }
    let command = Command::parse(&args[0])?;
    let mut rest = &args[1..];
    let mut suite = None;
    if command == Command::Verify {
        if rest.is_empty() || rest[0].starts_with("--") {
            return Err(Error::Config {
                key: "suite".into(),
                message: "verify requires a suite argument".into(),
            });
        }
        suite = Some(Suite::parse(&rest[0])?);
        rest = &rest[1..];
    }

    // first pass: locate --config and load the file
    let mut file = FileConfig::default();
    let mut i = 0;
    while i < rest.len() {
        if rest[i] == "--config" {
            let path = rest.get(i + 1).ok_or_else(|| Error::Config {
                key: "config".into(),
                message: "missing path after --config".into(),
            })?;
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
                key: "config".into(),
                message: format!("cannot read `{path}`: {e}"),
            })?;
            file = serde_json::from_str(&text).map_err(|e| Error::Config {
                key: "config".into(),
                message: e.to_string(),
            })?;
        }
        i += if rest[i].starts_with("--") && !matches!(rest[i].as_str(), "--matrix" | "--dump-operator" | "--emit-svg") {
            2
        } else {
            1
        };
    }

    // second pass: flag overrides
    let mut i = 0;
    while i < rest.len() {
        let flag = rest[i].as_str();
        let take = |name: &str| -> Result<String> {
            rest.get(i + 1).cloned().ok_or_else(|| Error::Config {
                key: name.into(),
                message: "missing value".into(),
            })
        };
        match flag {
            "--config" => {
                i += 2;
                continue;
            }
            "--matrix" => {
                file.matrix = Some(true);
                i += 1;
                continue;
            }
            "--dump-operator" => {
                file.dump_operator = Some(true);
                i += 1;
                continue;
            }
            "--emit-svg" => {
                file.emit_svg = Some(true);
                i += 1;
                continue;
            }
            _ => {}
        }
        let value = match flag {
            "--domain" => {
                let v = take("domain")?;
                let mut d = file.domain.clone().unwrap_or_else(default_domain);
                d.kind = v;
                file.domain = Some(d);
                i += 2;
                continue;
            }
            other if other.starts_with("--") => take(&other[2..])?,
            other => {
                return Err(Error::Config {
                    key: other.into(),
                    message: "expected a --flag".into(),
                })
            }
        };
        match flag {
            "--map" => file.map = Some(value),
            "--dim" => file.dim = Some(parse_num("dim", &value)?),
            "--l" => {
                let l: f64 = parse_num("l", &value)?;
                file.l = Some(l);
                let mut d = file.domain.clone().unwrap_or_else(default_domain);
                d.params.insert("l".into(), l);
                file.domain = Some(d);
            }
            "--density-pow" => file.density_pow = Some(parse_num("density-pow", &value)?),
            "--h" => {
                let h: f64 = parse_num("h", &value)?;
                file.h = Some(h);
                let mut d = file.domain.clone().unwrap_or_else(default_domain);
                d.h = h;
                file.domain = Some(d);
            }
            "--eps-cut" => {
                let e: f64 = parse_num("eps-cut", &value)?;
                let mut d = file.domain.clone().unwrap_or_else(default_domain);
                d.eps_cut = e;
                file.domain = Some(d);
            }
            "--stencil" => {
                let s = match value.as_str() {
                    "four" => Stencil::Four,
                    "eight" => Stencil::Eight,
                    "sixteen" => Stencil::Sixteen,
                    other => {
                        return Err(Error::Config {
                            key: "stencil".into(),
                            message: format!("unknown stencil `{other}`"),
                        })
                    }
                };
                let mut d = file.domain.clone().unwrap_or_else(default_domain);
                d.stencil = s;
                file.domain = Some(d);
            }
            "--k" => file.k = Some(parse_num("k", &value)?),
            "--p" => file.p = Some(parse_num("p", &value)?),
            "--bins" => file.bins = Some(parse_num("bins", &value)?),
            "--resolution" => file.resolution = Some(parse_num("resolution", &value)?),
            "--mc-samples" => file.mc_samples = Some(parse_num("mc-samples", &value)?),
            "--seed" => file.seed = Some(parse_num("seed", &value)?),
            "--tolerance-scale" => {
                file.tolerance_scale = Some(parse_num("tolerance-scale", &value)?)
            }
            "--l-list" => file.l_list = Some(parse_list_f64("l-list", &value)?),
            "--p-list" => file.p_list = Some(parse_list_f64("p-list", &value)?),
            "--k-list" => file.k_list = Some(parse_list_usize("k-list", &value)?),
            "--gamma-grid" => file.gamma_grid = Some(parse_list_f64("gamma-grid", &value)?),
            "--eps-cut-list" => {
                file.eps_cut_list = Some(parse_list_f64("eps-cut-list", &value)?)
            }
            "--out" => file.out_dir = Some(value),
            "--nodes" => file.nodes = Some(parse_num("nodes", &value)?),
            "--function" => file.function = Some(value),
            "--gamma" => file.gamma = Some(parse_num("gamma", &value)?),
            "--ax" => file.point_a.get_or_insert([0.0, 0.0])[0] = parse_num("ax", &value)?,
            "--ay" => file.point_a.get_or_insert([0.0, 0.0])[1] = parse_num("ay", &value)?,
            "--bx" => file.point_b.get_or_insert([0.0, 0.0])[0] = parse_num("bx", &value)?,
            "--by" => file.point_b.get_or_insert([0.0, 0.0])[1] = parse_num("by", &value)?,
            other => {
                return Err(Error::Config {
                    key: other.trim_start_matches("--").into(),
                    message: "unknown flag".into(),
                })
            }
        }
        i += 2;
    }

    if let Some(dir) = env_out_dir {
        file.out_dir = Some(dir);
    }
    RunConfig::resolve(command, suite, file)
}

pub const HELP_TEXT: &str = "\
wsob - weighted Sobolev norms, push-forward densities, and evaluation
kernels on model singular domains

USAGE:
    wsob <command> [suite] [flags]

COMMANDS:
    density        push-forward density on the target grid (CSV), with an
                   optional Monte Carlo cross-check
    sobolev-norm   weighted Sobolev norm of a catalog function on a domain
    kernel         representer kernel matrix on a node subset (CSV), with
                   spectrum and feature-ratio tables
    geodesic       inner (shortest-path) distance between two points
    verify <s>     run a verification suite; s is one of: flat-cusp,
                   thresholds, slice-lemma, morrey, kernel-threshold,
                   retraction, coarea, all

FLAGS (value flags take one argument):
    --config PATH        JSON configuration file; flags override it
    --domain KIND        square | disk | sector | power-cusp | flat-cusp |
                         annulus | l-shape
    --l L                cusp exponent (also sets the domain parameter)
    --eps-cut E          tip truncation: drop x < E on tip-sided domains
    --h H                grid spacing
    --stencil S          four | eight | sixteen
    --k K                derivative order
    --p P                integrability exponent
    --map M              identity | project-x | norm-squared | radial
    --dim D              source dimension for norm-squared (2, 3, 4)
    --density-pow A      source density x^A (0 = uniform)
    --bins N             histogram / target bins
    --resolution R       quadrature resolution
    --mc-samples N       Monte Carlo sample count (density cross-check)
    --seed S             deterministic seed
    --tolerance-scale T  widen (>1) or collapse (<1) every pass band
    --l-list A,B,...     sweep values for verify suites
    --p-list A,B,...     sweep values for verify suites
    --k-list A,B,...     sweep values for verify suites
    --gamma-grid A,B,... explicit monomial exponent grid (thresholds)
    --eps-cut-list A,..  truncation ladder (flat-cusp suite)
    --function F         inv-x | coord-x | const | monomial (sobolev-norm)
    --gamma G            monomial exponent for --function monomial
    --nodes N            kernel evaluation subset size
    --ax --ay --bx --by  geodesic endpoints
    --matrix             geodesic: write the full distance matrix (CSV)
    --dump-operator      kernel: write the assembled operator (row col val)
    --emit-svg           verify: write one log-log SVG chart per fit
    --out DIR            output directory (created if absent)
    --help               this text

ENVIRONMENT:
    WSOB_OUT_DIR         overrides the output directory

EXIT CODES:
    0  success / all checks passed
    1  a verification check failed
    2  configuration or runtime error
";

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn minimal_density_flags_resolve_with_defaults() {
        let cfg =
            parse_config(&args(&["density", "--map", "norm-squared", "--dim", "4"]), None)
                .unwrap();
        assert_eq!(cfg.command, Command::Density);
        assert_eq!(cfg.map, "norm-squared");
        assert_eq!(cfg.dim, 4);
        assert_eq!(cfg.bins, 64);
        assert_eq!(cfg.seed, 2024);
        assert_eq!(cfg.out_dir, "out");
    }

    #[test]
    fn unknown_flag_is_named_in_the_error() {
        let err = parse_config(&args(&["density", "--stencill", "eight"]), None).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "stencill"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_file_key_is_named_in_the_error() {
        let dir = std::env::temp_dir().join("wsob-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(&path, r#"{ "stencill": "eight" }"#).unwrap();
        let err = parse_config(
            &args(&["density", "--config", path.to_str().unwrap()]),
            None,
        )
        .unwrap_err();
        match err {
            Error::Config { message, .. } => {
                assert!(message.contains("stencill"), "message: {message}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn threshold_sweep_config_matches_golden_structure() {
        let dir = std::env::temp_dir().join("wsob-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("thresholds.json");
        std::fs::write(
            &path,
            r#"{
  "suite": "thresholds",
  "l_list": [2, 3, 5],
  "p_list": [1, 2, 3],
  "k_list": [1, 2],
  "h": 0.001953125,
  "seed": 7,
  "out_dir": "reports"
}"#,
        )
        .unwrap();
        let cfg = parse_config(
            &args(&["verify", "thresholds", "--config", path.to_str().unwrap()]),
            None,
        )
        .unwrap();
        assert_eq!(cfg.command, Command::Verify);
        assert_eq!(cfg.suite, Some(Suite::Thresholds));
        assert_eq!(cfg.l_list, Some(vec![2.0, 3.0, 5.0]));
        assert_eq!(cfg.p_list, Some(vec![1.0, 2.0, 3.0]));
        assert_eq!(cfg.k_list, Some(vec![1, 2]));
        assert_eq!(cfg.h, Some(0.001953125));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.out_dir, "reports");
        assert_eq!(cfg.tolerance_scale, 1.0);
    }

    #[test]
    fn env_out_dir_wins() {
        let cfg = parse_config(
            &args(&["verify", "coarea", "--out", "flagdir"]),
            Some("envdir".into()),
        )
        .unwrap();
        assert_eq!(cfg.out_dir, "envdir");
    }

    #[test]
    fn verify_requires_a_suite() {
        assert!(parse_config(&args(&["verify"]), None).is_err());
        assert!(parse_config(&args(&["verify", "nonsense"]), None).is_err());
    }

    #[test]
    fn flag_overrides_config_file() {
        let dir = std::env::temp_dir().join("wsob-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("seed.json");
        std::fs::write(&path, r#"{ "seed": 1 }"#).unwrap();
        let cfg = parse_config(
            &args(&["verify", "coarea", "--config", path.to_str().unwrap(), "--seed", "9"]),
            None,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
    }
}
