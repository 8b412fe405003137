//! Source measures, push-forward densities via fiber integration, the
//! Monte Carlo histogram oracle, the coarea identity check, and the
//! lower-bound exponent fit for densities vanishing at the frontier.
//!
//! The catalog maps are pre-stratified: their fibers are parametrized
//! analytically (points, segments, circles, spheres) and integrated by
//! midpoint quadrature, never traced numerically.

use crate::error::{Error, Result};
use crate::geometry::{GridDomain, LineGrid};
use crate::rng::Rng;
use std::f64::consts::PI;
use std::sync::Arc;

/// Nonnegative density on the source support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityKind {
    Const(f64),
    /// x_1^a (first coordinate), a >= 0.
    CoordPow { a: f64 },
    /// |x|^a, a >= 0.
    RadialPow { a: f64 },
}

/// Source support set E.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportSet {
    /// 1-D interval (lo, hi).
    Interval { lo: f64, hi: f64 },
    /// 2-D band { 0 < x < 1, |y| < x^l }.
    Band { l: f64 },
    /// Ball of given radius about the origin in R^dim.
    Ball { dim: usize, radius: f64 },
    /// 2-D annulus r_in < |x| < r_out.
    Annulus2d { r_in: f64, r_out: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceMeasure {
    pub dim: usize,
    pub density: DensityKind,
    pub support: SupportSet,
}

impl SourceMeasure {
    pub fn xi(&self, p: &[f64]) -> f64 {
        match self.density {
            DensityKind::Const(c) => c,
            DensityKind::CoordPow { a } => p[0].max(0.0).powf(a),
            DensityKind::RadialPow { a } => {
                p.iter().map(|v| v * v).sum::<f64>().sqrt().powf(a)
            }
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match self.support {
            SupportSet::Interval { lo, hi } => p[0] > lo && p[0] < hi,
            SupportSet::Band { l } => p[0] > 0.0 && p[0] < 1.0 && p[1].abs() < p[0].powf(l),
            SupportSet::Ball { radius, .. } => {
                p.iter().map(|v| v * v).sum::<f64>() < radius * radius
            }
            SupportSet::Annulus2d { r_in, r_out } => {
                let r2 = p[0] * p[0] + p[1] * p[1];
                r2 > r_in * r_in && r2 < r_out * r_out
            }
        }
    }
}

/// The catalog of push-forward maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapKind {
    /// Identity on a 1-D source.
    Identity,
    /// (x, y) -> x on a band source; fibers are vertical segments.
    ProjectX,
    /// x -> sum x_i^2 on a ball source; fibers are spheres, jac = 2|x|.
    NormSquared,
    /// x -> |x| on a 2-D source; fibers are circles, jac = 1.
    Radial,
}

#[derive(Debug, Clone)]
pub struct PushforwardSpec {
    pub source: SourceMeasure,
    pub map: MapKind,
    pub target: LineGrid,
}

impl PushforwardSpec {
    /// Image interval of the catalog map over the source support.
    pub fn image_interval(source: &SourceMeasure, map: MapKind) -> Result<(f64, f64)> {
        match (map, source.support) {
            (MapKind::Identity, SupportSet::Interval { lo, hi }) => Ok((lo, hi)),
            (MapKind::ProjectX, SupportSet::Band { .. }) => Ok((0.0, 1.0)),
            (MapKind::NormSquared, SupportSet::Ball { radius, .. }) => {
                Ok((0.0, radius * radius))
            }
            (MapKind::Radial, SupportSet::Ball { dim: 2, radius }) => Ok((0.0, radius)),
            (MapKind::Radial, SupportSet::Annulus2d { r_in, r_out }) => Ok((r_in, r_out)),
            (m, s) => Err(Error::InvalidArgument(format!(
                "map {m:?} incompatible with support {s:?}"
            ))),
        }
    }

    pub fn new(source: SourceMeasure, map: MapKind, target: LineGrid) -> PushforwardSpec {
        PushforwardSpec { source, map, target }
    }

    pub fn with_bins(source: SourceMeasure, map: MapKind, bins: usize) -> Result<PushforwardSpec> {
        let (lo, hi) = Self::image_interval(&source, map)?;
        Ok(PushforwardSpec {
            source,
            map,
            target: LineGrid::bin_centers(lo, hi, bins)?,
        })
    }
}

/// Where a weight field lives.
#[derive(Debug, Clone)]
pub enum FieldDomain {
    Line(LineGrid),
    Grid(Arc<GridDomain>),
}

impl FieldDomain {
    pub fn len(&self) -> usize {
        match self {
            FieldDomain::Line(l) => l.len(),
            FieldDomain::Grid(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        match self {
            FieldDomain::Line(l) => vec![l.points[i]],
            FieldDomain::Grid(g) => g.nodes[i].to_vec(),
        }
    }

    pub fn quad_weight(&self, i: usize) -> f64 {
        match self {
            FieldDomain::Line(l) => l.weights[i],
            FieldDomain::Grid(g) => g.node_weights[i],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Coarea,
    MonteCarlo,
    Tabulated,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::Coarea => "coarea",
            Provenance::MonteCarlo => "monte-carlo",
            Provenance::Tabulated => "tabulated",
        }
    }
}

/// Nonnegative nodal density. Infinite values are permitted as sentinels;
/// they are flagged and skipped by every norm assembly.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub domain: FieldDomain,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl WeightField {
    pub fn new(domain: FieldDomain, values: Vec<f64>, provenance: Provenance) -> WeightField {
        assert_eq!(domain.len(), values.len());
        debug_assert!(values.iter().all(|&v| v >= 0.0 || v.is_nan()));
        WeightField { domain, values, provenance }
    }

    pub fn constant_on_grid(grid: Arc<GridDomain>, value: f64) -> WeightField {
        let n = grid.len();
        WeightField::new(FieldDomain::Grid(grid), vec![value; n], Provenance::Analytic)
    }

    pub fn from_grid_fn(grid: Arc<GridDomain>, f: impl Fn([f64; 2]) -> f64) -> WeightField {
        let values = grid.nodes.iter().map(|&p| f(p)).collect();
        WeightField::new(FieldDomain::Grid(grid), values, Provenance::Analytic)
    }

    pub fn from_line_fn(line: LineGrid, f: impl Fn(f64) -> f64) -> WeightField {
        let values = line.points.iter().map(|&x| f(x)).collect();
        WeightField::new(FieldDomain::Line(line), values, Provenance::Analytic)
    }

    /// Indices with finite positive weight.
    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i].is_finite() && self.values[i] > 0.0)
            .collect()
    }

    /// Indices flagged infinite (excluded from every quadrature).
    pub fn infinite_indices(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i].is_infinite())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let dim = match &self.domain {
            FieldDomain::Line(_) => 1,
            FieldDomain::Grid(_) => 2,
        };
        let header: Vec<&str> = match dim {
            1 => vec!["x", "f", "provenance"],
            _ => vec!["x", "y", "f", "provenance"],
        };
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.values.len() {
            for c in self.domain.coords(i) {
                out.push_str(&format!("{c:.12e},"));
            }
            out.push_str(&format!("{:.11e},{}\n", self.values[i], self.provenance.label()));
        }
        out
    }
}

pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => PI * PI / 2.0,
        _ => panic!("unsupported dimension {dim}"),
    }
}

pub fn unit_sphere_area(dim: usize) -> f64 {
    // surface measure of S^{dim-1} in R^dim
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Integral of f over the sphere of radius rho in R^dim (midpoint rules in
/// hyperspherical angles; n controls the finest angular resolution).
fn sphere_integral(dim: usize, rho: f64, n: usize, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    match dim {
        2 => {
            let m = n.max(8);
            let dth = 2.0 * PI / m as f64;
            let mut s = 0.0;
            for i in 0..m {
                let th = (i as f64 + 0.5) * dth;
                s += f(&[rho * th.cos(), rho * th.sin()]);
            }
            s * rho * dth
        }
        3 => {
            // substitute u = cos(phi): flat measure on u, exact for radial
            // integrands regardless of resolution
            let m_u = n.max(8);
            let m_th = 2 * m_u;
            let du = 2.0 / m_u as f64;
            let dth = 2.0 * PI / m_th as f64;
            let mut s = 0.0;
            for i in 0..m_u {
                let u = -1.0 + (i as f64 + 0.5) * du;
                let sp = (1.0 - u * u).sqrt();
                let mut ring = 0.0;
                for j in 0..m_th {
                    let th = (j as f64 + 0.5) * dth;
                    ring += f(&[rho * sp * th.cos(), rho * sp * th.sin(), rho * u]);
                }
                s += ring * du * dth;
            }
            s * rho * rho
        }
        4 => {
            // psi keeps the sin^2 weight (midpoint integrates it exactly);
            // phi uses the u = cos(phi) substitution
            let m_psi = n.max(8);
            let m_u = n.max(8);
            let m_th = 2 * n.max(8);
            let dpsi = PI / m_psi as f64;
            let du = 2.0 / m_u as f64;
            let dth = 2.0 * PI / m_th as f64;
            let mut s = 0.0;
            for i in 0..m_psi {
                let psi = (i as f64 + 0.5) * dpsi;
                let (spsi, cpsi) = (psi.sin(), psi.cos());
                for j in 0..m_u {
                    let u = -1.0 + (j as f64 + 0.5) * du;
                    let sphi = (1.0 - u * u).sqrt();
                    let mut ring = 0.0;
                    for k in 0..m_th {
                        let th = (k as f64 + 0.5) * dth;
                        ring += f(&[
                            rho * cpsi,
                            rho * spsi * u,
                            rho * spsi * sphi * th.cos(),
                            rho * spsi * sphi * th.sin(),
                        ]);
                    }
                    s += ring * spsi * spsi * dpsi * du * dth;
                }
            }
            s * rho * rho * rho
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

fn angular_resolution(resolution: usize, dim: usize) -> usize {
    // the cosine substitution integrates radial factors exactly, so the
    // angular grids only have to resolve the integrand's low harmonics
    match dim {
        2 => resolution.max(16),
        3 => (resolution / 16).clamp(16, 48),
        _ => (resolution / 32).clamp(12, 20),
    }
}

/// Integral of `g` over the fiber of the catalog map above `y`, with respect
/// to the fiber's Hausdorff measure. `checked` additionally enforces the
/// fiber-escape and degenerate-jacobian contracts of the density operation.
fn fiber_integral(
    source: &SourceMeasure,
    map: MapKind,
    y: f64,
    resolution: usize,
    checked: bool,
    g: &mut dyn FnMut(&[f64]) -> f64,
) -> Result<f64> {
    match map {
        MapKind::Identity => {
            let p = [y];
            if checked && !source.contains(&p) {
                return Err(Error::FiberEscape { point: p.to_vec() });
            }
            Ok(g(&p))
        }
        MapKind::ProjectX => {
            let l = match source.support {
                SupportSet::Band { l } => l,
                _ => return Err(Error::InvalidArgument("ProjectX needs a band source".into())),
            };
            if checked && !(y > 0.0 && y < 1.0) {
                return Err(Error::FiberEscape { point: vec![y, 0.0] });
            }
            let w = y.powf(l);
            let n = resolution.max(8);
            let dt = 2.0 * w / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let t = -w + (i as f64 + 0.5) * dt;
                let p = [y, t];
                if checked && !source.contains(&p) {
                    return Err(Error::FiberEscape { point: p.to_vec() });
                }
                s += g(&p);
            }
            Ok(s * dt)
        }
        MapKind::NormSquared => {
            let (dim, radius) = match source.support {
                SupportSet::Ball { dim, radius } => (dim, radius),
                _ => return Err(Error::InvalidArgument("NormSquared needs a ball source".into())),
            };
            if checked && !(y >= 0.0 && y < radius * radius) {
                return Err(Error::FiberEscape { point: vec![y] });
            }
            let rho = y.max(0.0).sqrt();
            let n = angular_resolution(resolution, dim);
            Ok(sphere_integral(dim, rho, n, g))
        }
        MapKind::Radial => {
            let ok = match source.support {
                SupportSet::Ball { dim: 2, radius } => y >= 0.0 && y < radius,
                SupportSet::Annulus2d { r_in, r_out } => y > r_in && y < r_out,
                _ => {
                    return Err(Error::InvalidArgument(
                        "Radial needs a 2-D ball or annulus source".into(),
                    ))
                }
            };
            if checked && !ok {
                return Err(Error::FiberEscape { point: vec![y, 0.0] });
            }
            let n = angular_resolution(resolution, 2);
            Ok(sphere_integral(2, y, n, g))
        }
    }
}

/// Generalized Jacobian of the catalog map at a fiber point.
fn jacobian(map: MapKind, p: &[f64]) -> f64 {
    match map {
        MapKind::Identity | MapKind::ProjectX | MapKind::Radial => 1.0,
        MapKind::NormSquared => 2.0 * p.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Push-forward density on the target grid, computed as the fiber integral
/// of xi / jac for each target point. `truncate_unit` clamps the integrand
/// at 1 (the truncation used to keep families uniformly bounded).
pub fn pushforward_density(
    spec: &PushforwardSpec,
    resolution: usize,
    truncate_unit: bool,
) -> Result<WeightField> {
    let mut values = Vec::with_capacity(spec.target.len());
    for &y in &spec.target.points {
        let mut err: Option<Error> = None;
        let source = spec.source;
        let map = spec.map;
        let mut integrand = |p: &[f64]| -> f64 {
            let j = jacobian(map, p);
            if j < 1e-12 {
                err = Some(Error::DegenerateJacobian { point: p.to_vec(), jac: j });
                return 0.0;
            }
            let v = source.xi(p) / j;
            if truncate_unit {
                v.min(1.0)
            } else {
                v
            }
        };
        let v = fiber_integral(&spec.source, spec.map, y, resolution, true, &mut integrand)?;
        if let Some(e) = err {
            return Err(e);
        }
        values.push(v);
    }
    Ok(WeightField::new(
        FieldDomain::Line(spec.target.clone()),
        values,
        Provenance::Coarea,
    ))
}

/// Histogram estimate of the push-forward density: per-bin mass divided by
/// bin width. Deterministic for a fixed seed. Sampling uses inverse-CDF
/// transforms for every catalog (support, density) pair.
pub fn monte_carlo_density(
    spec: &PushforwardSpec,
    samples: usize,
    bins: usize,
    seed: u64,
) -> Result<WeightField> {
    if samples < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10^4 samples, got {samples}"
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let (lo, hi) = PushforwardSpec::image_interval(&spec.source, spec.map)?;
    let width = (hi - lo) / bins as f64;
    let mut rng = Rng::seed_from(seed);
    let mut counts = vec![0u64; bins];

    // (sampled target value, total mass) per catalog pair
    let mass;
    let mut draw: Box<dyn FnMut(&mut Rng) -> f64> = match (spec.source.support, spec.source.density)
    {
        (SupportSet::Interval { lo: a, hi: b }, DensityKind::Const(c)) => {
            mass = c * (b - a);
            Box::new(move |r| a + (b - a) * r.uniform())
        }
        (SupportSet::Interval { lo: a, hi: b }, DensityKind::CoordPow { a: pow })
            if a == 0.0 =>
        {
            mass = b.powf(pow + 1.0) / (pow + 1.0);
            Box::new(move |r| b * r.uniform().powf(1.0 / (pow + 1.0)))
        }
        (SupportSet::Band { l }, DensityKind::Const(c)) => {
            mass = c * 2.0 / (l + 1.0);
            Box::new(move |r| r.uniform().powf(1.0 / (l + 1.0)))
        }
        (SupportSet::Band { l }, DensityKind::CoordPow { a }) => {
            mass = 2.0 / (a + l + 1.0);
            Box::new(move |r| r.uniform().powf(1.0 / (a + l + 1.0)))
        }
        (SupportSet::Ball { dim, radius }, DensityKind::Const(c)) => {
            mass = c * unit_ball_volume(dim) * radius.powi(dim as i32);
            let d = dim as f64;
            match spec.map {
                MapKind::NormSquared => Box::new(move |r| {
                    let rho = radius * r.uniform().powf(1.0 / d);
                    rho * rho
                }),
                MapKind::Radial => Box::new(move |r| radius * r.uniform().powf(1.0 / d)),
                _ => {
                    return Err(Error::InvalidArgument(
                        "ball sources feed NormSquared or Radial".into(),
                    ))
                }
            }
        }
        (SupportSet::Ball { dim, radius }, DensityKind::RadialPow { a }) => {
            mass = unit_sphere_area(dim) * radius.powf(dim as f64 + a) / (dim as f64 + a);
            let e = 1.0 / (dim as f64 + a);
            match spec.map {
                MapKind::NormSquared => Box::new(move |r| {
                    let rho = radius * r.uniform().powf(e);
                    rho * rho
                }),
                MapKind::Radial => Box::new(move |r| radius * r.uniform().powf(e)),
                _ => {
                    return Err(Error::InvalidArgument(
                        "ball sources feed NormSquared or Radial".into(),
                    ))
                }
            }
        }
        (SupportSet::Annulus2d { r_in, r_out }, DensityKind::Const(c)) => {
            mass = c * PI * (r_out * r_out - r_in * r_in);
            Box::new(move |r| {
                (r_in * r_in + (r_out * r_out - r_in * r_in) * r.uniform()).sqrt()
            })
        }
        (s, d) => {
            return Err(Error::InvalidArgument(format!(
                "no sampler for support {s:?} with density {d:?}"
            )))
        }
    };

    for _ in 0..samples {
        let t = draw(&mut rng);
        let b = (((t - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    drop(draw);
    let values: Vec<f64> = counts
        .iter()
        .map(|&c| mass * c as f64 / (samples as f64 * width))
        .collect();
    Ok(WeightField::new(
        FieldDomain::Line(LineGrid::bin_centers(lo, hi, bins)?),
        values,
        Provenance::MonteCarlo,
    ))
}

/// 2-D cartesian quadrature over a membership predicate with 4x4 subsampling
/// of partially covered cells.
fn quad_2d(
    lo: [f64; 2],
    hi: [f64; 2],
    n: usize,
    inside: &dyn Fn([f64; 2]) -> bool,
    f: &mut dyn FnMut([f64; 2]) -> f64,
) -> f64 {
    let dx = (hi[0] - lo[0]) / n as f64;
    let dy = (hi[1] - lo[1]) / n as f64;
    let cell = dx * dy;
    let mut s = 0.0;
    for i in 0..n {
        let x0 = lo[0] + i as f64 * dx;
        for j in 0..n {
            let y0 = lo[1] + j as f64 * dy;
            let corners = [
                inside([x0, y0]),
                inside([x0 + dx, y0]),
                inside([x0, y0 + dy]),
                inside([x0 + dx, y0 + dy]),
            ];
            let c = [x0 + 0.5 * dx, y0 + 0.5 * dy];
            if corners.iter().all(|&b| b) && inside(c) {
                s += f(c) * cell;
            } else if corners.iter().any(|&b| b) || inside(c) {
                // partially covered: subsample 4x4
                let sub = cell / 16.0;
                for a in 0..4 {
                    for b in 0..4 {
                        let p = [
                            x0 + (a as f64 + 0.5) * dx / 4.0,
                            y0 + (b as f64 + 0.5) * dy / 4.0,
                        ];
                        if inside(p) {
                            s += f(p) * sub;
                        }
                    }
                }
            }
        }
    }
    s
}

/// Integral of `g` over the source support against the source Hausdorff
/// measure (no density): the building block for both coarea sides.
fn source_integral(
    source: &SourceMeasure,
    map: MapKind,
    resolution: usize,
    g: &mut dyn FnMut(&[f64]) -> f64,
) -> Result<f64> {
    match source.support {
        SupportSet::Interval { lo, hi } => {
            let n = resolution.max(8);
            let d = (hi - lo) / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                s += g(&[lo + (i as f64 + 0.5) * d]);
            }
            Ok(s * d)
        }
        SupportSet::Band { l } => {
            let src = *source;
            let inside = move |p: [f64; 2]| -> bool {
                let _ = l;
                src.contains(&p)
            };
            Ok(quad_2d(
                [0.0, -1.0],
                [1.0, 1.0],
                resolution.max(16),
                &inside,
                &mut |p| g(&p),
            ))
        }
        SupportSet::Annulus2d { r_out, .. } => {
            let src = *source;
            let inside = move |p: [f64; 2]| src.contains(&p);
            Ok(quad_2d(
                [-r_out, -r_out],
                [r_out, r_out],
                resolution.max(16),
                &inside,
                &mut |p| g(&p),
            ))
        }
        SupportSet::Ball { dim, radius } => {
            if dim == 2 && map != MapKind::Radial {
                let src = *source;
                let inside = move |p: [f64; 2]| src.contains(&p);
                return Ok(quad_2d(
                    [-radius, -radius],
                    [radius, radius],
                    resolution.max(16),
                    &inside,
                    &mut |p| g(&p),
                ));
            }
            // radial shells x angular quadrature (d >= 3, or radial maps)
            let n_r = resolution.max(16);
            let n_ang = angular_resolution(resolution, dim);
            let dr = radius / n_r as f64;
            let mut s = 0.0;
            for i in 0..n_r {
                let rho = (i as f64 + 0.5) * dr;
                s += sphere_integral(dim, rho, n_ang, g);
            }
            Ok(s * dr)
        }
    }
}

/// Both sides of the coarea identity at the given quadrature resolution:
/// lhs integrates g * jac over the source, rhs integrates the fiber
/// integrals of g over the target interval.
pub fn coarea_check(
    spec: &PushforwardSpec,
    g: &dyn Fn(&[f64]) -> f64,
    resolution: usize,
) -> Result<(f64, f64)> {
    let map = spec.map;
    let mut lhs_integrand = |p: &[f64]| g(p) * jacobian(map, p);
    let lhs = source_integral(&spec.source, spec.map, resolution, &mut lhs_integrand)?;

    let (lo, hi) = PushforwardSpec::image_interval(&spec.source, spec.map)?;
    let n = resolution.max(8);
    let dt = (hi - lo) / n as f64;
    let mut rhs = 0.0;
    for i in 0..n {
        let y = lo + (i as f64 + 0.5) * dt;
        let mut plain = |p: &[f64]| g(p);
        rhs += fiber_integral(&spec.source, spec.map, y, resolution, false, &mut plain)?;
    }
    rhs *= dt;
    Ok((lhs, rhs))
}

/// Total mass of the source measure, by quadrature.
pub fn source_mass(source: &SourceMeasure, resolution: usize) -> Result<f64> {
    let src = *source;
    let mut xi = move |p: &[f64]| src.xi(p);
    // the map only matters for choosing the ball parametrization
    source_integral(source, MapKind::Radial, resolution, &mut xi)
}

/// Fitted lower bound f(y) >= c * d(y, B u frontier)^alpha.
#[derive(Debug, Clone)]
pub struct LowerBoundFit {
    pub alpha: f64,
    pub c: f64,
    /// Max relative violation of f >= c d^alpha over the sample (zero by
    /// construction once c is the empirical minimum ratio).
    pub residual: f64,
    pub b_nodes: Vec<usize>,
    pub points_used: usize,
}

/// Distance from each node to B and to the frontier of the field's domain.
fn frontier_distances(field: &WeightField, b: &[usize]) -> Vec<f64> {
    match &field.domain {
        FieldDomain::Line(lg) => {
            let bxs: Vec<f64> = b.iter().map(|&i| lg.points[i]).collect();
            lg.points
                .iter()
                .map(|&x| {
                    let mut d = (x - lg.lo).min(lg.hi - x);
                    for &bx in &bxs {
                        d = d.min((x - bx).abs());
                    }
                    d
                })
                .collect()
        }
        FieldDomain::Grid(g) => {
            // ghost points: non-member lattice sites adjacent to members
            let mut ghosts: Vec<[f64; 2]> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for &(ix, iy) in &g.lattice {
                for dx in -1..=1i64 {
                    for dy in -1..=1i64 {
                        let q = (ix + dx, iy + dy);
                        if g.node_at(q.0, q.1).is_none() && seen.insert(q) {
                            ghosts.push([q.0 as f64 * g.h, q.1 as f64 * g.h]);
                        }
                    }
                }
            }
            let bps: Vec<[f64; 2]> = b.iter().map(|&i| g.nodes[i]).collect();
            g.nodes
                .iter()
                .map(|p| {
                    let mut d = f64::INFINITY;
                    for q in ghosts.iter().chain(&bps) {
                        let dd = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                        if dd < d {
                            d = dd;
                        }
                    }
                    d
                })
                .collect()
        }
    }
}

/// Fit the vanishing exponent of a weight field against the distance to the
/// declared null set and the frontier. The envelope uses the lowest decile
/// of log f per distance bin, so the fit tracks the lower bound rather than
/// the bulk.
pub fn fit_lower_bound(field: &WeightField, b: &[usize]) -> Result<LowerBoundFit> {
    let dists = frontier_distances(field, b);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (i, (&f, &d)) in field.values.iter().zip(&dists).enumerate() {
        if f.is_finite() && f > 0.0 && d > 0.0 && !b.contains(&i) {
            pts.push((d.ln(), f.ln()));
        }
    }
    if pts.is_empty() {
        return Err(Error::AllZeroWeight);
    }

    let dmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let dmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let alpha = if dmax - dmin < 1e-9 {
        0.0
    } else {
        let mut env: Vec<(f64, f64)> = Vec::new();
        for nbins in [16usize, 8, 4] {
            env.clear();
            let bw = (dmax - dmin) / nbins as f64;
            for k in 0..nbins {
                let lo = dmin + k as f64 * bw;
                let hi = lo + bw;
                let mut ys: Vec<f64> = pts
                    .iter()
                    .filter(|p| p.0 >= lo && p.0 < hi + if k + 1 == nbins { 1e-12 } else { 0.0 })
                    .map(|p| p.1)
                    .collect();
                if ys.is_empty() {
                    continue;
                }
                ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let decile = ys[(ys.len() - 1) / 10];
                env.push((lo + 0.5 * bw, decile));
            }
            if env.len() >= 3 {
                break;
            }
        }
        if env.len() < 2 {
            0.0
        } else {
            let n = env.len() as f64;
            let mx = env.iter().map(|p| p.0).sum::<f64>() / n;
            let my = env.iter().map(|p| p.1).sum::<f64>() / n;
            let sxx: f64 = env.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            let sxy: f64 = env.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            (sxy / sxx).clamp(-32.0, 32.0)
        }
    };

    let mut c = f64::INFINITY;
    for &(ld, lf) in &pts {
        let ratio = (lf - alpha * ld).exp();
        if ratio < c {
            c = ratio;
        }
    }
    let mut residual = 0.0f64;
    for &(ld, lf) in &pts {
        let f = lf.exp();
        let bound = c * (alpha * ld).exp();
        residual = residual.max((bound - f) / f);
    }
    Ok(LowerBoundFit {
        alpha,
        c,
        residual: residual.max(0.0),
        b_nodes: b.to_vec(),
        points_used: pts.len(),
    })
}

/// The four standard catalog push-forward specs (unit densities).
pub fn catalog_specs(bins: usize) -> Vec<(String, PushforwardSpec)> {
    let mut v = Vec::new();
    v.push((
        "identity-unit".to_string(),
        PushforwardSpec::with_bins(
            SourceMeasure {
                dim: 1,
                density: DensityKind::Const(1.0),
                support: SupportSet::Interval { lo: 0.0, hi: 1.0 },
            },
            MapKind::Identity,
            bins,
        )
        .unwrap(),
    ));
    v.push((
        "project-x-l2".to_string(),
        PushforwardSpec::with_bins(
            SourceMeasure {
                dim: 2,
                density: DensityKind::Const(1.0),
                support: SupportSet::Band { l: 2.0 },
            },
            MapKind::ProjectX,
            bins,
        )
        .unwrap(),
    ));
    v.push((
        "norm-squared-d4".to_string(),
        PushforwardSpec::with_bins(
            SourceMeasure {
                dim: 4,
                density: DensityKind::Const(1.0),
                support: SupportSet::Ball { dim: 4, radius: 1.0 },
            },
            MapKind::NormSquared,
            bins,
        )
        .unwrap(),
    ));
    v.push((
        "radial-annulus".to_string(),
        PushforwardSpec::with_bins(
            SourceMeasure {
                dim: 2,
                density: DensityKind::Const(1.0),
                support: SupportSet::Annulus2d { r_in: 1.0, r_out: 2.0 },
            },
            MapKind::Radial,
            bins,
        )
        .unwrap(),
    ));
    v
}
