//! Model singular domains and their lattice discretizations.
//!
//! The catalog covers the shapes the rest of the crate measures things on:
//! squares and disks (regular), sectors and power cusps (conical/polynomial
//! contact), the flat cusp `|y| < exp(-1/x^2)` (flat contact, the
//! counterexample geometry), annuli and an L-shape.
//!
//! Grid nodes are the lattice points `h * Z^2` strictly inside the domain.
//! Each node carries a quadrature weight. For cusp profiles the weight clips
//! the cell's y-extent against the true profile: a one-node-wide whisker row
//! otherwise carries mass h^2 instead of `2 w(x) h`, which inflates every
//! weighted norm of a singular integrand near the tip (the relative bias is
//! unbounded as w -> 0, not O(h)). On the square, 1-D boundary-extrapolated
//! end corrections push the quadrature to second order, which the norm
//! refinement checks require.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    Square,
    Disk,
    Sector { angle: f64 },
    PowerCusp { l: f64 },
    FlatCusp,
    Annulus { r_in: f64, r_out: f64 },
    LShape,
}

/// A model domain: a shape from the catalog plus an optional tip truncation
/// `eps_cut` that removes `x < eps_cut` on the tip-sided shapes (power cusp,
/// flat cusp, sector). The singular base point is the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub eps_cut: f64,
}

impl DomainSpec {
    pub fn new(kind: DomainKind) -> DomainSpec {
        DomainSpec { kind, eps_cut: 0.0 }
    }

    pub fn with_eps_cut(kind: DomainKind, eps_cut: f64) -> DomainSpec {
        DomainSpec { kind, eps_cut }
    }

    /// The singular/base point.
    pub fn base_point(&self) -> [f64; 2] {
        [0.0, 0.0]
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match self.kind {
            DomainKind::Square | DomainKind::LShape => ([0.0, 0.0], [1.0, 1.0]),
            DomainKind::Disk => ([-1.0, -1.0], [1.0, 1.0]),
            DomainKind::Sector { .. } => ([0.0, -1.0], [1.0, 1.0]),
            DomainKind::PowerCusp { .. } => ([0.0, -1.0], [1.0, 1.0]),
            DomainKind::FlatCusp => {
                let w = (-1.0f64).exp();
                ([0.0, -w], [1.0, w])
            }
            DomainKind::Annulus { r_out, .. } => ([-r_out, -r_out], [r_out, r_out]),
        }
    }

    /// Half-width profile w(x) for the band-shaped kinds, so that membership
    /// there is `0 < x < 1 && |y| < w(x)`.
    pub fn profile(&self, x: f64) -> Option<f64> {
        match self.kind {
            DomainKind::PowerCusp { l } => {
                if x > 0.0 && x < 1.0 {
                    Some(x.powf(l))
                } else {
                    Some(0.0)
                }
            }
            DomainKind::FlatCusp => {
                if x > 0.0 && x < 1.0 {
                    Some((-1.0 / (x * x)).exp())
                } else {
                    Some(0.0)
                }
            }
            _ => None,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let [x, y] = p;
        let base = match self.kind {
            DomainKind::Square => x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0,
            DomainKind::Disk => x * x + y * y < 1.0,
            DomainKind::Sector { angle } => {
                let r2 = x * x + y * y;
                r2 > 0.0 && r2 < 1.0 && y.atan2(x).abs() < 0.5 * angle
            }
            DomainKind::PowerCusp { .. } | DomainKind::FlatCusp => {
                x > 0.0 && x < 1.0 && y.abs() < self.profile(x).unwrap()
            }
            DomainKind::Annulus { r_in, r_out } => {
                let r2 = x * x + y * y;
                r2 > r_in * r_in && r2 < r_out * r_out
            }
            DomainKind::LShape => {
                x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0 && !(x >= 0.5 && y >= 0.5)
            }
        };
        if !base {
            return false;
        }
        match self.kind {
            DomainKind::PowerCusp { .. } | DomainKind::FlatCusp | DomainKind::Sector { .. } => {
                self.eps_cut <= 0.0 || x >= self.eps_cut
            }
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    Four,
    Eight,
    Sixteen,
}

impl Stencil {
    /// Unique edge directions (one per undirected edge).
    fn half_offsets(self) -> &'static [(i64, i64)] {
        match self {
            Stencil::Four => &[(1, 0), (0, 1)],
            Stencil::Eight => &[(1, 0), (0, 1), (1, 1), (1, -1)],
            Stencil::Sixteen => &[
                (1, 0),
                (0, 1),
                (1, 1),
                (1, -1),
                (2, 1),
                (1, 2),
                (2, -1),
                (1, -2),
            ],
        }
    }
}

/// Lattice discretization of a `DomainSpec`.
#[derive(Debug, Clone)]
pub struct GridDomain {
    pub spec: DomainSpec,
    pub h: f64,
    pub stencil: Stencil,
    /// Node coordinates, ordered by (ix, iy) ascending.
    pub nodes: Vec<[f64; 2]>,
    /// Integer lattice coordinates of each node.
    pub lattice: Vec<(i64, i64)>,
    /// Dense node index over the bounding lattice window (-1 = no node);
    /// stencil window scans hit this on every offset, so it must be O(1).
    index: Vec<i32>,
    index_origin: (i64, i64),
    index_dims: (usize, usize),
    /// Nominal cell volume h^2.
    pub cell_volume: f64,
    /// Per-node quadrature weights (clipped / end-corrected as documented).
    pub node_weights: Vec<f64>,
    /// Undirected edges (i, j, euclidean length), i < j.
    pub edges: Vec<(u32, u32, f64)>,
    /// True when one of the 8 surrounding lattice points is not a member.
    pub boundary: Vec<bool>,
}

/// 1-D quadrature weight inside a run of `q` nodes bounded by walls one `h`
/// beyond each end (boundary-extrapolated end-corrected midpoint rule).
fn corrected_weight_1d(pos: usize, q: usize, h: f64) -> f64 {
    if q < 5 {
        return h;
    }
    if pos == 0 || pos == q - 1 {
        2.0 * h
    } else if pos == 1 || pos == q - 2 {
        0.5 * h
    } else {
        h
    }
}

pub fn build_grid_domain(spec: DomainSpec, h: f64, stencil: Stencil) -> Result<GridDomain> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("grid spacing h = {h}")));
    }
    let (lo, hi) = spec.bounding_box();
    let ix0 = (lo[0] / h).floor() as i64 - 1;
    let ix1 = (hi[0] / h).ceil() as i64 + 1;
    let iy0 = (lo[1] / h).floor() as i64 - 1;
    let iy1 = (hi[1] / h).ceil() as i64 + 1;

    let dims = ((ix1 - ix0 + 1) as usize, (iy1 - iy0 + 1) as usize);
    let mut nodes = Vec::new();
    let mut lattice = Vec::new();
    let mut index = vec![-1i32; dims.0 * dims.1];
    for ix in ix0..=ix1 {
        for iy in iy0..=iy1 {
            let p = [ix as f64 * h, iy as f64 * h];
            if spec.contains(p) {
                index[(ix - ix0) as usize * dims.1 + (iy - iy0) as usize] =
                    nodes.len() as i32;
                lattice.push((ix, iy));
                nodes.push(p);
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::EmptyDomain);
    }

    // quadrature weights
    let n = nodes.len();
    let mut node_weights = vec![h * h; n];
    match spec.kind {
        DomainKind::PowerCusp { .. } | DomainKind::FlatCusp => {
            for (k, &[x, y]) in nodes.iter().enumerate() {
                let w = spec.profile(x).unwrap();
                let yext = (y + 0.5 * h).min(w) - (y - 0.5 * h).max(-w);
                node_weights[k] = h * yext.max(0.0);
            }
        }
        DomainKind::Square => {
            // runs are the full (0,1) extent in both directions
            let count = ((1.0 / h).round() as i64 - 1).max(1) as usize;
            for (k, &(ix, iy)) in lattice.iter().enumerate() {
                let wx = corrected_weight_1d((ix - 1) as usize, count, h);
                let wy = corrected_weight_1d((iy - 1) as usize, count, h);
                node_weights[k] = wx * wy;
            }
        }
        _ => {}
    }

    let lookup = |ix: i64, iy: i64| -> Option<u32> {
        if ix < ix0 || ix > ix1 || iy < iy0 || iy > iy1 {
            return None;
        }
        let v = index[(ix - ix0) as usize * dims.1 + (iy - iy0) as usize];
        if v >= 0 {
            Some(v as u32)
        } else {
            None
        }
    };

    // adjacency
    let mut edges = Vec::new();
    for (k, &(ix, iy)) in lattice.iter().enumerate() {
        for &(dx, dy) in stencil.half_offsets() {
            if let Some(j) = lookup(ix + dx, iy + dy) {
                let len = h * ((dx * dx + dy * dy) as f64).sqrt();
                let (a, b) = if (k as u32) < j { (k as u32, j) } else { (j, k as u32) };
                edges.push((a, b, len));
            }
        }
    }

    let mut boundary = vec![false; n];
    for (k, &(ix, iy)) in lattice.iter().enumerate() {
        'ring: for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                if lookup(ix + dx, iy + dy).is_none() {
                    boundary[k] = true;
                    break 'ring;
                }
            }
        }
    }

    Ok(GridDomain {
        spec,
        h,
        stencil,
        nodes,
        lattice,
        index,
        index_origin: (ix0, iy0),
        index_dims: dims,
        cell_volume: h * h,
        node_weights,
        edges,
        boundary,
    })
}

impl GridDomain {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn node_at(&self, ix: i64, iy: i64) -> Option<usize> {
        let (ox, oy) = self.index_origin;
        let jx = ix - ox;
        let jy = iy - oy;
        if jx < 0 || jy < 0 || jx as usize >= self.index_dims.0 || jy as usize >= self.index_dims.1
        {
            return None;
        }
        let v = self.index[jx as usize * self.index_dims.1 + jy as usize];
        if v >= 0 {
            Some(v as usize)
        } else {
            None
        }
    }

    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, q) in self.nodes.iter().enumerate() {
            let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Bilinear interpolation of nodal values with nearest-member fallback
    /// where the surrounding lattice cell is incomplete (near the frontier
    /// or in sub-lattice whiskers).
    pub fn interpolate(&self, values: &[f64], p: [f64; 2]) -> f64 {
        let h = self.h;
        let ix = (p[0] / h).floor() as i64;
        let iy = (p[1] / h).floor() as i64;
        let corners = [
            (ix, iy),
            (ix + 1, iy),
            (ix, iy + 1),
            (ix + 1, iy + 1),
        ];
        let idx: Vec<Option<usize>> = corners.iter().map(|&(a, b)| self.node_at(a, b)).collect();
        if idx.iter().all(|o| o.is_some()) {
            let tx = p[0] / h - ix as f64;
            let ty = p[1] / h - iy as f64;
            let v00 = values[idx[0].unwrap()];
            let v10 = values[idx[1].unwrap()];
            let v01 = values[idx[2].unwrap()];
            let v11 = values[idx[3].unwrap()];
            return v00 * (1.0 - tx) * (1.0 - ty)
                + v10 * tx * (1.0 - ty)
                + v01 * (1.0 - tx) * ty
                + v11 * tx * ty;
        }
        // nearest member within an expanding ring, then global fallback
        for r in 0..=3i64 {
            let mut best: Option<(f64, usize)> = None;
            for dx in -r..=r {
                for dy in -r..=r {
                    if let Some(k) = self.node_at(ix + dx, iy + dy) {
                        let q = self.nodes[k];
                        let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                        if best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, k));
                        }
                    }
                }
            }
            if let Some((_, k)) = best {
                return values[k];
            }
        }
        values[self.nearest_node(p)]
    }
}

/// Quadrature points along the circular slice of radius `eta` about the base
/// point, with 1-D weights. Arc endpoints are located by bisection on the
/// membership predicate, never snapped to the grid.
#[derive(Debug, Clone)]
pub struct SphereSlice {
    pub eta: f64,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Arc id per quadrature point (points are ordered along each arc).
    pub arc_of: Vec<u32>,
    pub arc_count: usize,
}

impl SphereSlice {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub fn sphere_slice(spec: &DomainSpec, eta: f64, tol: f64) -> Result<SphereSlice> {
    if !(eta > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta}, tol = {tol}")));
    }
    let x0 = spec.base_point();
    let member = |theta: f64| -> bool {
        spec.contains([x0[0] + eta * theta.cos(), x0[1] + eta * theta.sin()])
    };

    // scan: uniform plus a geometric cluster near the axis where the
    // tip-sided domains concentrate their (possibly very narrow) arcs
    let n_scan = 4096usize;
    let mut thetas: Vec<f64> = (0..n_scan)
        .map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n_scan as f64)
        .collect();
    let mut t = 0.5;
    for _ in 0..48 {
        thetas.push(t);
        thetas.push(-t);
        t *= 0.5;
    }
    thetas.push(0.0);
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thetas.dedup();

    let flags: Vec<bool> = thetas.iter().map(|&t| member(t)).collect();
    if flags.iter().all(|&f| !f) {
        return Err(Error::EmptySlice);
    }
    if flags.iter().all(|&f| f) {
        // full circle
        let n_q = 512usize;
        let dtheta = 2.0 * std::f64::consts::PI / n_q as f64;
        let mut points = Vec::with_capacity(n_q);
        let mut weights = Vec::with_capacity(n_q);
        for i in 0..n_q {
            let th = -std::f64::consts::PI + (i as f64 + 0.5) * dtheta;
            points.push([x0[0] + eta * th.cos(), x0[1] + eta * th.sin()]);
            weights.push(eta * dtheta);
        }
        let arc_of = vec![0u32; n_q];
        return Ok(SphereSlice { eta, points, weights, arc_of, arc_count: 1 });
    }

    let ang_tol = (tol / eta).min(1e-3).max(1e-14);
    let bisect = |mut inside: f64, mut outside: f64| -> f64 {
        while (inside - outside).abs() > ang_tol {
            let mid = 0.5 * (inside + outside);
            if member(mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };

    // rotate the scan so it starts outside the domain, then collect maximal
    // member runs; each run becomes one arc with bisected endpoints
    let m = thetas.len();
    let start_out = flags.iter().position(|&f| !f).unwrap();
    let mut arcs: Vec<(f64, f64)> = Vec::new();
    let mut i = 0usize;
    let two_pi = 2.0 * std::f64::consts::PI;
    let at = |k: usize| -> (f64, bool) {
        let idx = (start_out + k) % m;
        let lift = if start_out + k >= m { two_pi } else { 0.0 };
        (thetas[idx] + lift, flags[idx])
    };
    while i < m {
        if at(i).1 {
            let entry = bisect(at(i).0, at(i - 1).0);
            let mut j = i;
            while j + 1 < m && at(j + 1).1 {
                j += 1;
            }
            let exit = if j + 1 < m {
                bisect(at(j).0, at(j + 1).0)
            } else {
                bisect(at(j).0, at(0).0 + two_pi)
            };
            arcs.push((entry, exit));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    if arcs.is_empty() {
        return Err(Error::EmptySlice);
    }

    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut arc_of = Vec::new();
    for (a_id, &(a, b)) in arcs.iter().enumerate() {
        let span = b - a;
        if span <= 0.0 {
            continue;
        }
        let n_q = 256usize;
        let dth = span / n_q as f64;
        for q in 0..n_q {
            let th = a + (q as f64 + 0.5) * dth;
            points.push([x0[0] + eta * th.cos(), x0[1] + eta * th.sin()]);
            weights.push(eta * dth);
            arc_of.push(a_id as u32);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptySlice);
    }
    let arc_count = arcs.len();
    Ok(SphereSlice { eta, points, weights, arc_of, arc_count })
}

/// Uniform 1-D grid on (lo, hi): interior lattice nodes with end-corrected
/// quadrature weights (second order for smooth integrands).
#[derive(Debug, Clone, PartialEq)]
pub struct LineGrid {
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineGrid {
    pub fn new(lo: f64, hi: f64, h: f64) -> Result<LineGrid> {
        if !(h > 0.0) || !(hi > lo) {
            return Err(Error::InvalidArgument(format!("line grid ({lo}, {hi}) @ {h}")));
        }
        let i0 = (lo / h).floor() as i64;
        let i1 = (hi / h).ceil() as i64;
        let mut points = Vec::new();
        for i in i0..=i1 {
            let x = i as f64 * h;
            if x > lo && x < hi {
                points.push(x);
            }
        }
        if points.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let q = points.len();
        let weights = (0..q).map(|k| corrected_weight_1d(k, q, h)).collect();
        Ok(LineGrid { lo, hi, h, points, weights })
    }

    /// n equal bins over (lo, hi); nodes at bin centers, weight = bin width.
    pub fn bin_centers(lo: f64, hi: f64, n: usize) -> Result<LineGrid> {
        if n == 0 || !(hi > lo) {
            return Err(Error::InvalidArgument(format!("bin grid ({lo}, {hi}) x {n}")));
        }
        let w = (hi - lo) / n as f64;
        let points: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * w).collect();
        let weights = vec![w; n];
        Ok(LineGrid { lo, hi, h: w, points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// JSON recipe for a grid domain, the on-disk interchange format:
/// `{"kind": "...", "params": {...}, "h": ..., "stencil": ..., "eps_cut": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridRecipe {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub h: f64,
    #[serde(default = "default_stencil")]
    pub stencil: Stencil,
    #[serde(default)]
    pub eps_cut: f64,
}

fn default_stencil() -> Stencil {
    Stencil::Eight
}

impl GridRecipe {
    pub fn domain_spec(&self) -> Result<DomainSpec> {
        let get = |key: &str| -> Result<f64> {
            self.params.get(key).copied().ok_or_else(|| Error::Config {
                key: format!("params.{key}"),
                message: format!("required for kind `{}`", self.kind),
            })
        };
        let kind = match self.kind.as_str() {
            "square" => DomainKind::Square,
            "disk" => DomainKind::Disk,
            "sector" => DomainKind::Sector { angle: get("angle")? },
            "power-cusp" => DomainKind::PowerCusp { l: get("l")? },
            "flat-cusp" => DomainKind::FlatCusp,
            "annulus" => DomainKind::Annulus { r_in: get("r_in")?, r_out: get("r_out")? },
            "l-shape" => DomainKind::LShape,
            other => {
                return Err(Error::Config {
                    key: "kind".into(),
                    message: format!("unknown domain kind `{other}`"),
                })
            }
        };
        Ok(DomainSpec::with_eps_cut(kind, self.eps_cut))
    }

    pub fn build(&self) -> Result<GridDomain> {
        build_grid_domain(self.domain_spec()?, self.h, self.stencil)
    }

    pub fn from_spec(spec: &DomainSpec, h: f64, stencil: Stencil) -> GridRecipe {
        let mut params = BTreeMap::new();
        let kind = match spec.kind {
            DomainKind::Square => "square",
            DomainKind::Disk => "disk",
            DomainKind::Sector { angle } => {
                params.insert("angle".into(), angle);
                "sector"
            }
            DomainKind::PowerCusp { l } => {
                params.insert("l".into(), l);
                "power-cusp"
            }
            DomainKind::FlatCusp => "flat-cusp",
            DomainKind::Annulus { r_in, r_out } => {
                params.insert("r_in".into(), r_in);
                params.insert("r_out".into(), r_out);
                "annulus"
            }
            DomainKind::LShape => "l-shape",
        };
        GridRecipe {
            kind: kind.into(),
            params,
            h,
            stencil,
            eps_cut: spec.eps_cut,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_half_spacing_single_node() {
        let g = build_grid_domain(DomainSpec::new(DomainKind::Square), 0.5, Stencil::Eight).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.nodes[0], [0.5, 0.5]);
    }

    #[test]
    fn power_cusp_quarter_spacing_node_census() {
        // independent enumeration of |y| < x^2 over the h=0.25 lattice
        let spec = DomainSpec::new(DomainKind::PowerCusp { l: 2.0 });
        let mut expected = Vec::new();
        for ix in -8..=8i64 {
            for iy in -8..=8i64 {
                let p = [ix as f64 * 0.25, iy as f64 * 0.25];
                if p[0] > 0.0 && p[0] < 1.0 && p[1].abs() < p[0] * p[0] {
                    expected.push(p);
                }
            }
        }
        assert_eq!(expected.len(), 7);
        let g = build_grid_domain(spec, 0.25, Stencil::Eight).unwrap();
        assert_eq!(g.len(), 7);
        let per_col = |x: f64| g.nodes.iter().filter(|p| (p[0] - x).abs() < 1e-12).count();
        assert_eq!(per_col(0.25), 1);
        assert_eq!(per_col(0.5), 1);
        assert_eq!(per_col(0.75), 5);
    }

    #[test]
    fn power_cusp_unit_spacing_is_empty() {
        let spec = DomainSpec::new(DomainKind::PowerCusp { l: 2.0 });
        assert!(matches!(
            build_grid_domain(spec, 1.0, Stencil::Eight),
            Err(Error::EmptyDomain)
        ));
    }

    #[test]
    fn adjacency_edges_join_members_with_euclidean_lengths() {
        let spec = DomainSpec::new(DomainKind::Disk);
        let g = build_grid_domain(spec, 0.125, Stencil::Sixteen).unwrap();
        for &(a, b, len) in &g.edges {
            let pa = g.nodes[a as usize];
            let pb = g.nodes[b as usize];
            let d = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            assert!((d - len).abs() < 1e-13);
        }
    }

    #[test]
    fn convex_edges_stay_inside() {
        for kind in [DomainKind::Square, DomainKind::Disk] {
            let spec = DomainSpec::new(kind);
            let g = build_grid_domain(spec, 1.0 / 32.0, Stencil::Sixteen).unwrap();
            for &(a, b, _) in &g.edges {
                let pa = g.nodes[a as usize];
                let pb = g.nodes[b as usize];
                for s in 1..10 {
                    let t = s as f64 / 10.0;
                    let p = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                    assert!(spec.contains(p));
                }
            }
        }
    }

    #[test]
    fn node_count_quadruples_under_refinement() {
        for kind in [DomainKind::Disk, DomainKind::Square, DomainKind::PowerCusp { l: 2.0 }] {
            let spec = DomainSpec::new(kind);
            let c1 = build_grid_domain(spec, 1.0 / 64.0, Stencil::Eight).unwrap().len() as f64;
            let c2 = build_grid_domain(spec, 1.0 / 128.0, Stencil::Eight).unwrap().len() as f64;
            let ratio = c2 / c1;
            assert!((3.5..=4.5).contains(&ratio), "{kind:?}: ratio {ratio}");
        }
    }

    #[test]
    fn slice_misses_far_circle() {
        let spec = DomainSpec::new(DomainKind::Square);
        assert!(matches!(sphere_slice(&spec, 2.0, 1e-9), Err(Error::EmptySlice)));
    }

    #[test]
    fn disk_slice_is_full_circle() {
        let spec = DomainSpec::new(DomainKind::Disk);
        let s = sphere_slice(&spec, 0.5, 1e-9).unwrap();
        assert!((s.total_weight() - std::f64::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn cusp_slice_weight_matches_arc_length() {
        // independent oracle: bisect the half-angle t* solving
        // eta*sin(t) = (eta*cos(t))^2, arc length = 2*eta*t*
        let spec = DomainSpec::new(DomainKind::PowerCusp { l: 2.0 });
        let eta = 0.5f64;
        let f = |t: f64| eta * t.sin() - (eta * t.cos()).powi(2);
        let (mut a, mut b) = (0.0f64, 1.5f64);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let expected = 2.0 * eta * a;
        let s = sphere_slice(&spec, eta, 1e-9).unwrap();
        let got = s.total_weight();
        assert!(
            (got - expected).abs() / expected < 0.10,
            "weight {got} vs arc {expected}"
        );
        // the quadrature resolves it far better than the 10% contract
        assert!((got - expected).abs() / expected < 1e-4);
        for p in &s.points {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - eta).abs() < 1e-12);
            assert!(spec.contains(*p));
        }
    }

    #[test]
    fn cusp_slice_weight_scales_like_eta_to_l() {
        for l in [2.0f64, 3.0] {
            let spec = DomainSpec::new(DomainKind::PowerCusp { l });
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut k = 3;
            while k <= 8 {
                let eta = 2.0f64.powi(-k);
                let s = sphere_slice(&spec, eta, 1e-12).unwrap();
                xs.push(eta);
                ys.push(s.total_weight());
                k += 1;
            }
            let (slope, _, _) = crate::experiments::fit_exponent(&xs, &ys).unwrap();
            assert!(
                (slope - l).abs() <= 0.15,
                "l = {l}: fitted slice-weight slope {slope}"
            );
        }
    }

    #[test]
    fn eps_cut_trims_the_tip() {
        let spec = DomainSpec::with_eps_cut(DomainKind::PowerCusp { l: 2.0 }, 0.3);
        let g = build_grid_domain(spec, 1.0 / 64.0, Stencil::Eight).unwrap();
        assert!(g.nodes.iter().all(|p| p[0] >= 0.3));
    }

    #[test]
    fn clipped_whisker_weights_follow_the_profile() {
        let spec = DomainSpec::new(DomainKind::FlatCusp);
        let h = 1.0 / 64.0;
        let g = build_grid_domain(spec, h, Stencil::Eight).unwrap();
        for (k, &[x, y]) in g.nodes.iter().enumerate() {
            let w = spec.profile(x).unwrap();
            if 2.0 * w < h && y == 0.0 {
                assert!((g.node_weights[k] - 2.0 * w * h).abs() <= 1e-18 + 1e-12 * w * h);
            }
        }
    }

    #[test]
    fn square_weights_integrate_linear_functions_exactly() {
        let g = build_grid_domain(DomainSpec::new(DomainKind::Square), 1.0 / 16.0, Stencil::Eight)
            .unwrap();
        let total: f64 = g.node_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mx: f64 = g
            .nodes
            .iter()
            .zip(&g.node_weights)
            .map(|(p, w)| p[0] * w)
            .sum();
        assert!((mx - 0.5).abs() < 1e-12);
    }

    #[test]
    fn recipe_roundtrip() {
        let spec = DomainSpec::with_eps_cut(DomainKind::PowerCusp { l: 3.0 }, 0.01);
        let r = GridRecipe::from_spec(&spec, 0.125, Stencil::Sixteen);
        let js = serde_json::to_string(&r).unwrap();
        let back: GridRecipe = serde_json::from_str(&js).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.domain_spec().unwrap(), spec);
    }

    #[test]
    fn recipe_rejects_unknown_kind() {
        let r: GridRecipe = serde_json::from_str(
            r#"{"kind": "blob", "h": 0.5, "params": {}}"#,
        )
        .unwrap();
        assert!(r.domain_spec().is_err());
    }
}
