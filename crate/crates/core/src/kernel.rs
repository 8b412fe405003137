//! Dirac representers and the induced evaluation kernel.
//!
//! For the order-k weighted operator A, the representer of evaluation at a
//! support node x solves A phi_x = e_x, so that <phi_x, u>_A = u(x) for every
//! nodal u. The kernel K[i, j] = <phi_{x_i}, phi_{x_j}>_A = (A^{-1})_{x_i x_j}
//! is symmetric positive definite on distinct support nodes. Feature
//! distances ||phi_x - phi_{x'}||_A compare against the inner metric to
//! probe whether evaluation embeds Lipschitz-continuously.

use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues;
use crate::metric::InnerMetricGraph;
use crate::sobolev::SobolevOperator;
use std::collections::BTreeMap;

/// Relative residual demanded of every representer solve.
pub const REPRESENTER_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, Default)]
pub struct SolverStats {
    pub solves: usize,
    pub refinement_passes: usize,
    pub max_residual: f64,
}

/// Dense Gram matrix of Dirac representers on a node subset.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    /// Domain node ids of the evaluation subset.
    pub node_ids: Vec<usize>,
    /// Row-major dense matrix, K[i * n + j].
    pub k: Vec<f64>,
    pub stats: SolverStats,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n() + j]
    }

    /// max |K_ij - K_ji| relative to max |K|.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n();
        let amax = self.k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if amax == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / amax
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigenvalues(&self.k, self.n())
    }

    /// ||phi_a - phi_b||_A from kernel entries.
    pub fn feature_distance(&self, i: usize, j: usize) -> f64 {
        (self.get(i, i) - 2.0 * self.get(i, j) + self.get(j, j)).max(0.0).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::new();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.11e}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Representer of evaluation at a support node: solves A phi = e_node.
/// Returns the support-indexed vector and the achieved relative residual.
pub fn dirac_representer(op: &SobolevOperator, node: usize) -> Result<(Vec<f64>, f64)> {
    let pos = op.position_of(node).ok_or(Error::NotInSupport)?;
    let mut e = vec![0.0; op.dim()];
    e[pos] = 1.0;
    let (phi, rel) = op.solve(&e);
    if !(rel <= REPRESENTER_RESIDUAL) {
        return Err(Error::SingularOperator(format!(
            "representer residual {rel:.3e} above {REPRESENTER_RESIDUAL:.0e}"
        )));
    }
    Ok((phi, rel))
}

/// Kernel matrix on an evaluation subset (dense; capped at 2000 nodes).
pub fn kernel_matrix(op: &SobolevOperator, nodes: &[usize]) -> Result<KernelMatrix> {
    let n = nodes.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty evaluation subset".into()));
    }
    if n > 2000 {
        return Err(Error::InvalidArgument(format!(
            "dense kernel capped at 2000 nodes, got {n}"
        )));
    }
    let positions: Vec<usize> = nodes
        .iter()
        .map(|&g| op.position_of(g).ok_or(Error::NotInSupport))
        .collect::<Result<_>>()?;
    let mut k = vec![0.0f64; n * n];
    let mut stats = SolverStats::default();
    for (j, &g) in nodes.iter().enumerate() {
        let (phi, rel) = dirac_representer(op, g)?;
        stats.solves += 1;
        stats.max_residual = stats.max_residual.max(rel);
        for (i, &pi) in positions.iter().enumerate() {
            k[i * n + j] = phi[pi];
        }
    }
    Ok(KernelMatrix { node_ids: nodes.to_vec(), k, stats })
}

#[derive(Debug, Clone)]
pub struct FeatureRatioRow {
    pub a: usize,
    pub b: usize,
    pub inner_distance: f64,
    pub feature_distance: f64,
    pub ratio: f64,
}

/// Feature distances against inner distances over explicit node pairs.
/// Coincident pairs are rejected (the kernel is definite on distinct nodes;
/// a 0/0 ratio carries no information).
pub fn feature_lipschitz_ratio(
    op: &SobolevOperator,
    graph: &InnerMetricGraph,
    pairs: &[(usize, usize)],
) -> Result<Vec<FeatureRatioRow>> {
    if pairs.iter().any(|&(a, b)| a == b) {
        return Err(Error::InvalidArgument("coincident pair in sample".into()));
    }
    let mut nodes: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let index: BTreeMap<usize, usize> =
        nodes.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let km = kernel_matrix(op, &nodes)?;

    // group by source so each distinct source runs one shortest-path sweep
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in pairs {
        by_source.entry(a).or_default().push(b);
    }
    let mut dist: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&a, bs) in &by_source {
        let d = graph.distances_from(a);
        for &b in bs {
            dist.insert((a, b), d[b]);
        }
    }

    let mut rows = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let d = dist[&(a, b)];
        if d == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "pair ({a}, {b}) at zero inner distance"
            )));
        }
        let fd = km.feature_distance(index[&a], index[&b]);
        let ratio = if d.is_finite() { fd / d } else { 0.0 };
        rows.push(FeatureRatioRow {
            a,
            b,
            inner_distance: d,
            feature_distance: fd,
            ratio,
        });
    }
    Ok(rows)
}

pub fn feature_rows_to_csv(rows: &[FeatureRatioRow]) -> String {
    let mut out = String::from("a,b,d_inner,feature_dist,ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.11e},{:.11e},{:.11e}\n",
            r.a, r.b, r.inner_distance, r.feature_distance, r.ratio
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid_domain, DomainKind, DomainSpec, LineGrid, Stencil};
    use crate::linalg::dot;
    use crate::measure::{
        catalog_specs, pushforward_density, FieldDomain, Provenance, WeightField,
    };
    use crate::rng::Rng;
    use crate::sobolev::assemble_operator;
    use std::sync::Arc;

    fn cusp_operator(h: f64, k: usize) -> (WeightField, SobolevOperator) {
        let g = build_grid_domain(
            DomainSpec::new(DomainKind::PowerCusp { l: 2.0 }),
            h,
            Stencil::Eight,
        )
        .unwrap();
        let w = WeightField::constant_on_grid(Arc::new(g), 1.0);
        let op = assemble_operator(&w, k).unwrap();
        (w, op)
    }

    #[test]
    fn one_node_representer_inverts_the_scalar() {
        let g = build_grid_domain(DomainSpec::new(DomainKind::Square), 0.5, Stencil::Eight)
            .unwrap();
        let vol = g.node_weights[0];
        let a = 3.0;
        let w = WeightField::new(
            FieldDomain::Grid(Arc::new(g)),
            vec![a / vol],
            Provenance::Tabulated,
        );
        let op = assemble_operator(&w, 0).unwrap();
        let (phi, _) = dirac_representer(&op, 0).unwrap();
        assert!((phi[0] - 1.0 / a).abs() < 1e-13);
        let km = kernel_matrix(&op, &[0]).unwrap();
        assert!((km.get(0, 0) - 1.0 / a).abs() < 1e-13);
    }

    #[test]
    fn representer_reproduces_point_evaluation() {
        let (w, op) = cusp_operator(1.0 / 24.0, 2);
        let mut rng = Rng::seed_from(41);
        let n = w.values.len();
        for trial in 0..20 {
            let x = op.support[rng.below(op.dim())] as usize;
            let (phi, _) = dirac_representer(&op, x).unwrap();
            let u: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let us = op.restrict(&u);
            let inner = dot(&op.apply(&phi), &us);
            let unorm = op.quadratic_form(&us).sqrt();
            assert!(
                (inner - u[x]).abs() <= 1e-8 * unorm.max(1.0),
                "trial {trial}: {inner} vs {}",
                u[x]
            );
        }
    }

    #[test]
    fn identity_operator_gives_identity_kernel() {
        let lg = LineGrid::new(0.0, 1.0, 0.25).unwrap();
        let f: Vec<f64> = lg.weights.iter().map(|w| 1.0 / w).collect();
        let w = WeightField::new(FieldDomain::Line(lg), f, Provenance::Tabulated);
        let op = assemble_operator(&w, 0).unwrap();
        let km = kernel_matrix(&op, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((km.get(i, j) - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn diagonal_operator_inverts_entrywise() {
        let lg = LineGrid::new(0.0, 1.0, 1.0 / 3.0).unwrap();
        assert_eq!(lg.len(), 2);
        let f: Vec<f64> = lg
            .weights
            .iter()
            .zip([2.0, 4.0])
            .map(|(w, d)| d / w)
            .collect();
        let w = WeightField::new(FieldDomain::Line(lg), f, Provenance::Tabulated);
        let op = assemble_operator(&w, 0).unwrap();
        let km = kernel_matrix(&op, &[0, 1]).unwrap();
        assert!((km.get(0, 0) - 0.5).abs() < 1e-14);
        assert!((km.get(1, 1) - 0.25).abs() < 1e-14);
        assert!(km.get(0, 1).abs() < 1e-14);
    }

    #[test]
    fn kernel_on_cusp_is_symmetric_positive_definite() {
        let g = build_grid_domain(
            DomainSpec::new(DomainKind::PowerCusp { l: 2.0 }),
            1.0 / 32.0,
            Stencil::Eight,
        )
        .unwrap();
        let grid = Arc::new(g);
        // weight = push-forward density of the band projection, mapped onto
        // the grid through the x coordinate (f = 2 x^2 up to quadrature)
        let spec = catalog_specs(64)[1].1.clone();
        let dens = pushforward_density(&spec, 128, false).unwrap();
        let line = match &dens.domain {
            FieldDomain::Line(l) => l.clone(),
            _ => unreachable!(),
        };
        let w = WeightField::from_grid_fn(grid.clone(), |p| {
            let i = ((p[0] - line.lo) / line.h).floor().clamp(0.0, (line.len() - 1) as f64);
            dens.values[i as usize]
        });
        let op = assemble_operator(&w, 2).unwrap();
        let mut rng = Rng::seed_from(7);
        let mut nodes: Vec<usize> = Vec::new();
        while nodes.len() < 50 {
            let c = op.support[rng.below(op.dim())] as usize;
            if !nodes.contains(&c) {
                nodes.push(c);
            }
        }
        let km = kernel_matrix(&op, &nodes).unwrap();
        assert!(km.symmetry_defect() <= 1e-10, "defect {}", km.symmetry_defect());
        let eig = km.eigenvalues();
        let kmax = eig.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(eig[0] > 0.0, "min eigenvalue {}", eig[0]);
        assert!(eig[0] >= -1e-10 * kmax);
    }

    #[test]
    fn minimum_norm_interpolant_beats_feasible_competitors() {
        let (w, op) = cusp_operator(1.0 / 16.0, 1);
        let mut rng = Rng::seed_from(3);
        let mut nodes: Vec<usize> = Vec::new();
        while nodes.len() < 8 {
            let c = op.support[rng.below(op.dim())] as usize;
            if !nodes.contains(&c) {
                nodes.push(c);
            }
        }
        let km = kernel_matrix(&op, &nodes).unwrap();
        let y: Vec<f64> = (0..nodes.len()).map(|_| rng.normal()).collect();
        let alpha = crate::linalg::dense_spd_solve(&km.k, nodes.len(), &y).unwrap();
        // interpolant s = sum alpha_j phi_{x_j}
        let mut s = vec![0.0; op.dim()];
        for (j, &g) in nodes.iter().enumerate() {
            let (phi, _) = dirac_representer(&op, g).unwrap();
            for (si, pi) in s.iter_mut().zip(&phi) {
                *si += alpha[j] * pi;
            }
        }
        for (j, &g) in nodes.iter().enumerate() {
            let pos = op.position_of(g).unwrap();
            assert!((s[pos] - y[j]).abs() < 1e-8, "interpolation at {j}");
        }
        let s_norm = op.quadratic_form(&s);
        let n = w.values.len();
        for _ in 0..10 {
            // competitor: random nodal field corrected to interpolate
            let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let mut vs = op.restrict(&v);
            let resid: Vec<f64> = nodes
                .iter()
                .zip(&y)
                .map(|(&g, &yy)| yy - vs[op.position_of(g).unwrap()])
                .collect();
            let beta = crate::linalg::dense_spd_solve(&km.k, nodes.len(), &resid).unwrap();
            for (j, &g) in nodes.iter().enumerate() {
                let (phi, _) = dirac_representer(&op, g).unwrap();
                for (vi, pi) in vs.iter_mut().zip(&phi) {
                    *vi += beta[j] * pi;
                }
            }
            let v_norm = op.quadratic_form(&vs);
            assert!(s_norm <= v_norm * (1.0 + 1e-10), "{s_norm} vs {v_norm}");
        }
    }

    #[test]
    fn kernel_scales_exactly_under_power_of_two_weight_scaling() {
        let g = build_grid_domain(
            DomainSpec::new(DomainKind::PowerCusp { l: 2.0 }),
            1.0 / 16.0,
            Stencil::Sixteen,
        )
        .unwrap();
        let grid = Arc::new(g);
        let w1 = WeightField::constant_on_grid(grid.clone(), 1.0);
        let w4 = WeightField::constant_on_grid(grid.clone(), 4.0);
        let op1 = assemble_operator(&w1, 1).unwrap();
        let op4 = assemble_operator(&w4, 1).unwrap();
        let nodes: Vec<usize> = op1.support.iter().step_by(7).map(|&g| g as usize).collect();
        let k1 = kernel_matrix(&op1, &nodes).unwrap();
        let k4 = kernel_matrix(&op4, &nodes).unwrap();
        for (a, b) in k1.k.iter().zip(&k4.k) {
            assert_eq!(*a, 4.0 * *b, "power-of-two scaling must be exact");
        }
        // feature ratios scale by c^{-1/2}; the argmax pair is invariant
        let graph = InnerMetricGraph::new(grid);
        let pairs: Vec<(usize, usize)> =
            nodes.windows(2).map(|w| (w[0], w[1])).collect();
        let r1 = feature_lipschitz_ratio(&op1, &graph, &pairs).unwrap();
        let r4 = feature_lipschitz_ratio(&op4, &graph, &pairs).unwrap();
        let argmax = |rows: &[FeatureRatioRow]| {
            rows.iter()
                .enumerate()
                .max_by(|a, b| a.1.ratio.partial_cmp(&b.1.ratio).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&r1), argmax(&r4));
        for (a, b) in r1.iter().zip(&r4) {
            assert!((a.ratio - 2.0 * b.ratio).abs() <= 1e-12 * a.ratio.max(1.0));
        }
    }

    #[test]
    fn coincident_pairs_are_rejected() {
        let (_, op) = cusp_operator(1.0 / 8.0, 1);
        let grid = match &op.domain {
            FieldDomain::Grid(g) => g.clone(),
            _ => unreachable!(),
        };
        let graph = InnerMetricGraph::new(grid);
        let a = op.support[0] as usize;
        assert!(matches!(
            feature_lipschitz_ratio(&op, &graph, &[(a, a)]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn out_of_support_nodes_are_rejected() {
        let g = build_grid_domain(
            DomainSpec::new(DomainKind::Square),
            0.125,
            Stencil::Eight,
        )
        .unwrap();
        let grid = Arc::new(g);
        // zero out one node's weight: it drops out of the support
        let mut vals = vec![1.0; grid.len()];
        vals[3] = 0.0;
        let w = WeightField::new(FieldDomain::Grid(grid), vals, Provenance::Tabulated);
        let op = assemble_operator(&w, 1).unwrap();
        assert!(matches!(dirac_representer(&op, 3), Err(Error::NotInSupport)));
    }
}
