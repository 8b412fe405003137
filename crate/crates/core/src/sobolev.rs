//! Discrete weighted Sobolev norms W^{k,p}_f and the sparse symmetric
//! operator realizing the k-th order weighted inner product.
//!
//! A derivative level i contributes the L^p_f norm of the euclidean length
//! of the full tuple (D^alpha u)_{|alpha| = i}. The printed norm is the sum
//! over levels (the l1 combination); the operator encodes the equivalent
//! sum-of-squares form so that a genuine inner product exists for the
//! representer construction. The two satisfy q <= l1 <= sqrt(k+1) q.
//!
//! Derivatives near the frontier fall back to shifted windows of the same
//! nominal order; no ghost nodes and no boundary conditions are involved.

use crate::error::{Error, Result};
use crate::geometry::{sphere_slice, GridDomain};
use crate::linalg::{SparseSym, SpdFactor};
use crate::measure::{FieldDomain, WeightField};
use crate::stencil::{GridDeriv, LineDeriv};
use std::sync::Arc;

/// Support mask: finite positive weight on a node with positive quadrature
/// weight. Everything outside is invisible to norms and operators.
pub fn support_mask(weight: &WeightField) -> Vec<bool> {
    (0..weight.values.len())
        .map(|i| {
            let f = weight.values[i];
            f.is_finite() && f > 0.0 && weight.domain.quad_weight(i) > 0.0
        })
        .collect()
}

fn check_finite_on(mask: &[bool], u: &[f64]) -> Result<()> {
    for (i, (&m, &v)) in mask.iter().zip(u).enumerate() {
        if m && !v.is_finite() {
            return Err(Error::NonFiniteValue { node: i });
        }
    }
    Ok(())
}

/// Weighted L^p norm over the whole field domain.
pub fn lp_norm(u: &[f64], weight: &WeightField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} out of [1, inf)")));
    }
    let mask = support_mask(weight);
    check_finite_on(&mask, u)?;
    let mut acc = 0.0;
    for i in 0..u.len() {
        if mask[i] {
            acc += u[i].abs().powf(p) * weight.values[i] * weight.domain.quad_weight(i);
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// Weighted L^p norm over the sphere slice of radius eta, with u and f
/// interpolated bilinearly at the slice quadrature points.
pub fn lp_norm_slice(
    grid: &GridDomain,
    u: &[f64],
    f_values: &[f64],
    p: f64,
    eta: f64,
    tol: f64,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} out of [1, inf)")));
    }
    let slice = sphere_slice(&grid.spec, eta, tol)?;
    let mut acc = 0.0;
    for (q, w) in slice.points.iter().zip(&slice.weights) {
        let uv = grid.interpolate(u, *q);
        if !uv.is_finite() {
            return Err(Error::NonFiniteValue { node: grid.nearest_node(*q) });
        }
        let fv = grid.interpolate(f_values, *q).max(0.0);
        acc += uv.abs().powf(p) * fv * w;
    }
    Ok(acc.powf(1.0 / p))
}

/// Per-level norms ||D^i u||_{L^p_f} for i = 0..=k. Within a level the
/// derivative tuple is combined in euclidean length.
pub fn level_norms(u: &[f64], weight: &WeightField, k: usize, p: f64) -> Result<Vec<f64>> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} out of [1, inf)")));
    }
    let mask = support_mask(weight);
    check_finite_on(&mask, u)?;
    let mut sums = vec![0.0f64; k + 1];
    match &weight.domain {
        FieldDomain::Grid(grid) => {
            let deriv = GridDeriv::new(grid, Some(&mask));
            for node in 0..u.len() {
                if !mask[node] {
                    continue;
                }
                let fw = weight.values[node] * weight.domain.quad_weight(node);
                for (i, sum) in sums.iter_mut().enumerate() {
                    let mut t = 0.0;
                    for mx in 0..=i {
                        let d = deriv.derivative(node, (mx, i - mx), u)?;
                        t += d * d;
                    }
                    *sum += t.sqrt().powf(p) * fw;
                }
            }
        }
        FieldDomain::Line(line) => {
            let deriv = LineDeriv::new(line, Some(&mask));
            for node in 0..u.len() {
                if !mask[node] {
                    continue;
                }
                let fw = weight.values[node] * weight.domain.quad_weight(node);
                for (i, sum) in sums.iter_mut().enumerate() {
                    let d = deriv.derivative(node, i, u)?;
                    *sum += d.abs().powf(p) * fw;
                }
            }
        }
    }
    Ok(sums.iter().map(|s| s.powf(1.0 / p)).collect())
}

/// Sum over derivative levels of the weighted L^p norms (the printed norm).
pub fn sobolev_norm(u: &[f64], weight: &WeightField, k: usize, p: f64) -> Result<f64> {
    Ok(level_norms(u, weight, k, p)?.iter().sum())
}

/// L^p_f norm of the gradient tuple alone (level 1).
pub fn gradient_lp_norm(u: &[f64], weight: &WeightField, p: f64) -> Result<f64> {
    Ok(level_norms(u, weight, 1, p)?[1])
}

/// Sparse symmetric operator A with u^T A v = sum_{|alpha| <= k} of the
/// weighted products of D^alpha u and D^alpha v, restricted to the support.
pub struct SobolevOperator {
    pub domain: FieldDomain,
    pub weight_values: Vec<f64>,
    pub k: usize,
    /// Domain node ids inside the operator, ascending.
    pub support: Vec<u32>,
    position: Vec<i32>,
    factor: SpdFactor,
}

pub fn assemble_operator(weight: &WeightField, k: usize) -> Result<SobolevOperator> {
    let mask = support_mask(weight);
    let support: Vec<u32> = (0..mask.len()).filter(|&i| mask[i]).map(|i| i as u32).collect();
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut position = vec![-1i32; mask.len()];
    for (pos, &g) in support.iter().enumerate() {
        position[g as usize] = pos as i32;
    }

    let mut trip: Vec<(u32, u32, f64)> = Vec::new();
    let mut buf: Vec<(u32, f64)> = Vec::new();
    match &weight.domain {
        FieldDomain::Grid(grid) => {
            let deriv = GridDeriv::new(grid, Some(&mask));
            for &g in &support {
                let node = g as usize;
                let fw = weight.values[node] * weight.domain.quad_weight(node);
                for i in 0..=k {
                    for mx in 0..=i {
                        deriv.coefficients(node, (mx, i - mx), &mut buf)?;
                        for &(a, ca) in buf.iter() {
                            let pa = position[a as usize] as u32;
                            for &(b, cb) in buf.iter() {
                                let pb = position[b as usize] as u32;
                                trip.push((pa, pb, ca * cb * fw));
                            }
                        }
                    }
                }
            }
        }
        FieldDomain::Line(line) => {
            let deriv = LineDeriv::new(line, Some(&mask));
            for &g in &support {
                let node = g as usize;
                let fw = weight.values[node] * weight.domain.quad_weight(node);
                for i in 0..=k {
                    deriv.coefficients(node, i, &mut buf)?;
                    for &(a, ca) in buf.iter() {
                        let pa = position[a as usize] as u32;
                        for &(b, cb) in buf.iter() {
                            let pb = position[b as usize] as u32;
                            trip.push((pa, pb, ca * cb * fw));
                        }
                    }
                }
            }
        }
    }
    let matrix = SparseSym::from_triplets(support.len(), trip);
    debug_assert!(matrix.asymmetry() < 1e-12);
    let factor = SpdFactor::new(matrix)?;
    Ok(SobolevOperator {
        domain: weight.domain.clone(),
        weight_values: weight.values.clone(),
        k,
        support,
        position,
        factor,
    })
}

impl SobolevOperator {
    pub fn dim(&self) -> usize {
        self.support.len()
    }

    /// Support position of a domain node, if inside the support.
    pub fn position_of(&self, node: usize) -> Option<usize> {
        let p = self.position[node];
        if p >= 0 {
            Some(p as usize)
        } else {
            None
        }
    }

    pub fn matrix(&self) -> &SparseSym {
        self.factor.matrix()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.matrix().matvec(x, &mut out);
        out
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        crate::linalg::dot(&self.apply(x), x)
    }

    /// Solve A x = b. Returns (x, relative residual).
    pub fn solve(&self, b: &[f64]) -> (Vec<f64>, f64) {
        let (x, rel, _) = self.factor.solve(b);
        (x, rel)
    }

    /// Gather a full nodal vector onto the support.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.support.iter().map(|&g| full[g as usize]).collect()
    }

    /// Coordinate-format text dump (row, col, value per line).
    pub fn to_coo_text(&self) -> String {
        let m = self.matrix();
        let mut out = String::new();
        for i in 0..m.n {
            let (cols, vals) = m.row(i);
            for (c, v) in cols.iter().zip(vals) {
                out.push_str(&format!("{i} {c} {v:.12e}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SliceLemmaRow {
    pub eta: f64,
    pub slice_norm: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// Slice norms against the combined one-step bound
/// eta^((a-1)/p) (ln 1/eta)^((m-1)/m) ||grad u||_{L^p_f}, a = min(m, p),
/// with m = 2 for the planar catalog.
pub fn slice_lemma_ratio(
    grid: &Arc<GridDomain>,
    weight: &WeightField,
    u: &[f64],
    p: f64,
    etas: &[f64],
    tol: f64,
) -> Result<Vec<SliceLemmaRow>> {
    let m = 2.0f64;
    let a = m.min(p);
    let grad = gradient_lp_norm(u, weight, p)?;
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let slice_norm = lp_norm_slice(grid, u, &weight.values, p, eta, tol)?;
        let bound = eta.powf((a - 1.0) / p)
            * (1.0 / eta).ln().max(1e-300).powf((m - 1.0) / m)
            * grad;
        let ratio = if bound > 0.0 { slice_norm / bound } else { 0.0 };
        rows.push(SliceLemmaRow { eta, slice_norm, bound, ratio });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid_domain, DomainKind, DomainSpec, LineGrid, Stencil};
    use crate::measure::Provenance;
    use proptest::prelude::*;

    fn line_field(h: f64, f: impl Fn(f64) -> f64) -> WeightField {
        let lg = LineGrid::new(0.0, 1.0, h).unwrap();
        WeightField::from_line_fn(lg, f)
    }

    fn grid_field(kind: DomainKind, h: f64, f: impl Fn([f64; 2]) -> f64) -> WeightField {
        let g = build_grid_domain(DomainSpec::new(kind), h, Stencil::Eight).unwrap();
        WeightField::from_grid_fn(Arc::new(g), f)
    }

    fn points_of(w: &WeightField) -> Vec<f64> {
        match &w.domain {
            FieldDomain::Line(l) => l.points.clone(),
            FieldDomain::Grid(_) => panic!(),
        }
    }

    #[test]
    fn lp_norm_constant_on_square_is_area() {
        let w = grid_field(DomainKind::Square, 1.0 / 64.0, |_| 1.0);
        let u = vec![1.0; w.values.len()];
        let n = lp_norm(&u, &w, 2.0).unwrap();
        assert!((n - 1.0).abs() < 1e-10, "norm {n}");
    }

    #[test]
    fn lp_norm_with_linear_weight() {
        let w = line_field(1.0 / 1024.0, |x| x);
        let u = vec![1.0; w.values.len()];
        let n = lp_norm(&u, &w, 2.0).unwrap();
        let expected = 0.5f64.sqrt();
        assert!((n - expected).abs() / expected < 0.01, "norm {n}");
    }

    #[test]
    fn lp_norm_of_coordinate() {
        let w = line_field(1.0 / 1024.0, |_| 1.0);
        let u = points_of(&w);
        let n = lp_norm(&u, &w, 2.0).unwrap();
        let expected = (1.0f64 / 3.0).sqrt();
        assert!((n - expected).abs() / expected < 0.01, "norm {n}");
    }

    #[test]
    fn sobolev_norm_of_coordinate_on_the_line() {
        let w = line_field(1.0 / 1024.0, |_| 1.0);
        let u = points_of(&w);
        let n = sobolev_norm(&u, &w, 1, 2.0).unwrap();
        let expected = (1.0f64 / 3.0).sqrt() + 1.0;
        assert!((n - expected).abs() / expected < 0.01, "norm {n}");
        let zero = vec![0.0; u.len()];
        assert_eq!(sobolev_norm(&zero, &w, 2, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn flat_cusp_reciprocal_norms_are_finite_and_grid_stable() {
        let spec = DomainSpec::with_eps_cut(DomainKind::FlatCusp, 1e-2);
        let mut norms = Vec::new();
        for h in [1.0 / 1024.0, 1.0 / 2048.0] {
            let g = build_grid_domain(spec, h, Stencil::Eight).unwrap();
            let w = WeightField::constant_on_grid(Arc::new(g), 1.0);
            let u: Vec<f64> = match &w.domain {
                FieldDomain::Grid(g) => g.nodes.iter().map(|p| 1.0 / p[0]).collect(),
                _ => unreachable!(),
            };
            norms.push(sobolev_norm(&u, &w, 2, 2.0).unwrap());
        }
        assert!(norms[0].is_finite());
        let rel = (norms[0] - norms[1]).abs() / norms[1];
        assert!(rel < 0.01, "norms {norms:?} differ by {rel}");
    }

    #[test]
    fn one_node_operator_is_the_scaled_mass() {
        let g = build_grid_domain(DomainSpec::new(DomainKind::Square), 0.5, Stencil::Eight).unwrap();
        assert_eq!(g.len(), 1);
        let vol = g.node_weights[0];
        let w = WeightField::constant_on_grid(Arc::new(g), 2.0);
        let op = assemble_operator(&w, 0).unwrap();
        assert_eq!(op.dim(), 1);
        assert!((op.matrix().get(0, 0) - 2.0 * vol).abs() < 1e-15);
        // with f chosen so that f * vol = 2, the operator is exactly [2]
        let w2 = WeightField::new(w.domain.clone(), vec![2.0 / vol], Provenance::Analytic);
        let op2 = assemble_operator(&w2, 0).unwrap();
        assert!((op2.matrix().get(0, 0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn order_zero_operator_is_diagonal_mass() {
        let w = grid_field(DomainKind::Square, 0.125, |p| 1.0 + p[0]);
        let op = assemble_operator(&w, 0).unwrap();
        for (pos, &g) in op.support.iter().enumerate() {
            let expect = w.values[g as usize] * w.domain.quad_weight(g as usize);
            assert!((op.matrix().get(pos, pos) - expect).abs() < 1e-14);
            let (cols, _) = op.matrix().row(pos);
            assert_eq!(cols.len(), 1);
        }
    }

    #[test]
    fn quadratic_form_matches_analytic_h1_energy() {
        let w = line_field(1.0 / 512.0, |_| 1.0);
        let u = points_of(&w);
        let op = assemble_operator(&w, 1).unwrap();
        let q = op.quadratic_form(&op.restrict(&u));
        let expected = 1.0 / 3.0 + 1.0;
        assert!((q - expected).abs() / expected < 0.02, "form {q}");
    }

    #[test]
    fn quadratic_form_equals_sum_of_level_norm_squares() {
        let w = grid_field(DomainKind::PowerCusp { l: 2.0 }, 1.0 / 24.0, |_| 1.0);
        let op = assemble_operator(&w, 2).unwrap();
        let mut rng = crate::rng::Rng::seed_from(17);
        for _ in 0..5 {
            let u: Vec<f64> = (0..w.values.len()).map(|_| rng.normal()).collect();
            let q = op.quadratic_form(&op.restrict(&u));
            let levels = level_norms(&u, &w, 2, 2.0).unwrap();
            let sum_sq: f64 = levels.iter().map(|v| v * v).sum();
            assert!((q - sum_sq).abs() / sum_sq < 1e-10, "{q} vs {sum_sq}");
        }
    }

    #[test]
    fn l1_and_quadratic_norms_are_equivalent() {
        let w = grid_field(DomainKind::PowerCusp { l: 2.0 }, 1.0 / 24.0, |_| 1.0);
        let k = 2usize;
        let op = assemble_operator(&w, k).unwrap();
        let mut rng = crate::rng::Rng::seed_from(23);
        for _ in 0..100 {
            let u: Vec<f64> = (0..w.values.len()).map(|_| rng.normal()).collect();
            let q = op.quadratic_form(&op.restrict(&u)).sqrt();
            let l1: f64 = level_norms(&u, &w, k, 2.0).unwrap().iter().sum();
            assert!(q <= l1 * (1.0 + 1e-12));
            assert!(l1 <= ((k + 1) as f64).sqrt() * q * (1.0 + 1e-12));
        }
    }

    #[test]
    fn square_norm_refinement_has_second_order() {
        // u = x^3 y^2 with analytic levels:
        // ||u|| = sqrt(1/35), ||D u|| = sqrt(9/25 + 4/21)
        let exact = (1.0f64 / 35.0).sqrt() + (9.0f64 / 25.0 + 4.0 / 21.0).sqrt();
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for e in [6, 7, 8, 9] {
            let h = 1.0 / (1u32 << e) as f64;
            let w = grid_field(DomainKind::Square, h, |_| 1.0);
            let u: Vec<f64> = match &w.domain {
                FieldDomain::Grid(g) => {
                    g.nodes.iter().map(|p| p[0].powi(3) * p[1].powi(2)).collect()
                }
                _ => unreachable!(),
            };
            let n = sobolev_norm(&u, &w, 1, 2.0).unwrap();
            hs.push(h);
            errs.push((n - exact).abs());
        }
        let (slope, _, _) = crate::experiments::fit_exponent(&hs, &errs).unwrap();
        assert!(slope >= 1.7, "observed order {slope} from errors {errs:?}");
    }

    #[test]
    fn slice_sum_reconstructs_the_bulk_norm() {
        // radial slicing: sum over eta of slice norms^p approximates the
        // bulk norm^p within a modest constant
        for kind in [DomainKind::Disk, DomainKind::PowerCusp { l: 2.0 }] {
            let w = grid_field(kind, 1.0 / 64.0, |_| 1.0);
            let grid = match &w.domain {
                FieldDomain::Grid(g) => g.clone(),
                _ => unreachable!(),
            };
            let u: Vec<f64> = grid.nodes.iter().map(|p| 1.0 + p[0]).collect();
            let bulk = lp_norm(&u, &w, 2.0).unwrap();
            let n_eta = 64usize;
            let rmax = 1.0;
            let deta = rmax / n_eta as f64;
            let mut acc = 0.0;
            for i in 0..n_eta {
                let eta = (i as f64 + 0.5) * deta;
                match lp_norm_slice(&grid, &u, &w.values, 2.0, eta, 1e-7) {
                    Ok(s) => acc += s * s * deta,
                    Err(Error::EmptySlice) => {}
                    Err(e) => panic!("{e}"),
                }
            }
            let stacked = acc.sqrt();
            let ratio = stacked / bulk;
            assert!(
                (0.5..=2.0).contains(&ratio),
                "{kind:?}: stacked {stacked} vs bulk {bulk}"
            );
        }
    }

    #[test]
    fn slice_lemma_rows_zero_function() {
        let w = grid_field(DomainKind::PowerCusp { l: 2.0 }, 1.0 / 64.0, |_| 1.0);
        let grid = match &w.domain {
            FieldDomain::Grid(g) => g.clone(),
            _ => unreachable!(),
        };
        let u = vec![0.0; w.values.len()];
        let rows =
            slice_lemma_ratio(&grid, &w, &u, 2.0, &[0.25, 0.125, 0.0625], 1e-7).unwrap();
        for r in rows {
            assert_eq!(r.ratio, 0.0);
        }
    }

    #[test]
    fn weight_monotonicity_is_exact() {
        let base = grid_field(DomainKind::Disk, 0.125, |p| 0.5 + p[0].abs());
        let grid = match &base.domain {
            FieldDomain::Grid(g) => g.clone(),
            _ => unreachable!(),
        };
        let bigger = WeightField::from_grid_fn(grid.clone(), |p| 1.0 + p[0].abs());
        let mut rng = crate::rng::Rng::seed_from(31);
        for _ in 0..20 {
            let u: Vec<f64> = (0..base.values.len()).map(|_| rng.normal()).collect();
            for p in [1.0, 2.0, 3.0] {
                let a = lp_norm(&u, &base, p).unwrap();
                let b = lp_norm(&u, &bigger, p).unwrap();
                assert!(a <= b * (1.0 + 1e-13));
            }
        }
    }

    #[test]
    fn empty_support_is_rejected() {
        let w = grid_field(DomainKind::Square, 0.25, |_| 0.0);
        assert!(matches!(assemble_operator(&w, 1), Err(Error::EmptySupport)));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let w = line_field(0.125, |_| 1.0);
        let mut u = vec![1.0; w.values.len()];
        u[2] = f64::INFINITY;
        assert!(matches!(
            sobolev_norm(&u, &w, 1, 2.0),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn infinite_weights_are_flagged_and_skipped() {
        let lg = LineGrid::new(0.0, 1.0, 0.125).unwrap();
        let mut vals = vec![1.0; lg.len()];
        vals[0] = f64::INFINITY;
        let w = WeightField::new(FieldDomain::Line(lg), vals, Provenance::Tabulated);
        assert_eq!(w.infinite_indices(), vec![0]);
        let u = vec![1.0; w.values.len()];
        // node 0 contributes nothing; the norm is finite
        let n = lp_norm(&u, &w, 2.0).unwrap();
        assert!(n.is_finite());
    }

    #[test]
    fn derivative_order_above_cap_errors() {
        let w = line_field(0.0625, |_| 1.0);
        let u = vec![0.0; w.values.len()];
        assert!(matches!(
            sobolev_norm(&u, &w, crate::stencil::MAX_ORDER + 1, 2.0),
            Err(Error::StencilUnderflow { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_weight_monotonicity_on_the_line(
            seed in 0u64..1000,
            bump in 0.0f64..5.0,
        ) {
            let lg = LineGrid::new(0.0, 1.0, 0.0625).unwrap();
            let n = lg.len();
            let mut rng = crate::rng::Rng::seed_from(seed);
            let f: Vec<f64> = (0..n).map(|_| rng.uniform() + 0.01).collect();
            let g: Vec<f64> = f.iter().map(|v| v + bump).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let wf = WeightField::new(FieldDomain::Line(lg.clone()), f, Provenance::Tabulated);
            let wg = WeightField::new(FieldDomain::Line(lg), g, Provenance::Tabulated);
            for k in 0..=2usize {
                let a = sobolev_norm(&u, &wf, k, 2.0).unwrap();
                let b = sobolev_norm(&u, &wg, k, 2.0).unwrap();
                prop_assert!(a <= b * (1.0 + 1e-12));
            }
        }

        #[test]
        fn prop_lp_norm_homogeneity(scale in 0.0f64..100.0, seed in 0u64..1000) {
            let lg = LineGrid::new(0.0, 1.0, 0.125).unwrap();
            let n = lg.len();
            let mut rng = crate::rng::Rng::seed_from(seed);
            let u: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let su: Vec<f64> = u.iter().map(|v| v * scale).collect();
            let w = WeightField::new(
                FieldDomain::Line(lg),
                vec![1.0; n],
                Provenance::Tabulated,
            );
            let a = lp_norm(&su, &w, 3.0).unwrap();
            let b = lp_norm(&u, &w, 3.0).unwrap();
            prop_assert!((a - scale * b).abs() <= 1e-9 * (1.0 + a.max(scale * b)));
        }
    }
}
