//! Finite-difference formulas on the lattice.
//!
//! Weights come from Fornberg's recurrence on arbitrarily spaced points,
//! applied to integer offsets and scaled by h^-m at use. Every node gets the
//! best window its row supports: centered (second order) in the interior,
//! shifted/one-sided towards the frontier (second order with m+2 points,
//! first order with m+1). A row with q <= m points interpolates a polynomial
//! of degree < m, whose m-th derivative vanishes; the formula there is 0.
//! This matters on cusp whiskers where a row degenerates to a single node.

use crate::error::{Error, Result};
use crate::geometry::{GridDomain, LineGrid};
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

/// Largest supported derivative order (operator order k sweeps reach 6).
pub const MAX_ORDER: usize = 8;

/// A 1-D difference formula on unit-spaced integer offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffFormula {
    pub order: usize,
    pub offsets: Vec<i64>,
    /// Weights for unit spacing; divide by h^order on application.
    pub weights: Vec<f64>,
    /// Declared accuracy order (1 or 2).
    pub accuracy: usize,
}

/// Fornberg weights for the m-th derivative at 0 from samples at `xs`.
pub fn fd_weights(xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(n > m, "need at least m+1 samples");
    let mut c = vec![vec![0.0f64; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0];
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i];
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

fn build_formula(lo: i64, hi: i64, m: usize) -> Option<DiffFormula> {
    debug_assert!(lo <= 0 && hi >= 0);
    if m == 0 {
        return Some(DiffFormula {
            order: 0,
            offsets: vec![0],
            weights: vec![1.0],
            accuracy: 2,
        });
    }
    let q = (hi - lo + 1) as usize;
    if q <= m {
        // degenerate run: the interpolant's m-th derivative is identically 0
        return Some(DiffFormula {
            order: m,
            offsets: vec![0],
            weights: vec![0.0],
            accuracy: 1,
        });
    }
    let r = ((m + 1) / 2) as i64;
    let (offsets, symmetric): (Vec<i64>, bool) = if lo <= -r && hi >= r {
        ((-r..=r).collect(), true)
    } else {
        // shifted window of up to m+2 points, containing 0, nearest-centered
        let want = (m + 2).min(q) as i64;
        let smin = lo.max(1 - want);
        let smax = (hi - want + 1).min(0);
        let start = (-(want - 1) / 2).clamp(smin, smax);
        ((start..start + want).collect(), false)
    };
    let xs: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let weights = fd_weights(&xs, m);
    let accuracy = if symmetric {
        2
    } else {
        (offsets.len() - m).min(2)
    };
    Some(DiffFormula { order: m, offsets, weights, accuracy })
}

/// Cache of difference formulas keyed by (order, available run).
#[derive(Default)]
pub struct StencilTable {
    cache: RefCell<HashMap<(u8, i8, i8), Rc<DiffFormula>>>,
}

impl StencilTable {
    pub fn new() -> StencilTable {
        StencilTable::default()
    }

    /// Formula for the m-th derivative at a node whose contiguous available
    /// run spans offsets [lo, hi] (both clamped to a small search reach).
    pub fn formula(&self, lo: i64, hi: i64, m: usize) -> Result<Rc<DiffFormula>> {
        if m > MAX_ORDER {
            return Err(Error::StencilUnderflow { order: m });
        }
        let key = (m as u8, lo as i8, hi as i8);
        if let Some(f) = self.cache.borrow().get(&key) {
            return Ok(f.clone());
        }
        let f = Rc::new(build_formula(lo, hi, m).expect("window always buildable"));
        self.cache.borrow_mut().insert(key, f.clone());
        Ok(f)
    }
}

/// Derivative evaluation on a 2-D grid restricted to an optional node mask
/// (the operator support). Rows are scanned for contiguous member nodes.
pub struct GridDeriv<'g> {
    pub grid: &'g GridDomain,
    pub mask: Option<&'g [bool]>,
    table: StencilTable,
}

impl<'g> GridDeriv<'g> {
    pub fn new(grid: &'g GridDomain, mask: Option<&'g [bool]>) -> GridDeriv<'g> {
        GridDeriv { grid, mask, table: StencilTable::new() }
    }

    fn available(&self, ix: i64, iy: i64) -> Option<usize> {
        let k = self.grid.node_at(ix, iy)?;
        match self.mask {
            Some(m) if !m[k] => None,
            _ => Some(k),
        }
    }

    /// Contiguous run limits around (ix, iy) in direction `dir` (0 = x).
    fn run(&self, ix: i64, iy: i64, dir: usize, reach: i64) -> (i64, i64) {
        let step = |d: i64| -> (i64, i64) {
            if dir == 0 {
                (ix + d, iy)
            } else {
                (ix, iy + d)
            }
        };
        let mut lo = 0;
        while lo > -reach {
            let (a, b) = step(lo - 1);
            if self.available(a, b).is_none() {
                break;
            }
            lo -= 1;
        }
        let mut hi = 0;
        while hi < reach {
            let (a, b) = step(hi + 1);
            if self.available(a, b).is_none() {
                break;
            }
            hi += 1;
        }
        (lo, hi)
    }

    fn formula_at(&self, ix: i64, iy: i64, dir: usize, m: usize) -> Result<Rc<DiffFormula>> {
        let reach = (m + 2) as i64;
        let (lo, hi) = self.run(ix, iy, dir, reach);
        self.table.formula(lo, hi, m)
    }

    /// Whether the row through (ix, iy) can furnish an order-m x-derivative
    /// (its contiguous run has at least m+1 nodes).
    fn x_eligible(&self, ix: i64, iy: i64, m: usize) -> bool {
        if self.available(ix, iy).is_none() {
            return false;
        }
        let (lo, hi) = self.run(ix, iy, 0, (m + 2) as i64);
        (hi - lo) as usize >= m
    }

    /// Contiguous y-run of rows eligible for an order-mx x-derivative.
    fn eligible_y_run(&self, ix: i64, iy: i64, mx: usize, reach: i64) -> (i64, i64) {
        let mut lo = 0;
        while lo > -reach && self.x_eligible(ix, iy + lo - 1, mx) {
            lo -= 1;
        }
        let mut hi = 0;
        while hi < reach && self.x_eligible(ix, iy + hi + 1, mx) {
            hi += 1;
        }
        (lo, hi)
    }

    /// Value of D^alpha u at a node, alpha = (mx, my), tensor-product form.
    pub fn derivative(&self, node: usize, alpha: (usize, usize), u: &[f64]) -> Result<f64> {
        let (ix, iy) = self.grid.lattice[node];
        let h = self.grid.h;
        let (mx, my) = alpha;
        let scale = h.powi(-((mx + my) as i32));
        if my == 0 {
            let fx = self.formula_at(ix, iy, 0, mx)?;
            let mut s = 0.0;
            for (o, w) in fx.offsets.iter().zip(&fx.weights) {
                let k = self.available(ix + o, iy).expect("window node available");
                s += w * u[k];
            }
            return Ok(s * scale);
        }
        // mixed partial: the y-window may only span rows that can furnish
        // the inner x-derivative, otherwise the formula switch across rows
        // (a real derivative next to a degenerate-run zero) injects O(1/h)
        // artifacts into the tensor product
        let fy = if mx == 0 {
            self.formula_at(ix, iy, 1, my)?
        } else {
            if !self.x_eligible(ix, iy, mx) {
                return Ok(0.0);
            }
            let (lo, hi) = self.eligible_y_run(ix, iy, mx, (my + 2) as i64);
            self.table.formula(lo, hi, my)?
        };
        let mut s = 0.0;
        for (oy, wy) in fy.offsets.iter().zip(&fy.weights) {
            if *wy == 0.0 {
                continue;
            }
            let jy = iy + oy;
            let vx = if mx == 0 {
                let k = self.available(ix, jy).expect("window node available");
                u[k]
            } else {
                let fx = self.formula_at(ix, jy, 0, mx)?;
                let mut t = 0.0;
                for (ox, wx) in fx.offsets.iter().zip(&fx.weights) {
                    let k = self.available(ix + ox, jy).expect("window node available");
                    t += wx * u[k];
                }
                t
            };
            s += wy * vx;
        }
        Ok(s * scale)
    }

    /// The same derivative as an explicit linear combination of nodal values,
    /// merged by node index (used for operator assembly).
    pub fn coefficients(
        &self,
        node: usize,
        alpha: (usize, usize),
        out: &mut Vec<(u32, f64)>,
    ) -> Result<()> {
        out.clear();
        let (ix, iy) = self.grid.lattice[node];
        let h = self.grid.h;
        let (mx, my) = alpha;
        let scale = h.powi(-((mx + my) as i32));
        let fy = if mx == 0 || my == 0 {
            self.formula_at(ix, iy, 1, my)?
        } else {
            if !self.x_eligible(ix, iy, mx) {
                return Ok(());
            }
            let (lo, hi) = self.eligible_y_run(ix, iy, mx, (my + 2) as i64);
            self.table.formula(lo, hi, my)?
        };
        for (oy, wy) in fy.offsets.iter().zip(&fy.weights) {
            if *wy == 0.0 && my > 0 {
                continue;
            }
            let jy = iy + oy;
            let fx = self.formula_at(ix, jy, 0, mx)?;
            for (ox, wx) in fx.offsets.iter().zip(&fx.weights) {
                if *wx == 0.0 && mx > 0 {
                    continue;
                }
                let k = self.available(ix + ox, jy).expect("window node available");
                out.push((k as u32, wy * wx * scale));
            }
        }
        out.sort_unstable_by_key(|&(k, _)| k);
        out.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        Ok(())
    }
}

/// Derivative evaluation on a 1-D grid restricted to an optional index mask.
pub struct LineDeriv<'g> {
    pub line: &'g LineGrid,
    pub mask: Option<&'g [bool]>,
    table: StencilTable,
}

impl<'g> LineDeriv<'g> {
    pub fn new(line: &'g LineGrid, mask: Option<&'g [bool]>) -> LineDeriv<'g> {
        LineDeriv { line, mask, table: StencilTable::new() }
    }

    fn available(&self, i: i64) -> bool {
        if i < 0 || i >= self.line.len() as i64 {
            return false;
        }
        match self.mask {
            Some(m) => m[i as usize],
            None => true,
        }
    }

    fn run(&self, i: i64, reach: i64) -> (i64, i64) {
        let mut lo = 0;
        while lo > -reach && self.available(i + lo - 1) {
            lo -= 1;
        }
        let mut hi = 0;
        while hi < reach && self.available(i + hi + 1) {
            hi += 1;
        }
        (lo, hi)
    }

    pub fn derivative(&self, idx: usize, m: usize, u: &[f64]) -> Result<f64> {
        let (lo, hi) = self.run(idx as i64, (m + 2) as i64);
        let f = self.table.formula(lo, hi, m)?;
        let mut s = 0.0;
        for (o, w) in f.offsets.iter().zip(&f.weights) {
            s += w * u[(idx as i64 + o) as usize];
        }
        Ok(s * self.line.h.powi(-(m as i32)))
    }

    pub fn coefficients(&self, idx: usize, m: usize, out: &mut Vec<(u32, f64)>) -> Result<()> {
        out.clear();
        let (lo, hi) = self.run(idx as i64, (m + 2) as i64);
        let f = self.table.formula(lo, hi, m)?;
        let scale = self.line.h.powi(-(m as i32));
        for (o, w) in f.offsets.iter().zip(&f.weights) {
            if *w == 0.0 && m > 0 {
                continue;
            }
            out.push(((idx as i64 + o) as u32, w * scale));
        }
        Ok(())
    }
}

/// Derivative of a nodal function on a 1-D grid (no mask).
pub fn line_derivative(
    table: &StencilTable,
    lg: &LineGrid,
    idx: usize,
    m: usize,
    u: &[f64],
) -> Result<f64> {
    let n = lg.len() as i64;
    let i = idx as i64;
    let reach = (m + 2) as i64;
    let lo = (-i).max(-reach);
    let hi = (n - 1 - i).min(reach);
    let f = table.formula(lo, hi, m)?;
    let mut s = 0.0;
    for (o, w) in f.offsets.iter().zip(&f.weights) {
        s += w * u[(i + o) as usize];
    }
    Ok(s * lg.h.powi(-(m as i32)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_weights_recovered() {
        let w = fd_weights(&[-1.0, 0.0, 1.0], 1);
        assert!((w[0] + 0.5).abs() < 1e-14);
        assert!(w[1].abs() < 1e-14);
        assert!((w[2] - 0.5).abs() < 1e-14);
        let w = fd_weights(&[-1.0, 0.0, 1.0], 2);
        assert!((w[0] - 1.0).abs() < 1e-13);
        assert!((w[1] + 2.0).abs() < 1e-13);
        assert!((w[2] - 1.0).abs() < 1e-13);
        let w = fd_weights(&[0.0, 1.0, 2.0], 1);
        assert!((w[0] + 1.5).abs() < 1e-13);
        assert!((w[1] - 2.0).abs() < 1e-13);
        assert!((w[2] + 0.5).abs() < 1e-13);
    }

    #[test]
    fn moment_conditions_hold_to_the_declared_accuracy() {
        // every formula must differentiate x^b exactly for b <= m + acc - 1
        let table = StencilTable::new();
        for m in 0..=4usize {
            for lo in -3..=0i64 {
                for hi in 0..=3i64 {
                    let f = table.formula(lo, hi, m).unwrap();
                    if f.weights.len() == 1 && f.weights[0] == 0.0 {
                        continue;
                    }
                    let top = m + f.accuracy - 1;
                    for b in 0..=top {
                        let exact = if b == m {
                            (1..=m).product::<usize>() as f64
                        } else {
                            0.0
                        };
                        let got: f64 = f
                            .offsets
                            .iter()
                            .zip(&f.weights)
                            .map(|(o, w)| w * (*o as f64).powi(b as i32))
                            .sum();
                        assert!(
                            (got - exact).abs() < 1e-10,
                            "m={m} window [{lo},{hi}] deg {b}: {got} vs {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_run_gives_zero_formula() {
        let table = StencilTable::new();
        let f = table.formula(0, 0, 2).unwrap();
        assert_eq!(f.weights, vec![0.0]);
        let f = table.formula(0, 1, 2).unwrap(); // q = 2 <= m = 2
        assert_eq!(f.weights, vec![0.0]);
        let f = table.formula(0, 2, 2).unwrap(); // q = 3: one-sided works
        assert_eq!(f.offsets.len(), 3);
    }

    #[test]
    fn order_above_cap_is_rejected() {
        let table = StencilTable::new();
        assert!(matches!(
            table.formula(-9, 9, MAX_ORDER + 1),
            Err(Error::StencilUnderflow { .. })
        ));
    }

    #[test]
    fn grid_derivatives_match_analytic_fields() {
        use crate::geometry::{build_grid_domain, DomainKind, DomainSpec, Stencil};
        let g = build_grid_domain(DomainSpec::new(DomainKind::Square), 1.0 / 64.0, Stencil::Eight)
            .unwrap();
        let u: Vec<f64> = g.nodes.iter().map(|p| p[0].powi(3) * p[1].powi(2)).collect();
        let d = GridDeriv::new(&g, None);
        let probe = g.nearest_node([0.5, 0.5]);
        let [x, y] = g.nodes[probe];
        let dx = d.derivative(probe, (1, 0), &u).unwrap();
        assert!((dx - 3.0 * x * x * y * y).abs() < 1e-3);
        let dxy = d.derivative(probe, (1, 1), &u).unwrap();
        assert!((dxy - 6.0 * x * x * y).abs() < 1e-3);
        let dyy = d.derivative(probe, (0, 2), &u).unwrap();
        assert!((dyy - 2.0 * x.powi(3)).abs() < 1e-3);
        // near-corner node exercises the one-sided fallbacks
        let corner = g.nearest_node([1.0 / 64.0, 1.0 / 64.0]);
        let [cx, cy] = g.nodes[corner];
        let dx = d.derivative(corner, (1, 0), &u).unwrap();
        assert!((dx - 3.0 * cx * cx * cy * cy).abs() < 1e-3);
    }

    #[test]
    fn line_derivative_matches() {
        let lg = LineGrid::new(0.0, 1.0, 1.0 / 128.0).unwrap();
        let u: Vec<f64> = lg.points.iter().map(|x| x.powi(3)).collect();
        let table = StencilTable::new();
        for (i, &x) in lg.points.iter().enumerate() {
            let d1 = line_derivative(&table, &lg, i, 1, &u).unwrap();
            assert!((d1 - 3.0 * x * x).abs() < 2e-3, "at {x}: {d1}");
        }
    }
}
