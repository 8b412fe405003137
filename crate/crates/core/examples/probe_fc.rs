use wsob::geometry::*;
use wsob::measure::*;
use wsob::sobolev::*;
use wsob::stencil::GridDeriv;
use std::sync::Arc;

fn main() {
    for h in [1.0/1024.0, 1.0/2048.0] {
        let spec = DomainSpec::with_eps_cut(DomainKind::FlatCusp, 1e-2);
        let g = Arc::new(build_grid_domain(spec, h, Stencil::Eight).unwrap());
        let w = WeightField::constant_on_grid(g.clone(), 1.0);
        let u: Vec<f64> = g.nodes.iter().map(|p| 1.0 / p[0]).collect();
        let levels = level_norms(&u, &w, 2, 2.0).unwrap();
        println!("h=1/{:.0} nodes={} levels={:?}", 1.0/h, g.len(), levels);
        // find dominant contributions at level 2
        let mask = support_mask(&w);
        let d = GridDeriv::new(&g, Some(&mask));
        let mut contribs: Vec<(f64, usize, usize)> = Vec::new();
        for node in 0..g.len() {
            if !mask[node] { continue; }
            let fw = g.node_weights[node];
            for mx in 0..=2usize {
                let v = d.derivative(node, (mx, 2-mx), &u).unwrap();
                contribs.push((v*v*fw, node, mx));
            }
        }
        contribs.sort_by(|a,b| b.0.partial_cmp(&a.0).unwrap());
        for (c, node, mx) in contribs.iter().take(6) {
            let p = g.nodes[*node];
            println!("  contrib {:.4e} at ({:.4},{:.6}) alpha=({},{}) w={:.3e}", c, p[0], p[1], mx, 2-mx, g.node_weights[*node]);
        }
    }
}
