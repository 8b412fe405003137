use wsob::geometry::*;
use wsob::measure::*;
use wsob::sobolev::*;
use wsob::kernel::*;
use wsob::metric::*;
use wsob::rng::Rng;
use std::sync::Arc;

fn main() {
    for k in [4usize, 5, 6] {
        let h = match k { 0..=3 => 1.0/32.0, 4 => 1.0/24.0, 5 => 1.0/16.0, _ => 1.0/12.0 };
        for eps in [0.1, 0.05] {
            let spec = DomainSpec::with_eps_cut(DomainKind::FlatCusp, eps);
            let g = Arc::new(build_grid_domain(spec, h, Stencil::Eight).unwrap());
            let w = WeightField::constant_on_grid(g.clone(), 1.0);
            let op = assemble_operator(&w, k).unwrap();
            let graph = InnerMetricGraph::new(g.clone());
            let mut order: Vec<usize> = (0..g.len()).collect();
            order.sort_by(|&a,&b| g.nodes[a][0].partial_cmp(&g.nodes[b][0]).unwrap());
            let mut pairs: Vec<(usize,usize)> = Vec::new();
            for wd in order.windows(2).take(24) { if wd[0]!=wd[1] { pairs.push((wd[0],wd[1])); } }
            let mut rng = Rng::seed_from(2024);
            while pairs.len() < 56 {
                let a = rng.below(g.len()); let b = rng.below(g.len());
                if a != b && graph.components[a]==graph.components[b] { pairs.push((a,b)); }
            }
            let rows = feature_lipschitz_ratio(&op, &graph, &pairs).unwrap();
            let best = rows.iter().max_by(|x,y| x.ratio.partial_cmp(&y.ratio).unwrap()).unwrap();
            println!("k={k} eps={eps}: n={} min-x={:.4} max ratio {:.4e} at ({:.4},{:.4})-({:.4},{:.4})",
                g.len(), g.nodes[order[0]][0], best.ratio,
                g.nodes[best.a][0], g.nodes[best.a][1], g.nodes[best.b][0], g.nodes[best.b][1]);
        }
    }
}
