use wsob::geometry::*;
use wsob::measure::*;
use wsob::sobolev::*;
use wsob::kernel::*;
use std::sync::Arc;

fn main() {
    for (name, spec, k) in [
        ("square-h32-k2", DomainSpec::new(DomainKind::Square), 2usize),
        ("flat-eps0.1-k1", DomainSpec::with_eps_cut(DomainKind::FlatCusp, 0.1), 1),
        ("flat-eps0.05-k1", DomainSpec::with_eps_cut(DomainKind::FlatCusp, 0.05), 1),
        ("flat-eps0.05-k6", DomainSpec::with_eps_cut(DomainKind::FlatCusp, 0.05), 6),
    ] {
        let h = if k >= 6 { 1.0/12.0 } else { 1.0/32.0 };
        let g = Arc::new(build_grid_domain(spec, h, Stencil::Eight).unwrap());
        let w = WeightField::constant_on_grid(g.clone(), 1.0);
        match assemble_operator(&w, k) {
            Ok(op) => {
                let mut worst = 0.0f64;
                for &gid in op.support.iter().step_by((op.dim()/20).max(1)) {
                    match dirac_representer(&op, gid as usize) {
                        Ok((_, rel)) => worst = worst.max(rel),
                        Err(e) => { println!("{name}: REP-ERR {e}"); worst = f64::NAN; break; }
                    }
                }
                println!("{name}: n={} worst residual {:.3e}", op.dim(), worst);
            }
            Err(e) => println!("{name}: ASSEMBLE-ERR {e}"),
        }
    }
}
