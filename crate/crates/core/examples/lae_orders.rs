use dec_core::cg1d::{run_lae, Basis, LaeSetup};
use dec_core::Variant;

fn main() {
    for basis in ["b2", "p2", "pgl2", "b3", "p3", "pgl3", "pgl4"] {
        let basis: Basis = basis.parse().unwrap();
        for v in [Variant::AlphaDec, Variant::AlphaDecU] {
            let mut prev: Option<f64> = None;
            print!("{basis} {v}:");
            for n in [16, 32, 64, 128] {
                let r = run_lae(&LaeSetup::standard(basis, n, v)).unwrap();
                match prev {
                    Some(p) => print!(" {:.2e} ({:.2})", r.errors.l2, (p / r.errors.l2).log2()),
                    None => print!(" {:.2e}", r.errors.l2),
                }
                prev = Some(r.errors.l2);
            }
            println!();
        }
    }
}
