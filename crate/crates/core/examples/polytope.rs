//! Moment polytopes of the compact torus scenarios, plus the polytope of one
//! orbit closure in CP^2.
use genmoment::convexity::{moment_polytope, orbit_closure_polytope};
use genmoment::scenarios::{Catalog, SampleKind};
use serde_json::json;

fn main() -> genmoment::Result<()> {
    let catalog = Catalog::builtin();
    for id in ["s1-rotation-s2", "torus-cp1", "cp2-weights", "t2-cp1xcp1"] {
        let s = catalog.build(id, &json!({}))?;
        let p = moment_polytope(&s, 1000, 4)?;
        println!("{id:<16} vertices {:?}  hausdorff {:.1e}", p.polytope.vertices, p.hausdorff);
    }

    let s = catalog.build("cp2-weights", &json!({}))?;
    let m = s.sample(5, 0, SampleKind::Uniform);
    let o = orbit_closure_polytope(&s, &m, 50, 5)?;
    println!("orbit closure of a generic point: {:?}", o.polytope.vertices);
    Ok(())
}
