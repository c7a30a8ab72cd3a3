//! Momentumly-closed and gradient-identity audits on every catalog scenario.
use genmoment::moment::{check_gradient_identity, check_momentumly_closed};
use genmoment::scenarios::Catalog;
use serde_json::json;

fn main() -> genmoment::Result<()> {
    let catalog = Catalog::builtin();
    for id in catalog.names() {
        let s = catalog.build(&id, &json!({}))?;
        let pts = s.stratified(1, 200);
        let closed = check_momentumly_closed(&s.manifold, &s.omega, &s.action, &pts, 1, 1e-6, &s.id);
        print!("{id:<22} d(iota omega) {:.2e}", closed.max_deviation);
        if let Some(t) = &s.triple {
            let g = check_gradient_identity(t, s.action.as_ref(), &s.moment, &pts, 1e-6, &s.id);
            print!("  grad identity {:.2e}", g.max_deviation);
        }
        println!();
    }
    Ok(())
}
