//! Norm-square flow on CP^2 with weights (-1/2, 1/2, 3/2): stratum labels of
//! a few points and the Hessian index at each limit.
use genmoment::flow::{hessian_index, stratum_label, FlowFunction, FlowMethod, FlowOptions};
use genmoment::scenarios::Catalog;
use serde_json::json;

fn main() -> genmoment::Result<()> {
    let s = Catalog::builtin().build("cp2-weights", &json!({"offset": -0.5}))?;
    let opts = FlowOptions::from_tolerances(s.tol()).with_method(FlowMethod::Orbit);
    for m in s.stratified(6, 8) {
        let l = stratum_label(&s, &m, &opts)?;
        let h = hessian_index(&s, &FlowFunction::NormSquare, &l.limit_point)?;
        println!("lambda {:>6.3}  t {:>7.2}  index {}", l.lambda[0], l.flow_time, h.hessian_index);
    }
    Ok(())
}
