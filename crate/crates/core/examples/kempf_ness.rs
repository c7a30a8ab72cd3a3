//! Kempf-Ness function along a geodesic, its slope at infinity and the
//! Hesselink weight of an unstable point.
use genmoment::flow::{FlowMethod, FlowOptions};
use genmoment::kempfness::{kn_profile, moment_weight_check};
use genmoment::scenarios::{point_from_z, Catalog, SampleKind};
use nalgebra::DVector;
use num_complex::Complex64;
use serde_json::json;

fn main() -> genmoment::Result<()> {
    let s = Catalog::builtin().build("cp2-weights", &json!({"offset": -0.5}))?;
    let m = s.sample(7, 0, SampleKind::Uniform);
    let prof = kn_profile(&s, &m, &DVector::from_element(1, 1.0), 0.5, 12)?;
    for (t, v) in prof.times.iter().zip(&prof.values) {
        println!("t {t:>4.1}  phi {v:>9.5}");
    }
    println!("slope at infinity {:?}, min second difference {:.2e}", prof.slope, prof.min_second_difference());

    // z0 = 0: only the weights 1/2 and 3/2 are seen, so the point is unstable.
    // The orbit integrator keeps z0 = 0 exactly over the long flow.
    let m = point_from_z(&[Complex64::new(0.0, 0.0), Complex64::new(0.6, 0.2), Complex64::new(0.5, -0.4)]);
    let r = moment_weight_check(&s, &m, &FlowOptions::from_tolerances(s.tol()).with_method(FlowMethod::Orbit), 1e-4)?;
    println!("-inf slope {:.6}  |lambda| {:.6}  w_H {:?}", -r.inf_slope, r.limit_norm, r.w_h);
    Ok(())
}
