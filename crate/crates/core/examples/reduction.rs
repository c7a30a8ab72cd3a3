//! Reduction at regular levels: the reduced forms on the diagonal C^2 level
//! sets, the Calabi-Eckmann comparison and the linear area variation.
use genmoment::reduction::{ce_verify_reduction, dh_variation, reduced_form_sample, sample_level_set};
use genmoment::scenarios::{CalabiEckmannParams, Catalog};
use nalgebra::DVector;
use serde_json::json;

fn main() -> genmoment::Result<()> {
    let catalog = Catalog::builtin();
    let s = catalog.build("diag-c2", &json!({}))?;
    let sample = sample_level_set(&s, &DVector::from_element(1, -0.5), 3, 0)?;
    for lp in &sample.points {
        let r = reduced_form_sample(&s, lp)?;
        println!("x {:.3?}  omega_red(e1, e2) {:.6}", lp.point.as_slice(), r.omega[(0, 1)]);
    }

    for tau in [[0.0, 1.0], [1.0, 1.0]] {
        let params = CalabiEckmannParams { a: tau[0], b: tau[1], ..Default::default() };
        let r = ce_verify_reduction(params, 0.5, 50, 9, 1e-5)?;
        println!("tau = {} + {}i: max deviation {:.2e}, flipped sign {:.2e}", tau[0], tau[1], r.max_deviation, r.flipped_metric_deviation);
    }

    let levels: Vec<f64> = (1..=5).map(|k| -0.2 * k as f64).collect();
    let dh = dh_variation(&s, &levels, 1e-3)?;
    println!("areas {:.5?}  slope {:.6}  degree {:.6}", dh.areas, dh.slope, dh.degree);
    Ok(())
}
