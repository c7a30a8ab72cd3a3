//! Level sets, reduced Hermitian data, minimal coupling, Duistermaat-Heckman
//! variation and Moser flows.

mod ce;
mod coupling;
mod dh;
mod level;
mod moser;

pub use ce::{ce_verify_reduction, CeReductionReport};
pub use coupling::{
    minimal_coupling_form, CouplingAction, MinimalCoupling, PrincipalBundle, ProductWithFlat,
};
pub use dh::{
    bundle_degree, dh_variation, good_trivialization_check, quotient_chart, quotient_scenario_check, reduced_area,
    DhReport, GoodTrivializationReport, GoodTrivializationRow, QuotientChart, QuotientReport, TrivializationLift,
};
pub use level::{
    ambient_metric, check_reduced_complex_structure, horizontal_basis, level_tangent, newton_to_level,
    reduced_form_at, reduced_form_sample, sample_level_set, sample_level_set_with, transport_audit,
    write_reduced_csv, HorizontalChoice, LevelPoint, LevelSetSample, ReducedFormSample, ReducedStructureReport,
    ReducedValue,
};
pub use moser::{
    conformal_pair, contraction_defect, exact_pair, homotopy_primitive, identical_pair, moser_field, moser_flow,
    moser_map, moser_pairs, MoserOptions, MoserPair, MoserReport,
};
