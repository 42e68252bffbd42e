//! Desk-scale end-to-end check of the single-index pipeline on the
//! latent-sign model, where this estimator is at its strongest.

use cde_core::datagen::DataModelId;
use cde_core::harness::{run_experiment, Method, RunConfig};

#[test]
fn hall_yao_on_m4_stays_close_to_the_conditional_law() {
    let cfg = RunConfig {
        model: DataModelId::M4,
        methods: vec![Method::HallYao],
        runs: 1,
        scale_factor: 0.2,
        base_seed: 7,
        ..RunConfig::default()
    };
    let table = run_experiment(&cfg).unwrap();
    let cell = table.cell(DataModelId::M4, Method::HallYao).unwrap();
    assert_eq!(cell.completed_runs, 1);
    let w1 = cell.metrics.iter().find(|m| m.0 == "w1").unwrap().1;
    assert!(w1 <= 0.25, "hall_yao M4 w1 = {w1}");
}
