mod common;

use common::{brute_force_optimum, highspy_available, solve_with_highs, tiny_instance, RHO};
use proptest::prelude::*;
use vrpod_core::instance::GeneratorConfig;
use vrpod_core::oracle::milp_row_count;
use vrpod_core::{check_feasible, evaluate_objective, exhaustive_solve, export_milp, Instance, NetworkType};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn oracle_matches_brute_force(spec in tiny_instance(5)) {
        let inst = spec.build();
        let oracle = exhaustive_solve(&inst, RHO, 10_000_000).unwrap();
        let brute = brute_force_optimum(&inst, RHO);
        match (oracle.cost(), brute) {
            (None, None) => {}
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-6, "oracle {a} brute {b}"),
            other => prop_assert!(false, "feasibility disagrees: {other:?}"),
        }
        if let Some(sol) = oracle.solution {
            let report = check_feasible(&sol, &inst);
            prop_assert!(report.is_feasible(), "{report}");
            prop_assert!((evaluate_objective(&sol, &inst, RHO) - sol.objective).abs() < 1e-9);
        }
    }
}

fn five_customer(seed: u64) -> Instance {
    GeneratorConfig::new(5, NetworkType::Random, seed).with_drivers(2, 2).generate().unwrap()
}

#[test]
fn oracle_on_generated_instances_is_feasible() {
    for seed in 0..10 {
        let inst = five_customer(seed);
        let out = exhaustive_solve(&inst, RHO, 50_000_000).unwrap();
        let sol = out.solution.expect("generated instances are feasible");
        assert!(check_feasible(&sol, &inst).is_feasible());
        let brute = brute_force_optimum(&inst, RHO).unwrap();
        assert!((sol.objective - brute).abs() < 1e-6, "seed {seed}: {} vs {brute}", sol.objective);
    }
}

#[test]
fn milp_export_is_deterministic_and_counts_rows() {
    let inst = five_customer(3);
    let a = export_milp(&inst, RHO, None);
    let b = export_milp(&inst, RHO, None);
    assert_eq!(a, b);
    let rows = a.lines().filter(|l| l.starts_with(" c") && l.contains(": ")).count();
    assert_eq!(rows, milp_row_count(&inst, RHO));
    // Families for |C| = 5, |K| = 2.
    let (c, k) = (5usize, 2usize);
    let company = c + 1 + (c + 1) * (c + 1) - c - 1 + c * (c - 1) + c + c + 2 * c + 1 + c;
    let per_od = c + 1 + 1 + (c + 1) * (c + 1) - c + 1 + c * c + c + 1 + 2 * c;
    assert_eq!(rows, company + k * per_od + 1);
    assert!(a.contains("c13_1: w_1_o <= "));
    assert!(a.starts_with("\\ VRPODTW arc-flow model"));
}

#[test]
fn milp_matches_oracle_with_external_solver() {
    if !highspy_available() {
        eprintln!("SKIP highspy not installed");
        return;
    }
    for seed in 0..5 {
        let inst = five_customer(100 + seed);
        let exact = exhaustive_solve(&inst, RHO, 50_000_000).unwrap().cost().unwrap();
        let lp = export_milp(&inst, RHO, None);
        let milp = solve_with_highs(&lp).unwrap();
        assert!((milp - exact).abs() < 1e-6, "seed {seed}: milp {milp} oracle {exact}");
    }
}
