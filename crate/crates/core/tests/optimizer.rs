//! Small-scale optimizer runs on every preset.

use penshape::io::{parse_history, history_to_csv};
use penshape::{preset, run_optimization, run_optimization_with, Error, RunConfig, RunHistory, RunOutcome, Termination};

fn small(example: u8) -> RunConfig {
    let mut c = preset(example).unwrap();
    c.grid_n = 25;
    c.n_samples = 4;
    c.optimizer.max_iters = 15;
    c
}

fn bits(h: &RunHistory) -> Vec<[u64; 5]> {
    h.records
        .iter()
        .map(|r| [r.iter as u64, r.cost.to_bits(), r.step.to_bits(), r.dcost.to_bits(), r.dg.to_bits()])
        .collect()
}

fn run_on(threads: usize, config: &RunConfig) -> RunOutcome {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| run_optimization(config))
        .unwrap()
}

#[test]
fn zero_iterations_records_only_the_start() {
    let mut c = small(1);
    c.optimizer.max_iters = 0;
    let out = run_optimization(&c).unwrap();
    assert_eq!(out.history.records.len(), 1);
    assert_eq!(out.history.records[0].iter, 0);
    assert_eq!(out.history.termination, Termination::MaxIters);
    assert_eq!(out.final_g, c.initial_shape.interpolate(&out.mesh));
}

#[test]
fn presets_decrease_monotonically_with_bounded_steps() {
    for id in 1..=4 {
        let out = run_optimization(&small(id)).unwrap();
        let h = &out.history;
        assert!(h.termination.is_success(), "example {id}: {}", h.termination);
        for w in h.records.windows(2) {
            assert!(w[1].cost <= w[0].cost, "example {id}");
            assert!(w[1].iter > w[0].iter);
        }
        for r in h.records.iter().skip(1) {
            assert!((1.0..=10.0).contains(&r.step), "example {id}: step {}", r.step);
        }
        assert!(h.final_cost() < h.records[0].cost, "example {id} made no progress");
    }
}

#[test]
fn constraint_region_stays_inside_the_shape() {
    for id in [1, 3] {
        let c = small(id);
        let out = run_optimization(&c).unwrap();
        let mask = out.mesh.vertex_mask(&c.constraint);
        for (g, m) in out.final_g.iter().zip(mask) {
            assert!(!m || *g >= 0.0);
        }
    }
}

#[test]
fn deterministic_coefficient_makes_sample_count_irrelevant() {
    let mut one = small(2);
    one.rho = 0.0;
    one.n_samples = 1;
    let many = RunConfig {
        n_samples: 5,
        ..one.clone()
    };
    let a = run_optimization(&one).unwrap();
    let b = run_optimization(&many).unwrap();
    assert_eq!(bits(&a.history), bits(&b.history));
    assert_eq!(a.final_g, b.final_g);
}

#[test]
fn thread_count_does_not_change_results() {
    let mut c = small(3);
    c.rho = 0.3;
    c.n_samples = 6;
    let a = run_on(1, &c);
    let b = run_on(4, &c);
    assert_eq!(bits(&a.history), bits(&b.history));
    assert_eq!(a.history.termination, b.history.termination);
    let gb = |o: &RunOutcome| o.final_g.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(gb(&a), gb(&b));
}

#[test]
fn seed_changes_the_sample_set() {
    let mut c = small(1);
    c.rho = 0.3;
    c.optimizer.max_iters = 0;
    let a = run_optimization(&c).unwrap();
    c.seed = 99;
    let b = run_optimization(&c).unwrap();
    assert_ne!(a.history.records[0].cost, b.history.records[0].cost);
}

#[test]
fn resampling_run_completes() {
    let mut c = small(1);
    c.rho = 0.3;
    c.resample = true;
    c.optimizer.max_iters = 4;
    let out = run_optimization(&c).unwrap();
    assert!(out.history.records.iter().all(|r| r.cost.is_finite() && r.cost >= 0.0));
    assert!(out.history.records.len() >= 2);
}

#[test]
fn observer_sees_every_record_and_can_abort() {
    let c = small(1);
    let mut seen = vec![];
    let out = run_optimization_with(&c, |r, g| {
        assert_eq!(g.len(), 25 * 25);
        seen.push(r.iter);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, out.history.records.iter().map(|r| r.iter).collect::<Vec<_>>());

    let err = run_optimization_with(&c, |r, _| {
        if r.iter == 1 {
            Err(Error::InvalidArgument("stop".into()))
        } else {
            Ok(())
        }
    });
    assert!(err.is_err());
}

#[test]
fn history_survives_csv_round_trip() {
    let out = run_optimization(&small(4)).unwrap();
    let back = parse_history(&history_to_csv(&out.history), "memory").unwrap();
    assert_eq!(bits(&back), bits(&out.history));
    assert_eq!(back.termination, out.history.termination);
}

#[test]
fn invalid_configuration_is_rejected_before_solving() {
    let mut c = small(1);
    c.eps = -1.0;
    assert!(matches!(run_optimization(&c), Err(Error::InvalidArgument(_))));
    let mut c = small(1);
    c.optimizer.alpha_min = 0.0;
    assert!(run_optimization(&c).is_err());
}
