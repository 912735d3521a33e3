use sle_nv::brownian::BrownianPath;
use sle_nv::trace::{build_trace, evaluate_partition, TraceParams};

#[test]
fn kappa_two_traces_stay_above_the_axis() {
    let mut tips = Vec::new();
    for seed in 0..30 {
        let mut path = BrownianPath::sample_uniform(1.0, 50, seed).unwrap();
        let mut params = TraceParams::new(1.0, 2.0, 0.05);
        params.n_init = 50;
        let trace = build_trace(&mut path, &params).unwrap();
        assert!(trace.points.iter().all(|p| p.z.im >= 0.0), "seed {seed}");
        tips.push(trace.points.last().unwrap().z.im);
    }
    let mean = tips.iter().sum::<f64>() / tips.len() as f64;
    assert!(mean > 0.0, "mean tip height {mean}");
}

#[test]
fn stored_path_replays_the_same_trace() {
    let mut path = BrownianPath::sample_uniform(1.0, 100, 21).unwrap();
    let params = TraceParams::new(1.0, 8.0 / 3.0, 0.03);
    let trace = build_trace(&mut path, &params).unwrap();
    let mut csv = Vec::new();
    path.write_csv(&mut csv).unwrap();
    let stored = BrownianPath::read_csv(csv.as_slice(), 21).unwrap();
    let again = evaluate_partition(&stored, &trace.partition, 8.0 / 3.0).unwrap();
    assert_eq!(again, trace.points.iter().map(|p| p.z).collect::<Vec<_>>());
}
