use stackvd_web::{belief_trace, regret_trace, solve_game};

#[test]
fn solve_reports_coverage_within_budget() {
    let v = solve_game(3, 3, 3, 2, 1.0).unwrap();
    let cov: Vec<f64> = v["coverage"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(cov.len(), 3);
    assert!(cov.iter().all(|c| (-1e-9..=1.0 + 1e-9).contains(c)));
    assert!(cov.iter().sum::<f64>() <= 1.0 + 1e-6);
    assert!(v["objective"].as_f64().unwrap() >= v["uniform_objective"].as_f64().unwrap() - 1e-6);
}

#[test]
fn solve_rejects_oversized_requests() {
    assert!(solve_game(0, 99, 2, 1, 1.0).is_err());
    assert!(solve_game(0, 2, 2, 1, -1.0).is_err());
}

#[test]
fn belief_trace_moves_in_the_right_direction() {
    let v = belief_trace(0.3, 0.9, 0.1, "a c t").unwrap();
    let p: Vec<f64> = v["posterior"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(p.len(), 4);
    assert!(p[1] > p[0]);
    assert!(p[2] < p[1]);
    assert!((p[3] - p[2]).abs() < 1e-12);
    assert!(belief_trace(0.3, 0.9, 0.1, "x").is_err());
    assert!(belief_trace(1.2, 0.9, 0.1, "a").is_err());
}

#[test]
fn regret_trace_is_downsampled_and_deterministic() {
    let a = regret_trace(1, 1000, 0.25).unwrap();
    let b = regret_trace(1, 1000, 0.25).unwrap();
    assert_eq!(a, b);
    let pts = a["points"].as_array().unwrap();
    assert!(pts.len() <= 201);
    assert_eq!(pts.last().unwrap()[0].as_u64().unwrap(), 1000);
    assert!(regret_trace(1, 0, 0.25).is_err());
}
