use super::*;
use crate::bnb::SummaryRow;

fn row(inst: &str, policy: &str, seed: u64, nodes: usize, status: &str, gap: f64) -> SummaryRow {
    SummaryRow {
        instance: inst.into(),
        family: "sc".into(),
        policy: policy.into(),
        seed,
        nodes,
        seconds: nodes as f64 * 1e-3,
        t_d: 0,
        status: status.into(),
        objective: Some(1.0),
        dual_gap: gap,
    }
}

#[test]
fn geometric_mean_example() {
    assert!((geometric_mean(&[1.0, 100.0]) - 10.0).abs() < 1e-12);
    assert_eq!(geometric_mean(&[]), 0.0);
}

#[test]
fn dominant_policy_wins_everything() {
    let mut rows = Vec::new();
    for i in 0..5 {
        let name = format!("i{i}");
        rows.push(row(&name, "a", 0, 3, "optimal", 0.0));
        rows.push(row(&name, "b", 0, 30, "optimal", 0.0));
    }
    let rep = summarize(&rows, Some("a"));
    let a = rep.rows.iter().find(|s| s.policy == "a").unwrap();
    let b = rep.rows.iter().find(|s| s.policy == "b").unwrap();
    assert_eq!((a.wins, a.mean_rank), (5, 1.0));
    assert_eq!((b.wins, b.mean_rank), (0, 2.0));
    assert_eq!(a.norm_score, 100.0);
    assert!((b.norm_score - 1000.0).abs() < 1e-9);
}

#[test]
fn ties_and_unsolved_ranking() {
    let rows = vec![
        row("x", "a", 0, 10, "optimal", 0.0),
        row("x", "b", 0, 10, "optimal", 0.0),
        row("y", "a", 0, 100, "node-limit", 0.5),
        row("y", "b", 0, 100, "node-limit", 0.1),
        row("z", "a", 0, 100, "node-limit", 0.0),
        row("z", "b", 0, 7, "optimal", 0.0),
    ];
    let ranks = instance_ranks(&rows, &["a".into(), "b".into()]);
    assert_eq!(ranks["x"][0], ("a".to_string(), 1));
    assert_eq!(ranks["y"][0], ("b".to_string(), 1));
    assert_eq!(ranks["z"][0], ("b".to_string(), 1));
    let rep = summarize(&rows, None);
    let wins: usize = rep.rows.iter().map(|s| s.wins).sum();
    assert_eq!(wins, 3);
}

#[test]
fn aggregates_survive_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.csv");
    let mut rows = Vec::new();
    for (k, b) in [0usize, 4, 8].iter().enumerate() {
        for s in 0..3u64 {
            let mut r = row(&format!("i{s}"), &sweep_policy_name(*b), s, 10 + 7 * k + s as usize, "optimal", 0.0);
            r.seconds = 0.1 / (1.0 + s as f64 * 3.0);
            rows.push(r);
        }
    }
    rows.push(row("i9", "random", 0, 50, "node-limit", f64::INFINITY));
    write_csv(&rows, &path).unwrap();
    let back: Vec<SummaryRow> = read_csv(&path).unwrap();
    assert_eq!(back, rows);
    assert_eq!(summarize(&back, Some("random")), summarize(&rows, Some("random")));
    let sweep = sweep_from_rows(&back);
    assert_eq!(sweep, sweep_from_rows(&rows));
    assert_eq!(sweep.iter().map(|r| r.budget).collect::<Vec<_>>(), vec![0, 4, 8]);
    let spath = dir.path().join("sweep.csv");
    write_csv(&sweep, &spath).unwrap();
    assert_eq!(read_csv::<SweepRow>(&spath).unwrap(), sweep);
}

#[test]
fn parallel_map_keeps_order() {
    let jobs: Vec<u64> = (0..37).collect();
    let out = parallel_map(&jobs, 4, |j| j * j);
    assert_eq!(out, jobs.iter().map(|j| j * j).collect::<Vec<_>>());
}
