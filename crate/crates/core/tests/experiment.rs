use es_rate::harness::csv::{read_csv, write_csv};
use es_rate::harness::experiment::{run_experiment, run_experiment_with_threads};
use es_rate::harness::ExperimentConfig;

fn config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{"objectives":["h1","h3"],"dims":[3,6],"kappas":[0,1],
            "alpha_rules":["const","dim"],"trials":3,"base_seed":99}"#,
    )
    .unwrap()
}

fn csv_without_wall_ms(cfg: &ExperimentConfig, threads: usize) -> String {
    let table = run_experiment_with_threads(cfg, Some(threads)).unwrap();
    let mut buf = Vec::new();
    write_csv(&table, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let wall = header.iter().position(|h| *h == "wall_ms").unwrap();
    text.lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| *i != wall)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn results_independent_of_thread_count() {
    let cfg = config();
    assert_eq!(csv_without_wall_ms(&cfg, 1), csv_without_wall_ms(&cfg, 4));
}

#[test]
fn csv_round_trips() {
    let table = run_experiment(&config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_csv(&table, std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_csv(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back.rows.len(), table.rows.len());
    for (a, b) in back.rows.iter().zip(&table.rows) {
        assert_eq!(a.seed, b.seed);
        assert_eq!(a.cr_hat.to_bits(), b.cr_hat.to_bits());
        assert_eq!(a.stop_reason, b.stop_reason);
    }
}

#[test]
fn grid_has_trials_and_aggregates() {
    let table = run_experiment(&config()).unwrap();
    assert_eq!(table.trials().count(), 2 * 2 * 2 * 2 * 3);
    assert_eq!(table.aggregates().count(), 2 * 2 * 2 * 2);
    for r in table.aggregates() {
        assert!(r.seed.is_none());
        assert!(r.cr_hat > 0.0 && r.scaled_rate > 0.0);
    }
}
