use std::fs;

use attrnet::baselines::{mlp_predict, mlp_train, MlpConfig};
use attrnet::checkpoint;
use attrnet::data::{ingest, split_by_source, synthetic, write_delimited, write_lines, InputFormat};
use attrnet::eval::{render_report, run_loo, Grid, LooConfig, Method};
use attrnet::training::{train, TrainConfig};

#[test]
fn file_to_checkpoint_to_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let records = synthetic::generate(&synthetic::SyntheticConfig {
        records_per_source: 40,
        ..Default::default()
    })
    .unwrap();
    let csv = dir.path().join("d.csv");
    write_delimited(&records, fs::File::create(&csv).unwrap()).unwrap();
    let jsonl = dir.path().join("d.jsonl");
    write_lines(&records, fs::File::create(&jsonl).unwrap()).unwrap();
    let from_csv = ingest(&csv, InputFormat::from_path(&csv)).unwrap();
    let from_jsonl = ingest(&jsonl, InputFormat::from_path(&jsonl)).unwrap();
    assert_eq!(from_csv, records);
    assert_eq!(from_jsonl, records);

    let (catalog, test) = split_by_source(&from_csv, "site2").unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        epochs: 4,
        embedding_size: 8,
        ..TrainConfig::default()
    };
    let model = train(&catalog, &cfg).unwrap();
    let path = dir.path().join("m.json");
    checkpoint::save(&model, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    for r in &test {
        assert_eq!(model.predict(&r.value).unwrap(), back.predict(&r.value).unwrap());
    }
}

#[test]
fn loo_report_has_one_run_per_source() {
    let records = synthetic::generate(&synthetic::SyntheticConfig {
        records_per_source: 30,
        ..Default::default()
    })
    .unwrap();
    let cfg = LooConfig {
        train: TrainConfig {
            learning_rate: 1e-3,
            epochs: 2,
            ..TrainConfig::default()
        },
        grid: Grid {
            embedding_sizes: vec![4],
            windows: vec![3, 5],
        },
        mlp_hidden: [16, 8],
        ..LooConfig::default()
    };
    let mut reports = Vec::new();
    for m in [Method::Ondux, Method::Lstm, Method::Hybrid(attrnet::layers::PoolingOp::Concat), Method::Mlp] {
        let r = run_loo(&records, m, &cfg).unwrap();
        assert_eq!(r.runs.len(), 3);
        let sources: Vec<&str> = r.runs.iter().map(|x| x.test_source.as_str()).collect();
        assert_eq!(sources, ["site1", "site2", "site3"]);
        for run in &r.runs {
            assert_eq!(run.tally.total(), 30);
            if m.is_network() {
                assert!(run.config.is_some());
            }
            if m == Method::Lstm {
                assert_eq!(run.config.unwrap().window, 3);
            }
        }
        reports.push(r);
    }
    let out = render_report(&reports).unwrap();
    assert_eq!(out.jsonl.lines().count(), 12);
    let rows: Vec<&str> = out.text.lines().skip(1).take(4).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(rows, ["hybrid-concat", "lstm", "mlp", "ondux"]);
    assert_eq!(out, render_report(&reports).unwrap());
}

#[test]
fn mlp_ignores_token_order() {
    let records = synthetic::generate(&synthetic::SyntheticConfig {
        records_per_source: 30,
        ..Default::default()
    })
    .unwrap();
    let catalog = attrnet::data::DomainCatalog::from_records(records).unwrap();
    let m = mlp_train(
        &catalog,
        &MlpConfig {
            hidden: [32, 8],
            learning_rate: 1e-3,
            epochs: 3,
            ..MlpConfig::default()
        },
    )
    .unwrap();
    assert_eq!(mlp_predict(&m, "Dark Silver").unwrap(), mlp_predict(&m, "silver dark").unwrap());
}
