use std::path::Path;

use proptest::prelude::*;

use ssp::dataset::Dataset;
use ssp::experiments::{
    cmd_compare, cmd_generate, cmd_hyperplane, cmd_probe, cmd_stats, loss_hyperplane, quantile, summarize,
    summarize_runs, Case, ExperimentConfig, RunCurves,
};
use ssp::metrics::{self, LossKind};
use ssp::model::{ModelConfig, Network};
use ssp::rng::substream;
use ssp::spectral::Field;
use ssp::trainer::{read_record, ValidationMetric};
use ssp::Error;

/// One short KS simulation on the desk grid.
fn small(case: Case) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(case);
    cfg.data.simulations = 2;
    cfg.data.ks.duration = 2.0;
    cfg.data.waves.duration = 30.0;
    cfg.data.waves.n_components = 60;
    cfg.train.runs = 1;
    cfg.train.epochs = 2;
    cfg.train.losses = vec![LossKind::Ssp, LossKind::Mse];
    cfg.probe.epochs = 1;
    cfg.hyperplane.points = 5;
    cfg
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generated_pair_count_follows_the_window_rule() {
    let cfg = small(Case::Ks1d);
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_generate(&cfg, dir.path(), 1).unwrap();
    assert_eq!(report.frames_per_simulation, vec![21, 21]);
    assert_eq!(report.pairs, 2 * (21 - 8));
    let data = Dataset::load(&report.dataset).unwrap();
    assert_eq!(data.dims(), &[128]);
    assert_eq!(data.pairs_per_source(), &[13, 13]);
    assert_eq!(data.sources().len(), 2);
    assert_ne!(data.sources()[0].seed, data.sources()[1].seed);
}

#[test]
fn regeneration_is_byte_identical() {
    let cfg = small(Case::Waves);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_generate(&cfg, a.path(), 1).unwrap();
    cmd_generate(&cfg, b.path(), 2).unwrap();
    assert_eq!(files(a.path()), files(b.path()));
    let mut other = cfg.clone();
    other.seed = 1;
    let c = tempfile::tempdir().unwrap();
    cmd_generate(&other, c.path(), 1).unwrap();
    assert_ne!(
        std::fs::read(a.path().join("dataset.bin")).unwrap(),
        std::fs::read(c.path().join("dataset.bin")).unwrap()
    );
}

#[test]
fn too_short_simulation_is_an_explicit_error() {
    let mut cfg = small(Case::Ks1d);
    cfg.data.ks.duration = 0.5;
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        cmd_generate(&cfg, dir.path(), 1),
        Err(Error::TooShort { frames: 6, required: 9, shift: 1 })
    ));
}

#[test]
fn compare_smoke_and_independent_statistics() {
    let cfg = small(Case::Ks1d);
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_compare(&cfg, dir.path(), 1).unwrap();
    let s = &report.summary;
    assert_eq!(s.losses.len(), 2);
    for l in &s.losses {
        assert_eq!((l.runs, l.diverged), (1, 0));
        let f = l.final_ssp.as_ref().unwrap();
        assert!(f.mean.is_finite() && f.mean > 0.0 && f.std == 0.0);
        assert!(l.final_mse.as_ref().unwrap().mean.is_finite());
    }
    let fp: Vec<&String> = report.records.iter().map(|r| &r.split_fingerprint).collect();
    assert_eq!(fp[0], fp[1]);

    // summary read back from disk matches the JSON written by compare
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(written, serde_json::to_value(s).unwrap());
    let again = cmd_stats(&[dir.path().join("runs")], Some(cfg.tail()), cfg.train.threshold_ssp, cfg.train.threshold_mse).unwrap();
    assert_eq!(&again, s);

    // recompute the final MSE directly from the CSV text
    for l in &s.losses {
        let csv = std::fs::read_to_string(dir.path().join("runs").join(l.loss.name()).join("run_00/run.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,train_loss,val_ssp,val_mse"));
        let mse: Vec<f64> = lines.map(|r| r.split(',').nth(3).unwrap().parse().unwrap()).collect();
        let tail = cfg.tail();
        let best = mse[mse.len() - tail..].iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(l.final_mse.as_ref().unwrap().mean, best);
    }
    assert!(std::fs::read_to_string(dir.path().join("summary.csv")).unwrap().starts_with("loss,runs,diverged,metric"));
}

#[test]
fn duplicate_groups_give_identical_statistics() {
    let mut cfg = small(Case::Ks1d);
    cfg.train.losses = vec![LossKind::Mae];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = cmd_compare(&cfg, a.path(), 1).unwrap();
    let rb = cmd_compare(&cfg, b.path(), 1).unwrap();
    assert_eq!(ra.summary, rb.summary);
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn stats_rejects_empty_input_and_excludes_divergence() {
    let empty = tempfile::tempdir().unwrap();
    assert!(cmd_stats(&[empty.path().to_path_buf()], None, 0.01, 0.01).is_err());

    let curve = |loss, ssp: &[f64], diverged| RunCurves {
        loss,
        split_id: 0,
        seed: 0,
        epochs: 10,
        split_fingerprint: String::new(),
        val_ssp: ssp.to_vec(),
        val_mse: ssp.to_vec(),
        diverged,
    };
    let one = summarize_runs(&[curve(LossKind::Ssp, &[0.3, 0.2, 0.1], None)], 2, 0.15, 0.15).unwrap();
    let box_ = one.losses[0].final_ssp.as_ref().unwrap();
    assert_eq!((box_.q1, box_.median, box_.q3, box_.iqr), (0.1, 0.1, 0.1, 0.0));
    assert_eq!(one.losses[0].to_threshold[0].epochs.as_ref().unwrap().median, 3.0);

    let two = summarize_runs(
        &[curve(LossKind::Ssp, &[0.3, 0.2, 0.1], None), curve(LossKind::Ssp, &[f64::NAN], Some(1))],
        2,
        0.15,
        0.15,
    )
    .unwrap();
    assert_eq!((two.losses[0].runs, two.losses[0].diverged), (2, 1));
    assert_eq!(two.losses[0].final_ssp, one.losses[0].final_ssp);
}

#[test]
fn hyperplane_from_a_trained_checkpoint() {
    let cfg = small(Case::Ks1d);
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_compare(&cfg, dir.path(), 1).unwrap();
    let grid = cmd_hyperplane(&cfg, dir.path(), None, 1).unwrap();
    assert_eq!(grid.ssp.len(), 25);
    assert!(grid.ssp.iter().all(|v| (0.0..=1.0).contains(v)));
    let mse_run = report.records.iter().find(|r| r.spec.loss == LossKind::Mse).unwrap();
    let head = &mse_run.params.get("head.weight").unwrap().data;
    // checkpoints store f32
    assert_eq!(grid.center, [head[0] as f32 as f64, head[1] as f32 as f64]);
    let csv = std::fs::read_to_string(dir.path().join("hyperplane.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
    assert!(dir.path().join("hyperplane.json").is_file());
    let mut bad = cfg.clone();
    bad.hyperplane.weights = [0, 99];
    assert!(matches!(cmd_hyperplane(&bad, dir.path(), None, 1), Err(Error::Config { .. })));
}

fn planted() -> (Network, ssp::model::Params, Vec<f64>, Field) {
    let net = Network::new(&ModelConfig {
        base_filters: 4,
        ..ModelConfig::desk(1, 32)
    })
    .unwrap();
    let params = net.init(5);
    let mut rng = substream(5, "planted", 0);
    use rand::Rng;
    let input: Vec<f64> = (0..net.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = net.predict(&params, &input, 1).unwrap();
    (net, params, input, Field::line(y, 32.0).unwrap())
}

#[test]
fn single_point_grid_reproduces_the_sample_losses() {
    let (net, params, input, _) = planted();
    let target = Field::sample_line(32, 32.0, |x| (0.4 * x).sin()).unwrap();
    let g = loss_hyperplane(&net, &params, &input, &target, [1, 2], 0.3, 1).unwrap();
    let pred = Field::line(net.predict(&params, &input, 1).unwrap(), 32.0).unwrap();
    assert_eq!(g.ssp, vec![metrics::ssp_value(&pred, &target).unwrap()]);
    assert_eq!(g.mse, vec![metrics::mse(&pred, &target).unwrap().value]);
    assert_eq!(g.mae, vec![metrics::mae(&pred, &target).unwrap().value]);
}

#[test]
fn planted_optimum_gives_equally_spaced_mae_isolines() {
    // the target is the model's own output, so the error is linear in the
    // weight offsets and MAE grows proportionally along every ray
    let (net, params, input, target) = planted();
    let g = loss_hyperplane(&net, &params, &input, &target, [0, 3], 0.4, 9).unwrap();
    let c = 4;
    let (_, mse0, mae0) = g.at(c, c);
    assert!(mae0 < 1e-12 && mse0 < 1e-24);
    for (di, dj) in [(1, 0), (0, 1), (1, 1), (1, -1), (-1, 0), (-1, -1)] {
        let at = |s: i64| g.at((c as i64 + s * di) as usize, (c as i64 + s * dj) as usize);
        let (_, m1, a1) = at(1);
        for s in 2..=4 {
            let (_, ms, as_) = at(s);
            assert!((as_ - s as f64 * a1).abs() <= 1e-9 * as_, "MAE along ({di},{dj}) step {s}");
            assert!((ms - (s * s) as f64 * m1).abs() <= 1e-9 * ms, "MSE along ({di},{dj}) step {s}");
        }
    }
    assert!(g.ssp.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn probe_records_every_update_in_the_horizon() {
    let cfg = small(Case::Waves);
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_probe(&cfg, dir.path(), 1).unwrap();
    assert_eq!(report.signatures.len(), 3);
    for (sig, rec) in report.signatures.iter().zip(&report.records) {
        let trace = rec.probe.as_ref().unwrap();
        assert_eq!(sig.updates, cfg.probe.epochs * trace.updates_per_epoch);
        assert_eq!(trace.integrals.len(), sig.updates + 1);
        let csv = std::fs::read_to_string(dir.path().join("probe").join(sig.loss.name()).join("probe.csv")).unwrap();
        assert_eq!(csv.lines().count(), sig.updates + 2);
        let stored = read_record(&dir.path().join("probe").join(sig.loss.name())).unwrap();
        assert_eq!(stored.curve(ValidationMetric::Ssp).len(), cfg.probe.epochs);
    }
    assert!(dir.path().join("probe/summary.json").is_file());
}

proptest! {
    #[test]
    fn summary_is_ordered_and_permutation_invariant(mut v in prop::collection::vec(-1e3..1e3_f64, 1..40), rot in 0usize..40) {
        let s = summarize(&v).unwrap();
        prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        prop_assert!(s.std >= 0.0);
        prop_assert_eq!(s.iqr, s.q3 - s.q1);
        let k = rot % v.len();
        v.rotate_left(k);
        prop_assert_eq!(summarize(&v).unwrap(), s);
    }

    #[test]
    fn quantile_hits_order_statistics(v in prop::collection::vec(-1e3..1e3_f64, 2..30)) {
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        for (i, &x) in s.iter().enumerate() {
            let q = quantile(&s, i as f64 / (n - 1) as f64);
            prop_assert!((q - x).abs() <= 1e-12 * (s[n - 1] - s[0]).max(1.0));
        }
    }
}
