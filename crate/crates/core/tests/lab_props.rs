use persist_core::lab::{
    edge_freeze_report, figure1_data, figure2_data, rho_convergence_report, run_experiment, ExperimentConfig,
    FreezeMode, KeySource, PiStream, Table,
};
use persist_core::rng::stream;
use persist_core::silhouette::{harmonic, silhouette_mass};
use persist_core::{BinaryTree, Error, Graph};

fn column(t: &Table, name: &str) -> Vec<f64> {
    let c = t.column(name).unwrap();
    t.rows.iter().map(|r| r[c].as_f64().unwrap_or(f64::NAN)).collect()
}

#[test]
fn figure1_grid_mean_tracks_the_silhouette_mass() {
    let depth = 10;
    let ns = [50, 100, 200];
    let t = figure1_data(&ns, 12, depth).unwrap();
    let b = column(&t, "B_value");
    let mut rng = stream(12, 0);
    let mut x = BinaryTree::root_only();
    for (k, &n) in ns.iter().enumerate() {
        while x.len() < n {
            x.grow(&mut rng);
        }
        let block = &b[k << depth..(k + 1) << depth];
        let mean = block.iter().sum::<f64>() / block.len() as f64;
        // B is constant on a depth-d cylinder unless the cylinder's word is in
        // x; there both the grid value and the average lie in [d + 1, height + 1].
        let deep = x.depth_profile().get(depth).copied().unwrap_or(0) as f64;
        let bound = deep * x.height().saturating_sub(depth) as f64 * 0.5f64.powi(depth as i32);
        assert!((mean - silhouette_mass(&x)).abs() <= bound + 1e-12, "n = {n}");
    }
}

#[test]
fn figure2_endpoints() {
    let f = figure2_data(&[500, 1000], KeySource::Pi(PiStream::Right), 8).unwrap();
    let (beta, y, ns) = (column(&f.table, "beta"), column(&f.table, "Y_value"), column(&f.table, "n"));
    let keys = &f.keys;
    for k in 0..beta.len() {
        if beta[k] == 0.0 {
            assert_eq!(y[k], 0.0);
        }
        if beta[k] == 1.0 {
            let n = ns[k] as usize;
            let x = persist_core::LabeledTree::from_keys(&keys[..n]).unwrap();
            let target = silhouette_mass(x.shape()) - harmonic(n as u64);
            assert!((y[k] - target).abs() <= 1e-9);
        }
    }
}

#[test]
fn edge_freeze_tails() {
    const SEEDS: u64 = 10_000;
    let t = edge_freeze_report(3, 1000, SEEDS, 0xF2EE, FreezeMode::Window).unwrap();
    let (i, j, term) = (column(&t, "i"), column(&t, "j"), column(&t, "terminal"));
    let never_12 = (0..t.rows.len()).filter(|&r| i[r] == 1.0 && j[r] == 2.0 && term[r] == 0.0).count();
    let p = 1.0 / 1000.0;
    let freq = never_12 as f64 / SEEDS as f64;
    assert!((freq - p).abs() <= 3.0 * (p * (1.0 - p) / SEEDS as f64).sqrt(), "{freq}");
    let stream_col = column(&t, "stream");
    let mut all_in = vec![true; SEEDS as usize];
    for r in 0..t.rows.len() {
        if term[r] == 0.0 {
            all_in[stream_col[r] as usize] = false;
        }
    }
    assert!(all_in.iter().filter(|&&b| b).count() as f64 >= 0.99 * SEEDS as f64);
}

#[test]
fn edge_freeze_modes_agree_in_law() {
    const SEEDS: u64 = 3000;
    for mode in [FreezeMode::Window, FreezeMode::FullChain] {
        let t = edge_freeze_report(3, 30, SEEDS, 5, mode).unwrap();
        let (i, j, time) = (column(&t, "i"), column(&t, "j"), column(&t, "entry_time"));
        for (a, b) in [(1.0, 2.0), (1.0, 3.0), (2.0, 3.0)] {
            // the pair {a, b} enters at its first chance b with probability 1/b
            let hits = (0..t.rows.len()).filter(|&r| i[r] == a && j[r] == b && time[r] == b).count();
            let p = 1.0 / b;
            let freq = hits as f64 / SEEDS as f64;
            assert!((freq - p).abs() <= 4.0 * (p * (1.0 - p) / SEEDS as f64).sqrt(), "{mode:?} ({a},{b}): {freq}");
            assert!((0..t.rows.len()).all(|r| i[r] != a || j[r] != b || time[r].is_nan() || time[r] >= b));
        }
    }
    assert_eq!(
        edge_freeze_report(4, 100, 50, 8, FreezeMode::FullChain).unwrap(),
        edge_freeze_report(4, 100, 50, 8, FreezeMode::FullChain).unwrap()
    );
}

#[test]
fn rho_report_limits() {
    let patterns = vec![("K1".to_string(), Graph::point()), ("K3".to_string(), Graph::complete(3))];
    let t = rho_convergence_report(0.5, &patterns, &[20, 100], 200, 3, true).unwrap();
    assert_eq!(t, rho_convergence_report(0.5, &patterns, &[20, 100], 200, 3, false).unwrap());
    for row in &t.rows {
        let (mean, se, limit) = (row[2].as_f64().unwrap(), row[3].as_f64().unwrap(), row[4].as_f64().unwrap());
        if row[0] == "K1".into() {
            assert_eq!((mean, se, limit), (1.0, 0.0, 1.0));
        } else if row[1].as_f64() == Some(100.0) {
            assert!((limit - 0.125).abs() < 1e-15);
            assert!((mean - limit).abs() <= 3.0 * se, "{mean} +- {se}");
        }
    }
}

#[test]
fn csv_floats_round_trip() {
    let t = figure2_data(&[300], KeySource::Seed(4), 6).unwrap().table;
    let csv = t.to_csv();
    for (line, row) in csv.lines().skip(1).zip(&t.rows) {
        let parsed: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let original: Vec<f64> = row.iter().map(|c| c.as_f64().unwrap()).collect();
        assert_eq!(parsed, original);
    }
}

#[test]
fn experiment_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let minimal = ExperimentConfig::parse("chain=bst\nhorizon=10\n").unwrap();
    let m = run_experiment(&minimal, &dir.path().join("min")).unwrap();
    assert_eq!(m.files, vec!["summary.csv"]);
    assert!(dir.path().join("min/manifest.json").exists());
    assert!(m.json["oracles"]["summary.csv:expected"].is_string());

    let text = "chain=er-relabel\ntheta=0.4\nhorizon=30\nreplicates=4\nseed=9\noutputs=trajectory,summary,rho\ncheckpoints=10,30\n";
    let par = ExperimentConfig::parse(text).unwrap();
    let ser = ExperimentConfig::parse(&format!("{text}parallel=false\n")).unwrap();
    run_experiment(&par, &dir.path().join("a")).unwrap();
    run_experiment(&par, &dir.path().join("b")).unwrap();
    let files = run_experiment(&ser, &dir.path().join("c")).unwrap().files;
    assert_eq!(files.len(), 3);
    for f in &files {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, std::fs::read(dir.path().join("c").join(f)).unwrap(), "{f}");
    }

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    assert!(matches!(run_experiment(&minimal, &blocker.join("sub")), Err(Error::Io(_))));
}
