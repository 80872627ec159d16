use std::path::{Path, PathBuf};

use absgrad::adapters::adapter_fingerprint;
use absgrad::cache::{cache_key, effective_seed, image_digest};
use absgrad::config::AdapterConfig;
use absgrad::core::attribution::{reversed_variant, run_method, MethodConfig, MethodId, ReversalParams};
use absgrad::core::metrics::MetricId;
use absgrad::core::modify::Baseline;
use absgrad::core::SaliencyMap;
use absgrad::dataset::{Dataset, DatasetManifest, Preprocess};
use absgrad::fixture::write_blob_dataset;
use absgrad::format::round_trip;
use absgrad::harness::Context;
use absgrad::render::Colormap;
use absgrad::report::MetricReport;
use absgrad::RunConfig;
use tempfile::TempDir;

fn cheap_methods() -> Vec<MethodConfig> {
    vec![
        MethodConfig::new(MethodId::Vg),
        MethodConfig::new(MethodId::Ag),
        MethodConfig::new(MethodId::Gag).with_p(45.0),
    ]
}

fn setup(count: usize, methods: Vec<MethodConfig>) -> (TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    write_blob_dataset(dir.path(), count, 3).unwrap();
    let mut config = RunConfig::new(PathBuf::from("manifest.json"), AdapterConfig::tiny_cnn(), methods);
    config.base_dir = dir.path().to_path_buf();
    (dir, config)
}

fn edit_manifest(dir: &Path, f: impl FnOnce(&mut DatasetManifest)) {
    let path = dir.join("manifest.json");
    let mut manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    f(&mut manifest);
    manifest.save(&path).unwrap();
}

#[test]
fn second_explain_reuses_everything() {
    let (_dir, config) = setup(3, cheap_methods());
    let first = absgrad::run_explain(&config).unwrap();
    assert_eq!((first.computed, first.reused, first.failed), (9, 0, 0));
    let second = absgrad::run_explain(&config).unwrap();
    assert_eq!((second.computed, second.reused, second.failed), (0, 9, 0));
}

#[test]
fn changing_a_parameter_recomputes_only_that_method() {
    let (_dir, mut config) = setup(2, cheap_methods());
    absgrad::run_explain(&config).unwrap();
    config.methods[2] = MethodConfig::new(MethodId::Gag).with_p(60.0);
    let s = absgrad::run_explain(&config).unwrap();
    assert_eq!((s.computed, s.reused), (2, 4));
    config.seed = 7;
    let s = absgrad::run_explain(&config).unwrap();
    assert_eq!(s.computed, 6);
}

#[test]
fn unknown_method_is_rejected() {
    let text = r#"
dataset = "manifest.json"
[adapter]
id = "tiny-cnn"
[[methods]]
id = "gradcam"
"#;
    assert!(RunConfig::from_toml(text).is_err());
}

#[test]
fn manifests_load_in_order() {
    let empty = Dataset::new(
        PathBuf::new(),
        DatasetManifest {
            preprocess: Preprocess::default(),
            entries: vec![],
        },
    )
    .unwrap();
    assert!(empty.is_empty());
    assert_eq!(empty.iter().count(), 0);

    let dir = tempfile::tempdir().unwrap();
    let path = write_blob_dataset(dir.path(), 2, 3).unwrap();
    let ds = Dataset::open(&path).unwrap();
    let ids: Vec<String> = ds.iter().map(|s| s.unwrap().id).collect();
    assert_eq!(ids, ["blob000", "blob001"]);
}

#[test]
fn maskless_entries_skip_mask_metrics() {
    let (dir, config) = setup(2, vec![MethodConfig::new(MethodId::Vg)]);
    edit_manifest(dir.path(), |m| m.entries[1].mask = None);
    absgrad::run_explain(&config).unwrap();
    let report = absgrad::run_evaluate(&config).unwrap();
    assert!(report.failures.is_empty());
    for metric in [MetricId::Mae, MetricId::Lcdice] {
        assert!(report.value("blob000", "vg", metric).is_some());
        assert!(report.value("blob001", "vg", metric).is_none());
    }
    assert!(report.value("blob001", "vg", MetricId::Rcap).is_some());
    assert_eq!(report.summary("vg").unwrap().counts[&MetricId::Mae], 1);
}

#[test]
fn constant_model_single_image_rcap() {
    let (_dir, mut config) = setup(1, vec![MethodConfig::new(MethodId::Ag)]);
    config.adapter = AdapterConfig {
        id: "constant".into(),
        weights: None,
        probs: Some(vec![0.7, 0.3]),
    };
    config.metrics.ids = vec![MetricId::Rcap];
    config.metrics.lower_bound = 50.0;
    config.metrics.interval = 25.0;
    // A constant model has no gradient, so the map is seeded by hand.
    let ctx = Context::open(&config).unwrap();
    let sample = ctx.dataset.load(0).unwrap();
    let side = sample.image.height();
    let values: Vec<f64> = [1.0, 0.8, 0.2, 0.0].into_iter().cycle().take(side * side).collect();
    let map = SaliencyMap::from_normalized(side, side, values).unwrap();
    let key = cache_key(
        &sample.id,
        &image_digest(&sample.image),
        &config.methods[0],
        &adapter_fingerprint(&config).unwrap(),
        config.seed,
    );
    ctx.cache.put(&key, &map).unwrap();
    let report = absgrad::run_evaluate(&config).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].values.len(), 1);
    // Top half holds 1.8 of every 2.0 of mass, top three quarters all of it.
    let conf = [0.7, 0.3][sample.class];
    let rcap = report.rows[0].values[&MetricId::Rcap];
    assert!((rcap - conf * (0.9 + 1.0) / 2.0).abs() < 1e-9, "{rcap}");
}

#[test]
fn means_are_plain_averages() {
    let (_dir, mut config) = setup(3, cheap_methods());
    config.metrics.baseline = Baseline::Constant(0.2);
    absgrad::run_explain(&config).unwrap();
    let report = absgrad::run_evaluate(&config).unwrap();
    assert_eq!(report.rows.len(), 9);
    for s in &report.methods {
        for (&metric, &mean) in &s.means {
            let vals: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.method == s.method)
                .filter_map(|r| r.values.get(&metric).copied())
                .collect();
            let hand = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - hand).abs() < 1e-12, "{} {metric:?}", s.method);
        }
    }
}

#[test]
fn one_heatmap_per_image_and_method() {
    let (dir, config) = setup(2, cheap_methods());
    absgrad::run_explain(&config).unwrap();
    let ctx = Context::open(&config).unwrap();
    let out = dir.path().join("heat");
    let pngs = ctx.heatmaps(&out, Colormap::Heat).unwrap();
    assert_eq!(pngs.len(), 6);
    assert!(pngs.iter().all(|p| p.exists() && p.extension().unwrap() == "png"));
    assert!(out.join("blob001").join("gag.png").exists());
}

#[test]
fn empty_report_is_header_only() {
    let report = MetricReport::build(&MetricId::ALL, &[], vec![], vec![], vec![]);
    let csv = report.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("image,method"));
}

#[test]
fn cached_maps_match_fresh_computation() {
    let (_dir, mut config) = setup(2, vec![MethodConfig::new(MethodId::Sg)]);
    config.seed = 11;
    absgrad::run_explain(&config).unwrap();
    let ctx = Context::open(&config).unwrap();
    for sample in ctx.dataset.iter() {
        let sample = sample.unwrap();
        let m = &config.methods[0];
        let seeded = m.clone().with_seed(effective_seed(11, &sample.id, m.modifier.seed));
        let fresh = round_trip(&run_method(ctx.model.as_ref(), &sample.image, sample.class, &seeded).unwrap());
        assert_eq!(ctx.cached(&sample, m).unwrap().unwrap(), fresh);
    }
}

#[test]
fn missing_cache_entries_are_listed() {
    let (_dir, config) = setup(2, cheap_methods());
    let report = absgrad::run_evaluate(&config).unwrap();
    assert!(report.rows.is_empty());
    assert_eq!(report.missing.len(), 6);
    assert!(report.missing.iter().any(|i| i.image == "blob001" && i.method == "ag"));
}

#[test]
fn missing_image_is_a_per_entry_error() {
    let (dir, config) = setup(2, vec![MethodConfig::new(MethodId::Vg)]);
    std::fs::remove_file(dir.path().join("images/blob000.png")).unwrap();
    let s = absgrad::run_explain(&config).unwrap();
    assert_eq!((s.computed, s.failed), (1, 1));
    assert_eq!(s.failures[0].image, "blob000");
    let report = absgrad::run_evaluate(&config).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert!(report.failures.iter().any(|i| i.image == "blob000"));
}

#[test]
fn reversed_entries_derive_from_the_cached_base() {
    let (_dir, config) = setup(2, vec![MethodConfig::new(MethodId::Gag)]);
    absgrad::run_explain(&config).unwrap();
    let params = ReversalParams::new(20.0, 30.0).unwrap();
    let (summary, reversed) = absgrad::run_reverse(&config, params).unwrap();
    assert_eq!((summary.computed, summary.failed), (2, 0));
    let ctx = Context::open(&config).unwrap();
    for sample in ctx.dataset.iter() {
        let sample = sample.unwrap();
        let base = ctx.cached(&sample, &config.methods[0]).unwrap().unwrap();
        let rev = ctx.cached(&sample, &reversed[0]).unwrap().unwrap();
        assert_eq!(rev, reversed_variant(&base, params).unwrap());
    }
}
