use super::*;
use crate::datagen::procedural::procedural_base;
use crate::datagen::{build_training_record, synthesize_views, DistortionKind, DistortionSpec, ViewJitter};
use crate::metrics::SsimParams;
use crate::model::ModelConfig;
use crate::pfm::read_pfm;

fn small_model(seed: u64) -> CrossRefModel<f32> {
    let cfg = ModelConfig {
        patch_size: 4,
        embed_dim: 8,
        encoder_depth: 1,
        decoder_layers: 1,
        attention_heads: 2,
        mlp_hidden: 16,
        max_grid: 4,
        n_ref: 2,
        ..ModelConfig::default()
    };
    CrossRefModel::new(cfg, seed).unwrap()
}

fn scene(seed: u64, n_records: usize) -> LoadedScene {
    let jitter = ViewJitter {
        view_size: Some(20),
        ..ViewJitter::default()
    };
    let s = synthesize_views(&procedural_base(seed, 256, 3), 4, seed, &jitter, &format!("s{seed}")).unwrap();
    let recs: Vec<_> = (0..n_records)
        .map(|i| {
            let spec = DistortionSpec::new(DistortionKind::ALL[i % 6], 0.2 + 0.15 * i as f64, i as u64);
            build_training_record(&s, i % 4, &spec, &SsimParams::default()).unwrap()
        })
        .collect();
    LoadedScene::from_records(&s, &recs)
}

struct Oracle;
impl ScoreModel for Oracle {
    fn n_ref(&self) -> usize {
        2
    }
    fn crop_policy(&self) -> (usize, Option<usize>) {
        (4, Some(16))
    }
    fn predict(&self, item: &EvalItem<'_>) -> Result<ScoreMap> {
        Ok(item.target.clone())
    }
}

struct Constant;
impl ScoreModel for Constant {
    fn n_ref(&self) -> usize {
        2
    }
    fn crop_policy(&self) -> (usize, Option<usize>) {
        (4, Some(16))
    }
    fn predict(&self, item: &EvalItem<'_>) -> Result<ScoreMap> {
        Ok(ScoreMap::filled(item.query.height(), item.query.width(), 0.5))
    }
}

#[test]
fn oracle_gives_unit_correlation() {
    let scenes = vec![scene(1, 4), scene(2, 4), scene(3, 4)];
    let e = evaluate_scenes(&Oracle, &scenes, serde_json::Value::Null, "oracle", 1).unwrap();
    assert!((e.report.pearson_cross_vs_ssim - 1.0).abs() < 1e-12);
    assert!((e.report.spearman_rank_corr - 1.0).abs() < 1e-12);
    for s in &e.report.scenes {
        assert!((s.pearson - 1.0).abs() < 1e-12);
        let m = s.per_image.iter().map(|r| r.ssim).sum::<f64>() / s.per_image.len() as f64;
        assert!((s.mean_ssim - m).abs() < 1e-9);
        assert_eq!(s.mean_ssim, s.mean_cross);
    }
    assert_eq!(e.maps.len(), 12);
    assert_eq!((e.maps[0].1.height(), e.maps[0].1.width()), (16, 16));
}

#[test]
fn constant_model_takes_nan_path() {
    let scenes = vec![scene(1, 3), scene(2, 3)];
    let e = evaluate_scenes(&Constant, &scenes, serde_json::Value::Null, "c", 1).unwrap();
    assert!(e.report.scenes.iter().all(|s| s.pearson.is_nan()));
    assert_eq!(e.report.excluded_scenes, vec!["s1".to_string(), "s2".to_string()]);
    assert!(e.report.pearson_cross_vs_ssim.is_nan());
}

#[test]
fn ranking_fixtures() {
    let ids: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
    let a = [0.9, 0.5, 0.7, 0.1, 0.3];
    let t = rank_scores(&ids, &a, &a).unwrap();
    assert_eq!(t.spearman, 1.0);
    assert_eq!(t.rows[0].ssim_rank, 0);
    assert_eq!(t.rows[3].ssim_rank, 4);
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    assert_eq!(rank_scores(&ids, &a, &neg).unwrap().spearman, -1.0);
    assert!(rank_scores(&ids[..2], &a[..2], &a[..2]).is_err());

    // one tie per vector: ranks (1.5,1.5,3,4) vs (1,2.5,2.5,4)
    let ids4: Vec<String> = ids[..4].to_vec();
    let t = rank_scores(&ids4, &[4.0, 4.0, 2.0, 1.0], &[4.0, 3.0, 3.0, 1.0]).unwrap();
    let rx = [1.5, 1.5, 3.0, 4.0];
    let ry = [1.0, 2.5, 2.5, 4.0];
    let m = 2.5;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let vx: f64 = rx.iter().map(|a| (a - m) * (a - m)).sum();
    let vy: f64 = ry.iter().map(|b| (b - m) * (b - m)).sum();
    assert!((t.spearman - cov / (vx * vy).sqrt()).abs() < 1e-12);
    assert_eq!(dense_ranks(&[4.0, 4.0, 2.0, 1.0]), vec![0, 0, 1, 2]);
}

#[test]
fn comparisons() {
    let scenes = vec![scene(1, 3)];
    let m = small_model(1);
    let t = compare_models(("m", &m), ("m", &m), &scenes, 1).unwrap();
    assert!(t.rows.iter().all(|r| r.a == r.b || (r.a.is_nan() && r.b.is_nan())));
    assert_eq!(t.overall(), Some(Winner::Tie));

    let t = compare_models(("const", &Constant), ("oracle", &Oracle), &scenes, 1).unwrap();
    assert_eq!(t.rows[1].winner, Winner::B);

    let t = ComparisonTable::from_columns("A", "B", &[("x", 1.0, 2.0, true), ("err", 1.0, 2.0, false)]);
    assert_eq!(t.rows[0].winner, Winner::B);
    assert_eq!(t.rows[1].winner, Winner::A);
    assert_eq!(t.overall(), None);
}

#[test]
fn score_image_policy_and_determinism() {
    let m = small_model(2);
    let s = scene(4, 1);
    let q = &s.records[0].query;
    let a = score_image(&m, q, &s.views[1..3]).unwrap();
    assert_eq!(a, score_image(&m, q, &s.views[1..3]).unwrap());
    assert_eq!((a.crop.height, a.crop.width), (16, 16));
    assert_eq!((a.crop.top, a.crop.left), (2, 2));
    // extra references are trimmed
    assert_eq!(a, score_image(&m, q, &s.views[1..4]).unwrap());
    let err = score_image(&m, q, &s.views[1..2]).unwrap_err().to_string();
    assert!(err.contains("trimmed"), "{err}");
}

#[test]
fn zeroed_references_are_scene_agnostic() {
    let m = small_model(3);
    let (a, b) = (scene(5, 1), scene(6, 1));
    let q = &a.records[0].query;
    let x = ablate_references(&m, q, &a.views[1..3]).unwrap();
    let y = ablate_references(&m, q, &b.views[1..3]).unwrap();
    assert!(x.map_off.l1_distance(&y.map_off).unwrap() <= 1e-6);
    for map in [&x.map_on, &x.map_off] {
        assert!(map.data().iter().all(|v| *v > 0.0 && *v < 1.0));
    }
    assert!((x.l1_delta - x.map_on.l1_distance(&x.map_off).unwrap()).abs() < 1e-12);
}

#[test]
fn attention_export_conserves_mass_and_permutes() {
    let m = small_model(4);
    let s = scene(7, 1);
    let q = &s.records[0].query;
    let tmp = tempfile::tempdir().unwrap();
    let refs = vec![s.views[1].clone(), s.views[2].clone()];
    let idx = export_attention(&m, "s7/r000", q, &refs, (1, 2), None, None, tmp.path().join("a")).unwrap();
    let dir = tmp.path().join("a/attention/s7_r000");
    let mut total = 0.0;
    let mut first = Vec::new();
    for e in &idx.entries {
        let map = read_pfm(dir.join(&e.file)).unwrap();
        total += map.data().iter().map(|v| *v as f64).sum::<f64>();
        first.push(map);
    }
    assert!((total - 1.0).abs() <= 1e-6, "{total}");
    assert!(dir.join("index.json").is_file());

    let swapped = vec![refs[1].clone(), refs[0].clone()];
    export_attention(&m, "p", q, &swapped, (1, 2), None, None, tmp.path().join("b")).unwrap();
    let dir = tmp.path().join("b/attention/p");
    let b0 = read_pfm(dir.join("0.pfm")).unwrap();
    let b1 = read_pfm(dir.join("1.pfm")).unwrap();
    assert!(b0.l1_distance(&first[1]).unwrap() < 1e-6);
    assert!(b1.l1_distance(&first[0]).unwrap() < 1e-6);

    assert!(export_attention(&m, "x", q, &refs, (4, 0), None, None, tmp.path()).is_err());
}

#[test]
fn report_files_round_trip() {
    let scenes = vec![scene(1, 3), scene(2, 2)];
    let e = evaluate_scenes(&Constant, &scenes, serde_json::json!({"k": 1}), "c", 1).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let files = render_report(&e.report, tmp.path(), &e.maps).unwrap();
    let back: EvalReport = serde_json::from_str(&fs::read_to_string(&files.json).unwrap()).unwrap();
    // NaN != NaN, so compare the re-serialised text
    assert_eq!(
        serde_json::to_string(&back).unwrap(),
        serde_json::to_string(&e.report).unwrap()
    );
    let rows = csv::Reader::from_path(&files.csv).unwrap().records().count();
    assert_eq!(rows, 5 + 2);
    assert_eq!(files.overlays.len(), 5);
}

#[test]
fn infinite_psnr_survives_json() {
    let r = ImageRow {
        image_id: "x".into(),
        ssim: 1.0,
        cross: 0.5,
        psnr: f64::INFINITY,
    };
    let text = serde_json::to_string(&r).unwrap();
    assert!(text.contains("\"inf\""));
    assert_eq!(serde_json::from_str::<ImageRow>(&text).unwrap(), r);
}

#[test]
fn colormap_ends() {
    assert_eq!(colormap(1.0), [255, 0, 0]);
    assert_eq!(colormap(0.0), [0, 0, 255]);
    assert_eq!(colormap(2.0 / 3.0), [255, 165, 0]);
    let g = colormap(1.0 / 3.0);
    assert!(g[1] > g[0] && g[1] > g[2]);
}
