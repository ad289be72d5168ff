//! Acceptance suite. Each criterion runs in sequence and prints one
//! PASS/FAIL line; the process exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use criqa_core::datagen::procedural::procedural_base;
use criqa_core::datagen::{
    build_training_record, generate_dataset, synthesize_views, DatagenConfig, DistortionKind,
    DistortionSpec, LoadedManifest, Scene, TrainingRecord, ViewJitter,
};
use criqa_core::eval::{
    ablate_references, checkpoint_id, evaluate_scenes, prediction_mae, rank_scores,
    render_report, ComparisonTable, Winner,
};
use criqa_core::image::ImageGrid;
use criqa_core::metrics::{mean_score, pearson, spearman, ssim_map, SsimParams};
use criqa_core::model::{load_checkpoint, CrossRefModel, ModelConfig};
use criqa_core::seed::rng;
use criqa_core::train::{
    load_scenes, read_loss_log, train, LoadedScene, TrainConfig, TrainData, TrainOptions, FINAL,
    LOSS_LOG,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_image(r: &mut impl Rng, h: usize, w: usize, c: usize) -> ImageGrid {
    ImageGrid::new(h, w, c, (0..h * w * c).map(|_| r.random::<f32>()).collect()).unwrap()
}

// ---------------------------------------------------------------- SSIM oracle

/// Direct per-pixel evaluation of the windowed SSIM statistics with a full
/// 2-D Gaussian window and mirror (reflect-101) borders.
fn brute_ssim(a: &ImageGrid, b: &ImageGrid) -> Vec<f64> {
    let (h, w, c) = a.dims();
    let half = 5isize;
    let g: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * 1.5 * 1.5)).exp())
        .collect();
    let gs: f64 = g.iter().sum();
    let mirror = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i } else { 2 * (n - 1) - i };
        }
        i as usize
    };
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut total = 0.0;
            for ch in 0..c {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -half..=half {
                    for dx in -half..=half {
                        let wgt = g[(dy + half) as usize] * g[(dx + half) as usize] / (gs * gs);
                        let yy = mirror(y as isize + dy, h);
                        let xx = mirror(x as isize + dx, w);
                        let va = a.get(yy, xx, ch) as f64;
                        let vb = b.get(yy, xx, ch) as f64;
                        ma += wgt * va;
                        mb += wgt * vb;
                        saa += wgt * va * va;
                        sbb += wgt * vb * vb;
                        sab += wgt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            out[y * w + x] = total / c as f64;
        }
    }
    out
}

fn c1_ssim_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let c = if i % 2 == 0 { 1 } else { 3 };
        let a = random_image(&mut r, 16, 16, c);
        let b = random_image(&mut r, 16, 16, c);
        let got = ssim_map(&a, &b, &SsimParams::default()).map_err(|e| e.to_string())?;
        for (x, y) in got.data().iter().zip(brute_ssim(&a, &b)) {
            worst = worst.max((*x as f64 - y).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 60.0,
        format!("max |diff| {worst:.2e} over 100 pairs in {secs:.2}s"),
    )
}

fn c2_ssim_closed_forms() -> Outcome {
    let p = SsimParams::default();
    let img = procedural_base(3, 32, 3);
    let same = ssim_map(&img, &img, &p).map_err(|e| e.to_string())?;
    let id_err = same.data().iter().map(|v| (*v as f64 - 1.0).abs()).fold(0.0, f64::max);
    let ones = ImageGrid::filled(16, 16, 1, 1.0).unwrap();
    let zeros = ImageGrid::filled(16, 16, 1, 0.0).unwrap();
    let m = ssim_map(&ones, &zeros, &p).map_err(|e| e.to_string())?;
    let c1 = 1e-4f64;
    let want = c1 / (1.0 + c1);
    // the map is stored in f32, so compare against the f32 rounding of the closed form
    let err = m.data().iter().map(|v| (*v as f64 - (want as f32) as f64).abs()).fold(0.0, f64::max);
    check(
        id_err <= 1e-9 && err <= 1e-9 && ((want as f32) as f64 - want).abs() < 1e-9,
        format!("identity max err {id_err:.1e}; const 1 vs 0 = {:.6e} (closed form {want:.6e})", m.data()[0]),
    )
}

// --------------------------------------------------------- correlation fixtures

const SCENE_SSIM: [f64; 14] = [
    0.74, 0.66, 0.64, 0.64, 0.61, 0.61, 0.59, 0.58, 0.56, 0.55, 0.51, 0.50, 0.44, 0.40,
];
const SCENE_CROSS: [f64; 14] = [
    0.80, 0.78, 0.77, 0.78, 0.66, 0.61, 0.73, 0.75, 0.73, 0.72, 0.62, 0.58, 0.55, 0.53,
];
const SCENE_RANK_SSIM: [usize; 14] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13];
const SCENE_RANK_CROSS: [usize; 14] = [0, 2, 3, 1, 8, 10, 6, 4, 5, 7, 9, 11, 12, 13];

/// Every strict score inequality agrees with the reference ordinal ranks.
fn consistent(scores: &[f64], ranks: &[usize]) -> bool {
    (0..scores.len()).all(|i| {
        (0..scores.len()).all(|j| !(scores[i] > scores[j]) || ranks[i] < ranks[j])
    })
}

fn c3_correlation_fixtures() -> Outcome {
    let p = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    let s = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    let ids: Vec<String> = ["426", "34", "10", "135", "238", "284", "103", "441", "345", "311", "175", "244", "82", "4"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let table = rank_scores(&ids, &SCENE_SSIM, &SCENE_CROSS).map_err(|e| e.to_string())?;
    let dense_s: Vec<usize> = table.rows.iter().map(|r| r.ssim_rank).collect();
    let dense_c: Vec<usize> = table.rows.iter().map(|r| r.cross_rank).collect();
    let ordering = consistent(&SCENE_SSIM, &SCENE_RANK_SSIM)
        && consistent(&SCENE_CROSS, &SCENE_RANK_CROSS)
        && (0..14).all(|i| (0..14).all(|j| dense_s[i] >= dense_s[j] || SCENE_RANK_SSIM[i] < SCENE_RANK_SSIM[j]))
        && (0..14).all(|i| (0..14).all(|j| dense_c[i] >= dense_c[j] || SCENE_RANK_CROSS[i] < SCENE_RANK_CROSS[j]));

    let t2 = ComparisonTable::from_columns(
        "PixelNeRF",
        "IBRNet",
        &[("ssim", 0.26, 0.44, true), ("crossscore", 0.40, 0.71, true), ("psnr", 9.17, 18.51, true)],
    );
    let t2_ok = t2.rows.iter().all(|r| r.winner == Winner::B) && t2.overall() == Some(Winner::B);
    check(
        (p - 0.981981).abs() <= 1e-6
            && s == 0.8
            && (table.spearman - 0.85).abs() <= 0.01
            && ordering
            && t2_ok,
        format!(
            "pearson {p:.6}, spearman {s}, ranking spearman {:.4}, ordering consistent {ordering}, IBRNet above PixelNeRF on all metrics {t2_ok}",
            table.spearman
        ),
    )
}

// ------------------------------------------------------------------ model laws

fn refs_140(seed: u64, n: usize) -> Vec<ImageGrid> {
    (0..n).map(|i| procedural_base(seed + i as u64, 140, 3)).collect()
}

fn c4_shape_law() -> Outcome {
    let model = CrossRefModel::<f32>::new(ModelConfig::default(), 4).map_err(|e| e.to_string())?;
    let q = procedural_base(40, 140, 3);
    let refs = refs_140(41, 5);
    let t0 = Instant::now();
    let (map, _) = model.forward(&q, &refs, false).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let in_range = map.data().iter().all(|v| *v > 0.0 && *v < 1.0);
    check(
        (map.height(), map.width()) == (140, 140) && in_range && secs < 5.0,
        format!("{}x{} map, all in (0,1): {in_range}, {secs:.2}s", map.height(), map.width()),
    )
}

fn c5_permutation() -> Outcome {
    let model = CrossRefModel::<f32>::new(ModelConfig::default(), 5).map_err(|e| e.to_string())?;
    let q = procedural_base(50, 140, 3);
    let refs = refs_140(51, 5);
    let (base, _) = model.forward(&q, &refs, false).map_err(|e| e.to_string())?;
    let mut r = rng(55);
    let mut worst = 0.0f32;
    for _ in 0..20 {
        let mut perm = refs.clone();
        perm.shuffle(&mut r);
        let (m, _) = model.forward(&q, &perm, false).map_err(|e| e.to_string())?;
        for (a, b) in base.data().iter().zip(m.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-5, format!("max deviation over 20 permutations {worst:.2e}"))
}

fn c6_attention_conservation() -> Outcome {
    let model = CrossRefModel::<f32>::new(ModelConfig::default(), 6).map_err(|e| e.to_string())?;
    let q = procedural_base(60, 140, 3);
    let refs = refs_140(61, 5);
    let (_, rec) = model.forward(&q, &refs, true).map_err(|e| e.to_string())?;
    let rec = rec.ok_or("no attention captured")?;
    let mut worst = 0.0f64;
    let mut negative = false;
    let mut rows = 0;
    for layer in &rec.layers {
        for head in layer {
            for row in head.rows() {
                worst = worst.max((row.sum() - 1.0).abs());
                negative |= row.iter().any(|v| *v < 0.0);
                rows += 1;
            }
        }
    }
    check(
        worst <= 1e-6 && !negative && rows == 2 * 4 * 100,
        format!("{rows} rows (layers x heads x tokens), max |sum - 1| {worst:.2e}"),
    )
}

// -------------------------------------------------------------- gradient check

fn l1_and_grad(model: &CrossRefModel<f64>, q: &ImageGrid, refs: &[ImageGrid], target: &Array2<f64>) -> (f64, Array2<f64>) {
    let (pred, _) = model.forward_train(q, refs).unwrap();
    let n = pred.len() as f64;
    let loss = (&pred - target).mapv(f64::abs).sum() / n;
    let d = (&pred - target).mapv(|v| v.signum() / n);
    (loss, d)
}

fn c7_gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut model = CrossRefModel::<f64>::new(ModelConfig::tiny(), 7).map_err(|e| e.to_string())?;
    let mut r = rng(77);
    let q = random_image(&mut r, 8, 8, 3);
    let refs = vec![random_image(&mut r, 8, 8, 3), random_image(&mut r, 8, 8, 3)];
    let target = Array2::from_shape_fn((8, 8), |_| r.random::<f64>());

    let (pred, cache) = model.forward_train(&q, &refs).unwrap();
    let (_, dmap) = l1_and_grad(&model, &q, &refs, &target);
    let mut grads = model.params().zeros_like();
    model.backward(&cache, &dmap, &mut grads);
    drop(pred);

    // one scalar from every tensor, then random extra picks up to 64
    let sizes: Vec<usize> = model.params().values().iter().map(Vec::len).collect();
    let mut picks: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(t, n)| (t, r.random_range(0..*n))).collect();
    while picks.len() < 64 {
        let t = r.random_range(0..sizes.len());
        picks.push((t, r.random_range(0..sizes[t])));
    }
    let eps = 1e-4;
    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    for &(t, i) in &picks {
        let orig = model.params().values()[t][i];
        model.params_mut().values_mut()[t][i] = orig + eps;
        let up = l1_and_grad(&model, &q, &refs, &target).0;
        model.params_mut().values_mut()[t][i] = orig - eps;
        let down = l1_and_grad(&model, &q, &refs, &target).0;
        model.params_mut().values_mut()[t][i] = orig;
        let num = (up - down) / (2.0 * eps);
        let ana = grads.values()[t][i];
        let scale = num.abs().max(ana.abs());
        let rel = if scale < 1e-9 { (num - ana).abs() } else { (num - ana).abs() / scale };
        if rel > worst {
            worst = rel;
            worst_name = format!("{}[{i}]", model.params().names()[t]);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        worst <= 1e-3 && picks.len() >= 50 && secs < 120.0,
        format!("{} parameters, max relative error {worst:.2e} ({worst_name}), {secs:.1}s", picks.len()),
    )
}

// ----------------------------------------------------------- overfit and ablation

const OVERFIT_SEED: u64 = 0;

struct Overfit {
    scene: Scene,
    records: Vec<TrainingRecord>,
    model: CrossRefModel<f32>,
    elapsed: Duration,
}

fn overfit_scene(seed: u64) -> (Scene, Vec<TrainingRecord>) {
    let base = procedural_base(seed, 256, 3);
    let scene = synthesize_views(&base, 6, seed, &ViewJitter::default(), "overfit").unwrap();
    let kinds = [
        DistortionKind::GaussianBlur,
        DistortionKind::AdditiveNoise,
        DistortionKind::BlockArtifact,
        DistortionKind::ElasticWarp,
    ];
    let severities = [0.2, 0.45, 0.7, 0.95];
    let records = (0..4)
        .map(|i| {
            let spec = DistortionSpec::new(kinds[i], severities[i], i as u64);
            build_training_record(&scene, i, &spec, &SsimParams::default()).unwrap()
        })
        .collect();
    (scene, records)
}

fn run_overfit(dir: &Path) -> Result<Overfit, String> {
    let (scene, records) = overfit_scene(OVERFIT_SEED);
    let cfg = TrainConfig {
        seed: OVERFIT_SEED,
        total_steps: 1000,
        checkpoint_every: 1000,
        ..TrainConfig::default()
    };
    let data = TrainData::new(vec![LoadedScene::from_records(&scene, &records)], cfg.n_ref, cfg.crop_size)
        .map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let summary = train(&data, &cfg, dir, &TrainOptions { workers: 1, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let model = load_checkpoint(&summary.checkpoint).map_err(|e| e.to_string())?.model;
    Ok(Overfit {
        scene,
        records,
        model,
        elapsed,
    })
}

fn c8_overfit(o: &Overfit) -> Outcome {
    let scenes = vec![LoadedScene::from_records(&o.scene, &o.records)];
    let e = evaluate_scenes(&o.model, &scenes, serde_json::Value::Null, "overfit", 1).map_err(|e| e.to_string())?;
    let mae = prediction_mae(&e, &scenes, &o.model).map_err(|e| e.to_string())?;
    let r = e.report.scenes[0].pearson;
    let mins = o.elapsed.as_secs_f64() / 60.0;
    let means: Vec<String> = e.report.scenes[0]
        .per_image
        .iter()
        .map(|row| format!("{:.3}/{:.3}", row.cross, row.ssim))
        .collect();
    check(
        mae <= 0.10 && r >= 0.7 && mins <= 15.0,
        format!(
            "training-set MAE {mae:.4}, per-image Pearson {r:.3}, cross/ssim means [{}], {mins:.1} min",
            means.join(", ")
        ),
    )
}

fn c9_ablation(o: &Overfit) -> Outcome {
    let other = synthesize_views(&procedural_base(999, 256, 3), 6, 999, &ViewJitter::default(), "other")
        .map_err(|e| e.to_string())?;
    let rec = &o.records[0];
    let own: Vec<ImageGrid> = (0..6)
        .filter(|v| *v != rec.source_view_index)
        .map(|v| o.scene.views[v].clone())
        .collect();
    let foreign: Vec<ImageGrid> = other.views[1..6].to_vec();
    let a = ablate_references(&o.model, &rec.query, &own).map_err(|e| e.to_string())?;
    let b = ablate_references(&o.model, &rec.query, &foreign).map_err(|e| e.to_string())?;
    let off_diff = a.map_off.data().iter().zip(b.map_off.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
    check(
        off_diff <= 1e-6 && a.l1_delta > 0.0,
        format!(
            "zeroed-reference maps differ by at most {off_diff:.1e} across scenes; L1(on, off) = {:.4} (means {:.3} vs {:.3})",
            a.l1_delta, a.mean_on, a.mean_off
        ),
    )
}

// ------------------------------------------------------- determinism pipeline

fn pipeline(dir: &Path) -> Result<(Vec<u8>, String, Vec<u8>, CrossRefModel<f32>), String> {
    let e = |e: criqa_core::Error| e.to_string();
    let gen = DatagenConfig {
        global_seed: 21,
        procedural_scenes: 2,
        n_views: 4,
        records_per_scene: 3,
        jitter: ViewJitter {
            view_size: Some(48),
            ..ViewJitter::default()
        },
        ..DatagenConfig::default()
    };
    let data_dir = dir.join("data");
    generate_dataset(&gen, &data_dir, 1).map_err(e)?;
    let manifest = LoadedManifest::load(data_dir.join("manifest.json")).map_err(e)?;
    let model_cfg = ModelConfig {
        patch_size: 8,
        embed_dim: 16,
        encoder_depth: 1,
        decoder_layers: 1,
        attention_heads: 2,
        mlp_hidden: 32,
        max_grid: 4,
        n_ref: 2,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        crop_size: 32,
        n_ref: 2,
        batch_size: 2,
        total_steps: 50,
        checkpoint_every: 20,
        seed: 21,
        model: model_cfg,
        ..TrainConfig::default()
    };
    let data = TrainData::load(&manifest, cfg.n_ref, cfg.crop_size, 1).map_err(e)?;
    let run_dir = dir.join("run");
    let summary = train(&data, &cfg, &run_dir, &TrainOptions::default()).map_err(e)?;
    let model = load_checkpoint(&summary.checkpoint).map_err(e)?.model;
    let scenes = load_scenes(&manifest, cfg.n_ref + 1, 1).map_err(e)?;
    let config = serde_json::to_value(&cfg).unwrap();
    let ev = evaluate_scenes(&model, &scenes, config, &checkpoint_id(&model), 1).map_err(e)?;
    let files = render_report(&ev.report, dir.join("report"), &ev.maps).map_err(e)?;
    Ok((
        fs::read(data_dir.join("manifest.json")).unwrap(),
        read_loss_log(run_dir.join(LOSS_LOG), true).map_err(e)?,
        fs::read(files.json).unwrap(),
        model,
    ))
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = pipeline(&tmp.path().join("a"))?;
    let b = pipeline(&tmp.path().join("b"))?;
    let same = (a.0 == b.0, a.1 == b.1, a.2 == b.2);

    let ck = load_checkpoint(tmp.path().join("a/run").join(FINAL)).map_err(|e| e.to_string())?;
    let q = procedural_base(3, 32, 3);
    let refs = vec![procedural_base(4, 32, 3), procedural_base(5, 32, 3)];
    let m1 = a.3.forward(&q, &refs, false).map_err(|e| e.to_string())?.0;
    let m2 = ck.model.forward(&q, &refs, false).map_err(|e| e.to_string())?.0;
    let bit_exact = m1
        .data()
        .iter()
        .zip(m2.data())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    check(
        same.0 && same.1 && same.2 && bit_exact && a.1.lines().count() == 51,
        format!(
            "manifests identical {}, loss logs identical {}, report.json identical {}, checkpoint round trip bit-exact {bit_exact}",
            same.0, same.1, same.2
        ),
    )
}

// ------------------------------------------------------------ severity ladder

fn c11_severity() -> Outcome {
    let scene = synthesize_views(&procedural_base(11, 256, 3), 3, 11, &ViewJitter::default(), "sev")
        .map_err(|e| e.to_string())?;
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut lines = Vec::new();
    let mut ok = true;
    for kind in DistortionKind::ALL {
        let mut means = Vec::new();
        for (li, s) in levels.iter().enumerate() {
            let rec = build_training_record(&scene, 0, &DistortionSpec::new(kind, *s, 5), &SsimParams::default())
                .map_err(|e| e.to_string())?;
            if li == 0 && !rec.target.data().iter().all(|v| *v == 1.0) {
                ok = false;
            }
            means.push(mean_score(&rec.target, None).map_err(|e| e.to_string())?);
        }
        ok &= means.windows(2).all(|w| w[1] <= w[0]);
        lines.push(format!(
            "{kind}: {}",
            means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(" ")
        ));
    }
    check(ok, lines.join("; "))
}

// ------------------------------------------------------------------ runner

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wanted = |n: usize| filter.as_ref().is_none_or(|f| f == &n.to_string() || f == "acceptance");
    let mut failures = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("criterion {n:>2} {name:<28} PASS  {d}"),
            Err(d) => {
                failures += 1;
                println!("criterion {n:>2} {name:<28} FAIL  {d}");
            }
        }
    };
    let simple: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "ssim oracle equivalence", c1_ssim_oracle),
        (2, "ssim closed forms", c2_ssim_closed_forms),
        (3, "correlation fixtures", c3_correlation_fixtures),
        (4, "model shape law", c4_shape_law),
        (5, "permutation invariance", c5_permutation),
        (6, "attention conservation", c6_attention_conservation),
        (7, "gradient check", c7_gradient_check),
        (10, "determinism & persistence", c10_determinism),
    ];
    for (n, name, f) in simple.iter().filter(|c| c.0 < 8) {
        if wanted(*n) {
            report(*n, name, f());
        }
    }
    if wanted(8) || wanted(9) {
        let tmp = tempfile::tempdir().expect("tempdir");
        match run_overfit(tmp.path()) {
            Ok(o) => {
                report(8, "overfit", c8_overfit(&o));
                report(9, "ablation mechanism", c9_ablation(&o));
            }
            Err(e) => {
                report(8, "overfit", Err(format!("training failed: {e}")));
                report(9, "ablation mechanism", Err("no overfit checkpoint".into()));
            }
        }
    }
    for (n, name, f) in simple.iter().filter(|c| c.0 >= 8) {
        if wanted(*n) {
            report(*n, name, f());
        }
    }
    if wanted(11) {
        report(11, "severity monotonicity", c11_severity());
    }
    if failures > 0 {
        println!("acceptance: {failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
