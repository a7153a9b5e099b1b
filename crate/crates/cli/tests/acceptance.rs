//! One check per acceptance criterion. Every test prints a single
//! `[PASS]` or `[FAIL]` line before asserting, so
//! `cargo test --test acceptance -- --nocapture --test-threads=1` reads as a report.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hafunet::dataset::{generate_synthetic_dataset, load_dataset, SynthManifest};
use hafunet::gradcheck::{random_map, GradCheckReport};
use hafunet::losses::{bce_loss, dice_loss, LossConfig};
use hafunet::metrics::{iou_slices, IOU_EPSILON};
use hafunet::table::{verify_table, TableCheck, DEFAULT_TOLERANCE};
use hafunet::train::{self, TrainingSet};
use hafunet::{EncoderConfig, Error, EvalWeights, Label, ModelConfig, Plane, SegModel, Split, SynthSpec, TrainConfig};

fn report(criterion: u8, pass: bool, detail: &str) {
    println!("[{}] criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hafunet"))
}

fn failing_rows(check: &TableCheck) -> String {
    let bad: Vec<String> =
        check.rows.iter().filter(|r| !r.pass).map(|r| format!("{} gap {:.4}", r.row.model, r.gap())).collect();
    if bad.is_empty() { "none".into() } else { bad.join(", ") }
}

#[test]
fn criterion_1_table_consistency() {
    let weights = EvalWeights::from_tumor_counts([254, 306, 300]).unwrap();
    let started = Instant::now();
    let t10 = verify_table(&fixture("table10.csv"), &weights, DEFAULT_TOLERANCE).unwrap();
    let t11 = verify_table(&fixture("table11.csv"), &weights, DEFAULT_TOLERANCE).unwrap();
    let elapsed = started.elapsed();
    let spot = |check: &TableCheck, model: &str, want: f64| {
        check.rows.iter().find(|r| r.row.model == model).is_some_and(|r| (r.recomputed - want).abs() <= DEFAULT_TOLERANCE)
    };
    let spots = spot(&t10, "UNet", 75.7) && spot(&t10, "ours", 82.4) && spot(&t11, "base", 79.8);
    let pass = t10.rows.len() == 13 && t11.rows.len() == 4 && t10.all_pass() && t11.all_pass() && spots && elapsed < Duration::from_secs(1);
    report(
        1,
        pass,
        &format!(
            "table10 {}/{} rows, table11 {}/{} rows within ±{DEFAULT_TOLERANCE}; spot values {}; failing: {}; {:.1} ms",
            t10.passed(),
            t10.rows.len(),
            t11.passed(),
            t11.rows.len(),
            if spots { "ok" } else { "off" },
            failing_rows(&t10),
            elapsed.as_secs_f64() * 1e3
        ),
    );
}

#[test]
fn criterion_2_gradient_suite() {
    let started = Instant::now();
    let modules: [(&str, GradCheckReport); 5] = [
        ("swin_block", common::grad_swin_block()),
        ("tokenized_mlp_block", common::grad_tokenized_mlp_block()),
        ("haf_fuse", common::grad_haf_fuse()),
        ("deformable_conv", common::grad_deformable_conv()),
        ("aca_forward", common::grad_aca()),
    ];
    let loss = common::grad_total_loss();
    let e2e = [common::grad_end_to_end(), common::grad_end_to_end_without_modules()];
    let elapsed = started.elapsed();
    let mut parts: Vec<String> = modules.iter().map(|(n, r)| format!("{n} {:.1e}", r.max_rel_error)).collect();
    parts.push(format!("total_loss {loss:.1e}"));
    parts.push(format!("end_to_end {:.1e}/{:.1e}", e2e[0].max_rel_error, e2e[1].max_rel_error));
    let pass = modules.iter().all(|(_, r)| r.checked > 0 && r.max_rel_error < common::MODULE_TOL)
        && loss < common::MODULE_TOL
        && e2e.iter().all(|r| r.checked > 0 && r.max_rel_error < common::END_TO_END_TOL)
        && elapsed < Duration::from_secs(300);
    report(2, pass, &format!("max rel err {}; {:.1} s", parts.join(", "), elapsed.as_secs_f64()));
}

#[test]
fn criterion_3_metric_oracles() {
    let (iou_diff, dice_diff) = common::metric_oracle_max_diff();
    let cfg = LossConfig::default();
    let hand_iou = iou_slices(&[1, 1, 0, 0], &[1, 0, 1, 0], IOU_EPSILON).unwrap();
    let hand_dice = dice_loss(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 1.0, 0.0], &cfg).unwrap();
    let hand_bce = bce_loss(&[1.0; 4], &[0.5; 4], &cfg).unwrap();
    let six = |a: f64, b: f64| (a - b).abs() < 5e-7;
    let pass = iou_diff < 1e-9
        && dice_diff < 1e-9
        && six(hand_iou, 1.0 / 3.0)
        && six(hand_dice, 0.5)
        && six(hand_bce, std::f64::consts::LN_2);
    report(
        3,
        pass,
        &format!(
            "100 random pairs: iou {iou_diff:.1e}, dice {dice_diff:.1e}; hand iou {hand_iou:.6}, dice {hand_dice:.6}, bce {hand_bce:.6}"
        ),
    );
}

#[test]
fn criterion_4_structural_equivalences() {
    let dense = common::single_window_vs_dense();
    let shifted = common::shifted_vs_roll_and_mask();
    let deform = common::zero_offset_deformable_vs_conv();
    let (x, y) = common::zeroed_swin_block();
    let identity = x == y;
    let cbe = common::cbe_zeroed_mlps_vs_layer_norm();
    let pass = dense < 1e-6 && shifted < 1e-9 && deform < 1e-6 && identity && cbe < 1e-6;
    report(
        4,
        pass,
        &format!(
            "dense attention {dense:.1e}, shifted mask {shifted:.1e}, zero-offset conv {deform:.1e}, zeroed swin block {}, cbe layer norm {cbe:.1e}",
            if identity { "exact identity" } else { "not identity" }
        ),
    );
}

#[test]
fn criterion_5_shape_pipeline() {
    let mut failures = Vec::new();
    let mut checked = 0;
    for size in [32, 64] {
        let mut out_shapes = Vec::new();
        for (use_haf, use_cbe) in train::ABLATION_GRID {
            let encoder = EncoderConfig { patch_size: 4, ..EncoderConfig::default() };
            let (c, p) = (encoder.embed_dim, encoder.patch_size);
            let cfg = ModelConfig { image_size: size, encoder, use_haf, use_cbe, ..ModelConfig::default() };
            let model = SegModel::new(cfg, 1).unwrap();
            let x = random_map([2, 1, size, size], &mut common::rng(size as u64), 1.0);
            let pyr = model.encode(&x).unwrap();
            for (i, skip) in pyr.skips.iter().enumerate() {
                let want = [2, c << i, size / (p << i), size / (p << i)];
                if skip.shape() != want {
                    failures.push(format!("size {size} skip {i}: {:?} != {want:?}", skip.shape()));
                }
            }
            let want = [2, c << 3, size / (p << 3), size / (p << 3)];
            if pyr.bottleneck.shape() != want {
                failures.push(format!("size {size} bottleneck {:?} != {want:?}", pyr.bottleneck.shape()));
            }
            let enhanced = model.enhance(&pyr.bottleneck).unwrap();
            if enhanced.shape() != pyr.bottleneck.shape() {
                failures.push(format!("size {size} cbe changed bottleneck to {:?}", enhanced.shape()));
            }
            let logits = model.decode(&pyr).unwrap();
            if logits.shape() != [2, 1, size, size] {
                failures.push(format!("size {size} flags ({use_haf},{use_cbe}) logits {:?}", logits.shape()));
            }
            out_shapes.push(logits.shape());
            checked += 1;
        }
        if out_shapes.windows(2).any(|w| w[0] != w[1]) {
            failures.push(format!("size {size}: flags change output shape {out_shapes:?}"));
        }
    }
    let detail = if failures.is_empty() {
        format!("{checked} configurations (sizes 32/64, patch 4, all flag pairs) keep pyramid and logit shapes")
    } else {
        failures.join("; ")
    };
    report(5, failures.is_empty(), &detail);
}

#[test]
fn criterion_6_overfit_sanity() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("synth");
    let spec = SynthSpec { n_per_class: 2, image_size: 64, seed: 0, ..SynthSpec::default() };
    generate_synthetic_dataset(&spec, &root, None).unwrap();
    let cfg = TrainConfig {
        data_root: root.clone(),
        include_no_tumor: true,
        batch_size: 8,
        learning_rate: 3e-3,
        steps: 500,
        checkpoint_out: dir.path().join("overfit.bin"),
        ..TrainConfig::default()
    };
    assert!(cfg.model.use_haf && cfg.model.use_cbe && cfg.model.image_size == 64);
    let started = Instant::now();
    let index = load_dataset(&root, Split::Train).unwrap();
    let set = TrainingSet::load(&index, 64, true).unwrap();
    let outcome = train::train_on(&cfg, &set).unwrap();
    let report_eval = train::evaluate_model(&outcome.checkpoint.model, "overfit", &index, cfg.threshold).unwrap();
    let elapsed = started.elapsed();
    let dice = outcome.final_loss.dice;
    let pass = set.len() == 8 && dice < 0.1 && report_eval.weighted_miou > 80.0 && elapsed < Duration::from_secs(900);
    report(
        6,
        pass,
        &format!(
            "{} images, {} steps: train dice_loss {dice:.4}, weighted mIoU {:.2}; {:.0} s",
            set.len(),
            cfg.steps,
            report_eval.weighted_miou,
            elapsed.as_secs_f64()
        ),
    );
}

fn ablation_config(dir: &Path, root: &Path) -> PathBuf {
    let text = format!(
        "data_root = {}\ncheckpoint_out = {}\nmodel_name = base\nimage_size = 16\npatch_size = 2\nembed_dim = 8\nwindow_size = 2\nnum_heads = 1,2,2\nsteps = 15\nbatch_size = 4\nseed = 3\n",
        root.display(),
        dir.join("ck.bin").display()
    );
    let path = dir.join("ablate.cfg");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn criterion_7_ablation_harness() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("synth");
    for (split, seed) in [(Split::Train, 1), (Split::Test, 2)] {
        let spec = SynthSpec { n_per_class: 3, image_size: 16, seed, split, ..SynthSpec::default() };
        generate_synthetic_dataset(&spec, &root, Some(16)).unwrap();
    }
    let config = ablation_config(dir.path(), &root);
    let run = |name: &str| -> (String, String) {
        let out = dir.path().join(format!("{name}.csv"));
        let status = bin().args(["ablate", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let params = dir.path().join(format!("{name}_params.csv"));
        (fs::read_to_string(out).unwrap(), fs::read_to_string(params).unwrap())
    };
    let (first, params) = run("first");
    let (second, params_again) = run("second");
    let lines: Vec<&str> = first.lines().collect();
    let flags: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    let want_flags: Vec<(String, String)> = train::ABLATION_GRID
        .iter()
        .map(|&(h, c)| (u8::from(h).to_string(), u8::from(c).to_string()))
        .collect();
    let counts: BTreeMap<(String, String), usize> = params
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            ((f[1].to_string(), f[2].to_string()), f[3].parse().unwrap())
        })
        .collect();
    let n = |h: &str, c: &str| counts[&(h.to_string(), c.to_string())];
    let lattice = n("0", "0") < n("1", "0") && n("1", "0") < n("1", "1") && n("0", "0") < n("0", "1") && n("0", "1") < n("1", "1");
    let shaped = lines.len() == 5 && lines[0] == hafunet::EvalReport::CSV_HEADER && flags == want_flags;
    let deterministic = first == second && params == params_again;
    report(
        7,
        shaped && lattice && deterministic,
        &format!(
            "{} data rows, flags {}, parameters {}/{}/{}/{} {}, rerun {}",
            lines.len() - 1,
            if flags == want_flags { "match grid" } else { "off grid" },
            n("0", "0"),
            n("1", "0"),
            n("0", "1"),
            n("1", "1"),
            if lattice { "increasing" } else { "not increasing" },
            if deterministic { "byte-identical" } else { "differs" }
        ),
    );
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_8_dataset_tooling() {
    let dir = tempfile::tempdir().unwrap();
    let synth = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let s = bin().args(["synth", "--n", "5", "--size", "32", "--seed", seed, "--out"]).arg(&out).output().unwrap();
        assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
        out
    };
    let (a, b, c) = (synth("a", "9"), synth("b", "9"), synth("c", "10"));
    let (ta, tb, tc) = (tree_bytes(&a), tree_bytes(&b), tree_bytes(&c));
    let deterministic = ta == tb && ta != tc && ta.len() == 5 * 4 + 5 * 3 + 1;

    let stats_csv = dir.path().join("stats.csv");
    let s = bin().args(["stats", "--data"]).arg(&a).arg("--out").arg(&stats_csv).output().unwrap();
    assert!(s.status.success());
    let manifest = SynthManifest::load(&a, Split::Train).unwrap();
    let mut want: BTreeMap<(Label, Plane), usize> = BTreeMap::new();
    for e in &manifest.entries {
        *want.entry((e.label, e.plane)).or_default() += 1;
    }
    let mut stats_match = true;
    let text = fs::read_to_string(&stats_csv).unwrap();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let Ok(label) = f[0].parse::<Label>() else { continue };
        for (i, plane) in Plane::ALL.into_iter().enumerate() {
            stats_match &= f[i + 1].parse::<usize>().ok() == Some(want.get(&(label, plane)).copied().unwrap_or(0));
        }
    }
    stats_match &= text.lines().last() == Some(&*format!("total,{},{},{},{}", 8, 8, 4, 20));

    let victim = a.join("train/meningioma/masks").join("co_meningioma_0001.png");
    fs::remove_file(&victim).unwrap();
    let structured = matches!(load_dataset(&a, Split::Train), Err(Error::MissingMask { ref expected, .. }) if *expected == victim);
    let s = bin().args(["stats", "--data"]).arg(&a).arg("--out").arg(&stats_csv).output().unwrap();
    let cli_rejects = s.status.code() == Some(1) && String::from_utf8_lossy(&s.stderr).contains("no mask");

    report(
        8,
        deterministic && stats_match && structured && cli_rejects,
        &format!(
            "same seed byte-identical {}, stats match manifest {}, missing mask rejected {} (cli exit {:?})",
            deterministic,
            stats_match,
            structured,
            s.status.code()
        ),
    );
}
