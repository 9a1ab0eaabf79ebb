//! Acceptance suite: one test per criterion, each ending with a PASS line.
//!
//! Run with `cargo test -p spoalign --test acceptance -- --nocapture` to
//! see the per-criterion lines.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spoalign::data::{Dataset, EmbeddingTable, ScoreRecord};
use spoalign::ensemble::ensemble_predict;
use spoalign::metrics::{evaluate, ktau, lcc, srcc};
use spoalign::scoring::ProjectionHead;
use spoalign::screening::{flag_ng_scores, screen, ScreeningConfig};
use spoalign::spo::{
    compute_global_stats, compute_listener_stats, make_raw_normalized_targets,
    make_training_targets, standardize, GlobalStats,
};
use spoalign::synth::{generate, ListenerProfile, SynthConfig};
use spoalign::training::{
    batch_loss, batch_loss_and_gradient, lr_at_epoch, train, TrainConfig, TrainingExample,
};

// ---------------------------------------------------------------------
// helpers

fn pass(criterion: u32, message: &str) {
    println!("ACCEPTANCE {criterion:02} PASS - {message}");
}

fn identity_predictions(ds: &Dataset, table: &EmbeddingTable) -> BTreeMap<String, f64> {
    let head = ProjectionHead::identity(table.dim()).unwrap();
    ds.unique_pairs()
        .into_iter()
        .map(|pair| {
            let s = spoalign::scoring::score(
                &head,
                table.get(&pair.audio_id).unwrap(),
                table.get(&pair.text_id).unwrap(),
            )
            .unwrap();
            (pair.pair_id, s)
        })
        .collect()
}

fn model_predictions(
    model: &spoalign::training::TrainedModel,
    ds: &Dataset,
    table: &EmbeddingTable,
) -> BTreeMap<String, f64> {
    ensemble_predict(&[model], table, &ds.unique_pairs()).unwrap()
}

/// Moderately biased, moderately noisy panel used by criterion 7.
fn moderate_pool() -> Vec<ListenerProfile> {
    let spec: [(&str, f64, f64, f64); 6] = [
        ("l0", 0.9, 0.5, 0.6),
        ("l1", 1.1, -0.5, 0.6),
        ("l2", 1.0, 1.0, 0.7),
        ("l3", 0.8, 0.0, 0.5),
        ("l4", 1.0, -1.0, 0.6),
        ("l5", 1.2, 0.0, 0.5),
    ];
    spec.iter()
        .map(|&(id, scale, offset, noise)| ListenerProfile {
            listener_id: id.into(),
            scale,
            offset,
            noise_std: noise,
            outlier_prob: 0.0,
        })
        .collect()
}

/// Strongly biased panel for criterion 8: extreme scorers whose steep
/// scale clamps them to near-binary ratings, against conservative scorers
/// confined to the middle of the scale.
fn strongly_biased_pool() -> Vec<ListenerProfile> {
    let spec: [(&str, f64, f64); 6] = [
        ("x0", 3.0, -10.0),
        ("x1", 2.5, -7.5),
        ("x2", 2.8, -9.0),
        ("c0", 0.35, 3.25),
        ("c1", 0.4, 3.0),
        ("c2", 0.45, 2.75),
    ];
    spec.iter()
        .map(|&(id, scale, offset)| ListenerProfile {
            listener_id: id.into(),
            scale,
            offset,
            noise_std: 0.15,
            outlier_prob: 0.0,
        })
        .collect()
}

// ---------------------------------------------------------------------
// independent metric oracles (criterion 5)

/// Average ranks by brute-force counting: rank = #smaller + (#equal + 1)/2.
fn oracle_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&x| {
            let smaller = values.iter().filter(|&&y| y < x).count();
            let equal = values.iter().filter(|&&y| y == x).count();
            smaller as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect()
}

/// Textbook two-pass Pearson, written independently of the library.
fn oracle_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Kendall tau-b via merge-sort inversion counting (Knight's algorithm):
/// an independent O(n log n) route to the same integer pair counts.
fn oracle_tau_b(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let run_pairs = |vals: &[f64]| -> u64 {
        let mut total = 0u64;
        let mut run = 1u64;
        for i in 1..vals.len() {
            if vals[i] == vals[i - 1] {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };

    let tied_x = run_pairs(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let mut tied_xy = 0u64;
    let mut run = 1u64;
    for i in 1..n {
        if pairs[i] == pairs[i - 1] {
            run += 1;
        } else {
            tied_xy += run * (run - 1) / 2;
            run = 1;
        }
    }
    tied_xy += run * (run - 1) / 2;

    // Merge sort by y, counting how many pairs get swapped past each other.
    let mut ys_work: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buffer = ys_work.clone();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid || j < hi {
                if i < mid && (j >= hi || ys_work[i] <= ys_work[j]) {
                    buffer[k] = ys_work[i];
                    i += 1;
                } else {
                    buffer[k] = ys_work[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                }
                k += 1;
            }
            lo += 2 * width;
        }
        std::mem::swap(&mut ys_work, &mut buffer);
        width *= 2;
    }
    let tied_y = run_pairs(&ys_work);

    let n0 = (n * (n - 1) / 2) as u64;
    let num = n0 as i64 - tied_x as i64 - tied_y as i64 + tied_xy as i64 - 2 * swaps as i64;
    let denom = ((n0 - tied_x) as f64 * (n0 - tied_y) as f64).sqrt();
    num as f64 / denom
}

// ---------------------------------------------------------------------
// criteria

#[test]
fn criterion_01_screening_worked_example() {
    let records: Vec<ScoreRecord> = [("l1", 0u8), ("l2", 8), ("l3", 9), ("l4", 10)]
        .into_iter()
        .map(|(listener, score)| ScoreRecord {
            pair_id: "01200".into(),
            text_id: "t".into(),
            audio_id: "01200.wav".into(),
            listener_id: listener.into(),
            score,
        })
        .collect();
    let ds = Dataset::new(records, "worked").unwrap();

    let flags = flag_ng_scores(&ds, 5.0).unwrap();
    let flagged: Vec<&str> = flags
        .iter()
        .filter(|(_, &ng)| ng)
        .map(|((_, l), _)| l.as_str())
        .collect();
    assert_eq!(flagged, vec!["l1"], "exactly the score-0 record is NG");
    assert_eq!(flags.len(), 4);

    let groups = spoalign::data::group_scores_by_pair(&ds);
    let mean = spoalign::data::mean_pair_score(&groups["01200"]).unwrap();
    assert_eq!(mean, 6.75, "pair mean must be exactly 6.75");

    pass(1, "scores (0,8,9,10) with tau=5 flag only the 0; mean is exactly 6.75");
}

#[test]
fn criterion_02_standardization_affine_invariance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    // Listener B rates exactly 2*A + 1: a positive affine map that stays
    // on the integer 0..=10 scale with no clamping.
    let a_scores: Vec<u8> = (0..150).map(|_| rng.gen_range(0..=4)).collect();
    assert!(a_scores.iter().any(|&s| s != a_scores[0]));
    let b_scores: Vec<u8> = a_scores.iter().map(|&s| 2 * s + 1).collect();

    let mut records = Vec::new();
    for (i, (&sa, &sb)) in a_scores.iter().zip(&b_scores).enumerate() {
        for (listener, score) in [("A", sa), ("B", sb)] {
            records.push(ScoreRecord {
                pair_id: format!("p{i:03}"),
                text_id: format!("t{i:03}"),
                audio_id: format!("a{i:03}"),
                listener_id: listener.into(),
                score,
            });
        }
    }
    let ds = Dataset::new(records, "affine").unwrap();
    let stats = compute_listener_stats(&ds).unwrap();
    let mut max_diff = 0.0f64;
    for (&sa, &sb) in a_scores.iter().zip(&b_scores) {
        let za = standardize(sa, &stats["A"]).unwrap();
        let zb = standardize(sb, &stats["B"]).unwrap();
        max_diff = max_diff.max((za - zb).abs());
    }
    assert!(max_diff <= 1e-9, "max diff {max_diff}");
    assert!(start.elapsed().as_secs_f64() < 1.0);

    pass(2, &format!(
        "B = 2*A + 1 over 150 scores standardizes identically (max diff {max_diff:.2e})"
    ));
}

#[test]
fn criterion_03_standardization_normalizes_every_listener() {
    let config = SynthConfig {
        num_texts: 80,
        audios_per_text: 3,
        listeners_per_pair: 4,
        dim: 16,
        listener_pool: moderate_pool(),
        noise_std: 1.0,
        seed: 33,
    };
    let (ds, _, _) = generate(&config).unwrap();
    let targets = make_training_targets(&ds).unwrap();

    let mut per_listener: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for t in &targets.targets {
        per_listener.entry(&t.listener_id).or_default().push(t.value);
    }
    assert!(!per_listener.is_empty());
    for (listener, zs) in per_listener {
        let n = zs.len() as f64;
        let mean = zs.iter().sum::<f64>() / n;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!(mean.abs() <= 1e-9, "listener {listener}: mean {mean}");
        assert!((std - 1.0).abs() <= 1e-9, "listener {listener}: std {std}");
    }

    pass(3, "every retained listener's standardized scores have mean 0, population std 1 (within 1e-9)");
}

#[test]
fn criterion_04_loss_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let config = TrainConfig {
        contrastive: true,
        lambda_con: 0.5,
        margin: 0.1,
        ..TrainConfig::default()
    };
    let h = 1e-5;
    let mut checked = 0usize;

    for trial in 0..20 {
        let dim = rng.gen_range(2..=8);
        let batch_size = rng.gen_range(2..=6);
        let stats = GlobalStats {
            mu_train: rng.gen_range(2.0..6.0),
            sigma_train: rng.gen_range(1.5..3.0),
        };
        let mut head = ProjectionHead::identity(dim).unwrap();
        for w in head.weight.iter_mut() {
            *w += rng.gen_range(-0.4..0.4);
        }
        for b in head.bias.iter_mut() {
            *b = rng.gen_range(-0.2..0.2);
        }
        let batch: Vec<TrainingExample> = (0..batch_size)
            .map(|_| TrainingExample {
                audio: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                text: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                target: rng.gen_range(-1.5..1.5),
            })
            .collect();
        if batch.iter().any(|ex| {
            ex.text.iter().map(|x| x * x).sum::<f64>().sqrt() < 0.2
                || spoalign::scoring::project_audio(&head, &ex.audio)
                    .unwrap()
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
                    < 0.2
        }) {
            continue;
        }

        let (_, grad) = batch_loss_and_gradient(&head, &batch, &stats, &config).unwrap();
        let analytic: Vec<f64> = grad.weight.iter().chain(grad.bias.iter()).copied().collect();

        for idx in 0..dim * dim + dim {
            let mut plus = head.clone();
            let mut minus = head.clone();
            if idx < dim * dim {
                plus.weight[idx] += h;
                minus.weight[idx] -= h;
            } else {
                plus.bias[idx - dim * dim] += h;
                minus.bias[idx - dim * dim] -= h;
            }
            let fd = (batch_loss(&plus, &batch, &stats, &config).unwrap().total
                - batch_loss(&minus, &batch, &stats, &config).unwrap().total)
                / (2.0 * h);
            let a = analytic[idx];
            let scale = a.abs().max(fd.abs());
            if scale >= 1e-6 {
                let rel = (a - fd).abs() / scale;
                assert!(
                    rel <= 1e-4,
                    "trial {trial} coord {idx}: analytic {a} vs fd {fd} (rel {rel:.2e})"
                );
            } else {
                assert!(
                    (a - fd).abs() <= 1e-10,
                    "trial {trial} coord {idx}: near-zero mismatch {a} vs {fd}"
                );
            }
            checked += 1;
        }
    }
    assert!(checked > 500, "checked only {checked} coordinates");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "gradient check took {elapsed:.1}s");

    pass(4, &format!(
        "analytic gradient of the combined loss matches central differences on {checked} coordinates ({elapsed:.2}s)"
    ));
}

#[test]
fn criterion_05_metric_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut max_srcc_diff = 0.0f64;
    let mut max_lcc_diff = 0.0f64;

    for trial in 0..100 {
        let n = rng.gen_range(5..=50);
        // Half the vectors draw from the 11-point integer scale so ties are
        // common; the rest are continuous with a few forced duplicates.
        let draw = |rng: &mut ChaCha8Rng, discrete: bool| -> Vec<f64> {
            let mut v: Vec<f64> = (0..n)
                .map(|_| {
                    if discrete {
                        rng.gen_range(0..=10) as f64
                    } else {
                        rng.gen_range(-5.0..5.0)
                    }
                })
                .collect();
            if !discrete && n >= 4 {
                v[1] = v[0];
                v[3] = v[2];
            }
            v
        };
        let discrete = trial % 2 == 0;
        let mut xs = draw(&mut rng, discrete);
        let ys = draw(&mut rng, discrete);
        if xs.iter().all(|&x| x == xs[0]) {
            xs[0] += 1.0; // keep variance nonzero
        }
        if ys.iter().all(|&y| y == ys[0]) {
            continue;
        }

        let lcc_lib = lcc(&xs, &ys).unwrap();
        let lcc_oracle = oracle_pearson(&xs, &ys);
        max_lcc_diff = max_lcc_diff.max((lcc_lib - lcc_oracle).abs());

        let srcc_lib = srcc(&xs, &ys).unwrap();
        let srcc_oracle = oracle_pearson(&oracle_ranks(&xs), &oracle_ranks(&ys));
        max_srcc_diff = max_srcc_diff.max((srcc_lib - srcc_oracle).abs());

        match ktau(&xs, &ys) {
            Ok(t) => {
                let t_oracle = oracle_tau_b(&xs, &ys);
                assert_eq!(t, t_oracle, "trial {trial}: tau {t} vs oracle {t_oracle}");
            }
            Err(_) => panic!("trial {trial}: unexpected degenerate tau"),
        }
    }
    assert!(max_lcc_diff <= 1e-12, "lcc diff {max_lcc_diff:.2e}");
    assert!(max_srcc_diff <= 1e-12, "srcc diff {max_srcc_diff:.2e}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0);

    pass(5, &format!(
        "SRCC/LCC within 1e-12 of rank-then-Pearson oracles (max {max_srcc_diff:.1e}/{max_lcc_diff:.1e}); tau-b exactly matches merge-sort counting"
    ));
}

#[test]
fn criterion_06_warmup_schedule() {
    let config = TrainConfig::default();
    assert_eq!(lr_at_epoch(0, &config).unwrap(), 0.0);
    assert_eq!(lr_at_epoch(5, &config).unwrap(), 0.0001);
    for epoch in 0..=5usize {
        let expected = 0.0001 * epoch as f64 / 5.0;
        assert!(
            (lr_at_epoch(epoch, &config).unwrap() - expected).abs() < 1e-20,
            "epoch {epoch} not on the linear ramp"
        );
    }
    for epoch in 5..50 {
        assert_eq!(lr_at_epoch(epoch, &config).unwrap(), 0.0001);
    }
    pass(6, "learning rate is 0.0 at epoch 0, 0.0001 at epoch 5, linear between, constant after");
}

#[test]
fn criterion_07_training_beats_identity_baseline() {
    let start = Instant::now();
    let mut wins = 0;
    let mut detail = String::new();
    for seed in [101u64, 102, 103] {
        let config = SynthConfig {
            num_texts: 200,
            audios_per_text: 3,
            listeners_per_pair: 4,
            dim: 64,
            listener_pool: moderate_pool(),
            noise_std: 2.0,
            seed,
        };
        let (ds, table, _) = generate(&config).unwrap();
        let (train_ds, eval_ds) = ds.split_by_text(0.25, seed + 1000);

        let stats = compute_global_stats(&train_ds).unwrap();
        let targets = make_training_targets(&train_ds).unwrap().targets;
        let train_config = TrainConfig {
            seed,
            contrastive: false,
            ..TrainConfig::default()
        };
        assert_eq!(train_config.epochs, 50);
        let model = train(&train_ds, &table, &targets, &stats, &train_config).unwrap();

        let trained = evaluate(&model_predictions(&model, &eval_ds, &table), &eval_ds)
            .unwrap()
            .srcc
            .unwrap();
        let baseline = evaluate(&identity_predictions(&eval_ds, &table), &eval_ds)
            .unwrap()
            .srcc
            .unwrap();
        detail.push_str(&format!("seed {seed}: {baseline:.3} -> {trained:.3}; "));
        if trained >= baseline + 0.10 {
            wins += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(wins >= 2, "only {wins}/3 seeds improved SRCC by 0.10 ({detail})");
    assert!(elapsed < 300.0, "took {elapsed:.0}s, budget is 5 minutes");

    pass(7, &format!(
        "50-epoch training lifts held-out SRCC by >= 0.10 over the raw-cosine baseline in {wins}/3 seeds ({detail}{elapsed:.1}s)"
    ));
}

#[test]
fn criterion_08_standardized_targets_beat_raw_targets() {
    let mut spo_sum = 0.0;
    let mut raw_sum = 0.0;
    let mut detail = String::new();
    for seed in [201u64, 202, 203] {
        let config = SynthConfig {
            num_texts: 60,
            audios_per_text: 3,
            listeners_per_pair: 4,
            dim: 32,
            listener_pool: strongly_biased_pool(),
            noise_std: 1.0,
            seed,
        };
        let (ds, table, _) = generate(&config).unwrap();
        let (train_ds, eval_ds) = ds.split_by_text(0.25, seed + 1000);
        let stats = compute_global_stats(&train_ds).unwrap();
        let train_config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };

        let spo_targets = make_training_targets(&train_ds).unwrap().targets;
        let raw_targets = make_raw_normalized_targets(&train_ds, &stats);

        let spo_model = train(&train_ds, &table, &spo_targets, &stats, &train_config).unwrap();
        let raw_model = train(&train_ds, &table, &raw_targets, &stats, &train_config).unwrap();

        let spo_srcc = evaluate(&model_predictions(&spo_model, &eval_ds, &table), &eval_ds)
            .unwrap()
            .srcc
            .unwrap();
        let raw_srcc = evaluate(&model_predictions(&raw_model, &eval_ds, &table), &eval_ds)
            .unwrap()
            .srcc
            .unwrap();
        detail.push_str(&format!("seed {seed}: {spo_srcc:.3} vs {raw_srcc:.3}; "));
        spo_sum += spo_srcc;
        raw_sum += raw_srcc;
    }
    let spo_mean = spo_sum / 3.0;
    let raw_mean = raw_sum / 3.0;
    assert!(
        spo_mean >= raw_mean,
        "standardized-target mean SRCC {spo_mean:.4} below raw-target {raw_mean:.4} ({detail})"
    );

    pass(8, &format!(
        "standardized targets average SRCC {spo_mean:.4} >= raw targets {raw_mean:.4} over 3 seeds ({})",
        detail.trim_end()
    ));
}

#[test]
fn criterion_09_screened_training_no_worse_mse() {
    let pool = vec![
        ListenerProfile {
            listener_id: "c0".into(),
            scale: 1.0,
            offset: -0.2,
            noise_std: 0.3,
            outlier_prob: 0.0,
        },
        ListenerProfile {
            listener_id: "c1".into(),
            scale: 1.0,
            offset: 0.0,
            noise_std: 0.3,
            outlier_prob: 0.0,
        },
        ListenerProfile {
            listener_id: "c2".into(),
            scale: 1.0,
            offset: 0.2,
            noise_std: 0.3,
            outlier_prob: 0.0,
        },
        ListenerProfile {
            listener_id: "chaos".into(),
            scale: 1.0,
            offset: 0.0,
            noise_std: 0.0,
            outlier_prob: 1.0,
        },
    ];
    let screening = ScreeningConfig::new(5.0, 0.2).unwrap();
    let mut screened_sum = 0.0;
    let mut unscreened_sum = 0.0;
    let mut detail = String::new();
    for seed in [301u64, 302, 303] {
        let config = SynthConfig {
            num_texts: 150,
            audios_per_text: 3,
            listeners_per_pair: 4,
            dim: 32,
            listener_pool: pool.clone(),
            noise_std: 1.0,
            seed,
        };
        let (ds, table, _) = generate(&config).unwrap();
        let (train_ds, eval_ds) = ds.split_by_text(0.25, seed + 1000);
        let train_config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };

        let (kept, report) = screen(&train_ds, &screening).unwrap();
        assert!(
            report.excluded_listeners.contains(&"chaos".to_string()),
            "seed {seed}: screening failed to exclude the injected outlier"
        );
        let stats_s = compute_global_stats(&kept).unwrap();
        let targets_s = make_training_targets(&kept).unwrap().targets;
        let model_s = train(&kept, &table, &targets_s, &stats_s, &train_config).unwrap();
        let mse_s = evaluate(&model_predictions(&model_s, &eval_ds, &table), &eval_ds)
            .unwrap()
            .mse;

        let stats_u = compute_global_stats(&train_ds).unwrap();
        let targets_u = make_training_targets(&train_ds).unwrap().targets;
        let model_u = train(&train_ds, &table, &targets_u, &stats_u, &train_config).unwrap();
        let mse_u = evaluate(&model_predictions(&model_u, &eval_ds, &table), &eval_ds)
            .unwrap()
            .mse;

        detail.push_str(&format!("seed {seed}: {mse_s:.3} vs {mse_u:.3}; "));
        screened_sum += mse_s;
        unscreened_sum += mse_u;
    }
    let screened_mean = screened_sum / 3.0;
    let unscreened_mean = unscreened_sum / 3.0;
    assert!(
        screened_mean <= unscreened_mean,
        "screened mean MSE {screened_mean:.4} above unscreened {unscreened_mean:.4} ({detail})"
    );

    pass(9, &format!(
        "screened training averages MSE {screened_mean:.4} <= unscreened {unscreened_mean:.4} over 3 seeds ({})",
        detail.trim_end()
    ));
}

#[test]
fn criterion_10_ensemble_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let dim = 12;
    let mut table = EmbeddingTable::new(dim).unwrap();
    let mut pairs = Vec::new();
    for i in 0..25 {
        let audio: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let text: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        table.insert(format!("a{i}"), audio).unwrap();
        table.insert(format!("t{i}"), text).unwrap();
        pairs.push(spoalign::data::PairRef {
            pair_id: format!("p{i}"),
            text_id: format!("t{i}"),
            audio_id: format!("a{i}"),
        });
    }
    let make_model = |seed: u64| {
        let mut head = ProjectionHead::identity(dim).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        for w in head.weight.iter_mut() {
            *w += r.gen_range(-0.3..0.3);
        }
        let config = TrainConfig::default();
        spoalign::training::TrainedModel {
            head,
            config_hash: config.fingerprint(),
            config,
            global_stats: GlobalStats {
                mu_train: 5.0,
                sigma_train: 2.0,
            },
            loss_history: vec![],
            seed,
        }
    };

    let m1 = make_model(1);
    let m2 = make_model(2);
    let solo = ensemble_predict(&[&m1], &table, &pairs).unwrap();
    for k in [2usize, 3, 5, 7, 18] {
        let copies: Vec<&spoalign::training::TrainedModel> =
            std::iter::repeat(&m1).take(k).collect();
        let combined = ensemble_predict(&copies, &table, &pairs).unwrap();
        assert_eq!(combined, solo, "{k} copies must reproduce the model exactly");
    }

    let duo = ensemble_predict(&[&m1, &m2], &table, &pairs).unwrap();
    let p2 = ensemble_predict(&[&m2], &table, &pairs).unwrap();
    for pair in &pairs {
        let expected = (solo[&pair.pair_id] + p2[&pair.pair_id]) / 2.0;
        assert_eq!(duo[&pair.pair_id], expected, "pair {}", pair.pair_id);
    }

    pass(10, "k copies of a model ensemble to its exact predictions; a 2-model ensemble is the exact per-pair mean");
}

fn snapshot_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn criterion_11_pipeline_reruns_bit_identical() {
    use spoalign::ensemble::Setting;
    use spoalign::pipeline::{run_pipeline, GridConfig, PipelineConfig};

    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        num_texts: 20,
        audios_per_text: 3,
        listeners_per_pair: 4,
        dim: 8,
        listener_pool: moderate_pool(),
        noise_std: 1.0,
        seed: 1111,
    };
    let (ds, table, _) = generate(&config).unwrap();
    let (train_ds, eval_ds) = ds.split_by_text(0.25, 42);
    let train_path = dir.path().join("train.jsonl");
    let eval_path = dir.path().join("eval.jsonl");
    spoalign::data::save_scores(&train_ds, &train_path).unwrap();
    spoalign::data::save_scores(&eval_ds, &eval_path).unwrap();
    let manifest = spoalign::data::write_embeddings(&table, &dir.path().join("emb")).unwrap();

    let workdir = dir.path().join("work");
    let pipeline_config = PipelineConfig {
        train_scores: train_path,
        eval_scores: eval_path,
        embeddings: manifest,
        workdir: workdir.clone(),
        screening: ScreeningConfig::new(5.0, 0.2).unwrap(),
        grid: GridConfig {
            settings: vec![Setting::A, Setting::B],
            warmup: vec![false, true],
            seeds: vec![1],
        },
        train: TrainConfig {
            epochs: 6,
            warmup_peak_epoch: 2,
            ..TrainConfig::default()
        },
        spo_ablation: true,
        strict_triplets: true,
    };

    let summary_one = run_pipeline(&pipeline_config).unwrap();
    let first = snapshot_files(&workdir);
    assert!(first.contains_key("summary.json"));
    assert!(first.keys().any(|k| k.starts_with("models/")));

    let summary_two = run_pipeline(&pipeline_config).unwrap();
    let second = snapshot_files(&workdir);

    assert_eq!(summary_one, summary_two);
    assert_eq!(first.len(), second.len());
    for (name, bytes) in &first {
        let other = second
            .get(name)
            .unwrap_or_else(|| panic!("file {name} missing on re-run"));
        assert_eq!(bytes, other, "file {name} changed between runs");
    }

    pass(11, &format!(
        "re-running the pipeline reproduced all {} artifacts bit-identically",
        first.len()
    ));
}
