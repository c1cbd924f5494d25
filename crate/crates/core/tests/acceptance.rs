//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails the
//! target if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use campvqa::eval::{krcc, plcc, run_protocol, srcc, EvalConfig};
use campvqa::fdf::{compute_residual, fragment_frame, patch_intensities, select_top_k, FdfConfig};
use campvqa::features::{
    decode_cvqf, read_cvqf, write_cvqf, DatasetManifest, EmbeddingRecord, Modality,
};
use campvqa::fusion::SegmentPlan;
use campvqa::media::FrameBuffer;
use campvqa::pipeline::{self, PipelineConfig};
use campvqa::regressor::{
    loss_composite, loss_precision, loss_ranking, loss_with_grad, BnMode, LossWeights, Mlp,
    SwaAccumulator, TrainConfig,
};
use campvqa::synthetic::{moving_square_y4m, planted_dataset, write_encoder_outputs, EncoderDims};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(t)
}

fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize, t: usize) -> FrameBuffer {
    let data = (0..w * h * 3).map(|_| rng.random()).collect();
    FrameBuffer::new(w, h, t, data).unwrap()
}

fn fdf_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let p = [1, 2, 4, 8][rng.random_range(0..4)];
        let w = rng.random_range(p..=64);
        let h = rng.random_range(p..=64);
        let (cols, rows) = (w / p, h / p);
        let side = (1..=8).rev().find(|c| c * c <= cols * rows).unwrap();
        let cfg = FdfConfig::new(p, side * p).map_err(|e| e.to_string())?;
        let prev = random_frame(&mut rng, w, h, 0);
        let curr = random_frame(&mut rng, w, h, 1);

        let residual = compute_residual(&prev, &curr).map_err(|e| e.to_string())?;
        let scores = patch_intensities(&residual, &cfg).map_err(|e| e.to_string())?;
        let mut naive = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let mut sum = 0u64;
                for y in r * p..(r + 1) * p {
                    for x in c * p..(c + 1) * p {
                        let (a, b) = (curr.pixel(x, y), prev.pixel(x, y));
                        for ch in 0..3 {
                            sum += (a[ch] as i64 - b[ch] as i64).unsigned_abs();
                        }
                    }
                }
                naive.push(sum);
            }
        }
        let got: Vec<u64> = scores.iter().map(|s| s.delta).collect();
        ensure(got == naive, || {
            format!("case {case}: intensities differ from the scalar oracle")
        })?;

        let mut order: Vec<usize> = (0..naive.len()).collect();
        order.sort_by(|&a, &b| naive[b].cmp(&naive[a]).then(a.cmp(&b)));
        let mut expected: Vec<usize> = order[..cfg.k()].to_vec();
        expected.sort();
        let picked: Vec<usize> = select_top_k(&scores, &cfg)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|s| s.index)
            .collect();
        ensure(picked == expected, || {
            format!("case {case}: top-K differs from the sort oracle")
        })?;
    }
    let t = within(start, Duration::from_secs(5))?;
    Ok(format!("100 frame pairs in {t:.2?}"))
}

fn k_arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut details = Vec::new();
    for (s, p) in [(64, 8), (128, 16), (224, 16)] {
        let cfg = FdfConfig::new(p, s).map_err(|e| e.to_string())?;
        let expected = (s / p) * (s / p);
        ensure(cfg.k() == expected, || {
            format!("K({s},{p}) = {}, expected {expected}", cfg.k())
        })?;
        let (w, h) = (s + p + 3, s + 5);
        let pair = fragment_frame(
            &random_frame(&mut rng, w, h, 0),
            &random_frame(&mut rng, w, h, 1),
            &cfg,
        )
        .map_err(|e| e.to_string())?;
        ensure(pair.provenance.len() == expected, || {
            format!("{} fragments for ({s},{p})", pair.provenance.len())
        })?;
        for m in [&pair.frame_fragment, &pair.residual_fragment] {
            ensure(m.width() == s && m.height() == s, || {
                format!("mosaic {}x{} for s={s}", m.width(), m.height())
            })?;
        }
        details.push(format!("({s},{p})->{expected}"));
    }
    ensure(FdfConfig::new(16, 224).unwrap().k() == 196, || {
        "K(224,16) != 196".into()
    })?;
    Ok(details.join(" "))
}

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let y: Vec<f64> = (0..rng.random_range(1..20))
            .map(|_| rng.random_range(1.0..5.0))
            .collect();
        let lp = loss_precision(&y, &y).map_err(|e| e.to_string())?;
        ensure(lp == 0.0, || format!("L_p(y, y) = {lp}"))?;
    }
    let close = |got: f64, want: f64, what: &str| {
        ensure((got - want).abs() <= 1e-12, || {
            format!("{what} = {got}, want {want}")
        })
    };
    close(
        loss_ranking(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
        1.0,
        "L_r([1,0]; [0,1])",
    )?;
    close(
        loss_ranking(&[0.0, 10.0], &[1.0, 2.0]).unwrap(),
        0.0,
        "L_r([0,10]; [1,2])",
    )?;
    close(
        loss_composite(&[1.0, 0.0], &[0.0, 1.0], 0.6, 1.0).unwrap(),
        1.6,
        "composite",
    )?;
    Ok("L_p(y,y)=0, L_r cases 1.0 and 0, composite 1.6".into())
}

fn randomize_bn(mlp: &mut Mlp, rng: &mut ChaCha8Rng) {
    for h in &mut mlp.hidden {
        h.bn.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
        h.bn.beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        h.bn.running_mean
            .mapv_inplace(|_| rng.random_range(-0.5..0.5));
        h.bn.running_var
            .mapv_inplace(|_| rng.random_range(0.5..2.0));
    }
}

fn batch_loss(mlp: &Mlp, x: &ndarray::Array2<f64>, y: &[f64], w: LossWeights) -> f64 {
    let pred = mlp.predict(x.view()).unwrap();
    loss_with_grad(pred.as_slice().unwrap(), y, w).unwrap().0
}

/// Distance of the predictions from the nearest non-differentiable point of
/// the loss.
fn kink_margin(pred: &[f64], y: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..pred.len() {
        m = m.min((pred[i] - y[i]).abs());
        for j in 0..pred.len() {
            if i != j {
                let s = if y[i] >= y[j] { 1.0 } else { -1.0 };
                m = m.min(((y[i] - y[j]).abs() - s * (pred[i] - pred[j])).abs());
            }
        }
    }
    m
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    let (mut configs, mut resampled, mut checked, mut worst) = (0, 0, 0usize, 0.0f64);
    while configs < 24 {
        let d_in = rng.random_range(1..6);
        let hidden: Vec<usize> = (0..rng.random_range(1..4))
            .map(|_| rng.random_range(1..7))
            .collect();
        let n = rng.random_range(2..8);
        let mut mlp = Mlp::new(d_in, &hidden, 0.0, &mut rng);
        randomize_bn(&mut mlp, &mut rng);
        let x = ndarray::Array2::from_shape_simple_fn((n, d_in), || rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = LossWeights::new(rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)).unwrap();

        let (pred, trace) = mlp
            .forward_train(x.view(), BnMode::Running, &[])
            .map_err(|e| e.to_string())?;
        if kink_margin(pred.as_slice().unwrap(), &y) < 1e-3 {
            resampled += 1;
            continue;
        }
        let (_, dpred) = loss_with_grad(pred.as_slice().unwrap(), &y, w).unwrap();
        let analytic = mlp
            .backward(&trace, &[], ndarray::ArrayView1::from(&dpred))
            .flat();
        let theta = mlp.flat_params();
        ensure(analytic.len() == theta.len(), || {
            "gradient and parameter counts differ".into()
        })?;
        for i in 0..theta.len() {
            let mut probe = mlp.clone();
            let mut t = theta.clone();
            t[i] = theta[i] + h;
            probe.set_flat_params(&t).unwrap();
            let up = batch_loss(&probe, &x, &y, w);
            t[i] = theta[i] - h;
            probe.set_flat_params(&t).unwrap();
            let down = batch_loss(&probe, &x, &y, w);
            let numeric = (up - down) / (2.0 * h);
            let (a, b) = (analytic[i], numeric);
            let scale = a.abs().max(b.abs());
            let ok = if scale < 1e-7 {
                (a - b).abs() <= 1e-9
            } else {
                let rel = (a - b).abs() / scale;
                worst = worst.max(rel);
                rel <= 1e-4
            };
            ensure(ok, || {
                format!("config {configs} {hidden:?} param {i}: analytic {a:e}, numeric {b:e}")
            })?;
            checked += 1;
        }
        configs += 1;
    }
    let t = within(start, Duration::from_secs(30))?;
    Ok(format!(
        "{configs} configs, {checked} parameters, max rel err {worst:.1e}, {resampled} resampled near kinks, {t:.2?}"
    ))
}

fn swa_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..50 {
        let snaps: Vec<Mlp> = (0..rng.random_range(1..10))
            .map(|_| Mlp::new(4, &[5, 3], 0.1, &mut rng))
            .collect();
        let mut acc = SwaAccumulator::new();
        for s in &snaps {
            acc.add(s).map_err(|e| e.to_string())?;
        }
        let flats: Vec<Vec<f64>> = snaps.iter().map(Mlp::flat_params).collect();
        let mean: Vec<f64> = (0..flats[0].len())
            .map(|i| {
                let mut s = 0.0;
                for f in &flats {
                    s += f[i];
                }
                s / flats.len() as f64
            })
            .collect();
        let avg = acc.average().ok_or("no average")?;
        ensure(avg == mean, || {
            format!("case {case}: average differs from the arithmetic mean")
        })?;
    }
    Ok("50 snapshot sets equal their arithmetic mean exactly".into())
}

fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn rank_oracle(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&u| u < x).count() as f64;
            let equal = v.iter().filter(|&&u| u == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn tau_b_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (mut conc, mut disc, mut ta, mut tb) = (0.0, 0.0, 0.0, 0.0);
    let n = a.len();
    for i in 0..n {
        for j in i + 1..n {
            let (da, db) = (a[i] - a[j], b[i] - b[j]);
            if da == 0.0 {
                ta += 1.0;
            }
            if db == 0.0 {
                tb += 1.0;
            }
            if da * db > 0.0 {
                conc += 1.0;
            } else if da * db < 0.0 {
                disc += 1.0;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    (conc - disc) / ((n0 - ta) * (n0 - tb)).sqrt()
}

fn random_pair(rng: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let n = rng.random_range(3..=max_n);
        let tied = rng.random_bool(0.5);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if tied {
                        rng.random_range(0..6) as f64
                    } else {
                        rng.random_range(-10.0..10.0)
                    }
                })
                .collect()
        };
        let a = draw(rng);
        let b = draw(rng);
        let varies = |v: &[f64]| v.iter().any(|&x| x != v[0]);
        if varies(&a) && varies(&b) {
            return (a, b);
        }
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tol = 1e-10;
    let e = |r: campvqa::Result<f64>| r.map_err(|e| e.to_string());
    for case in 0..1000 {
        let (a, b) = random_pair(&mut rng, 50);
        let checks = [
            (
                "SRCC",
                e(srcc(&a, &b))?,
                pearson_oracle(&rank_oracle(&a), &rank_oracle(&b)),
            ),
            ("PLCC", e(plcc(&a, &b))?, pearson_oracle(&a, &b)),
            ("KRCC", e(krcc(&a, &b))?, tau_b_oracle(&a, &b)),
        ];
        for (name, got, want) in checks {
            ensure((got - want).abs() <= tol, || {
                format!("case {case}: {name} {got} vs oracle {want}")
            })?;
        }
    }
    for case in 0..1000 {
        let (a, b) = random_pair(&mut rng, 50);
        let f = |x: f64| x * x * x + 2.0 * x;
        let mapped: Vec<f64> = a.iter().map(|&x| f(x)).collect();
        for (name, m) in [
            ("SRCC", srcc as fn(&[f64], &[f64]) -> campvqa::Result<f64>),
            ("KRCC", krcc),
        ] {
            let (x, y) = (e(m(&a, &b))?, e(m(&mapped, &b))?);
            ensure((x - y).abs() <= tol, || {
                format!("case {case}: {name} changed under a monotone map")
            })?;
        }
    }
    for case in 0..1000 {
        let (a, b) = random_pair(&mut rng, 50);
        let scale = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let shift = rng.random_range(-5.0..5.0);
        let affine: Vec<f64> = a.iter().map(|&x| scale * x + shift).collect();
        for (name, m) in [
            ("PLCC", plcc as fn(&[f64], &[f64]) -> campvqa::Result<f64>),
            ("SRCC", srcc),
            ("KRCC", krcc),
        ] {
            let (x, y) = (e(m(&a, &b))?, e(m(&affine, &b))?);
            ensure((scale.signum() * x - y).abs() <= tol, || {
                format!("case {case}: {name} {x} vs {y} under x -> {scale}x + {shift}")
            })?;
        }
    }
    Ok("1000 oracle cases, 1000 rank-invariance and 1000 affine-invariance cases at 1e-10".into())
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let ds = planted_dataset(1000, 32, 0.02, 7).map_err(|e| e.to_string())?;
    let cfg = EvalConfig::default();
    ensure(cfg.repeats == 21, || {
        format!("default repeats {}", cfg.repeats)
    })?;
    let report = run_protocol(&ds, &TrainConfig::for_dataset_size(ds.len()), &cfg)
        .map_err(|e| e.to_string())?;
    let t = within(start, Duration::from_secs(600))?;
    let m = &report.median;
    ensure(m.srcc >= 0.95 && m.plcc >= 0.95, || {
        format!(
            "median SRCC {:.4}, PLCC {:.4} below 0.95 ({t:.1?})",
            m.srcc, m.plcc
        )
    })?;
    Ok(format!(
        "median SRCC {:.4} PLCC {:.4} over {} repeats in {t:.1?}",
        m.srcc,
        m.plcc,
        report.runs.len()
    ))
}

fn random_finite_f32(rng: &mut ChaCha8Rng) -> f32 {
    loop {
        let v = f32::from_bits(rng.random());
        if v.is_finite() {
            return v;
        }
    }
}

fn format_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut encoded = Vec::new();
    for i in 0..1000 {
        let m = Modality::ALL[rng.random_range(0..Modality::ALL.len())];
        let dim = rng.random_range(1..64);
        let vectors: Vec<Vec<f32>> = (0..rng.random_range(1..8))
            .map(|_| (0..dim).map(|_| random_finite_f32(&mut rng)).collect())
            .collect();
        let id = format!("rec{i:04}");
        let rec = EmbeddingRecord::new(id.clone(), m, vectors).map_err(|e| e.to_string())?;
        let path = tmp.path().join(campvqa::features::cvqf_file_name(&id, m));
        write_cvqf(&rec, &path).map_err(|e| e.to_string())?;
        let back = read_cvqf(&path).map_err(|e| e.to_string())?;
        let bits = |r: &EmbeddingRecord| -> Vec<u32> {
            r.vectors.iter().flatten().map(|v| v.to_bits()).collect()
        };
        ensure(
            back.video_id == id
                && back.modality == m
                && back.dim == dim
                && bits(&back) == bits(&rec),
            || format!("record {i} changed on round trip"),
        )?;
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        ensure(crc == crc32fast::hash(&bytes[16..bytes.len() - 4]), || {
            format!("record {i}: stored CRC is wrong")
        })?;
        let mut flipped = bytes.clone();
        let at = rng.random_range(16..bytes.len() - 4);
        flipped[at] ^= 1 << rng.random_range(0..8);
        ensure(decode_cvqf(&flipped, &id).is_err(), || {
            format!("record {i}: payload bit flip accepted")
        })?;
        encoded.push(bytes);
    }

    // Bytes 6 (modality) and 7 (reserved) are not covered by any check, so
    // the rejection requirement applies to the remaining header bytes.
    let checked: Vec<usize> = (0..6).chain(8..16).collect();
    let (mut rejected, mut fuzzed) = (0, 0);
    for round in 0..20_000 {
        let base = &encoded[round % encoded.len()];
        let mut bytes = base.clone();
        let strict = round % 2 == 0;
        if strict {
            for _ in 0..rng.random_range(1..4) {
                let at = checked[rng.random_range(0..checked.len())];
                bytes[at] = bytes[at].wrapping_add(rng.random_range(1..=255));
            }
        } else {
            for _ in 0..rng.random_range(1..6) {
                let at = rng.random_range(0..16);
                bytes[at] = rng.random();
            }
            match rng.random_range(0..3) {
                0 => bytes.truncate(rng.random_range(0..bytes.len())),
                1 => bytes.extend((0..rng.random_range(1..8)).map(|_| rng.random::<u8>())),
                _ => {}
            }
        }
        let result = catch_unwind(AssertUnwindSafe(|| decode_cvqf(&bytes, "fuzz")));
        let decoded = result.map_err(|_| format!("round {round}: decoder panicked"))?;
        fuzzed += 1;
        if strict && bytes != *base {
            ensure(decoded.is_err(), || {
                format!("round {round}: corrupted header accepted")
            })?;
            rejected += 1;
        }
        if bytes[..] == base[..] {
            continue;
        }
        if let Ok(r) = decoded {
            ensure(r.modality.code() == bytes[6], || {
                format!("round {round}: modality mismatch")
            })?;
        }
    }
    let bad_code = {
        let mut b = encoded[0].clone();
        b[6] = 200;
        decode_cvqf(&b, "x").is_err()
    };
    ensure(bad_code, || "unknown modality code accepted".into())?;
    Ok(format!("1000 records bit-exact with CRC verified; {fuzzed} fuzzed headers, {rejected} corrupt headers rejected, no panics"))
}

fn pipeline_run(root: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let s = |e: campvqa::Error| e.to_string();
    let names: Vec<String> = (0..12).map(|i| format!("clip{i:02}")).collect();
    let mut videos = Vec::new();
    for (i, n) in names.iter().enumerate() {
        let p = root.join(format!("{n}.y4m"));
        std::fs::write(
            &p,
            moving_square_y4m(32 + 8 * (i % 3), 24, 6 + i % 4, 25).map_err(s)?,
        )
        .map_err(|e| e.to_string())?;
        videos.push(p);
    }
    let features = root.join("features");
    std::fs::create_dir_all(&features).map_err(|e| e.to_string())?;
    let cfg: PipelineConfig = serde_json::from_value(serde_json::json!({
        "fdf": {"patch_size": 8, "target_size": 16},
        "segment": {"stride": 2, "length": 4},
        "train": {"hidden": [16, 8], "epochs": 30, "batch_size": 4},
        "eval": {"repeats": 3},
        "seed": 11,
        "paths": {"output_dir": root.join("out"), "feature_dir": features},
    }))
    .map_err(|e| e.to_string())?;

    let o = pipeline::cmd_fragment(&cfg, &videos).map_err(s)?;
    ensure(o.failures.is_empty(), || {
        format!("fragment failures: {:?}", o.failures)
    })?;
    let manifest_path = cfg.manifest_path();
    let mut manifest = DatasetManifest::load(&manifest_path).map_err(s)?;
    for (i, e) in manifest.videos.iter_mut().enumerate() {
        let plan_path = root.join("out").join(&e.video_id).join("plan.json");
        let plan: SegmentPlan =
            serde_json::from_slice(&std::fs::read(plan_path).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        let q = i as f64 / 12.0;
        write_encoder_outputs(
            &features,
            &e.video_id,
            &plan,
            EncoderDims::default(),
            q,
            i as u64,
        )
        .map_err(s)?;
        e.temporal_split = Some([6, 2]);
        e.mos = Some(1.0 + 4.0 * q);
    }
    manifest.save(&manifest_path).map_err(s)?;
    let f = pipeline::cmd_fuse(&cfg).map_err(s)?;
    ensure(f.outcome.failures.is_empty(), || {
        format!("fuse failures: {:?}", f.outcome.failures)
    })?;
    pipeline::cmd_train(&cfg).map_err(s)?;
    pipeline::cmd_predict(&cfg, None).map_err(s)?;
    pipeline::cmd_eval(&cfg).map_err(s)?;
    let read = |name: &str| std::fs::read(root.join("out").join(name)).map_err(|e| e.to_string());
    Ok((read("scores.csv")?, read("report.json")?))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (scores_a, report_a) = pipeline_run(a.path())?;
    let (scores_b, report_b) = pipeline_run(b.path())?;
    ensure(scores_a == scores_b, || {
        "scores.csv differs between runs".into()
    })?;
    ensure(report_a == report_b, || {
        "report.json differs between runs".into()
    })?;
    Ok(format!(
        "scores.csv ({} bytes) and report.json ({} bytes) identical",
        scores_a.len(),
        report_a.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("fdf-oracle-equivalence", fdf_oracle),
        ("fragment-count-arithmetic", k_arithmetic),
        ("loss-identities", loss_identities),
        ("gradient-checks", gradient_checks),
        ("swa-exactness", swa_exactness),
        ("metric-oracles", metric_oracles),
        ("synthetic-end-to-end", synthetic_end_to_end),
        ("format-round-trip", format_round_trip),
        ("determinism", determinism),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let result = catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
