//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails. Pass criterion numbers as
//! arguments to run a subset.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use zsvc_core::audio::{save_waveform, silence_mask};
use zsvc_core::baseline::{train_linear_baseline, BaselineTrainingConfig, LinearBaseline, LinearBaselineConfig, ParallelCorpus, ParallelPair};
use zsvc_core::data::RunConfig;
use zsvc_core::discriminator::{Critic, Discriminator, DiscriminatorConfig};
use zsvc_core::encoder::{ge2e_loss, train_speaker_encoder, EncoderConfig, EncoderTrainingConfig, SpeakerEncoder, SpeakerUtterances};
use zsvc_core::eval::{aligned_metrics, compare, cyclic_reconstruction_eval, dtw_align_frames, speaker_similarity, speed_benchmark, AlignmentPath, BenchModels, PipelineStage};
use zsvc_core::generator::{ConditioningPair, Converter, Generator, GeneratorConfig, IdentityConverter};
use zsvc_core::mode::training_mode_entries;
use zsvc_core::nn::ops::cin;
use zsvc_core::nn::scalar;
use zsvc_core::pipeline::{convert_command, ConvertRequest, EmbeddingSource, ENCODER_FILE};
use zsvc_core::synthetic::{voice_waveform, SyntheticSpeaker, UtteranceSpec, VoiceProfile};
use zsvc_core::training::{
    loss_cycle, loss_d_adv, loss_g_adv, loss_identity, total_generator_loss, total_generator_value, train_stargan_zsvc, valid_crop, CropPolicy,
    NonParallelDataset, RunOutputs, SpeakerData, StepRecord, TrainingConfig, TrainingState, GENERATOR_FILE,
};
use zsvc_core::{MelSpectrogram, SpeakerEmbedding, HOP_LENGTH, N_MELS, SAMPLE_RATE};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> std::result::Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {:.1}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64()))
}

fn ok<T>(r: zsvc_core::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------------------
// 1. CIN

fn cin_correctness() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (b, c, h, w) = (10, 100, 4, 32);
    let mut x = Vec::with_capacity(b * c * h * w);
    for _ in 0..b * c {
        let (scale, offset) = (rng.random_range(0.5..5.0), rng.random_range(-20.0..20.0));
        x.extend((0..h * w).map(|_| (offset + scale * normal(&mut rng)) as f32));
    }
    let gamma: Vec<f32> = (0..b * c).map(|_| rng.random_range(-3.0..3.0)).collect();
    let beta: Vec<f32> = (0..b * c).map(|_| rng.random_range(-5.0..5.0)).collect();
    let dev = Device::Cpu;
    let y = ok(cin(
        &Tensor::from_vec(x, (b, c, h, w), &dev).unwrap(),
        &Tensor::from_vec(gamma.clone(), (b, c), &dev).unwrap(),
        &Tensor::from_vec(beta.clone(), (b, c), &dev).unwrap(),
    ))?;
    let y = y.reshape((b * c, h * w)).unwrap().to_vec2::<f32>().unwrap();
    let (mut worst_mean, mut worst_std) = (0f64, 0f64);
    for (k, ch) in y.iter().enumerate() {
        let n = ch.len() as f64;
        let mean = ch.iter().map(|&v| v as f64).sum::<f64>() / n;
        let std = (ch.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        worst_mean = worst_mean.max((mean - beta[k] as f64).abs());
        worst_std = worst_std.max((std - (gamma[k] as f64).abs()).abs());
    }
    ensure(worst_mean <= 1e-4, || format!("mean off by {worst_mean:.2e}"))?;
    ensure(worst_std <= 1e-4, || format!("std off by {worst_std:.2e}"))?;
    within(Duration::from_secs(5), started)?;
    Ok(format!("1000 channels, max |mean-beta| {worst_mean:.1e}, max |std-|gamma|| {worst_std:.1e}"))
}

// ---------------------------------------------------------------------------
// 2. Loss identities

/// Scores each item by its mean value.
struct MeanCritic;

impl Critic for MeanCritic {
    fn score(&self, x: &Tensor, _: &Tensor, _: &Tensor) -> zsvc_core::Result<Tensor> {
        Ok(x.flatten_from(1)?.mean(1)?)
    }
}

fn loss_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dev = Device::Cpu;
    let x = Tensor::from_vec((0..3 * 16 * N_MELS).map(|_| normal(&mut rng) as f32 - 5.0).collect::<Vec<_>>(), (3, 16, N_MELS), &dev).unwrap();
    let emb = |rng: &mut ChaCha8Rng| -> Tensor {
        let rows: Vec<Tensor> = (0..3).map(|_| SpeakerEmbedding::random(rng).to_tensor(DType::F32).unwrap()).collect();
        Tensor::stack(&rows, 0).unwrap()
    };
    let (s_src, s_trg) = (emb(&mut rng), emb(&mut rng));
    let id = ok(loss_identity(&IdentityConverter, &x, &s_src).and_then(|t| scalar(&t)))?;
    let cyc = ok(loss_cycle(&IdentityConverter, &x, &s_src, &s_trg).and_then(|t| scalar(&t)))?;
    ensure(id == 0.0 && cyc == 0.0, || format!("identity G gave L_id {id}, L_cyc {cyc}"))?;

    let (a, b) = (1.0, 0.0);
    let real = Tensor::full(a as f32, (3, 16, N_MELS), &dev).unwrap();
    let fake = Tensor::full(b as f32, (3, 16, N_MELS), &dev).unwrap();
    let d = ok(loss_d_adv(&MeanCritic, &fake, &real, &s_src, &s_trg, a, b).and_then(|t| scalar(&t)))?;
    ensure(d == 0.0, || format!("L_D-adv {d} with D(fake)=b, D(real)=a"))?;

    let mut worst = 0f64;
    for _ in 0..1000 {
        let (li, lc, la) = (rng.random_range(0.0..10.0), rng.random_range(0.0..1e4), rng.random_range(0.0..5.0));
        let (wi, wc) = (rng.random_range(0.0..5.0), rng.random_range(0.0..10.0));
        let t = |v: f64| Tensor::new(v, &dev).unwrap();
        let got = ok(total_generator_loss(&t(li), &t(lc), &t(la), wi, wc).and_then(|t| scalar(&t)))?;
        let want = wi * li + wc * lc + la;
        ensure(total_generator_value(li, lc, la, wi, wc) == want, || "scalar total differs".into())?;
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    ensure(worst <= 4.0 * f64::EPSILON, || format!("weighted total off by {worst:.1e} relative"))?;
    Ok(format!("L_id = L_cyc = L_D-adv = 0 exactly; total within {worst:.1e} over 1000 draws"))
}

// ---------------------------------------------------------------------------
// 3. Gradient oracle

/// Compares the analytic gradient of `f` with central differences at
/// `probes` random coordinates of `vars`. Returns the worst relative error.
fn fd_check(vars: &[Var], probes: usize, seed: u64, f: &dyn Fn() -> Tensor) -> std::result::Result<f64, String> {
    let grads = f().backward().map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = vars.iter().map(|v| v.elem_count()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f64;
    for _ in 0..probes {
        let mut k = rng.random_range(0..total);
        let mut vi = 0;
        while k >= sizes[vi] {
            k -= sizes[vi];
            vi += 1;
        }
        let var = &vars[vi];
        let shape = var.shape().clone();
        let base = var.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all().unwrap().to_vec1::<f64>().unwrap()[k],
            None => 0.0,
        };
        let h = 1e-6 * base[k].abs().max(1.0);
        let eval = |delta: f64| -> f64 {
            let mut v = base.clone();
            v[k] += delta;
            var.set(&Tensor::from_vec(v, shape.clone(), &Device::Cpu).unwrap()).unwrap();
            f().to_scalar::<f64>().unwrap()
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        var.set(&Tensor::from_vec(base, shape, &Device::Cpu).unwrap()).unwrap();
        let denom = fd.abs().max(analytic.abs());
        let err = if denom < 1e-8 { 0.0 } else { (fd - analytic).abs() / denom };
        if err > 1e-3 {
            return Err(format!("probe {k} of var {vi}: analytic {analytic:.6e}, fd {fd:.6e}"));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

fn random_var(shape: &[usize], scale: f64, offset: f64, rng: &mut ChaCha8Rng) -> Var {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| offset + scale * normal(rng)).collect();
    Var::from_tensor(&Tensor::from_vec(v, shape, &Device::Cpu).unwrap()).unwrap()
}

fn gradient_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    const PROBES: usize = 24;

    let e = random_var(&[4, 3, 8], 1.0, 0.0, &mut rng);
    let w = Var::new(&[10.0f64], &Device::Cpu).unwrap();
    let b = Var::new(&[-5.0f64], &Device::Cpu).unwrap();
    let ge2e = fd_check(&[e.clone(), w.clone(), b.clone()], PROBES, 31, &|| {
        ge2e_loss(e.as_tensor(), w.as_tensor(), b.as_tensor()).unwrap()
    })?;

    let x = random_var(&[2, 3, 4, 6], 2.0, 1.0, &mut rng);
    let gamma = random_var(&[2, 3], 1.0, 0.0, &mut rng);
    let beta = random_var(&[2, 3], 1.0, 0.0, &mut rng);
    let weight = random_var(&[2, 3, 4, 6], 1.0, 0.0, &mut rng).as_tensor().clone();
    let cin_err = fd_check(&[x.clone(), gamma.clone(), beta.clone()], PROBES, 32, &|| {
        let y = cin(x.as_tensor(), gamma.as_tensor(), beta.as_tensor()).unwrap();
        (y * &weight).unwrap().sum_all().unwrap()
    })?;

    let cfg = GeneratorConfig {
        blocks: 2,
        central_channels: 16,
        ..GeneratorConfig::tiny()
    };
    let g = ok(Generator::new(cfg, DType::F64, 4))?;
    let t = 16;
    let d = ok(Discriminator::new(DiscriminatorConfig::tiny(t), DType::F64, 5))?;
    let xs = random_var(&[1, t, N_MELS], 1.0, -4.0, &mut rng).as_tensor().clone();
    let s_src = SpeakerEmbedding::random(&mut rng).to_tensor(DType::F64).unwrap();
    let s_trg = SpeakerEmbedding::random(&mut rng).to_tensor(DType::F64).unwrap();
    let total = || {
        let l_id = loss_identity(&g, &xs, &s_src).unwrap();
        let l_cyc = loss_cycle(&g, &xs, &s_src, &s_trg).unwrap();
        let conv = g.convert(&xs, &s_src, &s_trg).unwrap();
        let l_adv = loss_g_adv(&d, &conv, &s_src, &s_trg, 1.0).unwrap();
        total_generator_loss(&l_id, &l_cyc, &l_adv, 5.0, 10.0).unwrap()
    };
    let g_err = fd_check(&g.params().vars(), PROBES, 33, &total)?;
    within(Duration::from_secs(120), started)?;
    Ok(format!(
        "{PROBES} probes each; worst rel err ge2e {ge2e:.1e}, cin {cin_err:.1e}, total G loss {g_err:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 4. DTW oracle

fn euclid(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        s += (x as f64 - y as f64).powi(2);
    }
    s.sqrt()
}

/// Minimal cost over every monotone path from (0, 0) to the far corner,
/// enumerated one by one.
fn exhaustive(a: &[Vec<f32>], b: &[Vec<f32>]) -> f64 {
    fn walk(a: &[Vec<f32>], b: &[Vec<f32>], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + euclid(&a[i], &b[j]);
        if (i, j) == (a.len() - 1, b.len() - 1) {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

fn dtw_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..500 {
        let width = rng.random_range(1..=4);
        let seq = |rng: &mut ChaCha8Rng| -> Vec<Vec<f32>> {
            let n = rng.random_range(1..=8);
            (0..n).map(|_| (0..width).map(|_| rng.random_range(-3.0f32..3.0)).collect()).collect()
        };
        let (a, b) = (seq(&mut rng), seq(&mut rng));
        let path: AlignmentPath = dtw_align_frames(&a, &b);
        let want = exhaustive(&a, &b);
        ensure(path.cost == want, || format!("case {case}: dtw {} vs exhaustive {want}", path.cost))?;
        ensure(path.is_valid(a.len(), b.len()), || format!("case {case}: invalid path"))?;
        let along: f64 = path.pairs.iter().fold(0.0, |s, &(i, j)| s + euclid(&a[i], &b[j]));
        ensure(along == path.cost, || format!("case {case}: path sums to {along}, reported {}", path.cost))?;
    }
    within(Duration::from_secs(60), started)?;
    Ok("500 instances, costs equal exhaustive minimum exactly".into())
}

// ---------------------------------------------------------------------------
// 5. Training contract

fn toy_speakers(seeds: &[u64], utts: usize, frames: usize) -> Vec<SpeakerUtterances> {
    seeds
        .iter()
        .map(|&s| {
            let spk = SyntheticSpeaker::from_seed(s);
            SpeakerUtterances {
                speaker_id: format!("spk{s}"),
                utterances: (0..utts)
                    .map(|u| spk.utterance(&UtteranceSpec { frames, seed: s * 10_000 + u as u64 }))
                    .collect(),
            }
        })
        .collect()
}

fn training_contract() -> Check {
    let started = Instant::now();
    let k = 96;
    let cfg = TrainingConfig {
        fixed_crop_k: k,
        batch_size: 1,
        epochs: 300,
        seed: 5,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let speakers = toy_speakers(&[1, 2], 6, 200)
        .into_iter()
        .map(|s| SpeakerData {
            speaker_id: s.speaker_id,
            embedding: SpeakerEmbedding::random(&mut rng),
            utterances: s.utterances,
        })
        .collect();
    let data = ok(NonParallelDataset::new(speakers))?;
    let mut state = ok(TrainingState::new(GeneratorConfig::tiny(), DiscriminatorConfig::tiny(k), &cfg))?;
    let log = ok(train_stargan_zsvc(&mut state, &data, &cfg, &RunOutputs::default()))?;
    ensure(log.len() == 300, || format!("{} steps logged", log.len()))?;
    for r in &log {
        ensure(r.g_grad_norm_clipped <= 1.0 && r.d_grad_norm_clipped <= 1.0, || {
            format!("step {}: clipped norms {} / {}", r.step, r.g_grad_norm_clipped, r.d_grad_norm_clipped)
        })?;
        ensure(r.d_lr / r.g_lr == 0.5, || format!("step {}: d_lr/g_lr = {}", r.step, r.d_lr / r.g_lr))?;
        ensure(!r.dropout_active && r.epoch < 3000, || format!("step {}: dropout active", r.step))?;
        ensure(r.crop_frames == k, || format!("step {}: fixed crop {}", r.step, r.crop_frames))?;
    }
    ensure(!cfg.dropout_active(2999) && cfg.dropout_active(3000), || "dropout schedule boundary".into())?;

    let corpus = ParallelCorpus::new(
        toy_speakers(&[3], 4, 330)[0]
            .utterances
            .iter()
            .enumerate()
            .map(|(i, m)| ParallelPair { id: format!("p{i}"), source: m.clone(), target: m.clone() })
            .collect(),
    );
    let mut baseline = ok(LinearBaseline::new(LinearBaselineConfig { layers: vec![(4, 5), (4, 5), (2, 3), (1, 3)] }, DType::F32, 5))?;
    let bcfg = BaselineTrainingConfig {
        steps: 300,
        batch_size: 1,
        lr_grid: vec![],
        validate_every: 0,
        seed: 5,
        ..Default::default()
    };
    ensure(matches!(bcfg.crops, CropPolicy::Variable(_)), || "baseline crops are not variable".into())?;
    let blog = ok(train_linear_baseline(&mut baseline, &corpus, None, &bcfg))?;
    let mut seen = std::collections::BTreeSet::new();
    for r in &blog {
        ensure(valid_crop(r.crop_frames) && r.crop_frames % 32 == 0 && (96..=320).contains(&r.crop_frames), || {
            format!("baseline step {}: crop {}", r.step, r.crop_frames)
        })?;
        seen.insert(r.crop_frames);
    }
    within(Duration::from_secs(300), started)?;
    Ok(format!(
        "300 GAN steps at K={k} and 300 baseline steps over crops {:?} ({:.0}s)",
        seen,
        started.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 6 and 10 share the toy encoder.

const TOY_ENCODER_SPEAKERS: [u64; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

fn toy_encoder() -> zsvc_core::Result<(SpeakerEncoder, Vec<f64>)> {
    let init = SpeakerEncoder::new(EncoderConfig { hidden: 32, layers: 1 }, DType::F32, 0)?;
    let cfg = EncoderTrainingConfig {
        speakers_per_batch: 8,
        utterances_per_speaker: 4,
        crop_frames: 64,
        epochs: 1,
        steps_per_epoch: 200,
        lr_start: 1e-3,
        lr_end: 1e-3,
        seed: 5,
        ..Default::default()
    };
    let (enc, log) = train_speaker_encoder(&init, &toy_speakers(&TOY_ENCODER_SPEAKERS, 12, 160), &cfg)?;
    Ok((enc, log.iter().map(|r| r.loss).collect()))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// 6. Toy overfit

fn toy_overfit() -> Check {
    let started = Instant::now();
    let (encoder, _) = ok(toy_encoder())?;
    // Nine minutes of audio at one frame per hop, split over two speakers.
    let total_frames = (9.0 * 60.0 * SAMPLE_RATE as f64 / HOP_LENGTH as f64).ceil() as usize;
    let frames = 258;
    let utts = (total_frames / 2).div_ceil(frames);
    let data = ok(NonParallelDataset::with_encoder(&encoder, toy_speakers(&[1, 2], utts, frames)))?;
    let k = 96;
    let cfg = TrainingConfig {
        fixed_crop_k: k,
        batch_size: 1,
        epochs: 3000,
        g_lr: 1e-3,
        seed: 11,
        ..Default::default()
    };
    let mut state = ok(TrainingState::new(GeneratorConfig::tiny(), DiscriminatorConfig::tiny(k), &cfg))?;
    let log: Vec<StepRecord> = ok(train_stargan_zsvc(&mut state, &data, &cfg, &RunOutputs::default()))?;
    let wid: Vec<f64> = log.iter().map(|r| r.weighted_id).collect();
    let at50 = mean(&wid[45..=55]);
    let end = mean(&wid[wid.len() - 11..]);

    let g = &state.generator;
    let (a, b) = (SyntheticSpeaker::from_seed(1), SyntheticSpeaker::from_seed(2));
    let pair = ConditioningPair::new(data.speakers()[0].embedding.clone(), data.speakers()[1].embedding.clone());
    let (mut recon, mut src_trg, mut conv_e, mut src_e) = (0.0, 0.0, 0.0, 0.0);
    let held_out = 4;
    for i in 0..held_out {
        let x = a.utterance(&UtteranceSpec { frames: 200, seed: 900 + i });
        let y = b.utterance(&UtteranceSpec { frames: 200, seed: 950 + i });
        recon += ok(cyclic_reconstruction_eval(g, &encoder, &x, &pair))?.mae;
        src_trg += ok(compare(&encoder, &x, &y))?.mae;
        let c = ok(g.generate_padded(&x, &pair))?;
        conv_e += ok(speaker_similarity(&encoder, &c, &y))?;
        src_e += ok(speaker_similarity(&encoder, &x, &y))?;
    }
    let n = held_out as f64;
    let (recon, src_trg, conv_e, src_e) = (recon / n, src_trg / n, conv_e / n, src_e / n);
    let detail = format!(
        "{} frames, {} steps; (a) weighted L_id {at50:.4} -> {end:.4}; (b) cycle MAE {recon:.3} vs src-trg {src_trg:.3}; \
         (c) e_norm conv {conv_e:.3} vs src {src_e:.3}; {:.0}s",
        2 * utts * frames,
        log.len(),
        started.elapsed().as_secs_f64()
    );
    ensure(2 * utts * frames >= total_frames && log.len() <= 3000, || detail.clone())?;
    ensure(end <= 0.5 * at50, || format!("(a) failed: {detail}"))?;
    ensure(recon < src_trg, || format!("(b) failed: {detail}"))?;
    ensure(conv_e < src_e, || format!("(c) failed: {detail}"))?;
    within(Duration::from_secs(1800), started).map_err(|e| format!("{e}: {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 7. Zero-shot contract

fn zero_shot_contract() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::default();
    cfg.paths.work_dir = dir.path().join("work");
    cfg.evaluation.vocoder_iterations = 4;
    let ck = cfg.paths.checkpoints();
    std::fs::create_dir_all(&ck).map_err(|e| e.to_string())?;
    // The generator never saw these voices: it is freshly initialised and
    // the encoder is trained on synthetic spectra only.
    let encoder = ok(SpeakerEncoder::new(EncoderConfig { hidden: 16, layers: 1 }, DType::F32, 7))?;
    ok(encoder.save(ck.join(ENCODER_FILE), 7, "acceptance"))?;
    let generator = ok(Generator::new(GeneratorConfig::tiny(), DType::F32, 7))?;
    ok(generator.save(ck.join(GENERATOR_FILE), 7, "acceptance"))?;
    let before = std::fs::read(ck.join(GENERATOR_FILE)).map_err(|e| e.to_string())?;

    let wav = |name: &str, voice: u64, secs: f64, seed: u64| {
        let p = dir.path().join(name);
        save_waveform(&p, &voice_waveform(&VoiceProfile::from_seed(voice), secs, seed)).unwrap();
        p
    };
    let input = wav("input.wav", 41, 1.3, 1);
    let req = ConvertRequest {
        source_wav: input.clone(),
        source: EmbeddingSource::Utterances(vec![input.clone(), wav("src2.wav", 41, 1.0, 2)]),
        target: EmbeddingSource::Utterances(vec![wav("trg1.wav", 42, 1.0, 3), wav("trg2.wav", 42, 1.0, 4)]),
        output: dir.path().join("out/converted"),
        vocode: true,
    };
    let entries = training_mode_entries();
    let out = ok(convert_command(&cfg, &req))?;
    ensure(training_mode_entries() == entries, || "convert entered training mode".into())?;
    let src_frames = ok(zsvc_core::audio::load_waveform(&input).and_then(|w| zsvc_core::audio::mel_spectrogram(&w)))?.n_frames();
    let conv = &out.converted;
    ensure(conv.n_frames() == src_frames, || format!("{} frames in, {} out", src_frames, conv.n_frames()))?;
    ensure(conv.as_slice().iter().all(|v| v.is_finite()), || "non-finite output".into())?;
    ensure(out.mel_path.is_file() && out.provenance_path.is_file(), || "outputs missing".into())?;
    ensure(out.wav_path.as_ref().is_some_and(|p| p.is_file()), || "waveform missing".into())?;
    let after = std::fs::read(ck.join(GENERATOR_FILE)).map_err(|e| e.to_string())?;
    ensure(before == after, || "generator checkpoint changed".into())?;
    Ok(format!("{src_frames} frames in and out, no training-mode entry, checkpoint untouched"))
}

// ---------------------------------------------------------------------------
// 8. Speed scaling

fn speed_scaling() -> Check {
    let generator = ok(Generator::new(GeneratorConfig::default(), DType::F32, 8))?;
    let encoder = ok(SpeakerEncoder::new(EncoderConfig::default(), DType::F32, 8))?;
    let models = BenchModels {
        generator: &generator,
        encoder: &encoder,
        vocoder: None,
    };
    let short = ok(speed_benchmark(&models, PipelineStage::Generator, 2.5, 2, 5))?;
    let long = ok(speed_benchmark(&models, PipelineStage::Generator, 10.0, 2, 5))?;
    let ratio = long.ms_per_second / short.ms_per_second;
    let detail = format!(
        "default generator: {:.2} ms/s at 2.5 s, {:.2} ms/s at 10 s (ratio {ratio:.3})",
        short.ms_per_second, long.ms_per_second
    );
    ensure((ratio - 1.0).abs() <= 0.25, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 9. Evaluation protocol

fn mel(frames: &[Vec<f32>]) -> MelSpectrogram {
    MelSpectrogram::new(frames.concat(), frames.len()).unwrap()
}

fn evaluation_protocol() -> Check {
    let alt = |a: f32, b: f32| -> Vec<f32> { (0..N_MELS).map(|j| if j % 2 == 0 { a } else { b }).collect() };
    let flat = |v: f32| vec![v; N_MELS];
    // Frame 0: constant 1 vs 2. Frame 1: silent target. Frame 2: +-1 vs
    // +-3. Frame 3: (1, 0) vs (0, 1), orthogonal.
    let target = vec![flat(1.0), flat(-12.0), alt(1.0, -1.0), alt(1.0, 0.0)];
    let converted = vec![flat(2.0), flat(5.0), alt(3.0, -3.0), alt(0.0, 1.0)];
    let path = AlignmentPath {
        pairs: (0..4).map(|i| (i, i)).collect(),
        cost: 0.0,
    };
    let (t, c) = (mel(&target), mel(&converted));
    let m = ok(aligned_metrics(&c, &t, &path, &silence_mask(&t)))?;
    // Kept frames 0, 2, 3: |d| = 1, 2, 1 everywhere; d^2 = 1, 4, 1;
    // cosines 1, 1, 0.
    let (mae, mse, cos) = (4.0 / 3.0, 2.0, 2.0 / 3.0);
    ensure(m.frames_evaluated == 3, || format!("{} frames evaluated", m.frames_evaluated))?;
    ensure(
        (m.mae - mae).abs() <= 1e-6 && (m.mse - mse).abs() <= 1e-6 && (m.cos_theta - cos).abs() <= 1e-6,
        || format!("got mae {} mse {} cos {}", m.mae, m.mse, m.cos_theta),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..200 {
        let mut mutated = target.clone();
        mutated[1] = (0..N_MELS).map(|_| rng.random_range(-14.0f32..-10.5)).collect();
        let mut conv = converted.clone();
        conv[1] = (0..N_MELS).map(|_| rng.random_range(-20.0f32..20.0)).collect();
        let tm = mel(&mutated);
        let mask = silence_mask(&tm);
        ensure(!mask.flags[1], || format!("trial {trial}: mutated frame not silent"))?;
        let m2 = ok(aligned_metrics(&mel(&conv), &tm, &path, &mask))?;
        ensure(m2 == m, || format!("trial {trial}: metrics moved to {m2:?}"))?;
    }
    Ok(format!("mae {:.6} mse {:.6} cos {:.6}; 200 silent-frame mutations leave metrics unchanged", m.mae, m.mse, m.cos_theta))
}

// ---------------------------------------------------------------------------
// 10. Encoder invariants

fn encoder_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (encoder, losses) = ok(toy_encoder())?;
    let fresh = ok(SpeakerEncoder::new(EncoderConfig::default(), DType::F32, 10))?;
    let mut worst = 0f64;
    for (i, enc) in [&encoder, &fresh].into_iter().enumerate() {
        for u in 0..10u64 {
            let frames = rng.random_range(1..200);
            let m = if u == 0 {
                MelSpectrogram::new(vec![-11.5; frames * N_MELS], frames).unwrap()
            } else {
                SyntheticSpeaker::from_seed(20 + u).utterance(&UtteranceSpec { frames, seed: u })
            };
            let e = ok(enc.encode_utterance(&m))?;
            worst = worst.max((e.norm() - 1.0).abs());
            ensure((e.norm() - 1.0).abs() <= 1e-5, || format!("encoder {i}: norm {}", e.norm()))?;
        }
    }

    let (n, m, d) = (4, 5, 16);
    let raw: Vec<f64> = (0..n * m * d).map(|_| normal(&mut rng)).collect();
    let w = Tensor::new(&[10.0f64], &Device::Cpu).unwrap();
    let b = Tensor::new(&[-5.0f64], &Device::Cpu).unwrap();
    let loss = |v: &[f64]| ge2e_loss(&Tensor::from_slice(v, (n, m, d), &Device::Cpu).unwrap(), &w, &b).unwrap().to_scalar::<f64>().unwrap();
    let base = loss(&raw);
    let mut perm_worst = 0f64;
    for _ in 0..20 {
        let mut shuffled = raw.clone();
        for spk in 0..n {
            let mut order: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            for (dst, &src) in order.iter().enumerate() {
                let (to, from) = ((spk * m + dst) * d, (spk * m + src) * d);
                shuffled[to..to + d].copy_from_slice(&raw[from..from + d]);
            }
        }
        perm_worst = perm_worst.max((loss(&shuffled) - base).abs());
    }
    ensure(perm_worst <= 1e-12 * base.abs().max(1.0), || format!("permutation moved GE2E by {perm_worst:.1e}"))?;

    let first = mean(&losses[..10]);
    let last = mean(&losses[losses.len() - 10..]);
    ensure(losses.len() == 200 && last <= 0.5 * first, || format!("GE2E {first:.4} -> {last:.4} over {} steps", losses.len()))?;
    Ok(format!(
        "max |norm-1| {worst:.1e}; permutation delta {perm_worst:.1e}; 8-speaker GE2E {first:.4} -> {last:.4} in 200 steps"
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 10] = [
        (1, "cin-correctness", cin_correctness),
        (2, "loss-identities", loss_identities),
        (3, "gradient-oracle", gradient_oracle),
        (4, "dtw-oracle", dtw_oracle),
        (5, "training-contract", training_contract),
        (6, "toy-overfit", toy_overfit),
        (7, "zero-shot-contract", zero_shot_contract),
        (8, "speed-scaling", speed_scaling),
        (9, "evaluation-protocol", evaluation_protocol),
        (10, "encoder-invariants", encoder_invariants),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
