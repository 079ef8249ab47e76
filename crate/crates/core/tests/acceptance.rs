//! End-to-end acceptance criteria. Runs as a plain binary so every criterion
//! prints its own PASS/FAIL line; the process fails if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use semlink::alloc::audit::audit;
use semlink::alloc::{
    avg_bit_energy, gaussian_q, parity_bits_per_block, plan, symbol_error_prob, BlockSizing, BudgetConfig, DigitalParams, ModulationSpec,
};
use semlink::channel::transmit_analog;
use semlink::codec::train::{held_out_mse, train_pair, TrainedCodecs};
use semlink::codec::{finite_difference_energy, sample_correlation, ArchPreset, CodecShape};
use semlink::crlb::{crlb_overall, crlb_transmission_term, empirical_distortion};
use semlink::digital::{dsc_decode, hard_decisions, qpsk_demodulate_llr, qpsk_modulate, LdpcCode, SideInfoLlr};
use semlink::harness::{cmd_crlb, cmd_train, crlb_csv, sweep, ExperimentConfig, LinkContext, Scheme, SweepResult};
use semlink::source::patchify;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn random_bits(n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

/// Adaptive Simpson integral of the standard normal density over `[x, x + 40]`.
fn q_by_quadrature(x: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let f = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (a, b) = (x, x.max(0.0) + 40.0);
    let m = 0.5 * (a + b);
    let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    simpson(&f, a, b, f(a), f(m), f(b), whole, 1e-14, 60)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let modulations = [ModulationSpec::BPSK, ModulationSpec::QPSK, ModulationSpec::QAM16];
    let (mut plans, mut attempts, mut violations) = (0usize, 0usize, Vec::new());
    while plans < 1000 && attempts < 100_000 {
        attempts += 1;
        let modulation = modulations[rng.random_range(0..3)];
        let patches = rng.random_range(1..=64usize);
        let budget = BudgetConfig {
            total_power: 10f64.powf(rng.random_range(1.0..5.0)),
            total_bandwidth: rng.random_range(64..8192),
            error_threshold: 10f64.powf(rng.random_range(-6.0..-0.6)),
            noise_power: 10f64.powf(rng.random_range(-2.5..0.5)),
            charge_metadata: rng.random_bool(0.5),
        };
        let digital = DigitalParams {
            info_bits: rng.random_range(0..20_000),
            block_info_bits: rng.random_range(32..=2048),
            code_rate: rng.random_range(0.05..0.95),
            block_symbols: rng.random_range(16..=1024),
            modulation,
            sizing: BlockSizing::BitsPerSymbol,
        };
        let rho: Vec<f64> = (0..patches).map(|_| rng.random_range(0.0..1.0)).collect();
        let var: Vec<f64> = (0..patches)
            .map(|_| if rng.random_bool(0.05) { 0.0 } else { rng.random_range(1e-4..0.1) })
            .collect();
        let feature_len = 2 * rng.random_range(1..=128usize);
        let Ok(p) = plan(&budget, &rho, &var, &digital, feature_len, 16) else {
            continue;
        };
        plans += 1;
        let power_ok = p.analog_power + p.digital.power <= budget.total_power;
        let bandwidth_ok = p.analog_bandwidth + p.digital.bandwidth + p.metadata_uses <= budget.total_bandwidth;
        let report = audit(&p);
        if !(power_ok && bandwidth_ok && report.passed()) {
            violations.push(format!(
                "plan {plans}: power {power_ok} bandwidth {bandwidth_ok} audit {:?}",
                report.failures().map(|c| c.name).collect::<Vec<_>>()
            ));
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        plans == 1000 && violations.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "{plans} feasible plans from {attempts} configs, {} violations{}, {:.2} s",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let m = ModulationSpec::QPSK;
    let mut worst = 0.0f64;
    for eps in [1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.4] {
        let b = avg_bit_energy(eps, m, 1.0).expect("achievable threshold");
        let back = symbol_error_prob(b, 1.0, m).expect("valid energy");
        worst = worst.max((back - eps).abs() / eps);
    }
    let q = gaussian_q(1.2816);
    let oracle = q_by_quadrature(1.2816);
    let q_ok = (q - 0.1).abs() <= 1e-4 && (q - oracle).abs() <= 1e-4;
    Outcome::new(
        worst <= 1e-9 && q_ok,
        format!("worst relative round-trip error {worst:.2e}; Q(1.2816) = {q:.6} vs quadrature {oracle:.6}"),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    // identity encoder on L = 4: gradient energy L
    let identity = |x: &[f64]| Ok(x.to_vec());
    let g = finite_difference_energy(identity, &[0.1, 0.4, 0.7, 0.2], 1e-4).expect("finite");
    let r = crlb_overall(&[(0, 4.0)], &[(1, 0.5)], 0.1, 0.1, 4, 2).expect("valid partition");
    let hand_t = (0.1 * 1.1 + 0.1) / (1.1 * 4.0);
    let hand_s = 0.1 / (4.0 * 0.5);
    let exact = (r.bound_transmission - hand_t).abs() <= 1e-12
        && (r.bound_synonymous - hand_s).abs() <= 1e-12
        && (r.bound_total - 0.097_727_272_727_272_7).abs() <= 1e-12
        && (g - 4.0).abs() <= 1e-9;

    let grid = [0.0, 5.0, 10.0, 15.0, 20.0];
    let bounds: Vec<f64> = grid
        .iter()
        .map(|snr: &f64| {
            let n = 10f64.powf(-snr / 10.0);
            crlb_overall(&[(0, 4.0)], &[(1, 0.5)], 0.1, n, 4, 2).expect("valid").bound_total
        })
        .collect();
    let monotone = bounds.windows(2).all(|w| w[1] <= w[0]);

    // Monte Carlo: Gaussian patches, identity encoder, semantic noise, unit fading
    let (l, sigma_sem, draws) = (4usize, 0.1f64, 10_000usize);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let source = Normal::new(0.5, 0.2).expect("valid");
    let sem = Normal::new(0.0, sigma_sem.sqrt()).expect("valid");
    let mut margins = Vec::new();
    let mut all_above = true;
    for &snr in &grid {
        let n = 10f64.powf(-snr / 10.0);
        let mut per_draw = Vec::with_capacity(draws);
        for _ in 0..draws {
            let s: Vec<f64> = (0..l).map(|_| source.sample(&mut rng)).collect();
            let sent: Vec<f64> = s.iter().map(|v| v + sem.sample(&mut rng)).collect();
            let x: Vec<Complex64> = sent.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            let y = transmit_analog(&x, Complex64::new(1.0, 0.0), n, &mut rng);
            let received: Vec<f64> = y.iter().flat_map(|c| [c.re, c.im]).collect();
            let d = empirical_distortion(&[&s], &[&received], &[] as &[Vec<f64>], &[] as &[Vec<f64>]).expect("arity");
            per_draw.push(d.empirical_transmission);
        }
        let mean = per_draw.iter().sum::<f64>() / draws as f64;
        let var = per_draw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws - 1) as f64;
        let bound = crlb_transmission_term(l as f64, sigma_sem, n).expect("valid");
        let lower = mean - 3.0 * (var / draws as f64).sqrt();
        all_above &= lower >= bound;
        margins.push(format!("{snr} dB: {lower:.4} >= {bound:.4}"));
    }
    let elapsed = start.elapsed();
    Outcome::new(
        exact && monotone && all_above && elapsed < Duration::from_secs(60),
        format!(
            "hand values {}, monotone {monotone}, empirical 3-sigma lower vs bound [{}], {:.2} s",
            if exact { "match" } else { "MISMATCH" },
            margins.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t_dist = Normal::new(0.0, 1.0).expect("valid");
    let n_dist = Normal::new(0.0, 0.5).expect("valid");
    let t: Vec<f64> = (0..100_000).map(|_| t_dist.sample(&mut rng)).collect();
    let s: Vec<f64> = t.iter().map(|v| v + n_dist.sample(&mut rng)).collect();
    let rho = sample_correlation(&s, &t).expect("non-degenerate");
    let expect = 1.0 / 1.25f64.sqrt();
    let rel = (rho - expect).abs() / expect;
    Outcome::new(rel <= 0.02, format!("rho = {rho:.5}, expected {expect:.5}, relative error {rel:.2e}"))
}

/// Sends `bits` as QPSK over unit-gain AWGN and returns the per-bit LLRs.
fn qpsk_awgn_llr(bits: &[u8], noise_variance: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let x = qpsk_modulate(bits).expect("even length");
    let h = Complex64::new(1.0, 0.0);
    let y = transmit_analog(&x, h, noise_variance, rng);
    qpsk_demodulate_llr(&y, h, noise_variance).expect("positive noise")
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let d = &cfg.digital;
    let parity = parity_bits_per_block(d.block_info_bits, d.code_rate) as usize;
    let dsc_code = LdpcCode::standard(d.block_info_bits as usize, parity, d.ldpc_seed).expect("code");
    let b = &cfg.baseline;
    let baseline_code = LdpcCode::standard(b.info_bits, b.parity_bits, d.ldpc_seed + 1).expect("code");
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // full codewords through the channel
    let mut frame_errors = 0usize;
    for code in [&dsc_code, &baseline_code] {
        for snr in [15.0, 20.0] {
            let n = 10f64.powf(-snr / 10.0);
            for _ in 0..100 {
                let info = random_bits(code.info_bits(), &mut rng);
                let cw = code.encode(&info).expect("encode");
                let out = code.decode(&qpsk_awgn_llr(&cw, n, &mut rng), d.max_iters).expect("decode");
                frame_errors += usize::from(!out.converged || out.codeword[..info.len()] != info[..]);
            }
        }
    }

    // uncoded QPSK bit error rate against Q(sqrt(2 Eb/N0))
    let mut ber_detail = Vec::new();
    let mut ber_ok = true;
    for ebn0_db in [2.0, 4.0, 6.0] {
        let ebn0 = 10f64.powf(ebn0_db / 10.0);
        // unit symbol energy carries two bits
        let n = 0.5 / ebn0;
        let total = 1_000_000usize;
        let mut errors = 0usize;
        for _ in 0..total / 10_000 {
            let bits = random_bits(10_000, &mut rng);
            let decided = hard_decisions(&qpsk_awgn_llr(&bits, n, &mut rng));
            errors += bits.iter().zip(&decided).filter(|(a, b)| a != b).count();
        }
        let ber = errors as f64 / total as f64;
        let theory = gaussian_q((2.0 * ebn0).sqrt());
        let rel = (ber - theory).abs() / theory;
        ber_ok &= rel <= 0.05;
        ber_detail.push(format!("{ebn0_db} dB: {ber:.3e} vs {theory:.3e}"));
    }

    // side-information decoding: 3% flips, parity over QPSK at 8 dB
    let n = 10f64.powf(-0.8);
    let (mut bit_errors, mut bits_total) = (0usize, 0usize);
    for _ in 0..200 {
        let info = random_bits(dsc_code.info_bits(), &mut rng);
        let parity = dsc_code.encode_parity(&info).expect("encode");
        let parity_llr = qpsk_awgn_llr(&parity, n, &mut rng);
        let side: Vec<u8> = info.iter().map(|&b| b ^ u8::from(rng.random_bool(0.03))).collect();
        let out = dsc_decode(&parity_llr, &SideInfoLlr::uniform(side, 0.03), &dsc_code, d.max_iters).expect("decode");
        bit_errors += info.iter().zip(&out.info).filter(|(a, b)| a != b).count();
        bits_total += info.len();
    }
    let residual = bit_errors as f64 / bits_total as f64;
    let elapsed = start.elapsed();
    Outcome::new(
        frame_errors == 0 && ber_ok && residual < 1e-4 && elapsed < Duration::from_secs(120),
        format!(
            "{frame_errors} codeword failures in 400 frames at >= 15 dB; BER [{}]; side-information residual BER {residual:.2e} ({bit_errors}/{bits_total}); {:.1} s",
            ber_detail.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

fn config_for(preset: ArchPreset) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.codec.shape = CodecShape {
        preset,
        ..CodecShape::default()
    };
    cfg
}

struct Trained {
    codecs: TrainedCodecs,
    seconds: f64,
}

fn trained(preset: ArchPreset) -> &'static Trained {
    static SMALL: OnceLock<Trained> = OnceLock::new();
    static BASE: OnceLock<Trained> = OnceLock::new();
    let cell = match preset {
        ArchPreset::Small => &SMALL,
        ArchPreset::Base => &BASE,
    };
    cell.get_or_init(|| {
        let cfg = config_for(preset);
        let start = Instant::now();
        let train = cfg
            .train_corpus
            .load()
            .expect("corpus")
            .iter()
            .map(|im| patchify(im, cfg.patch_edge))
            .collect::<Result<Vec<_>, _>>()
            .expect("patchify");
        let codecs = train_pair(&train, cfg.codec.shape, &cfg.training).expect("training");
        Trained {
            codecs,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

fn criterion_6() -> Outcome {
    let cfg = config_for(ArchPreset::Small);
    let t = &cfg.training;
    let corpus = cfg.train_corpus.load().expect("corpus");
    let setup_ok = corpus.len() == 64
        && corpus.iter().all(|im| im.width() == 32 && im.height() == 32)
        && t.masking_ratio == 0.7
        && t.train_snr_db == 10.0
        && t.epochs == 100;
    let tr = trained(ArchPreset::Small);
    let h = &tr.codecs.history;
    let (first, last) = (h.first().expect("epochs").total, h.last().expect("epochs").total);
    let held = cfg
        .corpus
        .load()
        .expect("corpus")
        .iter()
        .map(|im| patchify(im, cfg.patch_edge))
        .collect::<Result<Vec<_>, _>>()
        .expect("patchify");
    // the ideal codec stands for noiseless full-capacity feature delivery
    let ideal = held_out_mse(&tr.codecs.ideal, &held, 0.0, f64::INFINITY, 6).expect("mse");
    let constrained = held_out_mse(&tr.codecs.constrained, &held, t.masking_ratio, t.train_snr_db, 6).expect("mse");
    Outcome::new(
        setup_ok && last < first && ideal <= constrained && tr.seconds < 600.0,
        format!(
            "loss {first:.4} -> {last:.4} over {} epochs; held-out MSE ideal {ideal:.5} vs constrained {constrained:.5}; training {:.1} s",
            h.len(),
            tr.seconds
        ),
    )
}

fn run_sweep(preset: ArchPreset) -> (SweepResult, f64) {
    let cfg = config_for(preset);
    let tr = trained(preset);
    let start = Instant::now();
    let ctx = LinkContext::with_codecs(cfg, tr.codecs.constrained.clone(), Some(tr.codecs.ideal.clone())).expect("context");
    let result = sweep(&ctx).expect("sweep");
    (result, start.elapsed().as_secs_f64())
}

fn small_sweep() -> &'static (SweepResult, f64) {
    static SWEEP: OnceLock<(SweepResult, f64)> = OnceLock::new();
    SWEEP.get_or_init(|| run_sweep(ArchPreset::Small))
}

fn criterion_7() -> Outcome {
    let cfg = config_for(ArchPreset::Small);
    let (result, seconds) = small_sweep();
    let seconds = seconds + trained(ArchPreset::Small).seconds;
    let setup_ok = cfg.trials == 200 && cfg.snr_db == [0.0, 5.0, 10.0, 15.0, 20.0];
    let psnr = |scheme, snr| result.row(scheme, snr).expect("row").corrected.psnr_db.mean;
    let mut notes = Vec::new();
    let pointwise = result.rows.iter().all(|r| r.corrected.psnr_db.mean >= r.semantic.psnr_db.mean);
    let mut beats = true;
    for &snr in cfg.snr_db.iter().filter(|s| **s >= 10.0) {
        let (da, an) = (psnr(Scheme::DaEsemcom, snr), psnr(Scheme::AnalogOnly, snr));
        beats &= da >= an;
        notes.push(format!("{snr} dB {da:.2} vs {an:.2}"));
    }
    let (lo, hi) = (cfg.snr_db[0], cfg.snr_db[cfg.snr_db.len() - 1]);
    let cliff = psnr(Scheme::DigitalOnlyBaseline, hi) - psnr(Scheme::DigitalOnlyBaseline, lo);
    let analog_drop = psnr(Scheme::AnalogOnly, hi) - psnr(Scheme::AnalogOnly, lo);
    let cliff_ok = cliff >= 6.0 && analog_drop < cliff;
    Outcome::new(
        setup_ok && pointwise && beats && cliff_ok && seconds < 900.0,
        format!(
            "corrected >= semantic at every point: {pointwise}; da_esemcom vs analog_only PSNR [{}]; baseline drop {cliff:.2} dB vs analog_only {analog_drop:.2} dB; {seconds:.1} s",
            notes.join("; ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let base = run_sweep(ArchPreset::Base);
    for (preset, result) in [(ArchPreset::Small, &small_sweep().0), (ArchPreset::Base, &base.0)] {
        for r in result.rows.iter().filter(|r| r.scheme == Scheme::DaEsemcom && r.snr_db >= 10.0) {
            let da = r.corrected.ms_ssim.mean;
            let an = result.row(Scheme::AnalogOnly, r.snr_db).expect("row").corrected.ms_ssim.mean;
            ok &= da > an;
            notes.push(format!("{} {} dB {da:.4} vs {an:.4}", preset.label(), r.snr_db));
        }
    }
    Outcome::new(ok, format!("da_esemcom vs analog_only MS-SSIM [{}]", notes.join("; ")))
}

fn criterion_9() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.training.epochs = 3;
    cfg.trials = 6;
    cfg.digital.calibration_trials = 4;
    let dir = tempfile::tempdir().expect("tempdir");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let trained = cmd_train(&cfg, &out).expect("train");
        let mut run_cfg = cfg.clone();
        run_cfg.codec.checkpoint = Some(trained.codec.clone());
        run_cfg.codec.ideal_checkpoint = Some(trained.ideal.clone());
        let ctx = LinkContext::build(run_cfg).expect("context");
        let sweep_csv = sweep(&ctx).expect("sweep").to_csv();
        let crlb = crlb_csv(&cmd_crlb(&ctx).expect("crlb"));
        outputs.push([
            fs::read(&trained.loss_csv).expect("read"),
            fs::read(&trained.ideal_loss_csv).expect("read"),
            sweep_csv.into_bytes(),
            crlb.into_bytes(),
        ]);
    }
    let names = ["loss.csv", "ideal_loss.csv", "sweep.csv", "crlb.csv"];
    let differing: Vec<&str> = names
        .iter()
        .zip(outputs[0].iter().zip(&outputs[1]))
        .filter(|(_, (a, b))| a != b)
        .map(|(n, _)| *n)
        .collect();
    Outcome::new(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} identical across reruns", names.join(", "))
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("allocator algebra", criterion_1),
        ("error-probability inverse", criterion_2),
        ("distortion bound", criterion_3),
        ("token correlation", criterion_4),
        ("digital chain", criterion_5),
        ("training sanity", criterion_6),
        ("sweep shape", criterion_7),
        ("model-size ablation", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        failed += usize::from(!outcome.passed);
        println!(
            "criterion {} ({name}): {} - {}",
            k + 1,
            if outcome.passed { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
