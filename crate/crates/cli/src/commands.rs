use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bwe_core::metrics::{evaluate, EvalReport};
use bwe_core::refiner::write_mask_csv;
use bwe_core::vocoder::load_weights;
use bwe_core::{
    default_crossover, degrade, refine, resample, CrossoverSpec, CrossoverVariant, DegradeSpec,
    ResampleMethod, VocoderConfig, VocoderModel, Waveform, PIPELINE_RATE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::wav::{read_wav, write_wav, OutputFormat, MAX_RATE, MIN_RATE};
use crate::{BenchArgs, CrossoverArgs, DegradeArgs, EnhanceArgs, EvalArgs, MaskArgs, ModelArgs, RateChoice};

/// Rates drawn by `degrade --rate random`.
pub const RANDOM_RATES: [u32; 3] = [8_000, 12_000, 16_000];
/// Band-limit assumed by `bench` when no crossover flags are given.
pub const BENCH_INPUT_RATE: u32 = 8_000;
/// Relative length difference above which `eval` warns before trimming.
pub const TRIM_WARN_RATIO: f64 = 1e-3;

pub const UNTRAINED_WARNING: &str =
    "WARNING: untrained weights; no --weights given, using a seeded random model. Output is not a meaningful bandwidth extension.";

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceOutcome {
    pub input: PathBuf,
    pub output: PathBuf,
    pub input_rate: u32,
    pub crossover: CrossoverSpec,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeOutcome {
    pub rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub duration_s: f64,
    pub batch: usize,
    pub warmup: usize,
    pub iters: usize,
    pub threads: usize,
    pub parameters: usize,
    pub untrained: bool,
    /// Median wall time of one batch.
    pub latency_s: f64,
    /// `latency_s / (duration_s * batch)`
    pub rtf: f64,
    /// `1 / rtf`
    pub speed_x: f64,
    pub latencies_s: Vec<f64>,
    pub crossover: CrossoverSpec,
}

pub fn thread_count(requested: Option<usize>) -> Result<usize, CliError> {
    match requested {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(num_cpus::get_physical().max(1)),
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))
}

/// Loads `--weights`, or builds the seeded random model and warns.
pub fn load_model(args: &ModelArgs, err: &mut dyn Write) -> Result<(VocoderModel, bool), CliError> {
    match &args.weights {
        Some(path) => {
            let model = load_weights(path).map_err(|e| match e {
                bwe_core::Error::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
                other => other.into(),
            })?;
            if model.config.sample_rate != PIPELINE_RATE {
                return Err(CliError::Format(format!(
                    "{}: model runs at {} Hz, expected {PIPELINE_RATE}",
                    path.display(),
                    model.config.sample_rate
                )));
            }
            Ok((model, false))
        }
        None => {
            writeln!(err, "{UNTRAINED_WARNING}")?;
            Ok((VocoderModel::init_random(VocoderConfig::default(), args.seed)?, true))
        }
    }
}

/// Applies the crossover overrides on top of the default for the input rate.
pub fn resolve_crossover(args: &CrossoverArgs, header_rate: u32) -> Result<(u32, CrossoverSpec), CliError> {
    let input_rate = args.input_rate.unwrap_or(header_rate);
    if !(MIN_RATE..=MAX_RATE).contains(&input_rate) {
        return Err(CliError::Usage(format!(
            "input rate {input_rate} Hz outside {MIN_RATE}..={MAX_RATE}"
        )));
    }
    let base = default_crossover(input_rate)?;
    let spec = CrossoverSpec::new(
        args.f_start.unwrap_or(base.f_start),
        args.f_end.unwrap_or(base.f_end),
        args.variant.unwrap_or(base.variant),
    )?;
    spec.validate(PIPELINE_RATE)?;
    Ok((input_rate, spec))
}

/// Resample to 48 kHz, generate, refine.
pub fn enhance_waveform(model: &VocoderModel, input: &Waveform, spec: &CrossoverSpec) -> Result<Waveform, CliError> {
    let y = resample(input, PIPELINE_RATE, ResampleMethod::sinc())?;
    let x_gen = model.generate(&y)?;
    Ok(refine(&y, &x_gen, spec)?)
}

fn output_paths(args: &EnhanceArgs) -> Result<Vec<PathBuf>, CliError> {
    match (&args.output, &args.output_dir) {
        (Some(out), None) if args.inputs.len() == 1 => Ok(vec![out.clone()]),
        (Some(_), None) => Err(CliError::Usage(
            "--output takes a single input; use --output-dir for several".into(),
        )),
        (None, Some(dir)) => args
            .inputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|name| dir.join(name))
                    .ok_or_else(|| CliError::Usage(format!("{} has no file name", p.display())))
            })
            .collect(),
        _ => Err(CliError::Usage("one of --output or --output-dir is required".into())),
    }
}

fn output_format(pcm16: bool) -> OutputFormat {
    if pcm16 {
        OutputFormat::Pcm16
    } else {
        OutputFormat::Float32
    }
}

pub fn cmd_enhance(args: &EnhanceArgs, err: &mut dyn Write) -> Result<Vec<EnhanceOutcome>, CliError> {
    let outputs = output_paths(args)?;
    let threads = thread_count(args.model.threads)?;
    let (model, _) = load_model(&args.model, err)?;
    let format = output_format(args.pcm16);
    thread_pool(threads)?.install(|| {
        args.inputs
            .par_iter()
            .zip(outputs.par_iter())
            .map(|(input, output)| {
                let start = Instant::now();
                let w = read_wav(input)?;
                let (input_rate, crossover) = resolve_crossover(&args.crossover, w.sample_rate())?;
                let enhanced = enhance_waveform(&model, &w, &crossover)?;
                write_wav(output, &enhanced, format)?;
                Ok(EnhanceOutcome {
                    input: input.clone(),
                    output: output.clone(),
                    input_rate,
                    crossover,
                    elapsed_s: start.elapsed().as_secs_f64(),
                })
            })
            .collect()
    })
}

pub fn cmd_degrade(args: &DegradeArgs) -> Result<DegradeOutcome, CliError> {
    let rate = match args.rate {
        RateChoice::Fixed(r) => r,
        RateChoice::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            RANDOM_RATES[rng.random_range(0..RANDOM_RATES.len())]
        }
    };
    let spec = DegradeSpec::new(rate, args.method, args.quant_bits)?;
    let w = read_wav(&args.input)?;
    if w.sample_rate() != PIPELINE_RATE {
        return Err(CliError::Format(format!(
            "{}: degrade expects {PIPELINE_RATE} Hz input, got {}",
            args.input.display(),
            w.sample_rate()
        )));
    }
    write_wav(&args.output, &degrade(&w, &spec)?, output_format(args.pcm16))?;
    Ok(DegradeOutcome { rate })
}

fn at_pipeline_rate(w: Waveform) -> Result<Waveform, CliError> {
    Ok(resample(&w, PIPELINE_RATE, ResampleMethod::sinc())?)
}

fn eval_pair(reference: &Waveform, path: &Path, args: &EvalArgs) -> Result<(EvalReport, Option<String>), CliError> {
    let estimate = read_wav(path)?;
    if estimate.sample_rate() != reference.sample_rate() {
        return Err(CliError::Format(format!(
            "{}: rate {} Hz differs from reference {} Hz",
            path.display(),
            estimate.sample_rate(),
            reference.sample_rate()
        )));
    }
    let (input_rate, crossover) = resolve_crossover(&args.crossover, estimate.sample_rate())?;
    let n = reference.len().min(estimate.len());
    let longest = reference.len().max(estimate.len());
    let warning = (longest - n > 0 && (longest - n) as f64 > TRIM_WARN_RATIO * longest as f64).then(|| {
        format!(
            "warning: {}: length {} vs reference {}, trimming to {n}",
            path.display(),
            estimate.len(),
            reference.len()
        )
    });
    let r = at_pipeline_rate(reference.clone().fit_to_len(n))?;
    let e = at_pipeline_rate(estimate.fit_to_len(n))?;
    let metrics = evaluate(&r, &e)?;
    Ok((
        EvalReport::new(path.display().to_string(), metrics, input_rate, crossover),
        warning,
    ))
}

/// Scores each estimate against the reference. Inputs are trimmed to the
/// shorter length and brought to 48 kHz; all pairs are scored before
/// anything is returned.
pub fn cmd_eval(args: &EvalArgs, err: &mut dyn Write) -> Result<Vec<EvalReport>, CliError> {
    let threads = thread_count(args.threads)?;
    let reference = read_wav(&args.reference)?;
    let results: Vec<(EvalReport, Option<String>)> = thread_pool(threads)?.install(|| {
        args.estimates
            .par_iter()
            .map(|p| eval_pair(&reference, p, args))
            .collect::<Result<_, _>>()
    })?;
    let mut reports = Vec::with_capacity(results.len());
    for (report, warning) in results {
        if let Some(w) = warning {
            writeln!(err, "{w}")?;
        }
        reports.push(report);
    }
    Ok(reports)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Times generate + refine over a batch of synthetic 48 kHz noise clips.
/// Input synthesis and resampling are outside the timed region.
pub fn cmd_bench(args: &BenchArgs, err: &mut dyn Write) -> Result<BenchReport, CliError> {
    if !(args.duration.is_finite() && args.duration > 0.0) {
        return Err(CliError::Usage(format!("--duration must be positive, got {}", args.duration)));
    }
    if args.batch == 0 || args.iters == 0 {
        return Err(CliError::Usage("--batch and --iters must be at least 1".into()));
    }
    let threads = thread_count(args.model.threads)?;
    let (model, untrained) = load_model(&args.model, err)?;
    let (_, crossover) = resolve_crossover(&args.crossover, BENCH_INPUT_RATE)?;
    let len = (args.duration * f64::from(PIPELINE_RATE)).round() as usize;
    let clips = (0..args.batch)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(args.model.seed.wrapping_add(i as u64));
            Waveform::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect(), PIPELINE_RATE)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pool = thread_pool(threads)?;
    let step = || -> Result<(), CliError> {
        pool.install(|| {
            clips.par_iter().try_for_each(|y| {
                let x_gen = model.generate(y)?;
                refine(y, &x_gen, &crossover)?;
                Ok(())
            })
        })
    };
    for _ in 0..args.warmup {
        step()?;
    }
    let mut latencies = Vec::with_capacity(args.iters);
    for _ in 0..args.iters {
        let start = Instant::now();
        step()?;
        latencies.push(start.elapsed().as_secs_f64());
    }
    let mut sorted = latencies.clone();
    sorted.sort_by(f64::total_cmp);
    let latency_s = median(&sorted);
    let rtf = latency_s / (args.duration * args.batch as f64);
    Ok(BenchReport {
        duration_s: args.duration,
        batch: args.batch,
        warmup: args.warmup,
        iters: args.iters,
        threads,
        parameters: model.parameter_count(),
        untrained,
        latency_s,
        rtf,
        speed_x: 1.0 / rtf,
        latencies_s: latencies,
        crossover,
    })
}

pub fn cmd_mask(args: &MaskArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.n_fft < 2 || !args.n_fft.is_multiple_of(2) {
        return Err(CliError::Usage(format!("--n-fft must be even and >= 2, got {}", args.n_fft)));
    }
    let c = &args.crossover;
    let spec = match args.rate.or(c.input_rate) {
        Some(rate) => {
            let overrides = CrossoverArgs {
                input_rate: Some(rate),
                ..c.clone()
            };
            resolve_crossover(&overrides, rate)?.1
        }
        None => match (c.f_start, c.f_end) {
            (Some(a), Some(b)) => {
                let spec = CrossoverSpec::new(a, b, c.variant.unwrap_or(CrossoverVariant::SmoothstepLr))?;
                spec.validate(PIPELINE_RATE)?;
                spec
            }
            _ => {
                return Err(CliError::Usage(
                    "mask needs --rate, or both --f-start and --f-end".into(),
                ))
            }
        },
    };
    write_mask_csv(&spec, args.n_fft, PIPELINE_RATE, out)?;
    Ok(())
}
