use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mrf_fcnn::acquisition::{
    forward_simulate, load_sample, save_sample, undersample, ParametricMaps, Sample, Tsmi, TsmiKind,
};
use mrf_fcnn::config::RunConfig;
use mrf_fcnn::fingerprint::{build_dictionary, Dictionary};
use mrf_fcnn::matching::match_maps;
use mrf_fcnn::model::{build_model, reconstruct_with_threshold, train, Checkpoint};
use mrf_fcnn::report::{append_bench_rows, evaluate, write_map_png, BenchRow, CHANNEL_NAMES};
use mrf_fcnn::subspace::{fit_subspace, project, SubspaceBasis};

#[derive(Parser)]
#[command(
    name = "mrf",
    about = "MR fingerprinting simulation, matching and network reconstruction"
)]
struct Cli {
    /// Run configuration (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 picks automatically.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the normalized dictionary over the configured grid.
    Dict,
    /// Fit the subspace basis to a dictionary.
    Basis { dictionary: PathBuf },
    /// Generate phantom maps; several go to numbered subdirectories.
    Phantom {
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Simulate an undersampled, noisy TSMI from phantom maps.
    Acquire { maps: PathBuf },
    /// Dictionary matching (full, or compressed when configured).
    Match {
        sample: PathBuf,
        dictionary: PathBuf,
        /// Basis for compressed matching.
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Train the network on sample directories with a fixed basis.
    Train {
        basis: PathBuf,
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        /// Validation sample directory; repeatable.
        #[arg(long)]
        val: Vec<PathBuf>,
    },
    /// Network reconstruction of a raw sample.
    Recon {
        sample: PathBuf,
        checkpoint: PathBuf,
    },
    /// Compare predicted maps against ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, default_value = "")]
        method: String,
    },
    /// Time full matching, compressed matching and the network on one slice.
    Bench {
        sample: PathBuf,
        dictionary: PathBuf,
        checkpoint: PathBuf,
        /// Benchmark CSV; defaults to `<out>/bench.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn write_maps(cfg: &RunConfig, maps: &ParametricMaps, dir: &Path) -> Result<()> {
    maps.save(dir)?;
    let ranges = [cfg.model.t1_max_ms, cfg.model.t2_max_ms, cfg.model.pd_max];
    for (c, name) in CHANNEL_NAMES.iter().enumerate() {
        write_map_png(maps, c, (0.0, ranges[c]), dir.join(format!("{name}.png")))?;
    }
    Ok(())
}

fn compress(sample: Sample, basis: &SubspaceBasis) -> Result<Sample> {
    match sample.tsmi.kind {
        TsmiKind::Compressed => Ok(sample),
        TsmiKind::Raw => {
            let (h, w, _) = sample.tsmi.dims();
            let coeffs = project(sample.tsmi.voxels(), basis)?;
            Ok(Sample {
                tsmi: Tsmi::from_voxels(h, w, coeffs, TsmiKind::Compressed)?,
                maps: sample.maps,
            })
        }
    }
}

fn load_samples(dirs: &[PathBuf], basis: &SubspaceBasis) -> Result<Vec<Sample>> {
    dirs.iter()
        .map(|d| {
            let s = load_sample(d).with_context(|| format!("loading sample {}", d.display()))?;
            compress(s, basis)
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()?;
    }
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let out = &cli.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::Dict => {
            let dict = build_dictionary(&cfg.schedule()?, &cfg.grid()?, true)?;
            dict.save(out)?;
            println!(
                "{} atoms of length {} -> {}",
                dict.len(),
                dict.d0(),
                out.display()
            );
        }
        Command::Basis { dictionary } => {
            let dict = Dictionary::load(&dictionary)?;
            let basis = fit_subspace(&dict, cfg.subspace.d1)?;
            basis.save(out)?;
            println!(
                "d1 = {}, captured energy fraction {}",
                basis.d1(),
                basis.captured_energy_fraction()
            );
        }
        Command::Phantom { count } => {
            if count == 0 {
                bail!("--count must be positive");
            }
            let params = cfg.phantom_params()?;
            for k in 0..count {
                let maps = params.generate(cli.seed + k as u64)?;
                let dir = if count == 1 {
                    out.clone()
                } else {
                    out.join(format!("phantom_{k:03}"))
                };
                fs::create_dir_all(&dir)?;
                write_maps(&cfg, &maps, &dir)?;
            }
            println!("{count} phantom(s) -> {}", out.display());
        }
        Command::Acquire { maps } => {
            let maps = ParametricMaps::load(&maps)?;
            maps.validate()?;
            let (h, w) = maps.dims();
            let clean = forward_simulate(&maps, &cfg.schedule()?)?;
            let scheme = cfg.undersampling_scheme(h, w)?;
            let tsmi = undersample(&clean, &scheme, cfg.undersampling.noise_sigma, cli.seed)?;
            save_sample(&Sample { tsmi, maps }, out)?;
            println!(
                "{h}x{w} sample, sampling fraction {} -> {}",
                scheme.sampling_fraction,
                out.display()
            );
        }
        Command::Match {
            sample,
            dictionary,
            basis,
        } => {
            let s = load_sample(&sample)?;
            let dict = Dictionary::load(&dictionary)?;
            let basis = match (cfg.matching.compressed, basis) {
                (true, None) => bail!("matching.compressed = true needs --basis"),
                (true, Some(b)) => Some(SubspaceBasis::load(&b)?),
                (false, _) => None,
            };
            let start = Instant::now();
            let maps = match_maps(&s.tsmi, &dict, basis.as_ref(), &cfg.match_options())?;
            let secs = start.elapsed().as_secs_f64();
            write_maps(&cfg, &maps, out)?;
            println!(
                "matched {} voxels in {secs:.3} s -> {}",
                maps.masked_count(),
                out.display()
            );
        }
        Command::Train {
            basis,
            samples,
            val,
        } => {
            let basis = SubspaceBasis::load(&basis)?;
            let train_set = load_samples(&samples, &basis)?;
            let val_set = load_samples(&val, &basis)?;
            let model = build_model(&cfg.model, cli.seed)?;
            let ckpt = train(
                model,
                &basis,
                &train_set,
                &val_set,
                &cfg.train_config(cli.seed),
            )?;
            ckpt.save(out)?;
            let last = ckpt.metadata.train_loss.last().copied().unwrap_or(f64::NAN);
            println!(
                "{} steps, final training loss {last:e} -> {}",
                ckpt.metadata.steps,
                out.display()
            );
        }
        Command::Recon { sample, checkpoint } => {
            let s = load_sample(&sample)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let r = reconstruct_with_threshold(&s.tsmi, &ckpt, cfg.evaluation.mask_threshold)?;
            write_maps(&cfg, &r.maps, out)?;
            println!("reconstructed in {:.3} s -> {}", r.seconds, out.display());
        }
        Command::Eval { pred, gt, method } => {
            let p = ParametricMaps::load(&pred)?;
            let g = ParametricMaps::load(&gt)?;
            let mut report = evaluate(
                &p,
                &g,
                [cfg.model.t1_max_ms, cfg.model.t2_max_ms, cfg.model.pd_max],
            )?;
            report.method = method;
            let csv = report.to_csv();
            fs::write(out.join("eval.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Bench {
            sample,
            dictionary,
            checkpoint,
            csv,
        } => {
            let s = load_sample(&sample)?;
            if s.tsmi.kind != TsmiKind::Raw {
                bail!("bench needs a raw TSMI");
            }
            let dict = Dictionary::load(&dictionary)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let (h, w, d0) = s.tsmi.dims();
            let opts = cfg.match_options();

            let start = Instant::now();
            let full = match_maps(&s.tsmi, &dict, None, &opts)?;
            let t_full = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let comp = match_maps(&s.tsmi, &dict, Some(&ckpt.basis), &opts)?;
            let t_comp = start.elapsed().as_secs_f64();
            let net = reconstruct_with_threshold(&s.tsmi, &ckpt, cfg.evaluation.mask_threshold)?;

            for (name, maps) in [
                ("dm_full", &full),
                ("dm_compressed", &comp),
                ("network", &net.maps),
            ] {
                let dir = out.join(name);
                fs::create_dir_all(&dir)?;
                write_maps(&cfg, maps, &dir)?;
            }
            let d1 = ckpt.basis.d1();
            let row = |method: &str, d1: usize, atoms: usize, seconds: f64| BenchRow {
                method: method.into(),
                height: h,
                width: w,
                d0,
                d1,
                atoms,
                seconds,
            };
            let rows = [
                row("dm_full", 0, dict.len(), t_full),
                row("dm_compressed", d1, dict.len(), t_comp),
                row("network", d1, 0, net.seconds),
            ];
            let csv = csv.unwrap_or_else(|| out.join("bench.csv"));
            append_bench_rows(&csv, &rows)?;
            println!(
                "dm_full {t_full:.3} s, dm_compressed {t_comp:.3} s, network {:.3} s -> {}",
                net.seconds,
                csv.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
