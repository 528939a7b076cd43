use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use emotts::corpus::{
    check_vocab, generate_synthetic_corpus, load_manifest, preprocess_corpus, read_cache, write_cache, RunConfig,
    SyntheticSpec,
};
use emotts::diagnostics::{analyze, emit_csv, emit_pgm, format_sig9, AnalyzeOptions};
use emotts::dsp::wav_write;
use emotts::model::{AttentionMode, DecodeMode, Emotion, Tacotron, Vocab};
use emotts::train::{evaluate, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, Trainer};
use emotts::{Error, Precision, Result, Scalar};

const LATEST: &str = "latest.etts";

#[derive(Parser)]
#[command(name = "emotts", version, about = "Emotional text-to-speech: corpus tools, training and synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic tone-language corpus and its manifest.
    GenCorpus(GenCorpusArgs),
    /// Trim, analyze and normalize a manifest into a feature cache.
    Preprocess(PreprocessArgs),
    /// Train from a feature cache, checkpointing into a directory.
    Train(TrainArgs),
    /// Synthesize a wav from text and an emotion label.
    Synth(SynthArgs),
    /// Teacher-forced alignment metrics for every utterance of a manifest.
    Align(AlignArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// JSON generator settings; fields left out keep their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    sample_rate: Option<u32>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    cache: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Teacher,
    Semi,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttentionArg {
    Soft,
    Monotonic,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    ckpt_dir: PathBuf,
    /// Continue from the latest checkpoint in `--ckpt-dir`.
    #[arg(long)]
    resume: bool,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    attention: Option<AttentionArg>,
    /// Overrides `train.max_steps`.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, default_value_t = 500)]
    save_every: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignFormat {
    Pgm,
    Csv,
}

fn parse_emotion(s: &str) -> std::result::Result<Emotion, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    text: String,
    #[arg(long, value_parser = parse_emotion)]
    emotion: Emotion,
    #[arg(long)]
    out: PathBuf,
    /// Also write the attention alignment next to the wav.
    #[arg(long, value_enum)]
    emit_align: Option<AlignFormat>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Also write each utterance's alignment as `<id>.<ext>` beside the report.
    #[arg(long, value_enum)]
    emit_align: Option<AlignFormat>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Synth(a) => synth(a),
        Command::Align(a) => align(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numeric(_) => 3,
                _ => 2,
            })
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(sr) = a.sample_rate {
        spec.sample_rate = sr;
    }
    let manifest = generate_synthetic_corpus(a.n, &spec, a.seed, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let entries = load_manifest(&a.manifest)?;
    let vocab = Vocab::new(&cfg.model.vocab)?;
    check_vocab(&entries, &vocab)?;
    let (cache, summary) = preprocess_corpus(&entries, parent_dir(&a.manifest), &cfg.audio, &vocab)?;
    write_cache(&a.cache, &cache)?;
    println!("kept {} skipped {} hours {:.6}", summary.kept, summary.skipped.len(), summary.total_hours);
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(m) = a.mode {
        cfg.train.mode = match m {
            ModeArg::Teacher => DecodeMode::Teacher,
            ModeArg::Semi => DecodeMode::Semi,
        };
    }
    if let Some(at) = a.attention {
        cfg.model.attention_mode = match at {
            AttentionArg::Soft => AttentionMode::Soft,
            AttentionArg::Monotonic => AttentionMode::Monotonic,
        };
    }
    if let Some(s) = a.steps {
        cfg.train.max_steps = s;
    }
    cfg.validate()?;
    let cache = read_cache(&a.cache)?;
    if cache.audio != cfg.audio {
        return Err(Error::Config("cache was built with a different audio config; re-run preprocess".into()));
    }
    if cache.vocab != cfg.model.vocab {
        return Err(Error::Config(format!(
            "cache vocabulary {:?} differs from model.vocab {:?}",
            cache.vocab, cfg.model.vocab
        )));
    }
    fs::create_dir_all(&a.ckpt_dir).map_err(io_err(&a.ckpt_dir))?;
    match cfg.precision {
        Precision::F64 => train_as::<f64>(&a, &cfg, &cache.examples()),
        Precision::F32 => train_as::<f32>(&a, &cfg, &cache.examples()),
    }
}

fn train_as<T: Scalar>(a: &TrainArgs, cfg: &RunConfig, data: &[emotts::model::Example<f64>]) -> Result<()> {
    let data = data.iter().map(|e| e.cast::<T>()).collect();
    let latest = a.ckpt_dir.join(LATEST);
    let log_path = a.ckpt_dir.join("train_log.csv");
    let mut trainer = if a.resume {
        let ck = load_checkpoint_for::<T>(&latest, &cfg.model)?;
        info!("resuming from step {}", ck.step());
        Trainer::resume(ck.model, ck.opt, cfg.train.clone(), data)?
    } else {
        fs::write(&log_path, "step,loss,lr,sharpness,diagonality\n").map_err(io_err(&log_path))?;
        Trainer::new(Tacotron::new(&cfg.model, cfg.seed)?, cfg.train.clone(), data)?
    };
    let mut log = fs::OpenOptions::new().append(true).open(&log_path).map_err(io_err(&log_path))?;
    let every = a.save_every.max(1);
    while trainer.opt.step < cfg.train.max_steps {
        let until = ((trainer.opt.step / every + 1) * every).min(cfg.train.max_steps);
        let mut write_err = None;
        trainer.run(until, |rec| {
            println!("{rec}");
            if let Err(e) = writeln!(log, "{rec}") {
                write_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = write_err {
            return Err(Error::Io { path: log_path, source: e });
        }
        let ck = Checkpoint {
            model: trainer.model.clone(),
            opt: trainer.opt.clone(),
            audio: cfg.audio.clone(),
            train: trainer.cfg.clone(),
        };
        save_checkpoint(&latest, &ck)?;
        info!("saved step {} to {}", trainer.opt.step, latest.display());
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let ck = load_checkpoint::<f64>(&a.ckpt)?;
    let s = ck.model.synthesize(&a.text, a.emotion, &ck.audio)?;
    if s.truncated {
        warn!("decoding hit max_decoder_steps without reaching silence");
    }
    wav_write(&a.out, &s.waveform)?;
    match a.emit_align {
        Some(AlignFormat::Pgm) => emit_pgm(&s.alignment, a.out.with_extension("pgm"))?,
        Some(AlignFormat::Csv) => emit_csv(&s.alignment, a.out.with_extension("csv"))?,
        None => {}
    }
    println!("steps {} frames {} seconds {:.3}", s.steps, s.mel.rows(), s.waveform.duration_secs());
    Ok(())
}

fn align(a: AlignArgs) -> Result<()> {
    let ck = load_checkpoint::<f64>(&a.ckpt)?;
    let entries = load_manifest(&a.manifest)?;
    let vocab = ck.model.vocab().clone();
    check_vocab(&entries, &vocab)?;
    let (cache, _) = preprocess_corpus(&entries, parent_dir(&a.manifest), &ck.audio, &vocab)?;
    let mut out = String::from("id,emotion,mel_loss,sharpness,entropy,diagonality,gap_count,coverage\n");
    let mut diag = 0.0;
    for r in &cache.records {
        let ex = r.example();
        let ev = evaluate(&ck.model, &[&ex], DecodeMode::Teacher, &ck.train)?;
        let rep = analyze(&ev.alignments[0], &AnalyzeOptions::default())?;
        diag += rep.diagonality / cache.records.len() as f64;
        let dir = parent_dir(&a.report);
        match a.emit_align {
            Some(AlignFormat::Pgm) => emit_pgm(&ev.alignments[0], dir.join(format!("{}.pgm", r.id)))?,
            Some(AlignFormat::Csv) => emit_csv(&ev.alignments[0], dir.join(format!("{}.csv", r.id)))?,
            None => {}
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.id,
            r.emotion,
            format_sig9(ev.mel_loss),
            format_sig9(rep.sharpness),
            format_sig9(rep.entropy),
            format_sig9(rep.diagonality),
            rep.gap_count,
            format_sig9(rep.coverage)
        ));
    }
    fs::write(&a.report, out).map_err(io_err(&a.report))?;
    println!("utterances {} mean diagonality {:.4}", cache.records.len(), diag);
    Ok(())
}
