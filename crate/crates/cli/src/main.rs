//! `utmos`: batch command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags, missing or
//! malformed input files, invalid config), 1 for failures while running.
//! Errors are reported on stderr as one `error kind=<kind> message=<text>`
//! line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use utmos::audio::{prepare_wave, read_wav, write_wav, Wave, TARGET_RATE};
use utmos::augment::{change_speed, sample_augmentation, shift_pitch, AugmentConfig};
use utmos::backend::BackendRegistry;
use utmos::config::{toy_config_toml, RunConfig};
use utmos::dataset::{write_predictions, MosDataset};
use utmos::metrics::evaluate;
use utmos::pipeline::{
    align_embeddings, extract_embeddings, infer, load_dataset, load_embedding_files, load_inputs,
    load_text, plan_checkpoints, read_stack_model, run_all, train_stack_run, train_strong_run,
    train_weak_run, write_embedding_files, write_stack_outputs, write_weak_outputs, Inputs,
};
use utmos::stacking::{stack_predict, StageScores};
use utmos::strong::StrongCheckpoint;
use utmos::synth::{generate, ToyConfig};
use utmos::textproc::{
    extract_references, read_transcripts, write_references, DEFAULT_EPS, DEFAULT_MIN_PTS,
};
use utmos::{Error, Exec, Result};

const DATASET_KEYS: &str =
    "  dataset.audio_dir    directory of <utterance_id>.wav files (default \"audio\")
  dataset.train        ratings CSV of the train split
  dataset.dev          ratings CSV of the dev split
  dataset.test         ratings CSV of the test split (optional)
  dataset.transcripts  utterance_id<TAB>phonemes file (optional)
  dataset.references   precomputed references (optional; clustered otherwise)
  textproc.eps         DBSCAN radius for reference clustering (0.3)
  textproc.min_pts     DBSCAN core-point threshold (2)";

const COMMON_KEYS: &str = "  seed                 master seed (required; --seed overrides)
  output_dir           where artifacts are written (default \"out\")
  backends             list of {kind = \"toy\", id, dim, seed} feature backends";

const STRONG_KEYS: &str =
    "  strong_backend                      backend id used for the strong learner (\"toy\")
  strong.listener_emb_dim             listener embedding size (128)
  strong.domain_emb_dim               domain embedding size (128)
  strong.mean_listener_copies         mean-listener examples per utterance per epoch (1)
  strong.eval_every                   dev evaluation cadence in updates (500)
  strong.phoneme_encoder.enabled      use the phoneme side input (true)
  strong.phoneme_encoder.layers       encoder LSTM layers (3)
  strong.phoneme_encoder.hidden       encoder hidden size per direction (256)
  strong.phoneme_encoder.bidirectional (true)
  strong.phoneme_encoder.emb_dim      phoneme symbol embedding size (256)
  strong.head.layers                  BLSTM head layers (1)
  strong.head.hidden                  BLSTM head hidden size (256)
  strong.optimizer.adam_beta1         (0.9)
  strong.optimizer.adam_beta2         (0.99)
  strong.optimizer.peak_lr            (3e-5)
  strong.optimizer.warmup_steps       (4000)
  strong.optimizer.total_steps        optimizer updates (15000)
  strong.optimizer.batch_size         (12)
  strong.optimizer.grad_accum         micro-batches per update (2)
  strong.optimizer.grad_clip_norm     0 disables (0)
  loss.alpha                          contrastive margin (0.5)
  loss.tau                            clipped-MSE threshold (0.25)
  loss.beta                           regression weight (1.0)
  loss.gamma                          contrastive weight (0.5)
  loss.cross_domain_pairs             allow cross-domain pairs (true)
  (loss keys may instead be given as strong.loss.*, but not both)
  augment.enabled                     (true)
  augment.f_t                         tempo range [1-f_t, 1+f_t] (0.1)
  augment.f_p                         pitch range in cents (300)
  augment.mode                        \"per_step\" or \"offline\" (per_step)";

const WEAK_KEYS: &str = "  weak.backends        backend ids for embeddings (default: all backends)
  weak.methods         regression methods (all six)
  weak.domains         domain tags, \"*\" = all domains ([\"*\"])
  weak.hyperparams.<method>.<key>  per-method overrides
  weak.embeddings_dir  embedding CSV directory (<output_dir>/embeddings)";

const STACK_KEYS: &str = "  stacking.strong_checkpoints  checkpoint files (default: <output_dir>/strong.ckpt.json if present)
  stacking.weak_specs          explicit {backend_id, method, domain_tag, hyperparams} list
                               (default: the [weak] bank)
  stacking.n_folds             cross-validation folds (5)
  stacking.stage2_methods      list of {method, hyperparams} (all six methods)
  stacking.stage3_method       {method, hyperparams} ({method = \"ridge\"})
  stacking.selection.greedy    greedy strong-learner selection (false)
  stacking.selection.k         strong learners to keep (all)
  stacking.selection.criterion \"dev_system_srcc\"
  stacking.strong_oof          \"per_fold\" retraining or \"checkpoint\" (per_fold)";

#[derive(Parser)]
#[command(
    name = "utmos",
    version,
    about = "MOS prediction with strong and weak learners and stacking"
)]
struct Cli {
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a strong learner and write its checkpoint.
    #[command(after_long_help = format!("Config keys read:\n{COMMON_KEYS}\n{DATASET_KEYS}\n{STRONG_KEYS}\n\nWrites <output_dir>/strong.ckpt.json unless --out is given."))]
    TrainStrong {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict every utterance of a ratings CSV with a checkpoint.
    #[command(
        after_long_help = "Reads no config file. The feature backend is rebuilt from the checkpoint."
    )]
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        /// Ratings CSV naming the utterances (and their systems and domains).
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Audio directory (default: <ratings dir>/audio).
        #[arg(long)]
        audio_dir: Option<PathBuf>,
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_MIN_PTS)]
        min_pts: usize,
    },
    /// Mean-pooled embeddings of every utterance, one CSV per backend.
    #[command(after_long_help = format!("Config keys read:\n{COMMON_KEYS}\n  dataset.audio_dir, dataset.train, dataset.dev, dataset.test\n{WEAK_KEYS}"))]
    ExtractEmbeddings {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (default: weak.embeddings_dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fit the weak-learner bank on the train split.
    #[command(after_long_help = format!("Config keys read:\n{COMMON_KEYS}\n  dataset.audio_dir, dataset.train, dataset.dev, dataset.test\n{WEAK_KEYS}\n\nWrites <output_dir>/weak/models.json and <split>_scores.csv."))]
    TrainWeak {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Cluster ASR transcripts and write reference sequences.
    #[command(
        after_long_help = "Reads no config file. Output columns (tab-separated): utterance_id, cluster_id (-1 = noise), reference phonemes."
    )]
    ClusterRefs {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_MIN_PTS)]
        min_pts: usize,
    },
    /// Run stacking stages 1-3 and predict the test split.
    #[command(after_long_help = format!("Config keys read:\n{COMMON_KEYS}\n{DATASET_KEYS}\n{STACK_KEYS}\n{WEAK_KEYS}\n  augment.* (per-fold strong retraining)\n\nWrites stage CSVs, stack_model.json, selection.json and predictions.csv to <output_dir>/stack."))]
    TrainStack {
        /// Run config holding the [stacking] plan.
        #[arg(long, alias = "config")]
        plan: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Apply a fitted stack to stage-1 scores.
    #[command(after_long_help = "Reads no config file.")]
    StackPredict {
        #[arg(long)]
        model: PathBuf,
        /// Stage-1 score CSV with the model's learner columns.
        #[arg(long)]
        stage1: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Utterance- and system-level metrics of a predictions CSV.
    #[command(after_long_help = "Reads no config file.")]
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Apply one random speed and pitch change to a WAV file.
    #[command(after_long_help = "Reads no config file. Output is 16 kHz.")]
    AugmentPreview {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tempo factor range: [1 - f_t, 1 + f_t].
        #[arg(long, default_value_t = 0.1)]
        f_t: f64,
        /// Pitch shift range in cents: [-f_p, f_p].
        #[arg(long, default_value_t = 300.0)]
        f_p: f64,
        input: PathBuf,
        output: PathBuf,
    },
    /// Write a synthetic listening test and a matching config.toml.
    #[command(after_long_help = "Reads no config file.")]
    SynthToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n_train: usize,
        #[arg(long, default_value_t = 50)]
        n_dev: usize,
        #[arg(long, default_value_t = 50)]
        n_test: usize,
        /// Strong-learner updates in the generated config.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
    /// Every stage in order, then evaluate on the test split.
    #[command(after_long_help = format!("Config keys read: all of them; see the other subcommands.\n{COMMON_KEYS}"))]
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn load_config(a: &ConfigArgs) -> Result<RunConfig> {
    let mut c = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        c.seed = s;
    }
    Ok(c)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p)
        .map_err(|e| Error::Argument(format!("cannot create {}: {e}", p.display())))
}

fn parent_mkdir(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => mkdir(d),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match cli.command {
        Command::TrainStrong { cfg, out } => {
            let c = load_config(&cfg)?;
            let inputs = load_inputs(&c, exec)?;
            let reg = BackendRegistry::from_specs(&c.backends)?;
            let ckpt = train_strong_run(&c, &inputs, &reg, exec)?;
            let path = out.unwrap_or_else(|| c.strong_checkpoint_path());
            parent_mkdir(&path)?;
            ckpt.save(&path)?;
            println!(
                "step={} dev_system_srcc={:?} checkpoint={}",
                ckpt.step,
                ckpt.dev_system_srcc,
                path.display()
            );
        }
        Command::Infer {
            ckpt,
            ratings,
            out,
            audio_dir,
            transcripts,
            references,
            eps,
            min_pts,
        } => {
            let ck = StrongCheckpoint::load(&ckpt)?;
            let audio = audio_dir
                .unwrap_or_else(|| ratings.parent().unwrap_or(Path::new(".")).join("audio"));
            let dataset = MosDataset::load(&ratings, &audio)?;
            let text = load_text(
                &dataset,
                transcripts.as_deref(),
                references.as_deref(),
                eps,
                min_pts,
                exec,
            )?;
            let preds = infer(
                &ck,
                &Inputs { dataset, text },
                &BackendRegistry::default(),
                exec,
            )?;
            parent_mkdir(&out)?;
            write_predictions(&out, &preds)?;
            println!("predictions={} n={}", out.display(), preds.len());
        }
        Command::ExtractEmbeddings { cfg, out_dir } => {
            let c = load_config(&cfg)?;
            let ds = load_dataset(&c)?;
            let reg = BackendRegistry::from_specs(&c.backends)?;
            let emb = extract_embeddings(&ds, &reg, &c.weak_backends(), exec)?;
            let dir = out_dir.unwrap_or_else(|| c.embeddings_dir());
            write_embedding_files(&dir, &emb)?;
            println!("embeddings={} backends={}", dir.display(), emb.len());
        }
        Command::TrainWeak { cfg } => {
            let c = load_config(&cfg)?;
            let ds = load_dataset(&c)?;
            let emb = load_embedding_files(&ds, &c.embeddings_dir(), &c.weak_backends())?;
            let models = train_weak_run(&c, &ds, &emb, exec)?;
            let dir = c.output_dir.join("weak");
            write_weak_outputs(&dir, &models, &ds, &emb)?;
            println!(
                "weak_models={} n={}",
                dir.join("models.json").display(),
                models.len()
            );
        }
        Command::ClusterRefs {
            transcripts,
            out,
            eps,
            min_pts,
        } => {
            let tr = read_transcripts(&transcripts)?;
            let refs = extract_references(&tr, eps, min_pts, exec)?;
            parent_mkdir(&out)?;
            write_references(&out, &refs)?;
            let clusters = refs
                .iter()
                .map(|r| r.cluster_id)
                .filter(|&c| c >= 0)
                .max()
                .map_or(0, |m| m + 1);
            println!("references={} clusters={clusters}", out.display());
        }
        Command::TrainStack { plan, seed } => {
            let c = load_config(&ConfigArgs { config: plan, seed })?;
            let inputs = load_inputs(&c, exec)?;
            let reg = BackendRegistry::from_specs(&c.backends)?;
            let mut backends = c.weak_backends();
            if !c.stacking.weak_specs.is_empty() {
                backends = c
                    .stacking
                    .weak_specs
                    .iter()
                    .map(|s| s.backend_id.clone())
                    .collect();
                backends.sort();
                backends.dedup();
            }
            let emb = if backends.is_empty() {
                align_embeddings(&inputs.dataset, &Default::default())?
            } else {
                load_embedding_files(&inputs.dataset, &c.embeddings_dir(), &backends)?
            };
            let checkpoints = plan_checkpoints(&c)
                .into_iter()
                .map(|p| StrongCheckpoint::load(&p).map(|ck| (p, ck)))
                .collect::<Result<Vec<_>>>()?;
            let run = train_stack_run(&c, &inputs, &emb, &checkpoints, &reg, exec)?;
            let dir = c.output_dir.join("stack");
            write_stack_outputs(&dir, &run)?;
            println!(
                "stage1_learners={} selected_strong={} predictions={}",
                run.output.model.stage1_learners.len(),
                run.selection.selected.len(),
                dir.join("predictions.csv").display()
            );
        }
        Command::StackPredict { model, stage1, out } => {
            let m = read_stack_model(&model)?;
            let s1 = StageScores::read_csv(&stage1)?;
            let p = stack_predict(&m, &s1)?;
            let preds: Vec<(String, f64)> = s1.utterance_ids.into_iter().zip(p).collect();
            parent_mkdir(&out)?;
            write_predictions(&out, &preds)?;
            println!("predictions={} n={}", out.display(), preds.len());
        }
        Command::Evaluate { pred, ratings } => {
            let r = evaluate(&pred, &ratings)?;
            print!("{r}\n{}", r.key_values());
        }
        Command::AugmentPreview {
            seed,
            f_t,
            f_p,
            input,
            output,
        } => {
            let cfg = AugmentConfig {
                f_t,
                f_p,
                ..AugmentConfig::default()
            };
            cfg.validate()?;
            let w = read_wav(&input)?;
            let x = prepare_wave(&w).map_err(|m| Error::Audio {
                path: input.clone(),
                msg: m.into(),
            })?;
            let mut rng = utmos::seed::rng_for(seed, "augment-preview");
            let (tempo, cents) = sample_augmentation(&cfg, &mut rng);
            let y = shift_pitch(&change_speed(&x, tempo)?, cents)?;
            parent_mkdir(&output)?;
            write_wav(&output, &Wave::new(y, TARGET_RATE))?;
            println!("tempo={tempo} cents={cents} output={}", output.display());
        }
        Command::SynthToy {
            out,
            seed,
            n_train,
            n_dev,
            n_test,
            steps,
        } => {
            let toy = generate(&ToyConfig {
                n_train,
                n_dev,
                n_test,
                seed,
                ..ToyConfig::default()
            })?;
            mkdir(&out)?;
            toy.write(&out)?;
            let cfg_path = out.join("config.toml");
            std::fs::write(&cfg_path, toy_config_toml(seed, steps))
                .map_err(|e| Error::Argument(e.to_string()))?;
            println!("corpus={} config={}", out.display(), cfg_path.display());
        }
        Command::Run { cfg } => {
            let c = load_config(&cfg)?;
            let r = run_all(&c, exec)?;
            print!("{r}\n{}", r.key_values());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
