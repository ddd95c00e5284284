//! Command-line front end.
//!
//! Effective configuration, lowest to highest precedence: built-in
//! defaults, `--config <file>`, the `STEPPROVER_SEED` environment
//! variable, `--set key=value` (repeatable), subcommand flags, `--seed`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stepprover_core::bench::{generate_benchmark, BenchmarkSuite, Split};
use stepprover_core::curation::{corpus_ppl_stats, extract_preferences, extract_sft, label_tree, ppl_filter, SftExample};
use stepprover_core::policy::NllExample;
use stepprover_core::search::{best_first_search, SearchConfig};
use stepprover_core::training::{preference_train, sft_train, LossReport, SftConfig};
use stepprover_core::{PolicyParams, ProofState};

use crate::config::{env_seed, RunConfig};
use crate::error::{CliError, Result};
use crate::harness::{
    evaluate_pass_at_n, mix_seed, run_expert_iteration, run_tau_ablation, search_seed, select_pairs, EiRun,
    STREAM_PREF_EXTRACT, STREAM_PREF_TRAIN, STREAM_SFT,
};
use crate::io::{self, StatsRow};
use crate::manifest::Manifest;
use crate::checkpoint;

#[derive(Parser, Debug)]
#[command(name = "stepprover", version, about = "Step-level prover: search, curation, training and evaluation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run seed (overrides config and environment).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a benchmark suite file.
    GenBench {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        /// Tier mix, e.g. `easy=1,medium=1`.
        #[arg(long)]
        mix: Option<String>,
    },
    /// Best-first search on every goal; writes unlabeled traces.
    Search {
        #[arg(long)]
        goals: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign utilities to every transition of every trace.
    Label {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// SFT corpus and preference pairs from labeled traces.
    Extract {
        #[arg(long)]
        traces: PathBuf,
        /// Reference checkpoint for pair log-probs and corpus PPL (zero weights if absent).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Source tag of the extracted examples.
        #[arg(long, default_value = "EI-round-1")]
        source: String,
        #[arg(long)]
        sft_out: PathBuf,
        #[arg(long)]
        pref_out: PathBuf,
    },
    /// Per-source corpus perplexity table (CSV: sourceTag,count,avgPpl).
    PplStats {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep examples with sequence perplexity below a threshold.
    PplFilter {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Supervised fine-tuning on one or more corpora.
    Sft {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        /// Initial checkpoint (zero weights if absent).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch NLL (CSV: epoch,nll).
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Preference training; the reference is the log-probs stored in the pairs.
    PrefTrain {
        #[arg(long)]
        prefs: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Per-step loss (CSV: step,loss,marginMean,gradNorm,pairCount,weightFallbacks).
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Full expert iteration; writes every artifact under `--out-dir`.
    Ei {
        /// Suite file (generated from `bench.*` if absent).
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Pass@1 / Pass@n of a checkpoint.
    Eval {
        #[arg(long)]
        goals: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        split: SplitArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        /// One search with n × budget instead of n restarts.
        #[arg(long)]
        accumulate_budget: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline once per τ; CSV rows tau,pass1,passN.
    AblateTau {
        #[arg(required = true)]
        taus: Vec<f64>,
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum SplitArg {
    Train,
    Heldout,
    All,
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn effective_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &global.config {
        config.apply_text(&io::read_text(path)?)?;
    }
    if let Some(seed) = env_seed()? {
        config.seed = seed;
    }
    for kv in &global.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        config.set(k, v)?;
    }
    Ok(config)
}

fn load_params(path: Option<&Path>, seed: u64) -> Result<PolicyParams> {
    match path {
        Some(p) => checkpoint::load(p),
        None => {
            let mut p = PolicyParams::zeros();
            p.seed = seed;
            Ok(p)
        }
    }
}

fn select_goals(suite: &BenchmarkSuite, split: SplitArg) -> Vec<ProofState> {
    let keep = |s: Split| match split {
        SplitArg::Train => s == Split::Train,
        SplitArg::Heldout => s == Split::Heldout,
        SplitArg::All => true,
    };
    suite.goals.iter().filter(|g| keep(g.split)).map(|g| g.goal.clone()).collect()
}

fn nonempty<T>(items: Vec<T>, what: &str) -> Result<Vec<T>> {
    if items.is_empty() {
        return Err(CliError::Precondition(format!("no {what}")));
    }
    Ok(items)
}

fn suite_for(config: &RunConfig, path: Option<&Path>) -> Result<BenchmarkSuite> {
    match path {
        Some(p) => io::read_suite(p),
        None => Ok(generate_benchmark(config.bench_count, &config.bench_mix, config.seed)?),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut config = effective_config(&cli.global)?;
    let set = |config: &mut RunConfig, key: &str, value: Option<String>| value.map_or(Ok(()), |v| config.set(key, &v));
    match &cli.command {
        Command::GenBench { count, mix, .. } => {
            set(&mut config, "bench.count", count.map(|c| c.to_string()))?;
            set(&mut config, "bench.mix", mix.clone())?;
        }
        Command::PrefTrain { method, .. } => set(&mut config, "pref.method", method.clone())?,
        Command::Eval { n, budget, accumulate_budget, .. } => {
            set(&mut config, "eval.n", n.map(|n| n.to_string()))?;
            set(&mut config, "eval.budget", budget.map(|b| b.to_string()))?;
            if *accumulate_budget {
                config.accumulate_budget = true;
            }
        }
        _ => {}
    }
    if let Some(seed) = cli.global.seed {
        config.seed = seed;
    }
    config.validate()?;

    match cli.command {
        Command::GenBench { out, .. } => {
            let suite = generate_benchmark(config.bench_count, &config.bench_mix, config.seed)?;
            io::write_bytes(&out, io::suite_text(&suite).as_bytes())?;
            io::print(&format!(
                "wrote {} goals ({} train, {} heldout) to {}\n",
                suite.goals.len(),
                suite.train().len(),
                suite.heldout().len(),
                out.display()
            ));
        }
        Command::Search { goals, checkpoint, split, out } => {
            let params = load_params(checkpoint.as_deref(), config.seed)?;
            let goals = nonempty(select_goals(&io::read_suite(&goals)?, split), "goals selected")?;
            let trees = search_all(&params, &goals, &config)?;
            let proved = trees.iter().filter(|(t, _)| t.is_proved()).count();
            io::write_traces(&out, &trees)?;
            io::print(&format!("proved {proved}/{} goals; traces in {}\n", goals.len(), out.display()));
        }
        Command::Label { traces, out } => {
            let trees: Vec<_> = io::read_traces(&traces)?.into_iter().map(|(t, c)| (label_tree(&t), c)).collect();
            io::write_traces(&out, &trees)?;
        }
        Command::Extract { traces, checkpoint, source, sft_out, pref_out } => {
            let reference = load_params(checkpoint.as_deref(), config.seed)?;
            let source = io::source_tag(&source)?;
            let trees = io::read_traces(&traces)?;
            if trees.iter().any(|(t, _)| t.edges.iter().any(|e| e.utility.is_none())) {
                return Err(CliError::Precondition("traces are unlabeled; run `label` first".into()));
            }
            let mut corpus = Vec::new();
            let mut pairs = Vec::new();
            for (i, (tree, _)) in trees.iter().enumerate() {
                corpus.extend(extract_sft(tree, source));
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, STREAM_PREF_EXTRACT, i as u64));
                pairs.extend(extract_preferences(tree, &reference, &config.preference, &mut rng)?);
            }
            io::write_corpus(&sft_out, &corpus, &reference)?;
            io::write_preferences(&pref_out, &pairs)?;
            io::print(&format!("{} SFT examples, {} preference pairs\n", corpus.len(), pairs.len()));
        }
        Command::PplStats { corpus, checkpoint, out } => {
            let params = load_params(checkpoint.as_deref(), config.seed)?;
            let examples = read_corpora(&corpus)?;
            let rows: Vec<StatsRow> = corpus_ppl_stats(&examples, &params)?.iter().map(StatsRow::from).collect();
            let text = io::csv_string(&rows);
            if let Some(out) = out {
                io::write_bytes(&out, text.as_bytes())?;
            }
            io::print(&text);
        }
        Command::PplFilter { corpus, checkpoint, threshold, out } => {
            let params = load_params(checkpoint.as_deref(), config.seed)?;
            let examples = io::read_corpus(&corpus)?;
            let kept = ppl_filter(&examples, &params, threshold)?;
            io::write_corpus(&out, &kept, &params)?;
            io::print(&format!("kept {}/{} examples with PPL < {threshold}\n", kept.len(), examples.len()));
        }
        Command::Sft { corpus, checkpoint, out, loss_csv } => {
            let init = load_params(checkpoint.as_deref(), config.seed)?;
            let examples = nonempty(read_corpora(&corpus)?, "SFT examples")?;
            let batch: Vec<NllExample> = examples.iter().map(|e| (e.state.clone(), e.tokens.clone())).collect();
            let sft = SftConfig { rng_seed: mix_seed(config.seed, STREAM_SFT, 0), ..config.sft.clone() };
            let run = sft_train(&init, &batch, &sft)?;
            let mut params = run.params;
            params.seed = config.seed;
            params.version = "sft".into();
            checkpoint::save(&params, &out)?;
            if let Some(path) = loss_csv {
                io::write_csv(&path, &epoch_rows(&run.epoch_nll))?;
            }
            io::print(&format!(
                "NLL {:.6} -> {:.6} over {} steps\n",
                run.epoch_nll[0],
                run.epoch_nll.last().copied().unwrap_or(f64::NAN),
                run.steps
            ));
        }
        Command::PrefTrain { prefs, checkpoint, out, loss_csv, .. } => {
            let pt = config
                .preference_training()
                .ok_or_else(|| CliError::Usage("pref-train needs --method dpo|uapo|pw-dpo|pw-uapo".into()))?;
            let init = load_params(checkpoint.as_deref(), config.seed)?;
            let pairs = nonempty(select_pairs(&io::read_preferences(&prefs)?, pt.method), "usable preference pairs")?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, STREAM_PREF_TRAIN, 0));
            let run = preference_train(&init, &pairs, &pt.dpo, pt.steps, pt.learning_rate, pt.batch_size, &mut rng)?;
            let mut params = run.params;
            params.seed = config.seed;
            params.version = "pref".into();
            checkpoint::save(&params, &out)?;
            if let Some(path) = loss_csv {
                io::write_csv(&path, &step_rows(&run.curve))?;
            }
            io::print(&format!(
                "{} on {} pairs: loss {:.6} -> {:.6}\n",
                pt.method.name(),
                pairs.len(),
                run.initial.loss,
                run.last.loss
            ));
        }
        Command::Ei { suite, out_dir } => {
            let suite = suite_for(&config, suite.as_deref())?;
            let run = run_expert_iteration(&config, &suite)?;
            write_ei(&out_dir, &config, &suite, &run)?;
            for r in &run.rounds {
                io::print(&format!(
                    "round {}: proved {}/{} train, heldout pass@1 {:.4} pass@{} {:.4}\n",
                    r.report.round_index,
                    r.report.theorems_proved,
                    r.report.theorems_attempted,
                    r.report.pass1,
                    r.report.n,
                    r.report.pass_n
                ));
            }
        }
        Command::Eval { goals, checkpoint, split, out, .. } => {
            let params = load_params(checkpoint.as_deref(), config.seed)?;
            let goals = nonempty(select_goals(&io::read_suite(&goals)?, split), "goals selected")?;
            let report = evaluate_pass_at_n(
                &params,
                &goals,
                config.pass_n,
                config.per_search_budget,
                config.seed,
                &config.search,
                config.accumulate_budget,
            )?;
            if let Some(out) = out {
                io::write_json(&out, &report)?;
            }
            io::print(&format!("pass@1 {:.4} pass@{} {:.4} over {} goals\n", report.pass1, report.n, report.pass_n, goals.len()));
        }
        Command::AblateTau { taus, suite, out } => {
            let suite = suite_for(&config, suite.as_deref())?;
            let rows = run_tau_ablation(&config, &suite, &taus)?;
            let text = io::csv_string(&rows);
            io::write_bytes(&out, text.as_bytes())?;
            io::print(&text);
        }
    }
    Ok(())
}

fn read_corpora(paths: &[PathBuf]) -> Result<Vec<SftExample>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(io::read_corpus(p)?);
    }
    Ok(out)
}

fn search_all(params: &PolicyParams, goals: &[ProofState], config: &RunConfig) -> Result<Vec<(stepprover_core::search::SearchTree, SearchConfig)>> {
    use rayon::prelude::*;
    goals
        .par_iter()
        .enumerate()
        .map(|(i, goal)| {
            let cfg = SearchConfig { rng_seed: search_seed(config.seed, 0, i), ..config.search.clone() };
            Ok((best_first_search(params, goal, &cfg)?, cfg))
        })
        .collect()
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    nll: f64,
}

fn epoch_rows(nll: &[f64]) -> Vec<EpochRow> {
    nll.iter().enumerate().map(|(epoch, &nll)| EpochRow { epoch, nll }).collect()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct StepRow {
    step: usize,
    loss: f64,
    margin_mean: f64,
    grad_norm: f64,
    pair_count: usize,
    weight_fallbacks: usize,
}

fn step_rows(curve: &[LossReport]) -> Vec<StepRow> {
    curve
        .iter()
        .enumerate()
        .map(|(step, r)| StepRow {
            step,
            loss: r.loss,
            margin_mean: r.margin_mean,
            grad_norm: r.grad_norm,
            pair_count: r.pair_count,
            weight_fallbacks: r.weight_fallbacks,
        })
        .collect()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RoundRow {
    round_index: usize,
    theorems_attempted: usize,
    theorems_proved: usize,
    new_sft_examples: usize,
    new_preference_pairs: usize,
    sft_pool_size: usize,
    pass1: f64,
    #[serde(rename = "passN")]
    pass_n: f64,
    n: usize,
}

/// Writes every EI artifact under `dir` plus `manifest.json` listing their
/// digests. Paths in the manifest are relative to `dir`.
pub fn write_ei(dir: &Path, config: &RunConfig, suite: &BenchmarkSuite, run: &EiRun) -> Result<()> {
    let mut manifest = Manifest::new("ei", config);
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut emit = |rel: &str, bytes: Vec<u8>| -> Result<()> {
        io::write_bytes(&dir.join(rel), &bytes)?;
        outputs.push(PathBuf::from(rel));
        Ok(())
    };
    emit("config.txt", config.to_text().into_bytes())?;
    emit("suite.tsv", io::suite_text(suite).into_bytes())?;
    emit("baseline.json", json_bytes(&run.baseline))?;
    let zero = PolicyParams::zeros();
    emit("seed-corpus.jsonl", corpus_bytes(&run.seed_corpus, &zero))?;
    for r in &run.rounds {
        let k = r.report.round_index;
        let p = |name: &str| format!("round-{k}/{name}");
        emit(&p("traces.jsonl"), jsonl_bytes(&r.trees.iter().flat_map(|(t, c)| io::trace_lines(t, c)).collect::<Vec<_>>()))?;
        emit(&p("corpus.jsonl"), corpus_bytes(&r.new_sft, &r.post_sft))?;
        emit(&p("prefs.jsonl"), jsonl_bytes(&r.pairs.iter().map(io::PreferenceRecord::from).collect::<Vec<_>>()))?;
        emit(&p("checkpoint-sft.bin"), checkpoint::encode(&r.post_sft))?;
        emit(&p("checkpoint.bin"), checkpoint::encode(&r.params))?;
        emit(&p("sft-loss.csv"), io::csv_string(&epoch_rows(&r.report.sft_nll_by_epoch)).into_bytes())?;
        if !r.pref_curve.is_empty() {
            emit(&p("pref-loss.csv"), io::csv_string(&step_rows(&r.pref_curve)).into_bytes())?;
        }
        emit(&p("heldout.json"), json_bytes(&r.heldout))?;
        emit(&p("report.json"), json_bytes(&r.report))?;
    }
    let rows: Vec<RoundRow> = run
        .rounds
        .iter()
        .map(|r| RoundRow {
            round_index: r.report.round_index,
            theorems_attempted: r.report.theorems_attempted,
            theorems_proved: r.report.theorems_proved,
            new_sft_examples: r.report.new_sft_examples,
            new_preference_pairs: r.report.new_preference_pairs,
            sft_pool_size: r.report.sft_pool_size,
            pass1: r.report.pass1,
            pass_n: r.report.pass_n,
            n: r.report.n,
        })
        .collect();
    emit("rounds.csv", io::csv_string(&rows).into_bytes())?;
    emit("final.bin", checkpoint::encode(run.final_params()))?;
    for rel in outputs {
        manifest.output(dir, rel)?;
    }
    manifest.write(&dir.join("manifest.json"))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(value).expect("report serializes");
    b.push(b'\n');
    b
}

fn jsonl_bytes<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

fn corpus_bytes(corpus: &[SftExample], params: &PolicyParams) -> Vec<u8> {
    jsonl_bytes(&corpus.iter().map(|e| io::CorpusRecord::new(e, params)).collect::<Vec<_>>())
}
