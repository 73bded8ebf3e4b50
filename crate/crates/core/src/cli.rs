//! The `sffn` command-line front end.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::bloom::{read_cluster_tsv, size_in_bits, BloomMap, BloomMapBuilder};
use crate::config::{load_config, PreorderMode, Task, TaskConfig};
use crate::cost::{model_size, pipeline_report, reference_flops_bts, CostReport};
use crate::error::{Error, Result};
use crate::io::{
    format_indices, parse_conllu, parse_indices, parse_langid_tsv, parse_preorder, parse_segmentation, read_file_lossy,
    LossyLines,
};
use crate::metrics::{corpus_frs, micro_f1, pos_accuracy, segmentation_f1};
use crate::model_file::SavedModel;
use crate::pipelines::{self, langid, preorderer, segmenter, skeleton, tagger, ModelView, Trained};
use crate::training::{grid_search, parse_grid};
use crate::transition::{format_derivation, pre_oracle, replay_preorder, seg_oracle, SegState, TransitionState};

#[derive(Parser, Debug)]
#[command(name = "sffn", version, about = "Small feed-forward networks for budgeted NLP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write it with its training log.
    Train(Opts),
    /// Stream predictions for an input file to standard output.
    Predict(Opts),
    /// Score a model (or a predictions file) against gold data.
    Eval(Opts),
    /// Report the exact serialized size of a model or config.
    Size(Opts),
    /// Report per-inference FLOPs of a model or config.
    Flops(Opts),
    /// Build a Bloom map from a `word<TAB>cluster-id` file.
    BuildBloom(Opts),
    /// Check that oracle derivations replay to the gold structures.
    OracleReplay(Opts),
    /// Train one model per hyperparameter cell and keep the best.
    GridSearch(Opts),
}

#[derive(Args, Debug, Clone, Default)]
struct Opts {
    /// langid, pos, segment or preorder
    #[arg(long)]
    task: Option<String>,
    /// Model file to read or write
    #[arg(long)]
    model: Option<PathBuf>,
    /// Built-in config name or config file path
    #[arg(long)]
    config: Option<String>,
    #[arg(long = "train-file")]
    train_file: Option<PathBuf>,
    #[arg(long = "dev-file")]
    dev_file: Option<PathBuf>,
    /// Input file (standard input when absent or `-`)
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Word cluster TSV file
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads for prediction (0 = all cores)
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Quantize embeddings to 8 bits when saving
    #[arg(long)]
    quantize: bool,
    /// Preordering mode: vanilla, with-pos or inlined
    #[arg(long)]
    mode: Option<String>,
    /// Trained POS model feeding a with-pos preorderer
    #[arg(long)]
    tagger: Option<PathBuf>,
    /// Config override, `key=value` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file
    #[arg(long)]
    output: Option<PathBuf>,
    /// Training log / grid results file
    #[arg(long)]
    log: Option<PathBuf>,
    /// Hyperparameter grid file (`key=v1,v2,...` per line)
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Bloom map error bits
    #[arg(long = "error-bits", default_value_t = 0)]
    error_bits: u8,
}

/// Run the CLI; returns the process exit status.
pub fn run(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(out, "{text}");
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        1
                    } else {
                        0
                    }
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    let result = match cli.command {
        Command::Train(o) => cmd_train(&o, out, err),
        Command::Predict(o) => cmd_predict(&o, out, err),
        Command::Eval(o) => cmd_eval(&o, out, err),
        Command::Size(o) => cmd_size(&o, out),
        Command::Flops(o) => cmd_flops(&o, out, err),
        Command::BuildBloom(o) => cmd_build_bloom(&o, out, err),
        Command::OracleReplay(o) => cmd_oracle_replay(&o, out, err),
        Command::GridSearch(o) => cmd_grid_search(&o, out, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn require<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::config(format!("missing required flag --{flag}")))
}

fn parse_task(o: &Opts) -> Result<Option<Task>> {
    o.task.as_deref().map(str::parse).transpose()
}

/// Resolve the task config from --config/--task/--mode/--set/--quantize.
fn resolve_config(o: &Opts) -> Result<TaskConfig> {
    let task = parse_task(o)?;
    let mode: Option<PreorderMode> = o.mode.as_deref().map(str::parse).transpose()?;
    let name = match (&o.config, task) {
        (Some(c), _) => c.clone(),
        (None, Some(Task::Preorder)) => match mode.unwrap_or_default() {
            PreorderMode::Vanilla => "preorder",
            PreorderMode::WithPos => "preorder-pos",
            PreorderMode::Inlined => "preorder-inlined",
        }
        .to_string(),
        (None, Some(t)) => t.default_config().to_string(),
        (None, None) => return Err(Error::config("give --task or --config")),
    };
    let mut cfg = load_config(&name)?;
    if let Some(t) = task {
        if t != cfg.task {
            return Err(Error::config(format!("--task {t} does not match config `{name}` (task {})", cfg.task)));
        }
    }
    if let Some(m) = mode {
        if cfg.task != Task::Preorder {
            return Err(Error::config("--mode applies to the preorder task only"));
        }
        if m != cfg.mode {
            return Err(Error::config(format!("--mode {m} does not match config `{name}` (mode {})", cfg.mode)));
        }
    }
    for kv in &o.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::config(format!("--set expects key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if o.quantize {
        cfg.quantize = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_text(path: &Path, err: &mut dyn Write) -> Result<String> {
    let d = read_file_lossy(path)?;
    if d.replaced > 0 {
        let _ = writeln!(err, "warning: {}: replaced {} invalid UTF-8 sequence(s)", path.display(), d.replaced);
    }
    Ok(d.text)
}

fn load_model(path: &Path) -> Result<SavedModel> {
    SavedModel::load(path)
}

fn load_tagger(o: &Opts, model: &SavedModel) -> Result<Option<SavedModel>> {
    let needs = model.config.task == Task::Preorder && model.config.mode == PreorderMode::WithPos;
    match (&o.tagger, needs) {
        (Some(p), true) => {
            let t = load_model(p)?;
            t.expect_task(Task::Pos)?;
            Ok(Some(t))
        }
        (None, true) => Err(Error::config("this preorderer reads POS tags; pass the tagger model with --tagger")),
        (_, false) => Ok(None),
    }
}

fn load_clusters(o: &Opts, cfg: &TaskConfig, err: &mut dyn Write) -> Result<Option<BloomMap>> {
    match (&o.clusters, cfg.uses_clusters()) {
        (Some(p), true) => {
            let text = read_text(p, err)?;
            let pairs = read_cluster_tsv(text.as_bytes(), cfg.cluster_values)?;
            let map = BloomMapBuilder {
                error_bits: o.error_bits,
                num_values: cfg.cluster_values,
                seed: o.seed,
                ..Default::default()
            }
            .build(&pairs)?;
            Ok(Some(map))
        }
        (None, true) => Err(Error::config("this config uses cluster features; pass --clusters")),
        (_, false) => Ok(None),
    }
}

/// Train one model according to `cfg` using the data flags of `o`.
fn train_with(cfg: &TaskConfig, o: &Opts, err: &mut dyn Write) -> Result<Trained> {
    let train_path = require(&o.train_file, "train-file")?;
    let dev_path = require(&o.dev_file, "dev-file")?;
    let clusters = load_clusters(o, cfg, err)?;
    let tagger = match (cfg.task, cfg.mode) {
        (Task::Preorder, PreorderMode::WithPos) => {
            let p = require(&o.tagger, "tagger")?;
            let t = load_model(p)?;
            t.expect_task(Task::Pos)?;
            Some(t)
        }
        _ => None,
    };
    let train_text = read_text(train_path, err)?;
    let dev_text = read_text(dev_path, err)?;
    let seed = o.seed;
    match cfg.task {
        Task::LangId => langid::train_langid(cfg, &parse_langid_tsv(&train_text)?, &parse_langid_tsv(&dev_text)?, seed),
        Task::Pos => tagger::train_tagger(cfg, &parse_conllu(&train_text)?, &parse_conllu(&dev_text)?, clusters, seed),
        Task::Segment => {
            segmenter::train_segmenter(cfg, &parse_segmentation(&train_text)?, &parse_segmentation(&dev_text)?, seed)
        }
        Task::Preorder => preorderer::train_preorderer(
            cfg,
            &parse_preorder(&train_text)?,
            &parse_preorder(&dev_text)?,
            tagger.as_ref(),
            seed,
        ),
    }
}

fn log_path(o: &Opts, model: &Path) -> PathBuf {
    o.log.clone().unwrap_or_else(|| {
        let mut p = model.as_os_str().to_owned();
        p.push(".log.tsv");
        PathBuf::from(p)
    })
}

fn cmd_train(o: &Opts, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(o)?;
    let model_path = require(&o.model, "model")?;
    require(&o.train_file, "train-file")?;
    require(&o.dev_file, "dev-file")?;
    let trained = train_with(&cfg, o, err)?;
    trained.model.save(model_path)?;
    std::fs::write(log_path(o, model_path), trained.log.to_tsv())?;
    let report = model_size(&trained.model, &model_path.display().to_string());
    writeln!(out, "best dev {}: {:.4}", cfg.training.eval_metric, trained.best_metric)?;
    writeln!(out, "{}", report.summary())?;
    Ok(())
}

fn view_of(m: &SavedModel) -> ModelView<'_> {
    m.view()
}

/// One input line to one output line.
fn predict_line(model: &SavedModel, tagger: Option<&SavedModel>, line: &str) -> Result<String> {
    let view = view_of(model);
    match model.config.task {
        Task::LangId => {
            let (label, p) = langid::classify(view, line)?;
            Ok(format!("{label}\t{p:.6}"))
        }
        Task::Pos => {
            let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            Ok(pipelines::tag_sentence(view, &words)?.join(" "))
        }
        Task::Segment => {
            let text: String = line.chars().filter(|c| !c.is_whitespace()).collect();
            Ok(pipelines::segment(view, &text)?.join(" "))
        }
        Task::Preorder => {
            let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            let (perm, _) = pipelines::preorder(view, tagger.map(SavedModel::view), &words)?;
            Ok(format_indices(&perm))
        }
    }
}

fn open_input(o: &Opts) -> Result<Box<dyn io::BufRead>> {
    match &o.input {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::open(p).map_err(|e| Error::data(format!("cannot read `{}`: {e}", p.display())))?;
            Ok(Box::new(BufReader::new(f)))
        }
        _ => Ok(Box::new(BufReader::new(io::stdin()))),
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::internal(format!("cannot start worker threads: {e}")))
}

const CHUNK_LINES: usize = 1024;

fn cmd_predict(o: &Opts, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let model = load_model(require(&o.model, "model")?)?;
    if let Some(t) = parse_task(o)? {
        model.expect_task(t)?;
    }
    let tagger = load_tagger(o, &model)?;
    let pool = thread_pool(o.threads)?;
    let mut lines = LossyLines::new(open_input(o)?);
    let mut w = BufWriter::new(out);
    let start = Instant::now();
    let (mut docs, mut bytes) = (0usize, 0usize);
    loop {
        let mut chunk: Vec<(usize, String)> = Vec::with_capacity(CHUNK_LINES);
        for item in lines.by_ref().take(CHUNK_LINES) {
            chunk.push(item?);
        }
        if chunk.is_empty() {
            break;
        }
        let results: Vec<Result<String>> =
            pool.install(|| chunk.par_iter().map(|(_, line)| predict_line(&model, tagger.as_ref(), line)).collect());
        for ((n, line), r) in chunk.iter().zip(results) {
            let text = r.map_err(|e| match e {
                Error::Data { line: None, message } => Error::Data { line: Some(*n), message },
                other => other,
            })?;
            writeln!(w, "{text}")?;
            docs += 1;
            bytes += line.len();
        }
    }
    w.flush()?;
    if lines.replaced > 0 {
        let _ = writeln!(err, "warning: replaced {} invalid UTF-8 sequence(s) in the input", lines.replaced);
    }
    let secs = start.elapsed().as_secs_f64().max(1e-9);
    if docs > 0 {
        let _ = writeln!(
            err,
            "{docs} lines in {secs:.3}s ({:.0} lines/s, {:.0} bytes/s)",
            docs as f64 / secs,
            bytes as f64 / secs
        );
    }
    Ok(())
}

fn metric_line(out: &mut dyn Write, name: &str, value: f64) -> Result<()> {
    writeln!(out, "{name}\t{value:.6}")?;
    Ok(())
}

fn prediction_lines(o: &Opts, err: &mut dyn Write) -> Result<Option<Vec<String>>> {
    match &o.input {
        Some(p) => Ok(Some(read_text(p, err)?.lines().map(str::to_string).collect())),
        None => Ok(None),
    }
}

fn cmd_eval(o: &Opts, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let gold_text = read_text(require(&o.gold, "gold")?, err)?;
    let preds = prediction_lines(o, err)?;
    let model = match (&o.model, &preds) {
        (Some(p), _) => Some(load_model(p)?),
        (None, Some(_)) => None,
        (None, None) => return Err(Error::config("eval needs --model, or --input with predictions")),
    };
    let task = match (parse_task(o)?, &model) {
        (Some(t), Some(m)) => {
            m.expect_task(t)?;
            t
        }
        (Some(t), None) => t,
        (None, Some(m)) => m.config.task,
        (None, None) => return Err(Error::config("give --task when scoring a predictions file")),
    };
    let tagger = match &model {
        Some(m) => load_tagger(o, m)?,
        None => None,
    };
    let predict = |line: &str| -> Result<String> {
        let m = model.as_ref().ok_or_else(|| Error::internal("no model"))?;
        predict_line(m, tagger.as_ref(), line)
    };
    let pred_at = |i: usize, input: &str| -> Result<String> {
        match &preds {
            Some(p) => p.get(i).cloned().ok_or_else(|| Error::data(format!("predictions file has no line {}", i + 1))),
            None => predict(input),
        }
    };
    let check_len = |n: usize| -> Result<()> {
        match &preds {
            Some(p) if p.len() != n => Err(Error::data(format!("{n} gold items but {} prediction lines", p.len()))),
            _ => Ok(()),
        }
    };
    match task {
        Task::LangId => {
            let gold = parse_langid_tsv(&gold_text)?;
            check_len(gold.len())?;
            let labels: Vec<String> = gold.iter().map(|(l, _)| l.clone()).collect();
            let pred = gold
                .iter()
                .enumerate()
                .map(|(i, (_, d))| pred_at(i, d).map(|l| l.split('\t').next().unwrap_or("").to_string()))
                .collect::<Result<Vec<_>>>()?;
            metric_line(out, "micro-f1", micro_f1(&labels, &pred)?)
        }
        Task::Pos => {
            let gold = parse_conllu(&gold_text)?;
            check_len(gold.len())?;
            let tags: Vec<Vec<String>> = gold.iter().map(|s| s.tags.clone()).collect();
            let pred = gold
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    pred_at(i, &s.words.join(" ")).map(|l| l.split_whitespace().map(str::to_string).collect())
                })
                .collect::<Result<Vec<Vec<String>>>>()?;
            metric_line(out, "accuracy", pos_accuracy(&tags, &pred)?)
        }
        Task::Segment => {
            let gold = parse_segmentation(&gold_text)?;
            check_len(gold.len())?;
            let pred = gold
                .iter()
                .enumerate()
                .map(|(i, ws)| pred_at(i, &ws.concat()).map(|l| l.split_whitespace().map(str::to_string).collect()))
                .collect::<Result<Vec<Vec<String>>>>()?;
            metric_line(out, "word-f1", segmentation_f1(&gold, &pred)?)
        }
        Task::Preorder => {
            let gold = parse_preorder(&gold_text)?;
            check_len(gold.len())?;
            let refs: Vec<Vec<usize>> = gold.iter().map(|e| e.target.clone()).collect();
            let pred = gold
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let line = pred_at(i, &e.words.join(" "))?;
                    parse_indices(&line).map_err(|m| Error::data_at(i + 1, m))
                })
                .collect::<Result<Vec<_>>>()?;
            metric_line(out, "frs", corpus_frs(&refs, &pred)?)
        }
    }
}

/// A trained model file, or an untrained skeleton built from a config.
fn model_or_skeleton(o: &Opts) -> Result<(SavedModel, String)> {
    match &o.model {
        Some(p) => {
            let mut m = load_model(p)?;
            if o.quantize && !m.network.is_quantized() {
                m.network = m.network.quantized()?;
                m.config.quantize = true;
            }
            Ok((m, p.display().to_string()))
        }
        None => {
            let cfg = resolve_config(o)?;
            let name = o.config.clone().unwrap_or_else(|| cfg.task.to_string());
            Ok((skeleton(&cfg)?, name))
        }
    }
}

fn cmd_size(o: &Opts, out: &mut dyn Write) -> Result<()> {
    let (model, name) = model_or_skeleton(o)?;
    let mut report = model_size(&model, &name);
    if let Some(tp) = &o.tagger {
        let tagger = load_model(tp)?;
        let treport = model_size(&tagger, &tp.display().to_string());
        report = pipeline_report(&format!("{name}+tagger"), &[(&report, 1), (&treport, 1)]);
    }
    write!(out, "{}", report.to_tsv())?;
    let params = CostReport::parameter_bytes(&model.network);
    writeln!(out, "# {}", report.summary())?;
    writeln!(out, "# parameters only: {params} bytes ({:.1} KB)", params as f64 / 1024.0)?;
    Ok(())
}

fn cmd_flops(o: &Opts, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let (model, name) = model_or_skeleton(o)?;
    let report = model_size(&model, &name);
    let tagger = match &o.tagger {
        Some(p) => Some(load_model(p)?),
        None => None,
    };
    let bts = reference_flops_bts();
    if let Some(input) = &o.input {
        // Count actual timesteps on the input.
        let text = read_text(input, err)?;
        let (mut steps, mut tokens) = (0u64, 0u64);
        for line in text.lines() {
            let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            tokens += words.len() as u64;
            steps += match model.config.task {
                Task::LangId => 1,
                Task::Pos => words.len() as u64,
                Task::Segment => line.chars().filter(|c| !c.is_whitespace()).count() as u64,
                Task::Preorder => {
                    let tv = tagger.as_ref().map(SavedModel::view);
                    pipelines::preorder(model.view(), tv, &words)?.1.len() as u64
                }
            };
        }
        let mut parts = vec![(&report, steps)];
        let treport = tagger.as_ref().map(|t| model_size(t, "tagger"));
        if let Some(t) = &treport {
            parts.push((t, tokens));
        }
        let total = pipeline_report(&name, &parts);
        write!(out, "{}", total.to_tsv())?;
        writeln!(out, "# {} FLOPs over {steps} timesteps ({tokens} tokens)", total.flops)?;
        return Ok(());
    }
    write!(out, "{}", report.to_tsv())?;
    let mut total = report.flops;
    if let Some(t) = &tagger {
        let tr = model_size(t, "tagger");
        writeln!(out, "tagger\tflops\ttotal\t{}", tr.flops)?;
        total += tr.flops;
    }
    writeln!(out, "reference_bts\tflops\ttotal\t{bts}")?;
    writeln!(
        out,
        "# {name}: {total} FLOPs per timestep ({:.2}m); BTS lower bound {:.2}m is {:.1}x more",
        total as f64 / 1e6,
        bts as f64 / 1e6,
        bts as f64 / total.max(1) as f64
    )?;
    Ok(())
}

fn cmd_build_bloom(o: &Opts, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let input = require(&o.clusters, "clusters")?;
    let output = require(&o.output, "output")?;
    let text = read_text(input, err)?;
    let pairs = read_cluster_tsv(text.as_bytes(), 256)?;
    let map = BloomMapBuilder { error_bits: o.error_bits, seed: o.seed, ..Default::default() }.build(&pairs)?;
    let bytes = map.to_bytes();
    std::fs::write(output, &bytes)?;
    let n = map.entry_count();
    let bound = size_in_bits(n, f64::from(map.value_bits()), u32::from(map.error_bits()));
    writeln!(out, "entries\t{n}")?;
    writeln!(out, "cell_bits\t{}", map.capacity_bits())?;
    writeln!(out, "bound_bits\t{bound}")?;
    writeln!(out, "file_bytes\t{}", bytes.len())?;
    if n > 0 {
        writeln!(out, "bits_per_entry\t{:.3}", map.capacity_bits() as f64 / n as f64)?;
    }
    Ok(())
}

fn cmd_oracle_replay(o: &Opts, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let task = parse_task(o)?.ok_or_else(|| Error::config("missing required flag --task"))?;
    let mut cfg_oracle = crate::transition::OracleStrategy::default();
    for kv in &o.set {
        match kv.split_once('=') {
            Some(("oracle", v)) => {
                let mut c = TaskConfig::builtin("preorder")?;
                c.set("oracle", v)?;
                cfg_oracle = c.oracle;
            }
            _ => return Err(Error::config(format!("oracle-replay only accepts --set oracle=..., got `{kv}`"))),
        }
    }
    let gold_text = read_text(require(&o.gold, "gold")?, err)?;
    let mut derivations = String::new();
    let (mut sentences, mut actions) = (0usize, 0usize);
    match task {
        Task::Segment => {
            for (i, words) in parse_segmentation(&gold_text)?.iter().enumerate() {
                let lengths: Vec<usize> = words.iter().map(|w| w.chars().count()).collect();
                let seq = seg_oracle(&lengths)?;
                let chars = segmenter::sentence_chars(words);
                let mut state = SegState::new(chars.len());
                for a in &seq {
                    state.apply(*a)?;
                }
                if !state.is_terminal() || state.words(&chars) != *words {
                    return Err(Error::internal(format!("oracle replay mismatch on sentence {}", i + 1)));
                }
                sentences += 1;
                actions += seq.len();
                derivations.push_str(&format_derivation(&seq));
                derivations.push('\n');
            }
        }
        Task::Preorder => {
            for (i, ex) in parse_preorder(&gold_text)?.iter().enumerate() {
                let seq = pre_oracle(&ex.target, cfg_oracle)?;
                let state = replay_preorder(ex.words.len(), &seq)?;
                if state.permutation().as_deref() != Some(&ex.target[..]) {
                    return Err(Error::internal(format!("oracle replay mismatch on sentence {}", i + 1)));
                }
                sentences += 1;
                actions += seq.len();
                derivations.push_str(&format_derivation(&seq));
                derivations.push('\n');
            }
        }
        t => return Err(Error::config(format!("task {t} has no transition system"))),
    }
    if let Some(p) = &o.output {
        std::fs::write(p, derivations)?;
    }
    writeln!(out, "sentences\t{sentences}")?;
    writeln!(out, "replayed_ok\t{sentences}")?;
    writeln!(out, "actions\t{actions}")?;
    Ok(())
}

fn cmd_grid_search(o: &Opts, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(o)?;
    let grid = parse_grid(&read_text(require(&o.grid, "grid")?, err)?)?;
    require(&o.train_file, "train-file")?;
    require(&o.dev_file, "dev-file")?;
    let mut best: Option<(f64, Trained)> = None;
    let result = grid_search(&cfg.training, &grid, |training| {
        let mut c = cfg.clone();
        c.training = training.clone();
        let t = train_with(&c, o, err)?;
        let metric = t.best_metric;
        if best.as_ref().is_none_or(|(m, _)| metric > *m) {
            best = Some((metric, t));
        }
        Ok(metric)
    })?;
    let tsv = result.to_tsv();
    match &o.log {
        Some(p) => std::fs::write(p, &tsv)?,
        None => write!(out, "{tsv}")?,
    }
    let cell = result.best_cell();
    let desc: Vec<String> = cell.settings.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(out, "best cell {}: {} ({} {:.4})", result.best, desc.join(" "), cfg.training.eval_metric, cell.metric)?;
    if let (Some(p), Some((_, t))) = (&o.model, best) {
        t.model.save(p)?;
    }
    Ok(())
}
