use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use kgforge::eval::{self, FelmRecord, QaRecord, SchemaGold, TokenEmbeddings};
use kgforge::extract::{self, build_graph, load_batches, read_corpus};
use kgforge::graph::{self, check_conformance, GraphStats};
use kgforge::index::INDEX_VERSION;
use kgforge::retrieval::{large_kg_retrieve, ppr_retrieve, tog_answer, Query};
use kgforge::schema::{induce_schema, write_concept_csv};
use kgforge::{Config, Gateway, GraphIndexes, KnowledgeGraph, Method, RetrievalResult};

use crate::manifest::{ManifestSink, RunManifest};
use crate::{Cli, CliError, Command, EvalSuite, RetrieveArgs};

const GRAPH_FILE: &str = "graph.kgf";
const CONCEPTS_FILE: &str = "concepts.csv";
const INDEX_DIR: &str = "index";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(url) = &cli.gateway_url {
        cfg.gateway.http.base_url = url.clone();
    }
    if cli.mock {
        cfg.gateway.mock = true;
    }
    cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

/// Hash of the settings that shape extraction output.
fn extraction_hash(cfg: &Config) -> String {
    let view = json!({
        "extract": cfg.extract,
        "mock": cfg.gateway.mock,
        "mock_rules": cfg.gateway.mock_rules,
        "model": cfg.gateway.http.model,
        "max_output_tokens": cfg.gateway.max_output_tokens,
    });
    hex(&Sha256::digest(view.to_string().as_bytes()))
}

fn load_run_graph(run: &Path) -> Result<KnowledgeGraph> {
    Ok(graph::load(run.join(GRAPH_FILE))?)
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.version {
        return print_json(&json!({
            "name": "kgforge",
            "version": env!("CARGO_PKG_VERSION"),
            "graph_format": graph::FORMAT_VERSION,
            "index_format": INDEX_VERSION,
        }));
    }
    let Some(command) = &cli.command else {
        return Err(CliError::Usage("no subcommand given; see `kgforge --help`".into()).into());
    };
    let cfg = load_config(&cli)?;
    match command {
        Command::Extract { corpus, run } => cmd_extract(&cfg, corpus, run),
        Command::BuildGraph { run } => cmd_build_graph(run),
        Command::Induce {
            run,
            slice,
            slices,
            sample_batches,
        } => cmd_induce(cfg, run, *slice, *slices, *sample_batches),
        Command::Index { run, variant } => {
            cmd_index(&cfg, run, variant.unwrap_or(cfg.retrieve.variant))
        }
        Command::Retrieve(args) => cmd_retrieve(cfg, args),
        Command::Eval { suite } => cmd_eval(&cfg, suite),
        Command::Stats {
            run,
            graph,
            json,
            check,
        } => cmd_stats(run.as_deref(), graph.as_deref(), *json, *check),
        Command::Config { hash } => {
            if *hash {
                println!("{}", cfg.fingerprint());
            } else {
                print!("{}", cfg.to_toml());
            }
            Ok(())
        }
    }
}

fn cmd_extract(cfg: &Config, corpus: &Path, run: &Path) -> Result<()> {
    let bytes = fs::read(corpus)
        .map_err(|e| CliError::Usage(format!("cannot read corpus {}: {e}", corpus.display())))?;
    let docs = read_corpus(corpus)?;
    let config_hash = extraction_hash(cfg);
    let mut h = Sha256::new();
    h.update(&bytes);
    h.update(config_hash.as_bytes());
    let run_id = hex(&h.finalize()[..8]);

    fs::create_dir_all(run).with_context(|| format!("creating {}", run.display()))?;
    let mut manifest = match RunManifest::load(run)? {
        Some(m) if m.run_id != run_id || m.config_hash != config_hash => {
            return Err(CliError::Usage(format!(
                "{} belongs to a different corpus or extraction config; use a fresh run directory",
                run.display()
            ))
            .into());
        }
        Some(m) => m,
        None => RunManifest {
            run_id,
            config_hash,
            ..Default::default()
        },
    };
    manifest.save(run)?;

    let gateway = cfg.gateway.build()?;
    let outcome = {
        let mut sink = ManifestSink::new(run, &mut manifest);
        extract::run_extraction(docs, &cfg.extract, &gateway, &mut sink)?
    };
    manifest.extract.batch_count = outcome.batch_count;
    manifest.extract.complete = manifest.extract.done.len() == outcome.batch_count;
    manifest.save(run)?;
    print_json(&json!({
        "run_id": manifest.run_id,
        "chunks": outcome.chunks,
        "batches": outcome.batch_count,
        "skipped_batches": outcome.skipped_batches.len(),
        "gateway_failures": outcome.gateway_failures,
        "complete": manifest.extract.complete,
    }))?;
    if outcome.gateway_failures > 0 {
        return Err(CliError::Upstream(format!(
            "{} chunk-stages failed at the gateway; rerun to retry them",
            outcome.gateway_failures
        ))
        .into());
    }
    Ok(())
}

fn cmd_build_graph(run: &Path) -> Result<()> {
    let mut manifest = RunManifest::require(run)?;
    manifest.require_stage("extract", manifest.extract.complete)?;
    let load = load_batches(run.join("batches"))?;
    if !load.errors.is_empty() {
        for e in load.errors.iter().take(10) {
            eprintln!("{e}");
        }
        return Err(CliError::Data(format!("{} malformed batch lines", load.errors.len())).into());
    }
    let (g, report) = build_graph(&load.batches)?;
    let path = run.join(GRAPH_FILE);
    graph::save(&g, &path)?;
    manifest.rebuilt();
    manifest.record(run, &path);
    manifest.save(run)?;
    print_json(&report)
}

fn cmd_induce(
    mut cfg: Config,
    run: &Path,
    slice: Option<usize>,
    slices: Option<usize>,
    sample_batches: Option<usize>,
) -> Result<()> {
    let mut manifest = RunManifest::require(run)?;
    manifest.require_stage("build-graph", manifest.build)?;
    if let Some(s) = slices {
        cfg.induce.slices = s;
    }
    if let Some(s) = slice {
        cfg.induce.slice = s;
    }
    if sample_batches.is_some() {
        cfg.induce.sample_batches = sample_batches;
    }
    cfg.induce.validate()?;
    let gateway = cfg.gateway.build()?;
    let mut g = load_run_graph(run)?;
    let (slice, slices) = (cfg.induce.slice, cfg.induce.slices);
    let (checkpoint, concepts) = if slices == 1 {
        (run.join("induce.checkpoint.jsonl"), run.join(CONCEPTS_FILE))
    } else {
        (
            run.join(format!("induce-{slice}-of-{slices}.checkpoint.jsonl")),
            run.join(format!("concepts-{slice}-of-{slices}.csv")),
        )
    };
    let outcome = induce_schema(&mut g, &cfg.induce, &gateway, Some(&checkpoint))?;
    write_concept_csv(&outcome.records, &concepts)?;
    let graph_path = run.join(GRAPH_FILE);
    graph::save(&g, &graph_path)?;
    manifest.induce = slices == 1 && cfg.induce.sample_batches.is_none();
    manifest.index = None;
    for p in [&checkpoint, &concepts, &graph_path] {
        manifest.record(run, p);
    }
    manifest.save(run)?;
    print_json(&json!({
        "elements": outcome.records.len(),
        "fallbacks": outcome.fallbacks.len(),
        "batches": outcome.batches,
        "resumed": outcome.resumed,
    }))
}

fn cmd_index(cfg: &Config, run: &Path, variant: kgforge::GraphVariant) -> Result<()> {
    let mut manifest = RunManifest::require(run)?;
    manifest.require_stage("build-graph", manifest.build)?;
    let gateway = cfg.gateway.build()?;
    let g = load_run_graph(run)?.variant(variant);
    let indexes = GraphIndexes::build(&g, &gateway)?;
    let dir = run.join(INDEX_DIR);
    indexes.save(&dir)?;
    manifest.index = Some(variant);
    for f in ["nodes.idx", "edges.idx", "passages.idx"] {
        manifest.record(run, &dir.join(f));
    }
    manifest.save(run)?;
    print_json(&json!({
        "variant": variant,
        "nodes": indexes.nodes.len(),
        "edges": indexes.edges.len(),
        "passages": indexes.passages.len(),
    }))
}

fn apply_knobs(cfg: &mut Config, a: &RetrieveArgs) {
    let r = &mut cfg.retrieve;
    if let Some(v) = a.top_n {
        r.tog.top_n = v;
    }
    if let Some(v) = a.max_depth {
        r.tog.max_depth = v;
    }
    if let Some(v) = a.initial_nodes {
        r.tog.initial_nodes = v;
    }
    if let Some(v) = a.top_n_edges {
        r.ppr.top_n_edges = v;
    }
    if let Some(v) = a.weight_adjust {
        r.ppr.weight_adjust = v;
    }
    if let Some(v) = a.damping {
        r.ppr.damping = v;
        r.large.damping = v;
    }
    if let Some(v) = a.tolerance {
        r.ppr.tolerance = v;
        r.large.tolerance = v;
    }
    if let Some(v) = a.max_iterations {
        r.ppr.max_iterations = v;
        r.large.max_iterations = v;
    }
    if let Some(v) = a.top_k {
        r.ppr.top_k_passages = v;
        r.large.top_n_passages = v;
    }
    if let Some(v) = a.personalization {
        r.ppr.personalization = v;
    }
    if let Some(v) = a.source_nodes {
        r.large.source_nodes = v;
    }
    if let Some(v) = a.sampling_area {
        r.large.sampling_area = v;
    }
    if let Some(v) = a.restart {
        r.large.restart = v;
    }
    if a.top_nodes.is_some() {
        r.large.top_nodes = a.top_nodes;
    }
}

fn cmd_retrieve(mut cfg: Config, args: &RetrieveArgs) -> Result<()> {
    apply_knobs(&mut cfg, args);
    cfg.validate()?;
    let manifest = RunManifest::require(&args.run)?;
    let Some(variant) = manifest.index else {
        return Err(CliError::Usage("stage `index` has not completed for this run".into()).into());
    };
    let gateway = cfg.gateway.build()?;
    let g = load_run_graph(&args.run)?.variant(variant);
    let indexes = GraphIndexes::load(args.run.join(INDEX_DIR))?;
    let answer = |q: &str| -> Result<RetrievalResult> {
        let r = &cfg.retrieve;
        Ok(match args.method {
            Method::Tog => tog_answer(q, &g, &indexes.nodes, &r.tog, &gateway)?,
            Method::Ppr => ppr_retrieve(q, &g, &indexes, &r.ppr, &gateway)?,
            Method::Large => large_kg_retrieve(q, &g, &indexes.nodes, &r.large, &gateway)?,
        })
    };

    if let Some(q) = &args.question {
        let result = answer(q)?;
        return match &args.out {
            Some(p) => write_lines(p, std::iter::once(serde_json::to_value(&result)?)),
            None => print_json(&result),
        };
    }
    let path = args.questions.as_ref().expect("clap requires one of the two");
    let queries: Vec<Query> = read_jsonl(path)?;
    let mut lines = Vec::with_capacity(queries.len());
    for q in &queries {
        let result = answer(&q.question)?;
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), json!(q.id));
        obj.insert("question".into(), json!(q.question));
        if let Value::Object(m) = serde_json::to_value(&result)? {
            obj.extend(m);
        }
        lines.push(Value::Object(obj));
    }
    match &args.out {
        Some(p) => write_lines(p, lines),
        None => {
            for l in &lines {
                print_json(l)?;
            }
            Ok(())
        }
    }
}

fn write_lines(path: &PathBuf, lines: impl IntoIterator<Item = Value>) -> Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(report: &eval::MetricReport, json: bool) -> Result<()> {
    if json {
        print_json(report)
    } else {
        print!("{}", report.to_text());
        Ok(())
    }
}

/// Fills predictions and retrieved passages from retrieval output, by id.
fn join_results(records: &mut [QaRecord], results: &[Value]) -> Result<()> {
    let by_id: HashMap<&str, &Value> = results
        .iter()
        .filter_map(|r| Some((r.get("id")?.as_str()?, r)))
        .collect();
    for rec in records.iter_mut() {
        let Some(id) = rec.id.as_deref() else {
            return Err(CliError::Data("QA records need an id to join with --results".into()).into());
        };
        let Some(r) = by_id.get(id) else { continue };
        if rec.prediction.is_none() {
            rec.prediction = r.get("answer").and_then(Value::as_str).map(str::to_string);
        }
        if rec.retrieved.is_empty() {
            rec.retrieved = r
                .get("passages")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(|p| p.as_str().map(str::to_string)).collect())
                .unwrap_or_default();
        }
    }
    Ok(())
}

fn cmd_eval(cfg: &Config, suite: &EvalSuite) -> Result<()> {
    match suite {
        EvalSuite::Qa { input, results, json } => {
            let mut records: Vec<QaRecord> = read_jsonl(input)?;
            if let Some(r) = results {
                let results: Vec<Value> = read_jsonl(r)?;
                join_results(&mut records, &results)?;
            }
            emit(&eval::evaluate_qa(&records), *json)
        }
        EvalSuite::Felm { input, json } => {
            let records: Vec<FelmRecord> = read_jsonl(input)?;
            let report = eval::evaluate_felm(&records, cfg.eval.printed_balanced_accuracy)?;
            emit(&report, *json)
        }
        EvalSuite::Mcq {
            run,
            condition,
            limit,
            json,
        } => {
            let g = load_run_graph(run)?;
            let passages: Vec<(String, String)> = g
                .passages()
                .iter()
                .take(limit.unwrap_or(usize::MAX))
                .map(|(id, text)| (id.clone(), text.clone()))
                .collect();
            let gateway: Gateway = cfg.gateway.build()?;
            emit(&eval::mcq_protocol(&passages, &g, &gateway, *condition)?, *json)
        }
        EvalSuite::Schema { gold, concepts, json } => {
            let gold: Vec<SchemaGold> = read_jsonl(gold)?;
            let concepts = kgforge::schema::read_concept_csv(concepts)?;
            let gateway = cfg.gateway.build()?;
            let mut emb = TokenEmbeddings::new(&gateway);
            emit(&eval::evaluate_schema(&gold, &concepts, &mut emb)?, *json)
        }
    }
}

fn cmd_stats(run: Option<&Path>, graph_path: Option<&Path>, json: bool, check: bool) -> Result<()> {
    let g = match (run, graph_path) {
        (Some(r), _) => load_run_graph(r)?,
        (None, Some(p)) => graph::load(p)?,
        (None, None) => return Err(CliError::Usage("give --run or --graph".into()).into()),
    };
    let stats = GraphStats::of(&g);
    let report = check.then(|| check_conformance(&g));
    if json {
        let mut v = serde_json::to_value(stats)?;
        v["nodes"] = json!(stats.nodes());
        v["edges"] = json!(stats.edges());
        if let Some(r) = &report {
            v["violations"] = json!(r.violations.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        }
        print_json(&v)?;
    } else {
        print!("{stats}");
    }
    if let Some(r) = report {
        if !r.passed() {
            for v in &r.violations {
                eprintln!("violation: {v}");
            }
            return Err(CliError::Data(format!("{} conformance violations", r.violations.len())).into());
        }
    }
    Ok(())
}
