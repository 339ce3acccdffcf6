use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use tomforge_core::construction_pipeline::{read_events, CandidatePool, Pipeline, RunReport};
use tomforge_core::curation::{self, read_log, replay, CurationService, Roster, SystemClock};
use tomforge_core::esc_augment::{augment_all, read_dialogues, EscConfig};
use tomforge_core::evaluation::{align_records, evaluate_task, read_records, render_table};
use tomforge_core::graph_store::NODES_FILE;
use tomforge_core::inference::{lookup_or_infer, save_inferred};
use tomforge_core::llm_backend::{Backend, HttpBackend, Lexicon, MockBackend};
use tomforge_core::prompt_builder::TemplateSet;
use tomforge_core::task_builder::{
    apply_split, derive_all, export_training_file, read_split_manifest, split_by_situation, write_split_manifest,
};
use tomforge_core::Graph;

use crate::config::{BackendKind, Config, ReportFormat};
use crate::error::CliError;
use crate::{
    AugmentArgs, BuildCommand, Command, CurateCommand, EscCommand, EvalArgs, ExportArgs, FinalizeArgs, InferArgs,
    Part, ServeArgs, SplitArgs, StatsArgs,
};

pub fn dispatch(command: Command, config: &Config) -> Result<(), CliError> {
    match command {
        Command::Build(BuildCommand::Situations(args)) => build_situations(config, args.events.as_deref()),
        Command::Build(BuildCommand::Expand) => build_expand(config),
        Command::Curate(CurateCommand::Serve(args)) => serve(config, args),
        Command::Finalize(args) => finalize(config, args),
        Command::Split(args) => split(config, args),
        Command::ExportTraining(args) => export_training(config, args),
        Command::Infer(args) => infer(config, args),
        Command::Eval(args) => eval(config, args),
        Command::Esc(EscCommand::Augment(args)) => esc_augment(config, args),
        Command::Stats(args) => stats(config, args),
    }
}

fn stdout_line(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| CliError::io("stdout", e))
}

fn templates(config: &Config) -> Result<TemplateSet, CliError> {
    match &config.paths.templates {
        Some(path) => TemplateSet::from_file(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display()))),
        None => Ok(TemplateSet::builtin().clone()),
    }
}

fn backend(config: &Config, kind: BackendKind, seed: u64, templates: &TemplateSet) -> Result<Box<dyn Backend>, CliError> {
    let settings = &config.backend;
    Ok(match kind {
        BackendKind::Mock => {
            let lexicon = match &settings.lexicon {
                Some(path) => Lexicon::from_file(path)?,
                None => Lexicon::builtin().clone(),
            };
            Box::new(
                MockBackend::new(seed, lexicon)?
                    .with_templates(templates.clone())
                    .with_capability(settings.capability)
                    .with_unique_completions(settings.unique_completions),
            )
        }
        BackendKind::Http => {
            Box::new(HttpBackend::from_env(settings.http.clone()).with_capability(settings.capability))
        }
    })
}

fn default_backend(config: &Config, templates: &TemplateSet) -> Result<Box<dyn Backend>, CliError> {
    backend(config, config.backend.kind, config.backend.seed, templates)
}

fn load_pool(path: &Path) -> Result<CandidatePool, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!(
            "candidate pool {} not found; run `tomforge build situations` first",
            path.display()
        )));
    }
    Ok(CandidatePool::load(path)?)
}

fn report_json(report: &RunReport, pool: &CandidatePool) -> String {
    serde_json::json!({
        "generated": report.generated,
        "duplicates": report.duplicates,
        "empty_skipped": report.empty_skipped,
        "flagged": report.flagged,
        "parents_expanded": report.parents_expanded,
        "pool_size": pool.len(),
    })
    .to_string()
}

fn build_situations(config: &Config, events: Option<&Path>) -> Result<(), CliError> {
    let events_path = events
        .or(config.paths.events_file.as_deref())
        .ok_or_else(|| CliError::Usage("no events file: pass --events or set paths.events_file".into()))?;
    let events = read_events(events_path)?;
    let templates = templates(config)?;
    let backend = default_backend(config, &templates)?;
    let pipeline = Pipeline::new(backend.as_ref(), &templates, config.pipeline.clone())?;
    let pool_path = &config.paths.pool_file;
    let mut pool = if pool_path.exists() { CandidatePool::load(pool_path)? } else { CandidatePool::new() };
    let report = pipeline.rewrite_events(&mut pool, &events)?;
    pool.save(pool_path)?;
    stdout_line(&report_json(&report, &pool))
}

fn build_expand(config: &Config) -> Result<(), CliError> {
    let templates = templates(config)?;
    let backend = default_backend(config, &templates)?;
    let pipeline = Pipeline::new(backend.as_ref(), &templates, config.pipeline.clone())?;
    let base = load_pool(&config.paths.pool_file)?;
    let mut pool = reviewed(base.clone(), config)?;
    let result = pipeline.expand(&mut pool);
    // Decisions stay in the log only; the pool file keeps generation state.
    for c in base.candidates() {
        let stored = pool.get_mut(&c.id).expect("expansion only appends");
        stored.status = c.status;
        stored.text = c.text.clone();
        stored.source = c.source;
    }
    // Completed expansions are checkpointed even when a later one fails.
    pool.save(&config.paths.pool_file)?;
    let report = result?;
    stdout_line(&report_json(&report, &pool))
}

/// The pool with every logged review decision applied.
fn reviewed(pool: CandidatePool, config: &Config) -> Result<CandidatePool, CliError> {
    if config.paths.decision_log.exists() {
        Ok(replay(pool, &read_log(&config.paths.decision_log)?)?)
    } else {
        Ok(pool)
    }
}

fn serve(config: &Config, args: ServeArgs) -> Result<(), CliError> {
    let roster = Roster::load(&args.roster)?;
    let pool = load_pool(&config.paths.pool_file)?;
    let mut curation = config.curation.clone();
    if curation.graph_dir.is_none() {
        curation.graph_dir = Some(config.paths.graph_dir.clone());
    }
    if let Some(dir) = config.paths.decision_log.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    let service = CurationService::new(pool, roster, curation, Arc::new(SystemClock)).with_log(&config.paths.decision_log)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("runtime", e))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::io(&addr, e))?;
        let local = listener.local_addr().map_err(|e| CliError::io(&addr, e))?;
        eprintln!("listening on {local}");
        curation::serve(listener, Arc::new(service)).await.map_err(|e| CliError::io(local, e))
    })
}

fn finalize(config: &Config, args: FinalizeArgs) -> Result<(), CliError> {
    let pool = reviewed(load_pool(&config.paths.pool_file)?, config)?;
    let graph = curation::finalize(&pool, args.force)?;
    graph.save(&config.paths.graph_dir)?;
    let stats = graph.stats();
    if args.json {
        stdout_line(&serde_json::to_string_pretty(&stats).expect("stats serialize"))
    } else {
        stdout_line(stats.render_table().trim_end())
    }
}

fn load_graph(config: &Config) -> Result<Graph, CliError> {
    let dir = &config.paths.graph_dir;
    if !dir.join(NODES_FILE).exists() {
        return Err(CliError::Io(format!(
            "no graph in {}; run `tomforge finalize` first",
            dir.display()
        )));
    }
    Ok(Graph::load(dir)?)
}

fn split(config: &Config, args: SplitArgs) -> Result<(), CliError> {
    let graph = load_graph(config)?;
    let samples = derive_all(&graph)?;
    let split = split_by_situation(&samples, args.ratio, args.seed)?;
    let manifest = &config.paths.split_manifest;
    if let Some(dir) = manifest.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    write_split_manifest(&split, manifest)?;
    stdout_line(&format!(
        "train_situations: {}, val_situations: {}",
        split.train_situations.len(),
        split.validation_situations.len()
    ))
}

fn export_training(config: &Config, args: ExportArgs) -> Result<(), CliError> {
    let graph = load_graph(config)?;
    let samples = derive_all(&graph)?;
    let selected = match args.part {
        Part::All => samples,
        Part::Train | Part::Validation => {
            let manifest = &config.paths.split_manifest;
            if !manifest.exists() {
                return Err(CliError::Io(format!(
                    "split manifest {} not found; run `tomforge split` first",
                    manifest.display()
                )));
            }
            let mut split = read_split_manifest(manifest)?;
            apply_split(&mut split, &samples);
            if args.part == Part::Train { split.train } else { split.validation }
        }
    };
    export_training_file(&selected, &args.out)?;
    stdout_line(&format!("records: {}", selected.len()))
}

fn infer(config: &Config, args: InferArgs) -> Result<(), CliError> {
    let graph = if config.paths.graph_dir.join(NODES_FILE).exists() {
        Graph::load(&config.paths.graph_dir)?
    } else {
        Graph::new()
    };
    let templates = templates(config)?;
    let backend = backend(
        config,
        args.backend.unwrap_or(config.backend.kind),
        args.seed.unwrap_or(config.backend.seed),
        &templates,
    )?;
    let chains = lookup_or_infer(&graph, &args.situation, args.polarity, backend.as_ref(), &config.inference)?;
    if let Some(dir) = &args.save {
        save_inferred(dir, &chains)?;
    }
    stdout_line(&serde_json::to_string_pretty(&chains).expect("chains serialize"))
}

fn eval(config: &Config, args: EvalArgs) -> Result<(), CliError> {
    let aligned = align_records(read_records(&args.preds)?, read_records(&args.refs)?)?;
    let report = evaluate_task(args.task, &aligned)?;
    match args.format.unwrap_or(config.eval.format) {
        ReportFormat::Json => stdout_line(&serde_json::to_string_pretty(&report).expect("report serializes")),
        ReportFormat::Table => stdout_line(render_table(&[report]).trim_end()),
    }
}

fn esc_augment(config: &Config, args: AugmentArgs) -> Result<(), CliError> {
    let esc = EscConfig {
        source: args.source.unwrap_or(config.esc.source),
        ..config.esc.clone()
    };
    let dialogues = read_dialogues(&args.dialogues)?;
    let templates = templates(config)?;
    let backend = default_backend(config, &templates)?;
    let records = augment_all(&dialogues, backend.as_ref(), &esc)?;
    match &args.out {
        Some(path) => {
            tomforge_core::esc_augment::write_records(path, &records)?;
            Ok(())
        }
        None => {
            for r in &records {
                stdout_line(&serde_json::to_string(r).expect("records serialize"))?;
            }
            Ok(())
        }
    }
}

fn stats(config: &Config, args: StatsArgs) -> Result<(), CliError> {
    let stats = load_graph(config)?.stats();
    if args.json {
        stdout_line(&serde_json::to_string_pretty(&stats).expect("stats serialize"))
    } else {
        stdout_line(stats.render_table().trim_end())
    }
}
