//! One function per pipeline stage. Every stage reads file artifacts from
//! the run directory, writes its own, and records hashes in the manifest.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use pctx::config::ReplacementDistribution;
use pctx::embed::{load_raw_embeddings, write_text, ContextTable, FeatureTable};
use pctx::eval::{
    evaluate_with_predictions, popular_rate, write_popular_rate_csv, write_sweep_csv, SweepParam,
};
use pctx::gr::CountTokenModel;
use pctx::ingest::{generate_synthetic, InteractionLog, SyntheticParams};
use pctx::pipeline::{self, effective_alpha, EvalTarget};
use pctx::registry::{export_sid_groups, sid_stats};
use pctx::tokenize::{write_token_corpus, Tokenizer};

use crate::manifest::record_stage;
use crate::workspace::{
    create, AppError, Workspace, CENTROIDS, CODEBOOKS, CONTEXTS, CORPUS, FEATURES, INTENTS,
    INTERACTIONS, METRICS, MODEL, PREDICTIONS, REGISTRY_DUMP, REGISTRY_STATE, WHITENING,
};

fn io_err(path: &Path, e: std::io::Error) -> AppError {
    AppError::Pctx(pctx::Error::io(path.display().to_string(), e))
}

/// Canonical `user<TAB>item<TAB>timestamp` dump of a filtered log. Loading
/// it back is a fixpoint of the preprocessing.
fn write_interactions(ws: &Workspace, log: &InteractionLog) -> Result<(), AppError> {
    let path = ws.path(INTERACTIONS);
    let mut w = std::io::BufWriter::new(create(&path)?);
    for seq in &log.sequences {
        for (idx, &item) in seq.items.iter().enumerate() {
            let ts = seq
                .timestamps
                .as_ref()
                .map(|t| t[idx])
                .unwrap_or(idx as i64);
            writeln!(w, "{}\t{}\t{}", seq.user, log.vocab.raw_of(item), ts)
                .map_err(|e| io_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&path, e))
}

fn write_features(
    ws: &Workspace,
    log: &InteractionLog,
    table: &FeatureTable,
) -> Result<(), AppError> {
    let path = ws.path(FEATURES);
    write_text(&table.to_raw(&log.vocab), create(&path)?)?;
    Ok(())
}

pub fn ingest(
    ws: &Workspace,
    interactions: &Path,
    features: Option<&Path>,
    contexts: Option<&Path>,
) -> Result<(), AppError> {
    let started = Instant::now();
    let log = pctx::ingest::load_interactions(interactions, &ws.cfg)?;
    log::info!(
        "loaded {} users, {} items, {} interactions",
        log.num_users(),
        log.num_items(),
        log.num_interactions()
    );
    write_interactions(ws, &log)?;
    let mut artifacts = vec![INTERACTIONS];

    if let Some(path) = features {
        let raw = load_raw_embeddings(path)?;
        let table = FeatureTable::from_raw(&raw, &log.vocab)?;
        write_features(ws, &log, &table)?;
        artifacts.push(FEATURES);
    }
    if let Some(path) = contexts {
        let split = ws.split_of(&log);
        let raw = load_raw_embeddings(path)?;
        let table = ContextTable::from_raw(&raw, &log, &split)?;
        let out = ws.path(CONTEXTS);
        write_text(&table.to_raw(&log), create(&out)?)?;
        artifacts.push(CONTEXTS);
    }
    record_stage(ws, "ingest", &artifacts, started)
}

pub fn synth(ws: &Workspace, users: usize, items: usize, intents: usize) -> Result<(), AppError> {
    let started = Instant::now();
    let params = SyntheticParams {
        n_users: users,
        n_items: items,
        n_intents: intents,
        ..Default::default()
    };
    let corpus = generate_synthetic(&params, ws.cfg.seed)?;
    write_interactions(ws, &corpus.log)?;
    write_features(ws, &corpus.log, &corpus.features)?;

    let path = ws.path(INTENTS);
    let mut w = std::io::BufWriter::new(create(&path)?);
    for (idx, intents) in corpus.item_intents.iter().enumerate() {
        let list: Vec<String> = intents.iter().map(|i| i.to_string()).collect();
        writeln!(
            w,
            "item\t{}\t{}",
            corpus.log.vocab.raw_of(pctx::ItemId(idx as u32)),
            list.join(",")
        )
        .map_err(|e| io_err(&path, e))?;
    }
    for (seq, intent) in corpus.user_intents.iter().enumerate() {
        writeln!(w, "user\t{}\t{}", corpus.log.sequences[seq].user, intent)
            .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    record_stage(ws, "synth", &[INTERACTIONS, FEATURES, INTENTS], started)
}

pub fn build_tokenizer(ws: &Workspace) -> Result<(), AppError> {
    let started = Instant::now();
    let log = ws.load_log()?;
    let split = ws.split_of(&log);
    let features = ws.load_features(&log)?;
    let contexts = ws.load_contexts(&log, &split)?;

    let artifacts = pipeline::build_tokenizer(&log, &split, &features, contexts.as_ref(), &ws.cfg)?;
    log::info!(
        "registry holds {} semantic ids over {} items",
        artifacts.registry.num_sids(),
        artifacts.registry.num_items()
    );

    artifacts
        .registry
        .write_dump(&log, create(&ws.path(REGISTRY_DUMP))?)?;
    artifacts
        .registry
        .write_state(create(&ws.path(REGISTRY_STATE))?)?;
    artifacts
        .whitening
        .write_text(create(&ws.path(WHITENING))?)?;
    artifacts
        .codebooks
        .write_binary(create(&ws.path(CODEBOOKS))?)?;
    pctx::condense::write_centroids(&artifacts.condensed, &log, create(&ws.path(CENTROIDS))?)?;

    record_stage(
        ws,
        "build-tokenizer",
        &[
            REGISTRY_DUMP,
            REGISTRY_STATE,
            WHITENING,
            CODEBOOKS,
            CENTROIDS,
        ],
        started,
    )
}

/// Reassemble the tokenizer from stage artifacts.
struct LoadedTokenizer {
    log: InteractionLog,
    split: pctx::ingest::Split,
    features: FeatureTable,
    registry: pctx::registry::SidRegistry,
    whitening: pctx::quantize::WhiteningTransform,
    encoder: pctx::context::ContextEncoder,
}

fn load_tokenizer(ws: &Workspace) -> Result<LoadedTokenizer, AppError> {
    let log = ws.load_log()?;
    let split = ws.split_of(&log);
    let features = ws.load_features(&log)?;
    let registry = ws.load_registry()?;
    let whitening = ws.load_whitening()?;
    let encoder = ws.load_encoder(&log, &split)?;
    Ok(LoadedTokenizer {
        log,
        split,
        features,
        registry,
        whitening,
        encoder,
    })
}

impl LoadedTokenizer {
    fn tokenizer(&self, ws: &Workspace) -> Tokenizer<'_> {
        Tokenizer {
            registry: &self.registry,
            encoder: &self.encoder,
            features: &self.features,
            whitening: &self.whitening,
            alpha: effective_alpha(&ws.cfg),
            mode: ws.cfg.mode,
        }
    }
}

pub fn tokenize(ws: &Workspace) -> Result<(), AppError> {
    let started = Instant::now();
    let loaded = load_tokenizer(ws)?;
    let corpus = pipeline::tokenize_corpus(&loaded.log, &loaded.split, &loaded.tokenizer(ws))?;
    write_token_corpus(&corpus, create(&ws.path(CORPUS))?)?;
    record_stage(ws, "tokenize", &[CORPUS], started)
}

pub fn fit(ws: &Workspace) -> Result<(), AppError> {
    let started = Instant::now();
    let loaded = load_tokenizer(ws)?;
    let model = pipeline::fit_model(&loaded.log, &loaded.split, &loaded.tokenizer(ws), &ws.cfg)?;
    model.write_text(create(&ws.path(MODEL))?)?;
    record_stage(ws, "fit", &[MODEL], started)
}

pub fn eval(ws: &Workspace) -> Result<(), AppError> {
    let started = Instant::now();
    let log = ws.load_log()?;
    let split = ws.split_of(&log);
    let registry = ws.load_registry()?;

    let model_path = ws.require(MODEL, "fit")?;
    let model = CountTokenModel::read_text(
        crate::workspace::open(&model_path)?,
        &model_path.display().to_string(),
    )?;
    let inputs = ws.load_corpus_inputs(&registry)?;
    if inputs.len() != split.entries.len() {
        return Err(AppError::Pctx(pctx::Error::Format(format!(
            "corpus holds {} sequences but the split has {}; re-run `tokenize`",
            inputs.len(),
            split.entries.len()
        ))));
    }
    let targets = pipeline::eval_targets(&log, &split, EvalTarget::Test);
    let (report, predictions) = evaluate_with_predictions(
        &model,
        &registry,
        &inputs,
        &targets,
        ws.cfg.beam_width,
        &[5, 10],
    );
    log::info!(
        "recall@10 {:.4}, ndcg@10 {:.4} over {} users",
        report.recall[&10],
        report.ndcg[&10],
        report.num_users
    );
    report.write_csv(create(&ws.path(METRICS))?)?;

    let pred_path = ws.path(PREDICTIONS);
    let mut w = std::io::BufWriter::new(create(&pred_path)?);
    for (entry, ranked) in split.entries.iter().zip(&predictions) {
        let user = &log.sequences[entry.seq].user;
        for (rank, r) in ranked.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                user,
                rank + 1,
                log.vocab.raw_of(r.item),
                r.score,
                r.top_sid
            )
            .map_err(|e| io_err(&pred_path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&pred_path, e))?;

    record_stage(ws, "eval", &[METRICS, PREDICTIONS], started)
}

pub fn sweep(ws: &Workspace, param: &str, values: &[f64]) -> Result<(), AppError> {
    let started = Instant::now();
    let param: SweepParam = param.parse()?;
    if values.is_empty() {
        return Err(AppError::Pctx(pctx::Error::Config(
            "sweep needs at least one value".to_string(),
        )));
    }
    let log = ws.load_log()?;
    let split = ws.split_of(&log);
    let features = ws.load_features(&log)?;
    let contexts = ws.load_contexts(&log, &split)?;

    let rows = pctx::eval::sweep(
        param,
        values,
        &ws.cfg,
        &log,
        &split,
        &features,
        contexts.as_ref(),
    )?;
    let name = match param {
        SweepParam::Gamma => "sweep_gamma.csv",
        SweepParam::Tau => "sweep_tau.csv",
    };
    write_sweep_csv(param, &rows, create(&ws.path(name))?)?;
    record_stage(ws, "sweep", &[name], started)
}

pub fn analyze(ws: &Workspace) -> Result<(), AppError> {
    let started = Instant::now();
    let loaded = load_tokenizer(ws)?;
    let tokenizer = loaded.tokenizer(ws);
    let max_pos = ws.cfg.max_seq_len;

    let variants = [
        (
            "context_matched",
            0.0,
            ReplacementDistribution::UniformOthers,
        ),
        ("trained_gamma", ws.cfg.gamma, ws.cfg.augment_distribution),
        (
            "uniform_replacement",
            1.0,
            ReplacementDistribution::UniformAll,
        ),
    ];
    let mut rows = Vec::new();
    for (name, gamma, dist) in variants {
        let r = popular_rate(
            &loaded.log,
            &loaded.split,
            &tokenizer,
            gamma,
            dist,
            ws.cfg.seed,
            max_pos,
        )?;
        rows.push((name, r));
    }
    let named: Vec<(&str, &[pctx::eval::PopularRateRow])> =
        rows.iter().map(|(n, r)| (*n, r.as_slice())).collect();
    write_popular_rate_csv(&named, create(&ws.path("popular_rate.csv"))?)?;

    let stats = sid_stats(&loaded.registry);
    let stats_path = ws.path("sid_stats.csv");
    let mut w = std::io::BufWriter::new(create(&stats_path)?);
    writeln!(w, "key,value").map_err(|e| io_err(&stats_path, e))?;
    for (sids, items) in &stats.histogram {
        writeln!(w, "items_with_{sids}_sids,{items}").map_err(|e| io_err(&stats_path, e))?;
    }
    writeln!(w, "total_sids,{}", stats.total_sids).map_err(|e| io_err(&stats_path, e))?;
    writeln!(w, "num_items,{}", stats.num_items).map_err(|e| io_err(&stats_path, e))?;
    writeln!(w, "usage_ratio,{}", stats.usage_ratio).map_err(|e| io_err(&stats_path, e))?;
    w.flush().map_err(|e| io_err(&stats_path, e))?;

    let groups = export_sid_groups(&loaded.registry);
    groups.write_text(&loaded.log, create(&ws.path("sid_groups.txt"))?)?;

    record_stage(
        ws,
        "analyze",
        &["popular_rate.csv", "sid_stats.csv", "sid_groups.txt"],
        started,
    )
}
