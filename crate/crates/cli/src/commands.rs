use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use alt4blind_core::corpus::{load_corpus, save_corpus};
use alt4blind_core::eval::{judgments_to_jsonl, load_judgments, run_eval, synth_corpus};
use alt4blind_core::index::{load_index, save_index};
use alt4blind_core::pipeline::build_index;
use alt4blind_core::semantics::filter_corpus;
use alt4blind_core::{
    AnnParams, Corpus, EvalConfig, FilterConfig, Index, IndexVariant, ProviderSpec, RuleTable,
};
use alt4blind_service::{AppState, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::args::{required, BuildArgs, EvalArgs, FilterArgs, ServeArgs, SynthArgs};
use crate::error::CliError;

const DEFAULT_TIMEOUT_SECS: f64 = 10.0;
const DEFAULT_MAX_IN_FLIGHT: usize = 8;

/// Fails unless every given path is different from the others.
fn distinct(paths: &[(&str, &Path)]) -> Result<(), CliError> {
    for (i, (a_name, a)) in paths.iter().enumerate() {
        for (b_name, b) in &paths[i + 1..] {
            let same = match (a.canonicalize(), b.canonicalize()) {
                (Ok(x), Ok(y)) => x == y,
                _ => a == b,
            };
            if same {
                return Err(CliError::usage(format!(
                    "<{a_name}> and <{b_name}> must be different files ({})",
                    a.display()
                )));
            }
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn provider_spec(spec: Option<String>, seed: u64) -> Result<ProviderSpec, CliError> {
    spec.unwrap_or_else(|| format!("surrogate:{seed}"))
        .parse()
        .map_err(CliError::usage)
}

fn timeout(secs: Option<f64>) -> Result<Duration, CliError> {
    let secs = secs.unwrap_or(DEFAULT_TIMEOUT_SECS);
    Duration::try_from_secs_f64(secs)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| CliError::usage(format!("invalid timeout {secs}")))
}

pub fn filter(args: FilterArgs, seed: u64) -> Result<(), CliError> {
    let input = required(args.input, "input")?;
    let output = required(args.output, "output")?;
    let report = args.report.unwrap_or_else(|| {
        let mut name = output.clone().into_os_string();
        name.push(".rejected.jsonl");
        PathBuf::from(name)
    });
    distinct(&[("input", &input), ("output", &output), ("report", &report)])?;
    let rules = match &args.rules {
        Some(path) => RuleTable::load(path)?,
        None => RuleTable::default(),
    };
    let defaults = FilterConfig::default();
    let config = FilterConfig {
        min_tokens: args.min_tokens.unwrap_or(defaults.min_tokens),
        min_levels: args.min_levels.unwrap_or(defaults.min_levels),
        require_chart: !args.allow_non_charts,
    };
    config
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;

    let corpus = load_corpus(&input)?;
    let outcome = filter_corpus(&corpus, &config, &rules);
    let mut kept = outcome.kept;
    kept.metadata.seed = Some(seed);
    save_corpus(&kept, &output)?;
    let mut lines = String::new();
    for r in &outcome.rejected {
        lines.push_str(&serde_json::to_string(r).expect("rejection serializes"));
        lines.push('\n');
    }
    write_file(&report, lines)?;

    println!("kept={} rejected={}", kept.len(), outcome.rejected.len());
    for r in &outcome.rejected {
        println!("  {}\t{}", r.id, r.reason);
    }
    Ok(())
}

fn ann_params(
    m: Option<usize>,
    ef_construction: Option<usize>,
    ef_search: Option<usize>,
    seed: u64,
) -> Result<AnnParams, CliError> {
    let d = AnnParams::default();
    let params = AnnParams {
        m: m.unwrap_or(d.m),
        ef_construction: ef_construction.unwrap_or(d.ef_construction),
        ef_search: ef_search.unwrap_or(d.ef_search),
        seed,
    };
    if params.m < 2 || params.ef_construction == 0 || params.ef_search == 0 {
        return Err(CliError::usage(
            "--m must be at least 2 and --ef-construction, --ef-search at least 1",
        ));
    }
    Ok(params)
}

pub fn build(args: BuildArgs, seed: u64, quiet: bool) -> Result<(), CliError> {
    let corpus_path = required(args.corpus, "corpus")?;
    let index_out = required(args.index_out, "index-out")?;
    distinct(&[("corpus", &corpus_path), ("index-out", &index_out)])?;
    let spec = provider_spec(args.provider, seed)?;
    let variant = if args.ann {
        IndexVariant::Ann(ann_params(
            args.m,
            args.ef_construction,
            args.ef_search,
            seed,
        )?)
    } else {
        IndexVariant::Exact
    };
    let provider = spec.build(
        timeout(args.timeout_secs)?,
        args.max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT).max(1),
    )?;
    let corpus = load_corpus(&corpus_path)?;
    let image_root = args.image_root.unwrap_or_else(|| parent_dir(&corpus_path));

    let step = (corpus.len() / 20).max(1);
    let progress = move |done: usize, total: usize| {
        if !quiet && (done.is_multiple_of(step) || done == total) {
            eprint!("\rembedding {done}/{total}");
            if done == total {
                eprintln!();
            }
            let _ = std::io::stderr().flush();
        }
    };
    let index = build_index(
        &corpus,
        provider.as_ref(),
        variant,
        &image_root,
        Some(&progress),
    )?;
    save_index(&index, &index_out)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", index_out.display())))?;
    let kind = if args.ann { "ann" } else { "exact" };
    println!(
        "indexed {} records ({kind}, provider {}) into {}",
        index.len(),
        index.provider_id(),
        index_out.display()
    );
    Ok(())
}

pub fn eval(args: EvalArgs, seed: u64) -> Result<(), CliError> {
    let index_path = required(args.index, "index")?;
    let judgments_path = required(args.judgments, "judgments")?;
    let report_path = args
        .report
        .unwrap_or_else(|| PathBuf::from("eval-report.json"));
    distinct(&[
        ("index", &index_path),
        ("judgments", &judgments_path),
        ("report", &report_path),
    ])?;
    let mut index: Index = load_index(&index_path)?;
    if let Some(ef) = args.ef_search {
        index.set_ef_search(ef);
    }
    let judgments = load_judgments(&judgments_path)?;
    let config = EvalConfig {
        k: args.k.unwrap_or(3),
        alpha: args.alpha,
        include_self: args.include_self,
    };
    let mut report = run_eval(&index, &judgments, &config)?;
    if let Some(echo) = report.config_echo.as_object_mut() {
        echo.insert("index_path".into(), json!(index_path));
        echo.insert("judgments_path".into(), json!(judgments_path));
        echo.insert("seed".into(), json!(seed));
    }
    report.write_json(&report_path)?;
    print!("{}", report.render_table());
    Ok(())
}

pub fn serve(args: ServeArgs, seed: u64) -> Result<(), CliError> {
    let spec = provider_spec(args.provider, seed)?;
    let provider = spec.build(
        timeout(args.timeout_secs)?,
        args.max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT).max(1),
    )?;
    let corpus: Option<Corpus> = args.corpus.as_ref().map(load_corpus).transpose()?;
    let index: Option<Index> = args.index.as_ref().map(load_index).transpose()?;
    let defaults = ServiceConfig::default();
    let ttl_minutes = args.session_ttl.unwrap_or(30.0);
    let session_ttl = Duration::try_from_secs_f64(ttl_minutes * 60.0)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| CliError::usage(format!("invalid session TTL {ttl_minutes}")))?;
    let image_root = args
        .image_root
        .or_else(|| args.corpus.as_deref().map(parent_dir))
        .unwrap_or_else(|| PathBuf::from("."));
    let config = ServiceConfig {
        k: args.k.unwrap_or(defaults.k),
        alpha: args.alpha.unwrap_or(defaults.alpha),
        session_ttl,
        max_upload_bytes: args
            .max_upload_mib
            .map_or(defaults.max_upload_bytes, |m| m * 1024 * 1024),
        guidelines: args.guidelines,
        cors_origin: args.cors_origin,
        spool_uploads: args.spool_uploads,
        image_root,
    };
    if let Some(dir) = &config.spool_uploads {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    }
    let state = AppState::new(config, provider, corpus, index)
        .map_err(|e| CliError::usage(e.to_string()))?;
    if state.index.is_none() {
        tracing::warn!("no index loaded; the service reports degraded health");
    }
    let host = args.host.unwrap_or_else(|| "127.0.0.1".into());
    let port = args.port.unwrap_or(8080);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .map_err(|e| CliError::io(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::io(e.to_string()))?;
        println!("listening on http://{addr}/api/v1");
        let _ = std::io::stdout().flush();
        alt4blind_service::serve(listener, Arc::new(state), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::io(e.to_string()))
    })
}

/// Placeholder bar chart: the bars are shared by a cluster, and a small
/// marker in the bottom rows identifies the member. Clustermates therefore
/// share most of their encoded bytes.
fn placeholder_png(cluster_seed: u64, member: usize) -> Vec<u8> {
    const SIDE: u32 = 64;
    const BARS: u32 = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(cluster_seed);
    let heights: Vec<u32> = (0..BARS).map(|_| rng.random_range(8..SIDE - 8)).collect();
    let color: [u8; 3] = [rng.random(), rng.random(), rng.random()];
    let mut pixels = vec![255u8; (SIDE * SIDE * 3) as usize];
    let width = SIDE / BARS;
    for y in 0..SIDE {
        for x in 0..SIDE {
            let bar = (x / width) as usize;
            let filled = x % width != 0 && SIDE - y <= heights[bar];
            let marker = y >= SIDE - 2 && x == (member as u32 * 3) % SIDE;
            let rgb = if marker {
                [0, 0, 0]
            } else if filled {
                color
            } else {
                continue;
            };
            let at = ((y * SIDE + x) * 3) as usize;
            pixels[at..at + 3].copy_from_slice(&rgb);
        }
    }
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, SIDE, SIDE);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header()
        .and_then(|mut w| w.write_image_data(&pixels))
        .expect("in-memory PNG encoding");
    out
}

pub fn synth(args: SynthArgs, seed: u64) -> Result<(), CliError> {
    let out_dir = required(args.out_dir, "out-dir")?;
    let per_cluster = args.per_cluster.unwrap_or(20);
    let set = synth_corpus::<f32>(
        args.clusters.unwrap_or(5),
        per_cluster,
        args.noise.unwrap_or(0.1),
        seed,
    )
    .map_err(|e| CliError::usage(e.to_string()))?;

    for (i, (record, entry)) in set.corpus.records().iter().zip(&set.entries).enumerate() {
        let path = out_dir.join(&record.image_ref);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        }
        let cluster_seed = seed ^ (entry.cluster as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        write_file(&path, placeholder_png(cluster_seed, i % per_cluster))?;
    }
    save_corpus(&set.corpus, out_dir.join("corpus.jsonl"))?;
    write_file(
        &out_dir.join("judgments.jsonl"),
        judgments_to_jsonl(&set.judgments),
    )?;
    let index = set.build_index(IndexVariant::Exact)?;
    save_index(&index, out_dir.join("index.a4b"))
        .map_err(|e| CliError::io(format!("cannot write index: {e}")))?;
    println!(
        "wrote {} records in {} clusters to {}",
        set.corpus.len(),
        set.entries.last().map_or(0, |e| e.cluster + 1),
        out_dir.display()
    );
    Ok(())
}
