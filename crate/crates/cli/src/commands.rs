use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use cobweb_core::eval::{bench_scaling, bench_tsv, BenchConfig, EvalOptions, Gain};
use cobweb_core::io::{read_docstore, read_embeddings, read_qrels, write_embeddings};
use cobweb_core::retrieval::PathSumOptions;
use cobweb_core::tree::{export_tree, read_tree, write_tree, write_tree_json, ExportFormat};
use cobweb_core::whiten::{read_transform, write_transform};
use cobweb_core::{
    apply_whitening, build_tree, fit_whitening, run_eval, BuildConfig, EmbeddingMatrix, Error, FrozenTree, Method,
    Retriever, WhiteningConfig,
};
use log::info;

use crate::config::{parse_list, FileConfig, RunConfig};
use crate::{BenchArgs, BuildArgs, Command, EvalArgs, ExportArgs, QueryArgs, SearchArgs, WhitenArgs};

/// Exit 2 for usage problems, 1 for everything that fails on the data.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Invalid(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn log_config(cfg: &RunConfig) {
    eprintln!("{}", cfg.to_json_line());
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Outcome {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Invalid(format!("cannot write stdout: {e}")))
        }
    }
}

pub fn run(command: Command, file: &FileConfig) -> Outcome {
    match command {
        Command::Whiten(a) => whiten(a, file),
        Command::Build(a) => build(a, file),
        Command::Query(a) => query(a, file),
        Command::Eval(a) => eval(a, file),
        Command::Bench(a) => bench(a, file),
        Command::Export(a) => export(a, file),
    }
}

fn whiten(a: WhitenArgs, file: &FileConfig) -> Outcome {
    let mut cfg = RunConfig::from_file("whiten", file);
    if let Some(t) = a.threshold {
        cfg.whiten_threshold = t;
    }
    if a.no_ica {
        cfg.use_ica = false;
    }
    if let Some(s) = a.ica_seed {
        cfg.seed = s;
    }
    for (name, p) in [
        ("corpus", &a.corpus),
        ("transform_out", &a.transform_out),
        ("queries", &a.queries),
        ("queries_out", &a.queries_out),
        ("transform", &a.transform),
        ("in", &a.input),
    ] {
        cfg.path(name, p);
    }
    cfg.paths.insert("out", a.out.clone());
    log_config(&cfg);

    if let (Some(transform), Some(input)) = (&a.transform, &a.input) {
        let t = read_transform(transform)?;
        let x = read_embeddings(input)?;
        write_embeddings(&apply_whitening(&t, &x)?, &a.out)?;
        info!("whitened {} rows to {} dims", x.count(), t.output_dim());
        return Ok(());
    }

    let corpus_path = a.corpus.as_ref().ok_or_else(|| usage("whiten needs --corpus or --transform"))?;
    let transform_out = a.transform_out.as_ref().ok_or_else(|| usage("--corpus requires --transform-out"))?;
    let corpus = read_embeddings(corpus_path)?;
    let t = fit_whitening(
        &corpus,
        &WhiteningConfig {
            threshold: cfg.whiten_threshold,
            use_ica: cfg.use_ica,
            seed: cfg.seed,
        },
    )?;
    if let Some(r) = t.report() {
        info!(
            "kept {} of {} dims (explained {:.4}); ica converged={} iterations={}",
            t.output_dim(),
            t.input_dim(),
            r.explained_variance_ratio,
            r.ica_converged,
            r.ica_iterations
        );
        if t.use_ica() && !r.ica_converged {
            log::warn!("ICA did not converge within its iteration limit");
        }
    }
    write_transform(&t, transform_out)?;
    write_embeddings(&apply_whitening(&t, &corpus)?, &a.out)?;
    if let (Some(q), Some(q_out)) = (&a.queries, &a.queries_out) {
        write_embeddings(&apply_whitening(&t, &read_embeddings(q)?)?, q_out)?;
    }
    Ok(())
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn build(a: BuildArgs, file: &FileConfig) -> Outcome {
    let mut cfg = RunConfig::from_file("build", file);
    if let Some(f) = a.variance_floor {
        cfg.variance_floor = f;
    }
    if a.shuffle_seed.is_some() {
        cfg.shuffle_seed = a.shuffle_seed;
    }
    cfg.paths.insert("corpus", a.corpus.clone());
    cfg.paths.insert("out", a.out.clone());
    log_config(&cfg);

    let corpus = read_embeddings(&a.corpus)?;
    let tree = build_tree(
        &corpus,
        &BuildConfig {
            variance_floor: cfg.variance_floor,
            shuffle_seed: cfg.shuffle_seed,
        },
    )?;
    info!("built tree: {} nodes, {} leaves", tree.node_count(), tree.leaf_count());
    if is_json(&a.out) {
        write_tree_json(&tree, &a.out)?;
    } else {
        write_tree(&tree, &a.out)?;
    }
    Ok(())
}

/// Everything a retriever borrows, loaded once per run.
struct Loaded {
    method: Method,
    queries: EmbeddingMatrix,
    corpus: Option<EmbeddingMatrix>,
    frozen: Option<FrozenTree>,
    n_max: Option<usize>,
    options: PathSumOptions,
}

impl Loaded {
    fn retriever(&self) -> Retriever<'_> {
        match self.method {
            Method::Dot => Retriever::Dot {
                corpus: self.corpus.as_ref().expect("checked at load"),
            },
            Method::Bfs => Retriever::Bfs {
                tree: self.frozen.as_ref().expect("checked at load"),
                n_max: self.n_max,
            },
            Method::PathSum => Retriever::PathSum {
                tree: self.frozen.as_ref().expect("checked at load"),
                options: self.options,
            },
        }
    }
}

fn resolve_search(s: &SearchArgs, cfg: &mut RunConfig) -> Result<Method, Failure> {
    if let Some(m) = &s.method {
        cfg.method = m.clone();
    }
    if s.n_max.is_some() {
        cfg.n_max = s.n_max;
    }
    if let Some(f) = s.variance_floor {
        cfg.variance_floor = f;
    }
    if s.shuffle_seed.is_some() {
        cfg.shuffle_seed = s.shuffle_seed;
    }
    cfg.include_leaf_score |= s.include_leaf_score;
    cfg.depth_normalize |= s.depth_normalize;
    cfg.path("tree", &s.tree);
    cfg.path("corpus", &s.corpus);
    cfg.paths.insert("queries", s.queries.clone());
    cfg.path("transform", &s.transform);

    let method = Method::from_str(&cfg.method).map_err(|e| usage(e.to_string()))?;
    if method == Method::Dot && s.corpus.is_none() {
        return Err(usage("--method dot requires --corpus"));
    }
    if cfg.n_max == Some(0) {
        return Err(usage("--n-max must be at least 1"));
    }
    Ok(method)
}

fn load_search(s: &SearchArgs, cfg: &RunConfig, method: Method) -> Result<Loaded, Failure> {
    let mut queries = read_embeddings(&s.queries)?;
    if let Some(t) = &s.transform {
        queries = apply_whitening(&read_transform(t)?, &queries)?;
    }
    let corpus = s.corpus.as_deref().map(read_embeddings).transpose()?;
    let frozen = if method == Method::Dot {
        None
    } else {
        let tree = match (&s.tree, &corpus) {
            (Some(p), _) => read_tree(p)?,
            (None, Some(c)) => build_tree(
                c,
                &BuildConfig {
                    variance_floor: cfg.variance_floor,
                    shuffle_seed: cfg.shuffle_seed,
                },
            )?,
            (None, None) => return Err(usage("bfs and pathsum need --tree or --corpus")),
        };
        Some(FrozenTree::new(&tree))
    };
    Ok(Loaded {
        method,
        queries,
        corpus,
        frozen,
        n_max: cfg.n_max,
        options: PathSumOptions {
            include_leaf_score: cfg.include_leaf_score,
            depth_normalize: cfg.depth_normalize,
        },
    })
}

fn query(a: QueryArgs, file: &FileConfig) -> Outcome {
    let mut cfg = RunConfig::from_file("query", file);
    let method = resolve_search(&a.search, &mut cfg)?;
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if cfg.k == 0 {
        return Err(usage("-k must be at least 1"));
    }
    cfg.path("out", &a.out);
    log_config(&cfg);

    let loaded = load_search(&a.search, &cfg, method)?;
    let retriever = loaded.retriever();
    let mut out = BufWriter::new(Vec::new());
    let w = |e: io::Error| Failure::Invalid(e.to_string());
    writeln!(out, "query_id\trank\tdoc_id\tscore").map_err(w)?;
    for (row, x) in loaded.queries.rows().enumerate() {
        let qid = loaded.queries.id(row);
        let result = retriever.retrieve(x, cfg.k)?;
        for (i, entry) in result.entries.iter().enumerate() {
            writeln!(out, "{qid}\t{}\t{}\t{}", i + 1, entry.doc_id, entry.score).map_err(w)?;
            if !a.explain {
                continue;
            }
            if let (Some(paths), Some(tree)) = (&result.paths, &loaded.frozen) {
                let steps: Vec<String> = tree
                    .explain(&paths[i], x)
                    .iter()
                    .map(|s| format!("{}:{}:{}", s.node, s.count, s.score))
                    .collect();
                writeln!(out, "# {qid}\t{}\tpath\t{}", i + 1, steps.join(" ")).map_err(w)?;
            }
        }
        if a.explain {
            if let Some(n) = result.expansions {
                writeln!(out, "# {qid}\texpansions\t{n}").map_err(w)?;
            }
        }
    }
    let bytes = out.into_inner().map_err(|e| Failure::Invalid(e.to_string()))?;
    write_output(a.out.as_deref(), &bytes)
}

fn eval(a: EvalArgs, file: &FileConfig) -> Outcome {
    let mut cfg = RunConfig::from_file("eval", file);
    let method = resolve_search(&a.search, &mut cfg)?;
    if let Some(c) = &a.cutoffs {
        cfg.cutoffs = parse_list(c).map_err(usage)?;
    }
    if let Some(g) = &a.gain {
        cfg.gain = g.clone();
    }
    let gain = Gain::from_str(&cfg.gain).map_err(|e| usage(e.to_string()))?;
    if cfg.cutoffs.is_empty() || cfg.cutoffs.contains(&0) {
        return Err(usage("cutoffs must be positive"));
    }
    cfg.paths.insert("qrels", a.qrels.clone());
    cfg.path("out", &a.out);
    log_config(&cfg);

    let qrels = read_qrels(&a.qrels)?;
    let loaded = load_search(&a.search, &cfg, method)?;
    let report = run_eval(
        &loaded.retriever(),
        &loaded.queries,
        &qrels,
        &cfg.cutoffs,
        EvalOptions {
            gain,
            measure_latency: !a.no_latency,
        },
    )?;
    eprint!("{}", report.render_table());
    let mut json = report.to_json();
    json.push('\n');
    write_output(a.out.as_deref(), json.as_bytes())
}

fn bench(a: BenchArgs, file: &FileConfig) -> Outcome {
    let mut cfg = RunConfig::from_file("bench", file);
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if a.n_max.is_some() {
        cfg.n_max = a.n_max;
    }
    if let Some(f) = a.variance_floor {
        cfg.variance_floor = f;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let sizes = parse_list(&a.sizes).map_err(usage)?;
    let methods = a
        .methods
        .split(',')
        .map(|m| Method::from_str(m.trim()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(e.to_string()))?;
    if sizes.is_empty() || sizes.contains(&0) || a.trials == 0 || cfg.k == 0 || cfg.n_max == Some(0) {
        return Err(usage("sizes, trials, k and n-max must be positive"));
    }
    log_config(&cfg);

    let rows = bench_scaling(&BenchConfig {
        sizes,
        methods,
        trials: a.trials,
        dim: a.dim,
        n_clusters: a.clusters,
        n_queries: a.n_queries,
        sigma: a.sigma,
        k: cfg.k,
        n_max: cfg.n_max,
        variance_floor: cfg.variance_floor,
        seed: cfg.seed,
    })?;
    write_output(None, bench_tsv(&rows).as_bytes())
}

fn export(a: ExportArgs, file: &FileConfig) -> Outcome {
    let mut cfg = RunConfig::from_file("export", file);
    cfg.paths.insert("tree", a.tree.clone());
    cfg.path("docs", &a.docs);
    cfg.path("out", &a.out);
    let format = ExportFormat::from_str(&a.format).map_err(|e| usage(e.to_string()))?;
    log_config(&cfg);

    let tree = read_tree(&a.tree)?;
    let docs = a.docs.as_deref().map(read_docstore).transpose()?;
    let bytes = export_tree(&tree, docs.as_ref(), format, a.max_depth);
    write_output(a.out.as_deref(), &bytes)
}
