use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{Cli, Command, RunConfig, TagsCommand, WordnetCommand};
use crate::annotate::{load_stopwords, normalize_user_tags, softmax, top_k_tags, AnnotationConfig};
use crate::corpus::{
    load_feature_table, load_labels, load_lexicon, load_tag_table, write_feature_table, write_tag_table, Dataset,
    DatasetBuilder, FeatureVector, ImageRecord, Layer, PrivacyLabel, TagSet,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, grid_search_cv, holdout_split, write_pr_csv, BagOfTags, ClassMetrics, CvTable, DenseLayer, EvalReport,
    Representation, TagSource, WeightedMetrics,
};
use crate::featurize::vectorize;
use crate::gist::gist_directory;
use crate::svm::{solve, write_model, Kernel, KernelSpec, TrainConfig};
use crate::taglab::{
    cooccurrence_graph, ego_subgraph, frequency_cloud, information_gain_cv, write_cloud_csv, write_ig_csv,
};
use crate::wordnet::{expand_tagset_with, load_wordnet, ExpansionSpec, Lexicon, Pos, WORDNET_DIR_ENV};

/// Output directory whose files all start with the same metadata line.
struct Out {
    dir: PathBuf,
    header: String,
}

impl Out {
    fn new(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Out {
            dir: dir.to_path_buf(),
            header: format!(
                "# picpriv {} seed={} config={}",
                env!("CARGO_PKG_VERSION"),
                cfg.seed,
                cfg.hash()
            ),
        })
    }

    fn write(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{}", self.header).map_err(|e| Error::io(&path, e))?;
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn io_to_err(name: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(name, e)
}

pub(super) fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.effective_config()?;
    match &cli.command {
        Command::Annotate { .. } => annotate(&cfg, &Out::new(&cli.out, &cfg)?),
        Command::Featurize { .. } => featurize(&cfg, &Out::new(&cli.out, &cfg)?),
        Command::Experiment(_) => experiment(&cfg, &Out::new(&cli.out, &cfg)?),
        Command::Tags(t) => tags(&cfg, t, &Out::new(&cli.out, &cfg)?),
        Command::Wordnet(WordnetCommand::Expand { relation, depth, tags }) => {
            let spec = ExpansionSpec::new(*relation, *depth)?;
            wordnet_expand(&cfg, spec, tags, &cli.out)
        }
        Command::Gist { images, .. } => gist(&cfg, images, &Out::new(&cli.out, &cfg)?),
    }
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::MissingData(format!("no {what} given (set paths.{key} or pass --{})", key.replace('_', "-"))))
}

fn annotation_config(cfg: &RunConfig) -> Result<AnnotationConfig> {
    let stopwords = match &cfg.paths.stopwords {
        Some(p) => load_stopwords(p)?,
        None => HashSet::new(),
    };
    let acfg = AnnotationConfig {
        k: cfg.annotate.k,
        stopwords,
        max_tokens: cfg.annotate.max_tokens,
    };
    acfg.validate()?;
    Ok(acfg)
}

fn load_layer(cfg: &RunConfig, layer: Layer) -> Result<Dataset> {
    if let Some(p) = cfg.paths.features.get(&layer) {
        return load_feature_table(p, layer);
    }
    if layer == Layer::Prob {
        if let Some(p) = cfg.paths.features.get(&Layer::Fc8) {
            let fc8 = load_feature_table(p, Layer::Fc8)?;
            let records = fc8
                .into_records()
                .into_par_iter()
                .map(|mut r| {
                    let logits = r.features.remove(&Layer::Fc8).expect("fc8 table record");
                    let probs = softmax(logits.values())?.into_feature_vector();
                    r.features.insert(Layer::Prob, probs);
                    Ok(r)
                })
                .collect::<Result<Vec<_>>>()?;
            return Dataset::new(records);
        }
    }
    Err(Error::MissingData(format!(
        "no feature table for layer {layer} (set paths.features.{layer} or pass --features {layer}=PATH)"
    )))
}

fn deep_tags_from_fc8(cfg: &RunConfig, acfg: &AnnotationConfig) -> Result<Vec<(String, TagSet)>> {
    let fc8 = load_layer(cfg, Layer::Fc8)?;
    let dim = fc8.layer_dim(Layer::Fc8).unwrap_or(0);
    let lexicon = load_lexicon(require(&cfg.paths.lexicon, "category lexicon", "lexicon")?, dim)?;
    fc8.records()
        .par_iter()
        .map(|r| {
            let dist = softmax(r.feature(Layer::Fc8)?.values())?;
            Ok((r.id.clone(), top_k_tags(&dist, &lexicon, acfg)?))
        })
        .collect()
}

fn user_tags(cfg: &RunConfig, acfg: &AnnotationConfig) -> Result<Vec<(String, TagSet)>> {
    let raw = load_tag_table(require(&cfg.paths.user_tags, "user tag table", "user_tags")?)?;
    Ok(raw
        .into_iter()
        .map(|(id, tags)| {
            let set = normalize_user_tags(&tags, acfg);
            (id, set)
        })
        .collect())
}

fn deep_tags(cfg: &RunConfig, acfg: &AnnotationConfig) -> Result<Vec<(String, TagSet)>> {
    let Some(path) = &cfg.paths.deep_tags else {
        return deep_tags_from_fc8(cfg, acfg);
    };
    load_tag_table(path)?
        .into_iter()
        .map(|(id, tags)| {
            let set = TagSet::try_from_iter(tags.iter().map(|t| t.trim().to_lowercase()))
                .map_err(|e| Error::parse(path, 0, format!("deep tags of {id:?}: {e}")))?;
            Ok((id, set))
        })
        .collect()
}

fn label_rows(cfg: &RunConfig) -> Result<Vec<(String, PrivacyLabel)>> {
    Ok(load_labels(require(&cfg.paths.labels, "label file", "labels")?)?.rows)
}

/// Labeled records carrying the requested tag source.
fn tag_records(cfg: &RunConfig, source: TagSource) -> Result<Vec<ImageRecord>> {
    let acfg = annotation_config(cfg)?;
    let mut b = DatasetBuilder::new();
    if matches!(source, TagSource::User | TagSource::Combined) {
        b = b.user_tags(user_tags(cfg, &acfg)?);
    }
    if matches!(source, TagSource::Deep | TagSource::Combined) {
        b = b.deep_tags(deep_tags(cfg, &acfg)?);
    }
    labeled(b.labels(&label_rows(cfg)?).build()?)
}

fn layer_records(cfg: &RunConfig, layer: Layer) -> Result<Vec<ImageRecord>> {
    let ds = DatasetBuilder::new()
        .layer(layer, load_layer(cfg, layer)?)
        .labels(&label_rows(cfg)?)
        .build()?;
    labeled(ds)
}

fn labeled(ds: Dataset) -> Result<Vec<ImageRecord>> {
    let total = ds.len();
    let records: Vec<ImageRecord> = ds.into_records().into_iter().filter(|r| r.label.is_some()).collect();
    if records.len() < total {
        log::warn!("{} records have no label and are ignored", total - records.len());
    }
    if records.is_empty() {
        return Err(Error::MissingData("no labeled records after joining inputs".into()));
    }
    Ok(records)
}

fn labels_of(records: &[ImageRecord]) -> Vec<PrivacyLabel> {
    records.iter().map(|r| r.label.expect("labeled record")).collect()
}

fn wordnet(cfg: &RunConfig) -> Result<Lexicon> {
    let dir = match &cfg.paths.wordnet_dir {
        Some(d) => d.clone(),
        None => std::env::var_os(WORDNET_DIR_ENV).map(PathBuf::from).ok_or_else(|| {
            Error::MissingData(format!(
                "no WordNet directory (set paths.wordnet_dir, pass --wordnet or set {WORDNET_DIR_ENV})"
            ))
        })?,
    };
    let parts: &[Pos] = if cfg.wordnet_all_pos { &Pos::ALL } else { &[Pos::Noun] };
    load_wordnet(&dir, parts)
}

fn enrich(records: &[ImageRecord], lex: &Lexicon, spec: &ExpansionSpec, acfg: &AnnotationConfig) -> Vec<ImageRecord> {
    records
        .par_iter()
        .map(|r| {
            let mut r = r.clone();
            r.user_tags = expand_tagset_with(&r.user_tags, lex, spec, acfg);
            r.deep_tags = expand_tagset_with(&r.deep_tags, lex, spec, acfg);
            r
        })
        .collect()
}

fn annotate(cfg: &RunConfig, out: &Out) -> Result<()> {
    let acfg = annotation_config(cfg)?;
    let rows = deep_tags_from_fc8(cfg, &acfg)?;
    out.write("deep_tags.jsonl", |w| {
        write_tag_table(w, rows.iter().map(|(id, t)| (id.as_str(), t))).map_err(io_to_err("deep_tags.jsonl"))
    })
}

#[derive(Serialize)]
struct SparseLine<'a> {
    id: &'a str,
    indices: &'a [u32],
    values: &'a [f64],
}

fn featurize(cfg: &RunConfig, out: &Out) -> Result<()> {
    let source = cfg.experiment.tag_source;
    let mut records = tag_records(cfg, source)?;
    if let Some(spec) = cfg.enrichment_spec()? {
        records = enrich(&records, &wordnet(cfg)?, &spec, &annotation_config(cfg)?);
    }
    let labels = labels_of(&records);
    let split = holdout_split(&labels, cfg.experiment.outer_folds, cfg.split_seed())?;
    let rep = BagOfTags {
        source,
        min_df: cfg.experiment.min_df,
    };
    let train: Vec<&ImageRecord> = split.train.iter().map(|&i| &records[i]).collect();
    let vocab = rep.fit(&train)?;
    out.write("vocabulary.csv", |w| vocab.write_csv(w))?;
    out.write("tag_vectors.jsonl", |w| {
        writeln!(w, "# dim={}", vocab.len()).map_err(io_to_err("tag_vectors.jsonl"))?;
        for r in &records {
            let v = vectorize(&source.select(r), &vocab);
            let line = serde_json::to_string(&SparseLine {
                id: &r.id,
                indices: v.indices(),
                values: v.values(),
            })
            .map_err(|e| Error::Computation(e.to_string()))?;
            writeln!(w, "{line}").map_err(io_to_err("tag_vectors.jsonl"))?;
        }
        Ok(())
    })
}

struct Outcome {
    report: EvalReport,
    cv: CvTable,
    chosen: TrainConfig,
    kernel: Kernel,
    support_vectors: usize,
    model: Vec<u8>,
}

fn run_protocol<R: Representation>(
    cfg: &RunConfig,
    records: &[ImageRecord],
    train_idx: &[usize],
    test_idx: &[usize],
    rep: &R,
) -> Result<Outcome> {
    let pick = |idx: &[usize]| -> (Vec<&ImageRecord>, Vec<PrivacyLabel>) {
        idx.iter()
            .map(|&i| (&records[i], records[i].label.expect("labeled record")))
            .unzip()
    };
    let (train, train_labels) = pick(train_idx);
    let (test, test_labels) = pick(test_idx);
    let base = TrainConfig {
        tol: cfg.experiment.tol,
        max_passes: cfg.experiment.max_passes,
        seed: cfg.smo_seed(),
        ..TrainConfig::default()
    };
    let (chosen, cv) = grid_search_cv(
        &train,
        &train_labels,
        rep,
        &cfg.grid,
        cfg.experiment.cv_folds,
        &base,
        cfg.cv_seed(),
    )?;
    log::info!("selected C={} kernel={}", chosen.c, chosen.kernel.name());
    let fitted = rep.fit(&train)?;
    let xs = rep.transform_all(&fitted, &train)?;
    let ys: Vec<f64> = train_labels.iter().map(|l| l.sign()).collect();
    let solution = solve(&xs, &ys, &chosen)?;
    let test_x = rep.transform_all(&fitted, &test)?;
    let report = evaluate(&solution.model, &test_x, &test_labels)?;
    let mut model = Vec::new();
    write_model(&solution.model, &mut model).map_err(|e| Error::Computation(e.to_string()))?;
    Ok(Outcome {
        report,
        cv,
        kernel: solution.model.kernel,
        support_vectors: solution.model.support_vectors.len(),
        chosen,
        model,
    })
}

#[derive(Serialize)]
struct SplitSummary {
    train: usize,
    test: usize,
    train_public: usize,
    train_private: usize,
    test_public: usize,
    test_private: usize,
}

#[derive(Serialize)]
struct Selected {
    c: f64,
    kernel: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    support_vectors: usize,
}

#[derive(Serialize)]
struct TestSummary {
    evaluated: u64,
    accuracy: f64,
    /// Rows are true public/private, columns predicted public/private.
    confusion: [[u64; 2]; 2],
    public: ClassMetrics,
    private: ClassMetrics,
    weighted: WeightedMetrics,
}

#[derive(Serialize)]
struct ReportFile {
    representation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    tag_source: Option<String>,
    enrichment: String,
    seed: u64,
    split: SplitSummary,
    selected: Selected,
    test: TestSummary,
}

fn report_file(cfg: &RunConfig, enrichment: &str, split: SplitSummary, o: &Outcome) -> Result<String> {
    let e = &cfg.experiment;
    let file = ReportFile {
        representation: e.representation.to_string(),
        tag_source: (e.representation == Layer::Tags).then(|| e.tag_source.to_string()),
        enrichment: enrichment.to_string(),
        seed: cfg.seed,
        split,
        selected: Selected {
            c: o.chosen.c,
            kernel: o.chosen.kernel.name(),
            gamma: match o.kernel {
                Kernel::Rbf(g) => Some(g),
                Kernel::Linear => None,
            },
            support_vectors: o.support_vectors,
        },
        test: TestSummary {
            evaluated: o.report.evaluated,
            accuracy: o.report.accuracy,
            confusion: o.report.confusion.counts,
            public: o.report.public,
            private: o.report.private,
            weighted: o.report.weighted,
        },
    };
    toml::to_string(&file).map_err(|e| Error::Computation(format!("rendering report: {e}")))
}

fn source_title(source: TagSource) -> &'static str {
    match source {
        TagSource::User => "User Tags",
        TagSource::Deep => "Deep Tags",
        TagSource::Combined => "Deep + User Tags",
    }
}

fn experiment(cfg: &RunConfig, out: &Out) -> Result<()> {
    let e = &cfg.experiment;
    let enrichment = cfg.enrichment_spec()?;
    if enrichment.is_some() && e.representation != Layer::Tags {
        return Err(Error::InvalidArgument("enrichment applies to the tags representation only".into()));
    }
    let records = match e.representation {
        Layer::Tags => tag_records(cfg, e.tag_source)?,
        layer => layer_records(cfg, layer)?,
    };
    let labels = labels_of(&records);
    let split = holdout_split(&labels, e.outer_folds, cfg.split_seed())?;
    let count = |idx: &[usize], l: PrivacyLabel| idx.iter().filter(|&&i| labels[i] == l).count();
    let summary = || SplitSummary {
        train: split.train.len(),
        test: split.test.len(),
        train_public: count(&split.train, PrivacyLabel::Public),
        train_private: count(&split.train, PrivacyLabel::Private),
        test_public: count(&split.test, PrivacyLabel::Public),
        test_private: count(&split.test, PrivacyLabel::Private),
    };
    log::info!("split: {} train, {} test", split.train.len(), split.test.len());

    let tags_rep = BagOfTags {
        source: e.tag_source,
        min_df: e.min_df,
    };
    let run = |recs: &[ImageRecord]| match e.representation {
        Layer::Tags => run_protocol(cfg, recs, &split.train, &split.test, &tags_rep),
        layer => run_protocol(
            cfg,
            recs,
            &split.train,
            &split.test,
            &DenseLayer {
                layer,
                standardize: e.standardize,
            },
        ),
    };

    let main = match &enrichment {
        None => run(&records)?,
        Some(spec) => {
            let lex = wordnet(cfg)?;
            let enriched = enrich(&records, &lex, spec, &annotation_config(cfg)?);
            let baseline = run(&records)?;
            let enriched_outcome = run(&enriched)?;
            out.write("baseline_report.toml", |w| {
                w.write_all(report_file(cfg, "off", summary(), &baseline)?.as_bytes())
                    .map_err(io_to_err("baseline_report.toml"))
            })?;
            let base_name = source_title(e.tag_source);
            let relation = spec.relation.as_str();
            let enriched_name = format!(
                "{base_name} + {}{}",
                relation[..1].to_uppercase(),
                &relation[1..]
            );
            out.write("comparison.csv", |w| {
                let mut c = csv::Writer::from_writer(w);
                let wrap = |err: csv::Error| Error::Computation(format!("writing comparison: {err}"));
                c.write_record(["features", "accuracy", "f1", "precision", "recall"]).map_err(wrap)?;
                c.write_record(baseline.report.summary_row(base_name)).map_err(wrap)?;
                c.write_record(enriched_outcome.report.summary_row(&enriched_name)).map_err(wrap)?;
                c.flush().map_err(io_to_err("comparison.csv"))
            })?;
            enriched_outcome
        }
    };

    let enrichment_name = cfg.experiment.enrichment.to_string();
    out.write("report.toml", |w| {
        w.write_all(report_file(cfg, &enrichment_name, summary(), &main)?.as_bytes())
            .map_err(io_to_err("report.toml"))
    })?;
    out.write("cv_table.csv", |w| main.cv.write_csv(w))?;
    out.write("pr_curve.csv", |w| write_pr_csv(w, &main.report.pr_curve))?;
    out.write("model.txt", |w| w.write_all(&main.model).map_err(io_to_err("model.txt")))?;
    let test: HashSet<usize> = split.test.iter().copied().collect();
    out.write("split.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        let wrap = |err: csv::Error| Error::Computation(format!("writing split: {err}"));
        c.write_record(["id", "label", "part"]).map_err(wrap)?;
        for (i, r) in records.iter().enumerate() {
            let part = if test.contains(&i) { "test" } else { "train" };
            c.write_record([r.id.as_str(), labels[i].as_str(), part]).map_err(wrap)?;
        }
        c.flush().map_err(io_to_err("split.csv"))
    })?;
    eprintln!(
        "test accuracy {:.4} on {} images (C={}, {})",
        main.report.accuracy,
        main.report.evaluated,
        main.chosen.c,
        match main.chosen.kernel {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
        }
    );
    Ok(())
}

fn tags(cfg: &RunConfig, cmd: &TagsCommand, out: &Out) -> Result<()> {
    let source = cfg.tags.source;
    let records = tag_records(cfg, source)?;
    let sets: Vec<TagSet> = records.iter().map(|r| source.select(r).into_owned()).collect();
    let pairs: Vec<(&TagSet, PrivacyLabel)> = sets.iter().zip(labels_of(&records)).collect();
    let classes = |class: &Option<PrivacyLabel>| match class {
        Some(c) => vec![*c],
        None => PrivacyLabel::ALL.to_vec(),
    };
    match cmd {
        TagsCommand::Ig { .. } => {
            let labels = labels_of(&records);
            let split = holdout_split(&labels, cfg.experiment.outer_folds, cfg.split_seed())?;
            let train: Vec<(&TagSet, PrivacyLabel)> = split.train.iter().map(|&i| pairs[i]).collect();
            let stats = information_gain_cv(&train, cfg.tags.ig_folds, cfg.cv_seed())?;
            let user: HashSet<&str> = split
                .train
                .iter()
                .flat_map(|&i| records[i].user_tags.iter())
                .collect();
            out.write("ig.csv", |w| {
                write_ig_csv(w, &stats, |t| if user.contains(t) { "user" } else { "deep" })
            })
        }
        TagsCommand::Cloud { class, .. } => {
            for c in classes(class) {
                let cloud = frequency_cloud(&pairs, c, cfg.tags.top);
                out.write(&format!("cloud_{c}.csv"), |w| write_cloud_csv(w, &cloud, c))?;
            }
            Ok(())
        }
        TagsCommand::Graph { class, .. } => {
            for c in classes(class) {
                let mut graph = cooccurrence_graph(&pairs, c, cfg.tags.threshold)?;
                if !cfg.tags.focus.is_empty() {
                    graph = ego_subgraph(&graph, &cfg.tags.focus);
                }
                let stem = format!("graph_{c}");
                let txt = format!("{stem}.txt");
                out.write(&txt, |w| graph.write_adjacency(w).map_err(io_to_err(&txt)))?;
                let dot = format!("{stem}.dot");
                out.write(&dot, |w| graph.write_dot(w).map_err(io_to_err(&dot)))?;
            }
            Ok(())
        }
    }
}

fn wordnet_expand(cfg: &RunConfig, spec: ExpansionSpec, tags: &[String], out_dir: &Path) -> Result<()> {
    let acfg = annotation_config(cfg)?;
    let lex = wordnet(cfg)?;
    if !tags.is_empty() {
        let input = normalize_user_tags(tags, &acfg);
        let expanded = expand_tagset_with(&input, &lex, &spec, &acfg);
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        for t in expanded.iter() {
            writeln!(lock, "{t}").map_err(io_to_err("stdout"))?;
        }
        return Ok(());
    }
    let rows = user_tags(cfg, &acfg)?;
    let expanded: Vec<(String, TagSet)> = rows
        .par_iter()
        .map(|(id, t)| (id.clone(), expand_tagset_with(t, &lex, &spec, &acfg)))
        .collect();
    let out = Out::new(out_dir, cfg)?;
    out.write("expanded_tags.jsonl", |w| {
        write_tag_table(w, expanded.iter().map(|(id, t)| (id.as_str(), t))).map_err(io_to_err("expanded_tags.jsonl"))
    })
}

fn gist(cfg: &RunConfig, images: &Path, out: &Out) -> Result<()> {
    let batch = gist_directory(images, &cfg.gist)?;
    for (path, err) in &batch.skipped {
        log::warn!("skipping {}: {err}", path.display());
    }
    if !batch.skipped.is_empty() {
        eprintln!("warning: skipped {} unreadable image(s)", batch.skipped.len());
    }
    if batch.descriptors.is_empty() {
        return Err(Error::MissingData(format!("no readable images in {}", images.display())));
    }
    let rows: Vec<(&str, &FeatureVector)> = batch.descriptors.iter().map(|(id, v)| (id.as_str(), v)).collect();
    out.write("gist.jsonl", |w| {
        writeln!(w, "# layer=gist dim={}", cfg.gist.descriptor_len()).map_err(io_to_err("gist.jsonl"))?;
        write_feature_table(w, rows).map_err(io_to_err("gist.jsonl"))
    })
}
