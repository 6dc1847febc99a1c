//! Command-line driver.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{AnnotateSection, Enrichment, ExperimentSection, Paths, RunConfig, TagsSection};

use crate::corpus::{Layer, PrivacyLabel};
use crate::error::{Error, Result};
use crate::eval::TagSource;
use crate::wordnet::Relation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "picpriv", version, about = "Image privacy prediction toolkit")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "picpriv-out")]
    pub out: PathBuf,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Input overrides for the `[paths]` section.
#[derive(Debug, Default, Args)]
pub struct InputArgs {
    /// Feature table for a layer, as LAYER=PATH; repeatable.
    #[arg(long = "features", value_name = "LAYER=PATH", global = true)]
    pub features: Vec<String>,
    #[arg(long, global = true)]
    pub user_tags: Option<PathBuf>,
    #[arg(long, global = true)]
    pub deep_tags: Option<PathBuf>,
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    pub stopwords: Option<PathBuf>,
    /// WordNet database directory; falls back to $PICPRIV_WORDNET_DIR.
    #[arg(long = "wordnet", global = true)]
    pub wordnet_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Top-k deep tags from fc8 logits.
    Annotate {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train-only tag vocabulary and bag-of-tags vectors.
    Featurize {
        #[arg(long)]
        source: Option<TagSource>,
        #[arg(long)]
        min_df: Option<usize>,
    },
    /// Split, cross-validated grid search, retrain and test.
    Experiment(ExperimentArgs),
    /// Tag analytics.
    #[command(subcommand)]
    Tags(TagsCommand),
    /// WordNet utilities.
    #[command(subcommand)]
    Wordnet(WordnetCommand),
    /// GIST descriptors for a directory of binary PGM images.
    Gist {
        images: PathBuf,
        #[arg(long)]
        prefilter: bool,
    },
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// fc6, fc7, fc8, prob, gist or tags.
    #[arg(long)]
    pub representation: Option<Layer>,
    #[arg(long)]
    pub source: Option<TagSource>,
    /// off, synonym, hypernym or hyponym.
    #[arg(long)]
    pub enrich: Option<Enrichment>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Subcommand)]
pub enum TagsCommand {
    /// Information-gain ranking on Train.
    Ig {
        #[arg(long)]
        source: Option<TagSource>,
    },
    /// Most frequent tags per class.
    Cloud {
        #[arg(long)]
        class: Option<PrivacyLabel>,
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        source: Option<TagSource>,
    },
    /// Co-occurrence graph per class, optionally around focus tags.
    Graph {
        #[arg(long)]
        class: Option<PrivacyLabel>,
        #[arg(long, value_delimiter = ',')]
        focus: Vec<String>,
        #[arg(long)]
        threshold: Option<usize>,
        #[arg(long)]
        source: Option<TagSource>,
    },
}

#[derive(Debug, Subcommand)]
pub enum WordnetCommand {
    /// Expand tags given on the command line (printed) or the user tag table
    /// (written to `expanded_tags.jsonl`).
    Expand {
        #[arg(long)]
        relation: Relation,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        tags: Vec<String>,
    },
}

impl Cli {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn effective_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let p = &mut cfg.paths;
        for spec in &self.inputs.features {
            let (layer, path) = spec
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("--features expects LAYER=PATH, got {spec:?}")))?;
            p.features.insert(layer.parse()?, PathBuf::from(path));
        }
        let i = &self.inputs;
        for (slot, value) in [
            (&mut p.user_tags, &i.user_tags),
            (&mut p.deep_tags, &i.deep_tags),
            (&mut p.labels, &i.labels),
            (&mut p.lexicon, &i.lexicon),
            (&mut p.stopwords, &i.stopwords),
            (&mut p.wordnet_dir, &i.wordnet_dir),
        ] {
            if value.is_some() {
                slot.clone_from(value);
            }
        }
        match &self.command {
            Command::Annotate { k } => {
                if let Some(k) = k {
                    cfg.annotate.k = *k;
                }
            }
            Command::Featurize { source, min_df } => {
                if let Some(s) = source {
                    cfg.experiment.tag_source = *s;
                }
                if let Some(m) = min_df {
                    cfg.experiment.min_df = *m;
                }
            }
            Command::Experiment(a) => {
                let e = &mut cfg.experiment;
                if let Some(r) = a.representation {
                    e.representation = r;
                }
                if let Some(s) = a.source {
                    e.tag_source = s;
                }
                if let Some(x) = a.enrich {
                    e.enrichment = x;
                }
                if let Some(d) = a.depth {
                    e.enrichment_depth = d;
                }
                e.standardize |= a.standardize;
            }
            Command::Tags(t) => {
                let tc = &mut cfg.tags;
                match t {
                    TagsCommand::Ig { source } => {
                        if let Some(s) = source {
                            tc.source = *s;
                        }
                    }
                    TagsCommand::Cloud { top, source, .. } => {
                        if let Some(n) = top {
                            tc.top = *n;
                        }
                        if let Some(s) = source {
                            tc.source = *s;
                        }
                    }
                    TagsCommand::Graph {
                        focus,
                        threshold,
                        source,
                        ..
                    } => {
                        if !focus.is_empty() {
                            tc.focus.clone_from(focus);
                        }
                        if let Some(t) = threshold {
                            tc.threshold = *t;
                        }
                        if let Some(s) = source {
                            tc.source = *s;
                        }
                    }
                }
            }
            Command::Gist { prefilter, .. } => cfg.gist.prefilter |= *prefilter,
            Command::Wordnet(_) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_COMPUTATION
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match commands::run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("picpriv").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config() {
        let cli = parse(&[
            "--seed",
            "9",
            "--features",
            "fc8=/tmp/fc8.jsonl",
            "experiment",
            "--representation",
            "fc8",
            "--enrich",
            "hypernym",
        ]);
        let cfg = cli.effective_config().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.experiment.representation, Layer::Fc8);
        assert_eq!(cfg.experiment.enrichment, Enrichment::Hypernym);
        assert_eq!(cfg.paths.features[&Layer::Fc8], PathBuf::from("/tmp/fc8.jsonl"));
    }

    #[test]
    fn graph_focus_list() {
        let cli = parse(&["tags", "graph", "--class", "private", "--focus", "photo,people", "--threshold", "2"]);
        let cfg = cli.effective_config().unwrap();
        assert_eq!(cfg.tags.focus, vec!["photo", "people"]);
        assert_eq!(cfg.tags.threshold, 2);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["picpriv", "no-such-command"]), EXIT_INPUT);
        assert_eq!(main_with_args(["picpriv", "--features", "fc9=x", "annotate"]), EXIT_INPUT);
    }
}
