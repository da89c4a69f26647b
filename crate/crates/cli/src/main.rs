mod commands;
mod config;
mod stage;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use silico_core::fixture::{self, CorpusSpec, ServeOptions};
use silico_core::{Error, ErrorKind, Result};

use crate::commands::Ctx;
use crate::config::RunConfig;
use crate::stage::Stages;

#[derive(Parser)]
#[command(name = "silico", version, about = "Crawl, cluster and thematically map agent-created sub-communities")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Run directory; each stage writes into <outdir>/<stage>/.
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
    /// Master seed from which every stage seed is derived.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rerun stages even when their inputs and parameters are unchanged.
    #[arg(long, global = true)]
    force: bool,
    /// Repeat for more log output.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch every submolt record into a snapshot.
    Crawl(Overrides),
    /// Drop sparse and boilerplate descriptions.
    Preprocess {
        /// Snapshot to refine instead of the crawl stage's output.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Embed refined descriptions.
    Embed(Overrides),
    /// K-means with elbow selection of K.
    Cluster(Overrides),
    /// t-SNE projection and scatter plot.
    Project(Overrides),
    /// Per-cluster n-gram profiles.
    Ngrams(Overrides),
    /// Word-cloud panels and the composed grid image.
    Render(Overrides),
    /// Ask the multimodal provider for a thematic report.
    Discover(Overrides),
    /// Apply reviewer edits and approve the report.
    Review(Overrides),
    /// Final report with provenance.
    Report(Overrides),
    /// All stages in order.
    Pipeline(Overrides),
    /// Write a synthetic corpus, its manifest and spec to disk.
    FixtureGen {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fixture: FixtureArgs,
    },
    /// Serve a synthetic corpus over the listing API until shut down.
    FixtureServe {
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// Serve this snapshot file instead of generating a corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Answer the first N listing calls with HTTP 429.
        #[arg(long, default_value_t = 0)]
        throttle_first: usize,
        #[command(flatten)]
        fixture: FixtureArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    EightTheme,
    FullScale,
    Themed,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, value_enum, default_value = "eight-theme")]
    preset: Preset,
    #[arg(long = "fixture-seed", default_value_t = 1)]
    fixture_seed: u64,
    /// Themes for the `themed` preset.
    #[arg(long, default_value_t = 8)]
    themes: usize,
    /// Records per theme for the `themed` preset.
    #[arg(long, default_value_t = 100)]
    per_theme: usize,
}

impl FixtureArgs {
    fn spec(&self) -> CorpusSpec {
        match self.preset {
            Preset::EightTheme => CorpusSpec::eight_theme(self.fixture_seed),
            Preset::FullScale => CorpusSpec::full_scale(self.fixture_seed),
            Preset::Themed => CorpusSpec::themed(self.fixture_seed, self.themes, self.per_theme),
        }
    }
}

/// Per-stage flags; each one beats the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    base_url: Option<String>,
    /// Replay this snapshot instead of crawling.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long)]
    page_size: Option<usize>,
    #[arg(long)]
    rate_limit: Option<f64>,
    #[arg(long)]
    threshold: Option<usize>,
    /// Embedding provider: offline or remote.
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Fixed K instead of the elbow search.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// t-SNE kernel: auto, exact or barnes-hut.
    #[arg(long)]
    tsne_method: Option<String>,
    #[arg(long)]
    pca_dims: Option<usize>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    max_phrases: Option<usize>,
    #[arg(long)]
    png_width: Option<u32>,
    #[arg(long)]
    no_png: bool,
    /// Vision provider: stub or http.
    #[arg(long)]
    vision: Option<String>,
    #[arg(long)]
    canned_response: Option<PathBuf>,
    #[arg(long)]
    edits: Option<PathBuf>,
    #[arg(long)]
    approver: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        if self.base_url.is_some() {
            cfg.crawl.base_url = self.base_url.clone();
        }
        if self.snapshot.is_some() {
            cfg.crawl.snapshot = self.snapshot.clone();
        }
        set!(self.page_size => cfg.crawl.page_size);
        set!(self.rate_limit => cfg.crawl.rate_limit);
        set!(self.threshold => cfg.preprocess.template_threshold);
        set!(self.embedder => cfg.embed.kind);
        set!(self.dim => cfg.embed.dim);
        if self.k.is_some() {
            cfg.cluster.k = self.k;
        }
        set!(self.k_min => cfg.cluster.k_min);
        set!(self.k_max => cfg.cluster.k_max);
        set!(self.restarts => cfg.cluster.restarts);
        set!(self.perplexity => cfg.project.perplexity);
        set!(self.iterations => cfg.project.iterations);
        set!(self.tsne_method => cfg.project.method);
        if self.pca_dims.is_some() {
            cfg.project.pca_dims = self.pca_dims;
        }
        set!(self.n_min => cfg.ngrams.n_min);
        set!(self.n_max => cfg.ngrams.n_max);
        set!(self.max_phrases => cfg.render.max_phrases);
        if self.png_width.is_some() {
            cfg.render.png_width = self.png_width;
        }
        if self.no_png {
            cfg.render.png_width = None;
        }
        set!(self.vision => cfg.discover.kind);
        if self.canned_response.is_some() {
            cfg.discover.canned_response = self.canned_response.clone();
        }
        if self.edits.is_some() {
            cfg.review.edits = self.edits.clone();
        }
        set!(self.approver => cfg.review.approver);
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::MissingInput => 2,
        ErrorKind::Validation => 3,
        ErrorKind::Provider => 4,
        ErrorKind::Io => 5,
    }
}

fn resolve(cli: &Cli, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    overrides.apply(&mut cfg);
    if let Some(o) = &cli.outdir {
        cfg.outdir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    cfg.fill_from_env();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let (overrides, input) = match &cli.command {
        Command::FixtureGen { out, fixture } => {
            let spec = fixture.spec();
            let (snapshot, manifest) = fixture::write_fixture(out, &spec)?;
            println!(
                "wrote {} to {} ({} manifest entries)",
                commands::describe(&snapshot),
                out.display(),
                manifest.entries.len()
            );
            return Ok(());
        }
        Command::FixtureServe { port, corpus, throttle_first, fixture } => {
            let records = match corpus {
                Some(path) => silico_core::corpus::load_snapshot(path)?.records,
                None => fixture::generate_corpus(&fixture.spec())?.0,
            };
            let opts = ServeOptions { port: *port, throttle_first: *throttle_first, ..ServeOptions::default() };
            let server = fixture::serve(&records, opts)?;
            println!("serving {} records at {}", records.len(), server.base_url());
            println!("stop with GET {}{}", server.base_url(), fixture::SHUTDOWN_PATH);
            let _ = std::io::stdout().flush();
            server.wait();
            return Ok(());
        }
        Command::Preprocess { input, overrides } => (overrides, input.clone()),
        Command::Crawl(o)
        | Command::Embed(o)
        | Command::Cluster(o)
        | Command::Project(o)
        | Command::Ngrams(o)
        | Command::Render(o)
        | Command::Discover(o)
        | Command::Review(o)
        | Command::Report(o)
        | Command::Pipeline(o) => (o, None),
    };
    let cfg = resolve(cli, overrides)?;
    let ctx = Ctx {
        cfg: &cfg,
        stages: Stages { outdir: cfg.outdir.clone(), master_seed: cfg.master_seed, force: cli.force },
    };
    match &cli.command {
        Command::Crawl(_) => ctx.crawl().map(drop),
        Command::Preprocess { .. } => ctx.preprocess(input.as_deref()).map(drop),
        Command::Embed(_) => ctx.embed().map(drop),
        Command::Cluster(_) => ctx.cluster().map(drop),
        Command::Project(_) => ctx.project().map(drop),
        Command::Ngrams(_) => ctx.ngrams().map(drop),
        Command::Render(_) => ctx.render().map(drop),
        Command::Discover(_) => ctx.discover().map(drop),
        Command::Review(_) => ctx.review().map(drop),
        Command::Report(_) => ctx.report().map(drop),
        Command::Pipeline(_) => ctx.pipeline(),
        Command::FixtureGen { .. } | Command::FixtureServe { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err}");
            if let Error::ReportParse { retained: Some(path), .. } = &err {
                eprintln!("raw response kept at {}", path.display());
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
