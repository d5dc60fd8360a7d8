use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latticedesc::data::{Level, Split};
use latticedesc::error::{Error, Result};
use latticedesc::pipeline::{self, PipelineConfig};
use latticedesc::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(name = "latticedesc", version, about = "Multi-level video descriptions from classifier scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the CRF, relevance table, background filter and per-level translation models.
    Train(Common),
    /// Describe the videos of a split.
    Describe(Common),
    /// Describe a split and score it against its references.
    Evaluate(Common),
    /// Segment frame streams and apply the background filter.
    Segment(Common),
    /// Re-tune the decoder weights of one level on the dev split.
    Tune(Common),
    /// Dump the word lattices of a split in PLF with their decodings.
    InspectLattice(Common),
    /// Write the seeded synthetic corpus and a matching config.
    Synth {
        /// Directory to write into.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    level: Option<LevelArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decoder beam size; 0 disables pruning.
    #[arg(long)]
    beam: Option<usize>,
    /// Alternatives per lattice section.
    #[arg(long)]
    topk: Option<usize>,
    /// Drop lattice alternatives below this marginal.
    #[arg(long)]
    prune: Option<f64>,
    /// Decoder weight file overriding the tuned weights.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Restrict to one video id.
    #[arg(long)]
    video: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Detailed,
    Short,
    Single,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Detailed => Level::Detailed,
            LevelArg::Short => Level::Short,
            LevelArg::Single => Level::Single,
        }
    }
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

impl Common {
    /// Loads the config file; flags win over its values.
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(l) = self.level {
            cfg.level = l.into();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(b) = self.beam {
            cfg.beam = (b > 0).then_some(b);
        }
        if let Some(k) = self.topk {
            if k == 0 {
                return Err(Error::InvalidArgument("--topk must be at least 1".into()));
            }
            cfg.lattice.top_k = k;
        }
        if let Some(p) = self.prune {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidArgument("--prune must lie in [0, 1)".into()));
            }
            cfg.lattice.prune = p;
        }
        if let Some(w) = &self.weights {
            cfg.weights = Some(w.clone());
        }
        Ok(cfg)
    }
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = c.config()?;
            for f in pipeline::cmd_train(&cfg)? {
                println!("{}", cfg.models.join(f).display());
            }
        }
        Command::Describe(c) => {
            let cfg = c.config()?;
            for d in pipeline::cmd_describe(&cfg, c.split.into(), c.video.as_deref())? {
                for w in &d.warnings {
                    eprintln!("warning: {}: {w}", d.video_id);
                }
                println!("{}\t{}", d.video_id, d.paragraph);
            }
        }
        Command::Evaluate(c) => {
            let cfg = c.config()?;
            let m = pipeline::cmd_evaluate(&cfg, c.split.into())?;
            if let Some(s) = &m.bleu.sentence {
                eprintln!("{} per-sentence    {}", m.level, s.summary());
            }
            eprintln!("{} per-description {}", m.level, m.bleu.description.summary());
            if let Some(r) = &m.retrieval {
                eprintln!("{} retrieval       {}", m.level, r.description.summary());
            }
            println!("{}", json(&m));
        }
        Command::Segment(c) => {
            let cfg = c.config()?;
            for line in pipeline::cmd_segment(&cfg, c.split.into(), c.video.as_deref())? {
                println!("{line}");
            }
        }
        Command::Tune(c) => {
            let cfg = c.config()?;
            let (w, trace) = pipeline::cmd_tune(&cfg)?;
            if let Some(last) = trace.last() {
                eprintln!("{} tuned BLEU {:.2} after {} steps", cfg.level, last.bleu, trace.len());
            }
            println!("{}", json(&w));
        }
        Command::InspectLattice(c) => {
            let cfg = c.config()?;
            for line in pipeline::cmd_inspect_lattice(&cfg, c.split.into(), c.video.as_deref())? {
                println!("{line}");
            }
        }
        Command::Synth { out, seed } => {
            let corpus = generate(&SynthConfig {
                seed,
                ..SynthConfig::default()
            });
            pipeline::write_synthetic(&corpus, &out)?;
            println!("{}", out.join("config.json").display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Artifact { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
