use std::fs::File;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use gradcode::output;
use gradcode::{
    derive_data_assignment, dynamic_assignment_matrix, seed, static_assignment, straggler, Codebook,
    ExperimentConfig, Result, Scheme, Ssi, StragglerModel,
};

#[derive(Parser)]
#[command(name = "gradcode", version, about = "Gradient coding with dynamic clustering: completion-time simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-run experiment and write completion-time CSVs.
    Run(Overrides),
    /// Print the cluster assignment matrix, codebook and data assignment as JSON.
    DumpAssignment(Overrides),
    /// Write the straggler trace of one run as CSV.
    DumpTrace {
        #[command(flatten)]
        overrides: Overrides,
        /// Run index whose trace is written.
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
}

/// Every flag is optional and overrides the corresponding `--config` field.
#[derive(Args, Default)]
struct Overrides {
    /// JSON experiment config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short = 'K')]
    workers: Option<usize>,
    #[arg(long, short = 'P')]
    clusters: Option<usize>,
    /// Computation load r (mini-batches per worker per iteration).
    #[arg(long, short = 'r')]
    load: Option<usize>,
    /// Number of clusters n each worker is eligible for.
    #[arg(long, short = 'n')]
    replication: Option<usize>,
    #[arg(long, short = 'T')]
    iterations: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of GC,GC-SC,GC-DC,LB.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    /// ge-homogeneous, ge-heterogeneous or time-varying.
    #[arg(long)]
    model: Option<StragglerModel>,
    #[arg(long)]
    switch_prob: Option<f64>,
    #[arg(long)]
    mu_slow: Option<f64>,
    #[arg(long)]
    mu_fast: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// perfect or imperfect.
    #[arg(long)]
    ssi: Option<Ssi>,
    #[arg(long)]
    initial_stragglers: Option<usize>,
    /// Decode the full gradient every iteration and fail on any mismatch.
    #[arg(long)]
    verify_gradients: bool,
    #[arg(long)]
    verify_dim: Option<usize>,
    #[arg(long)]
    verify_samples: Option<usize>,
    /// Also write per-iteration placements.
    #[arg(long)]
    dump_placements: bool,
    /// Run sequentially instead of in parallel across runs.
    #[arg(long)]
    sequential: bool,
    /// Output directory (run) or file (dump-*). Defaults to stdout for dumps.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { cfg.$($target).+ = v; })*
            };
        }
        set!(
            workers => workers,
            clusters => clusters,
            load => load,
            replication => replication,
            iterations => iterations,
            runs => runs,
            seed => seed,
            schemes => schemes,
            model => straggler.model,
            switch_prob => straggler.switch_prob,
            mu_slow => straggler.mu_slow,
            mu_fast => straggler.mu_fast,
            alpha => straggler.alpha,
            tau => straggler.tau,
            ssi => straggler.ssi,
            initial_stragglers => straggler.initial_stragglers,
            verify_dim => verify_dim,
            verify_samples => verify_samples,
        );
        cfg.verify_gradients |= self.verify_gradients;
        cfg.record_placements |= self.dump_placements;
        if self.sequential {
            cfg.parallel = false;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn std::io::Write>> {
    Ok(match out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            let result = gradcode::run_experiment(&cfg)?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            output::write_all(&dir, &result.records, &result.summaries)?;
            for s in &result.summaries {
                let imp = s.improvement_vs_gcsc.map(|v| format!("{:+.1}%", 100.0 * v)).unwrap_or_default();
                println!("{:<6} mean {:.5} std {:.5} {imp}", s.scheme.name(), s.mean, s.std);
            }
            if result.fallbacks > 0 {
                println!("GC-DC fell back to the base clustering in {} iterations", result.fallbacks);
            }
            info!("wrote results to {}", dir.display());
        }
        Command::DumpAssignment(o) => {
            let cfg = o.resolve()?;
            let matrix_seed = seed::derive(cfg.seed, "matrix", &[]);
            let dynamic = dynamic_assignment_matrix(cfg.workers, cfg.clusters, cfg.replication, matrix_seed)?;
            let stat = static_assignment(cfg.workers, cfg.clusters)?;
            let codebook = Codebook::build(cfg.workers, cfg.clusters, cfg.load)?;
            let data = derive_data_assignment(&dynamic, &codebook)?;
            let doc = serde_json::json!({
                "dynamic": dynamic,
                "static": stat,
                "codebook": codebook,
                "data_assignment": data,
                "feasible": cfg.is_feasible(),
            });
            let mut w = sink(&cfg.out)?;
            serde_json::to_writer_pretty(&mut w, &doc)?;
            writeln!(w)?;
        }
        Command::DumpTrace { overrides, run } => {
            let cfg = overrides.resolve()?;
            let trace = straggler::generate_trace(&cfg.straggler, cfg.workers, cfg.iterations, cfg.seed, run)?;
            output::write_trace(&trace, sink(&cfg.out)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
