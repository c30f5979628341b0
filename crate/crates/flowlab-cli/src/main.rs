use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use flowlab::config::{self, ScenarioConfig};
use flowlab::run::{self, Analysis, Mode, RunReport};

const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "flowlab", version, about = "Symmetry-reduced CRF/RHF simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve a scenario and run the analyses it requests.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Run several configs concurrently, each into its own output directory.
        #[arg(long)]
        sweep: bool,
        /// Worker threads for --sweep (default: available cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Evolve a scenario and run only its verification checks.
    Verify { config: PathBuf },
    /// Classify the singularity of a stored run.
    Classify { run_dir: PathBuf },
    /// Blow-up sequence and model bounds of a stored run.
    Blowup { run_dir: PathBuf },
    /// Entropy functionals of a stored run.
    Entropy { run_dir: PathBuf },
}

fn load(path: &Path) -> Result<ScenarioConfig, u8> {
    config::load_config(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        EXIT_CONFIG
    })
}

fn report(rep: &RunReport) -> u8 {
    print!("{}", run::summary(rep));
    let failed = rep.failed_checks();
    if !failed.is_empty() {
        let names: Vec<String> = failed.iter().map(|c| format!("{}/{}", c.group, c.name)).collect();
        println!("failing checks: {}", names.join(", "));
    }
    if !rep.manifest.is_empty() {
        println!("wrote {} files to {}", rep.manifest.len() + 1, rep.out_dir.display());
    }
    rep.exit_code() as u8
}

fn sweep(paths: &[PathBuf], threads: usize) -> u8 {
    let mut cfgs = Vec::new();
    let mut code = 0;
    for p in paths {
        match load(p) {
            Ok(c) => cfgs.push(c),
            Err(c) => code = c,
        }
    }
    if code != 0 {
        return code;
    }
    let mut seen = HashSet::new();
    for c in &cfgs {
        if !seen.insert(run::resolve_out_dir(c)) {
            eprintln!("sweep: output directory {} is used by more than one config", run::resolve_out_dir(c).display());
            return EXIT_CONFIG;
        }
    }
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; cfgs.len()]);
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, cfgs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = cfgs.get(i) else { break };
                let rep = run::execute(cfg, Mode::Run);
                results.lock().expect("results lock")[i] = Some(rep);
            });
        }
    });
    let mut worst = 0;
    for (cfg, rep) in cfgs.iter().zip(results.into_inner().expect("results lock")) {
        println!("== {}", cfg.name);
        worst = worst.max(report(&rep.expect("every config ran")));
    }
    worst
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run { configs, sweep: true, threads } => {
            let n = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            sweep(&configs, n)
        }
        Cmd::Run { configs, .. } if configs.len() > 1 => {
            eprintln!("several configs given; pass --sweep to run them together");
            EXIT_CONFIG
        }
        Cmd::Run { configs, .. } => match load(&configs[0]) {
            Ok(c) => report(&run::execute(&c, Mode::Run)),
            Err(c) => c,
        },
        Cmd::Verify { config } => match load(&config) {
            Ok(c) => report(&run::execute(&c, Mode::Verify)),
            Err(c) => c,
        },
        Cmd::Classify { run_dir } => report(&run::analyze_dir(&run_dir, Analysis::Classify)),
        Cmd::Blowup { run_dir } => report(&run::analyze_dir(&run_dir, Analysis::Blowup)),
        Cmd::Entropy { run_dir } => report(&run::analyze_dir(&run_dir, Analysis::Entropy)),
    };
    ExitCode::from(code)
}
