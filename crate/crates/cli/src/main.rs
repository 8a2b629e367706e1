use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches};
use perron_core::harness::{load_config, run, Command, HarnessError, RunOutput};
use perron_core::par;

fn common_args(cmd: clap::Command) -> clap::Command {
    cmd.arg(Arg::new("config").required(true).value_name("CONFIG").help("TOML configuration file"))
        .arg(Arg::new("set").long("set").value_name("KEY=VALUE").action(ArgAction::Append).help("Override a config key (dotted path, TOML literal)"))
        .arg(Arg::new("h").long("h").value_name("H").help("Grid spacing, overrides `h`"))
        .arg(Arg::new("seed").long("seed").value_name("SEED").help("Random seed, overrides `seed`"))
        .arg(Arg::new("out").long("out").value_name("DIR").help("Output directory, overrides `output.dir`"))
}

fn about(c: Command) -> &'static str {
    match c {
        Command::SolveDirichlet => "Solve the Dirichlet problem with the configured methods",
        Command::SolvePoisson => "Solve Δu = g with Dirichlet data",
        Command::HarmonicMeasure => "Walk-on-spheres estimates of the Perron solution at the probes",
        Command::Heat => "Evolve the heat equation with zero data on the regular boundary",
        Command::LatticeSup => "Harmonic lattice supremum of two Perron solutions (|u|_H without `lattice.other`)",
        Command::Bracket => "Sub/supersolution bracket around the Perron solution on a punctured domain",
        Command::Compare => "Cross-method comparison of Perron solutions at the probes",
    }
}

fn cli() -> clap::Command {
    let mut app = clap::Command::new("perron")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Perron solutions of vector-valued Dirichlet, Poisson and heat problems on planar domains")
        .after_help("Environment: PERRON_THREADS sets the worker count (speed only, never results).\nExit codes: 0 ok, 1 invariant failure, 2 config error, 3 numerical failure.")
        .subcommand_required(true);
    for c in Command::ALL {
        let keys = c.config_keys().iter().map(|k| format!("  {k}")).collect::<Vec<_>>().join("\n");
        app = app.subcommand(common_args(clap::Command::new(c.as_str()).about(about(c)).after_help(format!("Config keys:\n{keys}"))));
    }
    app
}

fn execute(c: Command, m: &ArgMatches) -> Result<RunOutput, HarnessError> {
    let path: &String = m.get_one("config").expect("required");
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{path}: {e}")))?;
    let mut overrides = Vec::new();
    for s in m.get_many::<String>("set").into_iter().flatten() {
        let (k, v) = s.split_once('=').ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    for key in ["h", "seed"] {
        if let Some(v) = m.get_one::<String>(key) {
            overrides.push((key.to_string(), v.clone()));
        }
    }
    let cfg = load_config(&text, &overrides).map_err(|e| match e {
        HarnessError::Config(msg) => HarnessError::Config(format!("{path}: {msg}")),
        e => e,
    })?;
    let out = run(c, &cfg)?;
    let dir = m.get_one::<String>("out").cloned().or(cfg.output.dir.clone());
    if let Some(d) = dir {
        out.write(&PathBuf::from(d))?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("PERRON_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).filter(|&n| n > 0) {
        par::init_threads(n);
    }
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cmd = Command::ALL.into_iter().find(|c| c.as_str() == name).expect("registered subcommand");
    match execute(cmd, sub) {
        Ok(out) => {
            print!("{}", out.report_json());
            for i in out.invariants.iter().filter(|i| !i.passed) {
                eprintln!("invariant {} failed: measured {:e}, threshold {:e}{}", i.name, i.measured, i.threshold, if i.required { "" } else { " (not required)" });
            }
            if out.failed() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
