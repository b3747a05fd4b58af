mod config;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rdd_core::executor::{execute_unit_isolated, Env, Executor, SessionStatus, Trace};
use rdd_core::knowledge::load_database;
use rdd_core::monitor::report;
use rdd_core::recipe::{check, expand_tree, parse_recipe, to_dot, validate, Diagnostic, TaskLibrary, ValidationInputs};
use rdd_core::sim::{run_scenario, sim_registry, Bundle, SimError, SimWorld};

use config::{parse_policy, preflight, DocArgs, FileConfig};

const OK: u8 = 0;
const FAILED: u8 = 1;
const LOAD_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "rdd", version, about = "Run, lint and inspect hierarchical task recipes with rule-based recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario under the recovery monitor.
    Run {
        #[command(flatten)]
        docs: DocArgs,
        /// YAML file supplying any of the flags below.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        #[arg(long, env = "RDD_SEED")]
        seed: Option<u64>,
        #[arg(long, value_name = "POLICY")]
        unseen_policy: Option<String>,
        #[arg(long, value_name = "FILE")]
        trace_out: Option<PathBuf>,
        /// Report destination; `.json` gets JSON, anything else a table.
        #[arg(long, value_name = "FILE")]
        report_out: Option<PathBuf>,
        #[arg(short, action = clap::ArgAction::Count)]
        verbose: u8,
    },
    /// Validate recipe files, one diagnostic per line.
    Lint {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Check `db.` references against this database.
        #[arg(long, value_name = "FILE")]
        db: Option<PathBuf>,
    },
    /// Run one task or action on its own and print the result as JSON.
    TestUnit {
        unit: String,
        /// YAML or JSON map of the unit's params.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        #[command(flatten)]
        docs: DocArgs,
        #[arg(long, env = "RDD_SEED")]
        seed: Option<u64>,
    },
    /// Print the static task tree of a root task as DOT.
    Expand {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        root: String,
        #[arg(long, value_name = "FILE")]
        db: Option<PathBuf>,
    },
    /// Summarise recovery decisions in a trace file.
    Report {
        trace: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn status_code(s: SessionStatus) -> u8 {
    if s == SessionStatus::Succeeded {
        OK
    } else {
        FAILED
    }
}

fn load_error(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    LOAD_ERROR
}

fn print_diagnostics(file: &Path, diags: &[Diagnostic]) {
    for d in diags {
        println!("{}\t{d}", file.display());
    }
}

fn bundle_error(e: &SimError) -> u8 {
    if let SimError::Invalid { what, diagnostics } = e {
        for d in diagnostics {
            eprintln!("{what}\t{d}");
        }
    }
    load_error(format_args!("{} [{}]", e, e.code()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    docs: DocArgs,
    config: Option<PathBuf>,
    seed: Option<u64>,
    unseen_policy: Option<String>,
    trace_out: Option<PathBuf>,
    report_out: Option<PathBuf>,
    verbose: u8,
) -> u8 {
    let mut file = match config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => return load_error(format_args!("preflight: {e}")),
    };
    let docs = file.merge_docs(&docs);
    let policy = match unseen_policy.or(file.unseen_policy.take()).as_deref().map(parse_policy).transpose() {
        Ok(p) => p.unwrap_or_default(),
        Err(e) => return load_error(e),
    };
    let trace_out = trace_out.or(file.trace_out.take());
    let report_out = report_out.or(file.report_out.take());
    let verbose = verbose.max(file.verbosity.unwrap_or(0));

    let sources = match preflight(&docs) {
        Ok(s) => s,
        Err(e) => return load_error(format_args!("preflight: {e}")),
    };
    let bundle = match Bundle::load(&sources) {
        Ok(b) => b,
        Err(e) => return bundle_error(&e),
    };
    let seed = seed.or(file.seed).unwrap_or(bundle.plan.seed);
    let run = match run_scenario(&bundle, &bundle.rules, &bundle.plan, seed, policy) {
        Ok(r) => r,
        Err(e) => return bundle_error(&e),
    };

    if let Some(p) = &trace_out {
        if let Err(e) = fs::write(p, run.trace.to_jsonl()) {
            return load_error(format_args!("cannot write {}: {e}", p.display()));
        }
    }
    if let Some(p) = &report_out {
        let body = if p.extension().is_some_and(|x| x == "json") { run.report.to_json() } else { run.report.to_table() };
        if let Err(e) = fs::write(p, body) {
            return load_error(format_args!("cannot write {}: {e}", p.display()));
        }
    }

    let w = run.final_world();
    println!("status: {}", run.status);
    println!("seed: {seed}");
    println!("kit: {}/{} slots filled", w.filled_slots(), w.kit.len());
    if verbose == 0 {
        println!("decisions: {} (unseen: {})", run.report.decisions, run.report.unseen);
    }
    if verbose >= 2 {
        for d in &run.decisions {
            println!(
                "  {:<28} {:<22} {:<24} x{} -> {} {}",
                d.rule.as_deref().unwrap_or("UNSEEN"),
                d.leaf,
                d.signal,
                d.abort_count,
                d.directive.strategy,
                d.directive.target
            );
        }
    }
    if verbose >= 1 {
        println!();
        print!("{}", run.report.to_table());
    }
    status_code(run.status)
}

fn parse_file(path: &Path) -> Result<TaskLibrary, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_recipe(&text).map_err(|e| format!("{}\t{}\t{e}", path.display(), e.code()))
}

fn db_keys(db: Option<&Path>, lib: &TaskLibrary) -> Result<BTreeSet<String>, String> {
    match db {
        None => Ok(lib.db_refs()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            load_database(&text).map(|d| d.keys()).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn cmd_lint(files: &[PathBuf], db: Option<&Path>) -> u8 {
    let registry = sim_registry(&[]);
    let mut errors = false;
    for f in files {
        if !f.exists() {
            return load_error(format_args!("{} does not exist", f.display()));
        }
    }
    for f in files {
        let lib = match parse_file(f) {
            Ok(l) => l,
            Err(msg) => {
                println!("{msg}");
                errors = true;
                continue;
            }
        };
        let keys = match db_keys(db, &lib) {
            Ok(k) => k,
            Err(e) => return load_error(e),
        };
        let diags = check(&lib, &ValidationInputs { catalog: &registry, db_keys: &keys, belief_keys: None });
        errors |= diags.iter().any(Diagnostic::is_error);
        print_diagnostics(f, &diags);
    }
    if errors {
        FAILED
    } else {
        OK
    }
}

fn cmd_expand(files: &[PathBuf], root: &str, db: Option<&Path>) -> u8 {
    let registry = sim_registry(&[]);
    let mut lib = TaskLibrary::new();
    for f in files {
        match parse_file(f).and_then(|l| lib.merge(l).map_err(|e| e.to_string())) {
            Ok(()) => {}
            Err(e) => return load_error(e),
        }
    }
    let keys = match db_keys(db, &lib) {
        Ok(k) => k,
        Err(e) => return load_error(e),
    };
    let lib = match validate(lib, &ValidationInputs { catalog: &registry, db_keys: &keys, belief_keys: None }) {
        Ok(l) => l,
        Err(diags) => {
            for d in &diags {
                eprintln!("{d}");
            }
            return load_error("recipes failed validation");
        }
    };
    match expand_tree(&lib, root, &Default::default()) {
        Ok(tree) => {
            print!("{}", to_dot(&tree));
            OK
        }
        Err(e) => load_error(format_args!("{e} [{}]", e.code())),
    }
}

fn cmd_test_unit(unit: &str, input: Option<&Path>, docs: DocArgs, seed: Option<u64>) -> u8 {
    let inputs = match input {
        None => "{}".to_string(),
        Some(p) => {
            let parsed = fs::read_to_string(p)
                .map_err(|e| format!("cannot read {}: {e}", p.display()))
                .and_then(|t| serde_yaml::from_str::<serde_json::Value>(&t).map_err(|e| format!("{}: {e}", p.display())));
            match parsed {
                Ok(serde_json::Value::Null) => "{}".to_string(),
                Ok(v) => v.to_string(),
                Err(e) => return load_error(e),
            }
        }
    };
    let sources = match preflight(&docs) {
        Ok(s) => s,
        Err(e) => return load_error(format_args!("preflight: {e}")),
    };
    let bundle = match Bundle::load(&sources) {
        Ok(b) => b,
        Err(e) => return bundle_error(&e),
    };
    let library = if bundle.library.get(unit).is_none() && bundle.recoveries.get(unit).is_some() {
        &bundle.recoveries
    } else {
        &bundle.library
    };
    if library.get(unit).is_none() && bundle.registry.action(unit).is_none() {
        return load_error(format_args!("no task or action named `{unit}`"));
    }
    let exec = match Executor::new(library, &bundle.registry, &bundle.database) {
        Ok(e) => e,
        Err(e) => return load_error(e),
    };
    let mut world = SimWorld::new(bundle.scenario.world.clone(), bundle.plan.clone(), seed.unwrap_or(bundle.plan.seed));
    let mut beliefs = bundle.beliefs.clone();
    let mut trace = Trace::new();
    match execute_unit_isolated(&exec, unit, &inputs, &mut Env::new(&mut world, &mut beliefs, &mut trace)) {
        Ok(r) => {
            println!("{}", r.to_json());
            if r.status == SessionStatus::Succeeded.as_str() {
                OK
            } else {
                FAILED
            }
        }
        Err(e) => load_error(format_args!("{e} [{}]", e.code())),
    }
}

fn cmd_report(path: &Path, json: bool) -> u8 {
    let trace = match fs::read_to_string(path).map_err(|e| e.to_string()).and_then(|t| Trace::from_jsonl(&t).map_err(|e| e.to_string())) {
        Ok(t) => t,
        Err(e) => return load_error(format_args!("{}: {e}", path.display())),
    };
    let r = report(&trace);
    if json {
        println!("{}", r.to_json());
    } else {
        print!("{}", r.to_table());
    }
    OK
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            docs,
            config,
            seed,
            unseen_policy,
            trace_out,
            report_out,
            verbose,
        } => cmd_run(docs, config, seed, unseen_policy, trace_out, report_out, verbose),
        Command::Lint { files, db } => cmd_lint(&files, db.as_deref()),
        Command::TestUnit { unit, input, docs, seed } => cmd_test_unit(&unit, input.as_deref(), docs, seed),
        Command::Expand { files, root, db } => cmd_expand(&files, &root, db.as_deref()),
        Command::Report { trace, json } => cmd_report(&trace, json),
    };
    ExitCode::from(code)
}
