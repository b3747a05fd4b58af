use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rdd_core::monitor::UnseenPolicy;
use rdd_core::sim::{demo, Sources};
use serde::Deserialize;

/// Document paths shared by `run` and `test-unit`.
#[derive(Debug, Clone, Default, Args)]
pub struct DocArgs {
    /// Main recipe file; repeat to merge several.
    #[arg(long = "recipes", value_name = "FILE")]
    pub recipes: Vec<PathBuf>,
    /// Recovery recipe file; repeat to merge several.
    #[arg(long = "recoveries", value_name = "FILE")]
    pub recoveries: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub rules: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub db: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub beliefs: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub faults: Option<PathBuf>,
    /// Fill any document not given elsewhere from the bundled demo.
    #[arg(long)]
    pub demo: bool,
    /// Run with an empty rule list even if rules are configured.
    #[arg(long)]
    pub no_rules: bool,
}

/// Config file keys. Relative paths resolve against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    recipes: OneOrMany,
    #[serde(default)]
    recoveries: OneOrMany,
    rules: Option<PathBuf>,
    db: Option<PathBuf>,
    beliefs: Option<PathBuf>,
    scenario: Option<PathBuf>,
    faults: Option<PathBuf>,
    #[serde(default)]
    demo: bool,
    pub seed: Option<u64>,
    pub unseen_policy: Option<String>,
    pub trace_out: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
    pub verbosity: Option<u8>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    #[default]
    None,
    One(PathBuf),
    Many(Vec<PathBuf>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<PathBuf> {
        match self {
            OneOrMany::None => Vec::new(),
            OneOrMany::One(p) => vec![p],
            OneOrMany::Many(v) => v,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: FileConfig = serde_yaml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for list in [&mut cfg.recipes, &mut cfg.recoveries] {
            match list {
                OneOrMany::None => {}
                OneOrMany::One(p) => fix(p),
                OneOrMany::Many(v) => v.iter_mut().for_each(fix),
            }
        }
        for p in [&mut cfg.rules, &mut cfg.db, &mut cfg.beliefs, &mut cfg.scenario, &mut cfg.faults, &mut cfg.trace_out, &mut cfg.report_out]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        Ok(cfg)
    }

    /// Flags win; the file fills whatever the flags left out.
    pub fn merge_docs(&mut self, flags: &DocArgs) -> DocArgs {
        let take = |flag: &Option<PathBuf>, file: &mut Option<PathBuf>| flag.clone().or_else(|| file.take());
        DocArgs {
            recipes: if flags.recipes.is_empty() { std::mem::take(&mut self.recipes).into_vec() } else { flags.recipes.clone() },
            recoveries: if flags.recoveries.is_empty() { std::mem::take(&mut self.recoveries).into_vec() } else { flags.recoveries.clone() },
            rules: take(&flags.rules, &mut self.rules),
            db: take(&flags.db, &mut self.db),
            beliefs: take(&flags.beliefs, &mut self.beliefs),
            scenario: take(&flags.scenario, &mut self.scenario),
            faults: take(&flags.faults, &mut self.faults),
            demo: flags.demo || self.demo,
            no_rules: flags.no_rules,
        }
    }
}

pub fn parse_policy(s: &str) -> Result<UnseenPolicy, String> {
    UnseenPolicy::parse(s).ok_or_else(|| format!("unknown unseen policy `{s}` (ALWAYS_EXIT or RETRY_ONCE_THEN_EXIT)"))
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<String>, String> {
    paths.iter().map(|p| read(p)).collect()
}

/// Read every referenced document up front. Nothing runs if any is missing.
pub fn preflight(docs: &DocArgs) -> Result<Sources, String> {
    let fallback = |given: Option<String>, bundled: &str| given.or_else(|| docs.demo.then(|| bundled.to_string()));
    let opt = |p: &Option<PathBuf>| p.as_deref().map(read).transpose();

    let recipes = match read_all(&docs.recipes)? {
        v if v.is_empty() && docs.demo => vec![demo::RECIPES.to_string()],
        v if v.is_empty() => return Err("no recipe files given (use --recipes or --demo)".into()),
        v => v,
    };
    let recoveries = match read_all(&docs.recoveries)? {
        v if v.is_empty() && docs.demo => vec![demo::RECOVERIES.to_string()],
        v => v,
    };
    let rules = if docs.no_rules { None } else { fallback(opt(&docs.rules)?, demo::RULES) };
    let scenario = fallback(opt(&docs.scenario)?, demo::SCENARIO).ok_or("no scenario given (use --scenario or --demo)")?;
    Ok(Sources {
        recipes,
        recoveries,
        rules,
        database: fallback(opt(&docs.db)?, demo::DATABASE),
        beliefs: fallback(opt(&docs.beliefs)?, demo::BELIEFS),
        scenario,
        faults: fallback(opt(&docs.faults)?, demo::FAULTS),
    })
}
