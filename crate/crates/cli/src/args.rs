use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "relscale",
    version,
    about = "Inference, sampling, learning and asymptotics for weighted relational models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a model file and report structural problems.
    Validate { model: PathBuf },
    /// Exact probability of a query on fixed domain sizes.
    Infer {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Query probability across a range of domain sizes.
    Sweep {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Limit probability of a query as every domain grows.
    Asymptotic {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Forward-sample worlds to a line-delimited sample file.
    Sample {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit condition weights of a model structure to a sample file.
    Learn {
        model: PathBuf,
        data: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rewrite an RLR between proportional and raw condition weights.
    Convert {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        to: Target,
    },
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Domain size of one sort, `SORT=N`.
    #[arg(long = "size", value_name = "SORT=N", value_parser = parse_size)]
    pub size: Vec<(String, usize)>,
    /// Sizes to sweep, `SORT=A..B[:STEP]` or `SORT=N,N,...`.
    #[arg(long, value_name = "SORT=RANGE", value_parser = parse_sizes)]
    pub sizes: Option<(String, Vec<usize>)>,
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long)]
    pub evidence: Option<String>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl RunArgs {
    pub fn size_map(&self) -> Result<BTreeMap<String, usize>> {
        let mut map = BTreeMap::new();
        for (sort, n) in &self.size {
            if map.insert(sort.clone(), *n).is_some() {
                bail!("--size given twice for sort `{sort}`");
            }
        }
        Ok(map)
    }

    pub fn query(&self) -> Result<&str> {
        self.query.as_deref().ok_or_else(|| anyhow!("--query is required"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Enumerate,
    Factorized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Unscaled,
    Da,
}

fn split_sort(s: &str) -> Result<(&str, &str), String> {
    let (sort, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected SORT=VALUE, got `{s}`"))?;
    if sort.is_empty() {
        return Err(format!("missing sort name in `{s}`"));
    }
    Ok((sort, value))
}

fn positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("domain sizes must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(_) => Err(format!("`{s}` is not a domain size")),
    }
}

pub fn parse_size(s: &str) -> Result<(String, usize), String> {
    let (sort, n) = split_sort(s)?;
    Ok((sort.to_string(), positive(n)?))
}

pub fn parse_sizes(s: &str) -> Result<(String, Vec<usize>), String> {
    let (sort, range) = split_sort(s)?;
    let ns = if let Some((a, rest)) = range.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, step)) => (b, positive(step)?),
            None => (rest, 1),
        };
        let (a, b) = (positive(a)?, positive(b)?);
        if a > b {
            return Err(format!("empty range {a}..{b}"));
        }
        (a..=b).step_by(step).collect()
    } else {
        range.split(',').map(positive).collect::<Result<Vec<_>, _>>()?
    };
    Ok((sort.to_string(), ns))
}
