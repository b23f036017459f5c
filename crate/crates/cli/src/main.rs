//! `alpern`: build finite-rank column systems, run the tower
//! construction, verify the result two independent ways, and render
//! staircase diagrams.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 a
//! verification check failed, 2 invalid input, 3 construction infeasible
//! on this input.

mod render;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use alpern_core::construction::{build_tower, Overrides};
use alpern_core::error::Error;
use alpern_core::ingest::{
    build_cyclic, build_rotation, parse_labels, parse_system, serialize_system, RotationSpec,
};
use alpern_core::model::{ColumnSystem, PartitionSpec, TowerResult};
use alpern_core::report::{from_json, report_from_result, result_from_report, to_json};
use alpern_core::richness::{enrich_rotation, equal_breakpoints};
use alpern_core::verify::{
    build_grid, oracle_verify, verdicts_agree, verify_all, Verdicts, DEFAULT_GRID_LIMIT,
};

#[derive(Parser)]
#[command(name = "alpern", version, about = "Exhaustive Alpern towers with independent base, exactly")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a column-system file
    Build {
        #[command(subcommand)]
        kind: BuildKind,
    },
    /// Run the tower construction and write a JSON report
    Construct {
        /// System file to read
        system: PathBuf,
        /// Tower height (the short one of the pair)
        #[arg(long = "N")]
        n: u32,
        /// Build even when the system fails the richness bound
        #[arg(long = "allow-small-M")]
        allow_small_m: bool,
        /// Output file (default stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a report against its system, printing per-check verdicts
    Verify {
        system: PathBuf,
        selection: PathBuf,
        /// Also run the brute-force grid oracle
        #[arg(long)]
        oracle: bool,
        /// Atom ceiling for the oracle grid
        #[arg(long = "grid-limit", default_value_t = DEFAULT_GRID_LIMIT)]
        grid_limit: u64,
    },
    /// Draw subcolumn grids as ASCII or SVG
    Render {
        system: PathBuf,
        /// Report file whose rung marks to draw
        #[arg(long)]
        selection: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Format,
        /// Level crop `a..b`, inclusive; `R-k` counts down from the top
        #[arg(long)]
        levels: Option<String>,
        /// Column id (default: the first column)
        #[arg(long)]
        column: Option<String>,
        /// Single block to draw (default: all, side by side)
        #[arg(long)]
        block: Option<u32>,
        /// Subcolumn count when no selection is given
        #[arg(long = "N", default_value_t = 1)]
        n: u32,
    },
}

#[derive(Subcommand)]
enum BuildKind {
    /// One cyclic column from a label sequence
    Cyclic {
        /// Labels: compact digits, comma list, or runs like `1x770,2x770`
        #[arg(long)]
        labels: String,
        /// Cell count (default: the largest label used)
        #[arg(long)]
        cells: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rational rotation by p/q with breakpoints on the 1/q grid
    Rotation {
        #[arg(long)]
        p: i64,
        #[arg(long)]
        q: u64,
        /// Breakpoints in [0,1), comma-separated, first must be 0
        #[arg(long)]
        breaks: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// First continued-fraction convergent rich enough for (N, cells)
    RotationCf {
        /// Continued-fraction terms, comma-separated
        #[arg(long)]
        terms: String,
        #[arg(long)]
        cells: u32,
        #[arg(long = "N")]
        n: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ascii,
    Svg,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for invalid input, 3 for infeasible construction.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_)
        | Error::Syntax { .. }
        | Error::ZeroCell { .. }
        | Error::BreakpointOffGrid { .. }
        | Error::Format(_)
        | Error::SelectionMismatch(_)
        | Error::GridTooLarge { .. } => 2,
        Error::NotRich { .. }
        | Error::TooShort { .. }
        | Error::NegativeMass { .. }
        | Error::QuotaNegative { .. }
        | Error::QuotaUnmet { .. }
        | Error::MisalignedHandoff { .. }
        | Error::AQuotaUnmet { .. }
        | Error::Exhausted { .. } => 3,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_out(out: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Build { kind } => {
            let (system, out) = match kind {
                BuildKind::Cyclic { labels, cells, out } => {
                    let labels = parse_labels(&labels, cells).map_err(Error::Format)?;
                    let t = cells
                        .or_else(|| labels.iter().max().copied())
                        .unwrap_or(0);
                    (build_cyclic(labels, PartitionSpec::numbered(t))?, out)
                }
                BuildKind::Rotation { p, q, breaks, out } => {
                    let mut breakpoints = Vec::new();
                    for token in breaks.split(',') {
                        breakpoints
                            .push(alpern_core::ratio::parse_ratio(token).map_err(Error::Format)?);
                    }
                    let t = breakpoints.len() as u32;
                    let spec = RotationSpec { p, q, breakpoints };
                    (build_rotation(&spec, PartitionSpec::numbered(t))?, out)
                }
                BuildKind::RotationCf { terms, cells, n, out } => {
                    let mut parsed = Vec::new();
                    for token in terms.split(',') {
                        parsed.push(token.trim().parse::<u64>().map_err(|_| {
                            Error::Format(format!("bad continued-fraction term {token:?}"))
                        })?);
                    }
                    let enriched = enrich_rotation(&parsed, equal_breakpoints, n, cells)?;
                    eprintln!(
                        "picked q = {} (first convergent rich for N={n}, {cells} cells; threshold {})",
                        enriched.spec.q, enriched.required
                    );
                    (enriched.system, out)
                }
            };
            write_out(&out, &serialize_system(&system))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Construct {
            system,
            n,
            allow_small_m,
            out,
        } => {
            let sys = parse_system(&read(&system)?)?;
            let result = build_tower(&sys, n, &Overrides { allow_small_m })?;
            write_out(&out, &to_json(&report_from_result(&result)))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            system,
            selection,
            oracle,
            grid_limit,
        } => {
            let sys = parse_system(&read(&system)?)?;
            let result = result_from_report(&from_json(&read(&selection)?)?)?;
            let comb = verify_all(&sys, &result)?;
            print_verdicts("", &comb);
            let mut ok = comb.all_pass();
            if oracle {
                let grid = build_grid(&sys, result.params.n, &result.params.b, grid_limit)?;
                let orac = oracle_verify(&sys, &grid, &result)?;
                print_verdicts("oracle ", &orac);
                ok &= orac.all_pass();
                if !verdicts_agree(&comb, &orac) {
                    println!("paths disagree");
                    ok = false;
                }
            }
            println!("verdict: {}", if ok { "pass" } else { "FAIL" });
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Render {
            system,
            selection,
            format,
            levels,
            column,
            block,
            n,
        } => {
            let sys = parse_system(&read(&system)?)?;
            let text = render_command(&sys, selection, format, levels, column, block, n)?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_verdicts(prefix: &str, verdicts: &Verdicts) {
    for check in &verdicts.checks {
        if check.pass {
            println!("{prefix}{}: pass", check.name);
        } else {
            println!("{prefix}{}: FAIL — {}", check.name, check.detail);
        }
    }
}

/// `a..b` with `R-k` tokens counting down from the column top.
fn parse_levels(spec: &str, r: u32) -> Result<(u32, u32), Error> {
    let bad = || Error::Format(format!("bad level range {spec:?}"));
    let (lo_s, hi_s) = spec.split_once("..").ok_or_else(bad)?;
    let parse_one = |token: &str| -> Result<u32, Error> {
        let token = token.trim();
        if let Some(rest) = token.strip_prefix("R-") {
            let k: u32 = rest.parse().map_err(|_| bad())?;
            r.checked_sub(k).ok_or_else(bad)
        } else {
            token.parse().map_err(|_| bad())
        }
    };
    let lo = parse_one(lo_s)?;
    let hi = parse_one(hi_s)?;
    if lo > hi || hi >= r {
        return Err(Error::Format(format!(
            "level range {spec:?} outside 0..{}",
            r - 1
        )));
    }
    Ok((lo, hi))
}

fn render_command(
    sys: &ColumnSystem,
    selection: Option<PathBuf>,
    format: Format,
    levels: Option<String>,
    column: Option<String>,
    block: Option<u32>,
    n_flag: u32,
) -> Result<String, Error> {
    let col = match &column {
        Some(id) => sys
            .column(id)
            .ok_or_else(|| Error::Format(format!("unknown column {id:?}")))?,
        None => &sys.columns[0],
    };
    let t = sys.t();
    if let Some(i) = block {
        if i == 0 || i > t {
            return Err(Error::Format(format!("no block {i}; system has {t}")));
        }
    }
    let blocks_wanted: Vec<u32> = match block {
        Some(i) => vec![i],
        None => (1..=t).collect(),
    };

    let result: Option<TowerResult> = match selection {
        Some(path) => Some(result_from_report(&from_json(&read(&path)?)?)?),
        None => None,
    };
    let n = match &result {
        Some(r) => r.params.n,
        None => n_flag,
    };
    if n == 0 {
        return Err(Error::Format("subcolumn count must be positive".into()));
    }

    let empty = BTreeSet::new();
    let mut marks: Vec<render::Marks> = Vec::new();
    for &bi in &blocks_wanted {
        match &result {
            Some(res) => {
                let sel = res
                    .selection_for(&col.id)
                    .ok_or_else(|| {
                        Error::SelectionMismatch(format!("no selection for column {}", col.id))
                    })?;
                let blk = sel
                    .blocks
                    .iter()
                    .find(|b| b.block == bi)
                    .ok_or_else(|| {
                        Error::SelectionMismatch(format!("selection lacks block {bi}"))
                    })?;
                marks.push((blk.b_rungs.clone(), blk.a_rungs.clone()));
            }
            None => marks.push((empty.clone(), empty.clone())),
        }
    }

    let r = col.height();
    let (lo, hi) = match &levels {
        Some(spec) => parse_levels(spec, r)?,
        None => (0, r - 1),
    };
    Ok(match format {
        Format::Ascii => render::ascii(n, lo, hi, &marks),
        Format::Svg => render::svg(n, lo, hi, &marks),
    })
}
