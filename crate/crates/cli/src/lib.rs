//! `locc-cert`: certify separable operations and inspect protocol trees.
//!
//! Exit codes: 0 satisfied or success, 3 bound violated, 2 invalid input,
//! 1 internal error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use locc_core::certify::{certify, CertifyOptions, Verdict, NOT_SUFFICIENT_NOTE, REFINED_NOTE};
use locc_core::constructions::{
    appendix_a_sep_with_prime, appendix_d_omit, appendix_d_tree, domino_fixture,
};
use locc_core::json::{sep_from_str, sep_to_string, tree_from_str, tree_to_string, SCHEMA};
use locc_core::prune::{prune, PruneOptions};
use locc_core::tree::{
    canonicalize, extract_sep, full_binary_check, is_canonical, validate_tree, MergeOutcome,
};
use locc_core::{Error, LoccTree, Tolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_VIOLATED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "locc-cert",
    version,
    about = "Extreme-ray certificates against finite-round LOCC"
)]
pub struct Cli {
    /// Cone-membership tolerance.
    #[arg(long, global = true, env = "LOCC_CERT_TOL", value_parser = positive_f64)]
    pub tol: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Count extreme rays of a separable operation and test the bound.
    Check {
        #[arg(long)]
        sep: PathBuf,
        /// Also test the bipartite bound ⌊3N/2⌋ (two parties, N > 4).
        #[arg(long)]
        refined_bipartite: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write the verdict JSON here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a construction as JSON.
    #[command(subcommand)]
    Gen(Gen),
    /// Rewrite a valid tree into canonical form.
    Canonicalize(TreeIo),
    /// Write the separable operation implemented by a tree.
    Extract(TreeIo),
    /// Prune a canonical tree to its keeper leaves; prints the removal log as JSON lines.
    Prune {
        #[arg(long)]
        tree: PathBuf,
        /// Include a snapshot of the tree after every removal.
        #[arg(long)]
        trace: bool,
    },
    /// Check completeness and positivity of a tree.
    VerifyTree {
        #[arg(long)]
        tree: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum Gen {
    /// Prime-phase family exceeding the bound.
    AppendixA {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        prime: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Saturating once-per-party protocol tree.
    AppendixD {
        #[arg(long)]
        parties: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        omit: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nine-state 3×3 product basis.
    Domino {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct TreeIo {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }

    fn core(context: &str, e: Error) -> Self {
        let code = match e {
            Error::Structure(_) => EXIT_INTERNAL,
            _ => EXIT_INVALID,
        };
        Self {
            code,
            message: format!("{context}: {e}"),
        }
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_INVALID;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn tolerances(cli: &Cli) -> Tolerances {
    let tol = Tolerances::default();
    match cli.tol {
        Some(t) => tol.with_cone(t),
        None => tol,
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn load_tree(path: &Path) -> Result<LoccTree, Failure> {
    tree_from_str(&read(path)?).map_err(|e| Failure::core(&path.display().to_string(), e))
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn std::io::Write) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n"))
            .map_err(|e| Failure::internal(format!("{}: {e}", p.display()))),
        None => writeln!(stdout, "{text}").map_err(|e| Failure::internal(e.to_string())),
    }
}

fn dispatch(
    cli: &Cli,
    stdout: &mut dyn std::io::Write,
    stderr: &mut dyn std::io::Write,
) -> Outcome {
    let tol = tolerances(cli);
    match &cli.command {
        Command::Check {
            sep,
            refined_bipartite,
            format,
            out,
        } => {
            let op = sep_from_str(&read(sep)?, &tol)
                .map_err(|e| Failure::core(&sep.display().to_string(), e))?;
            let opts = CertifyOptions {
                refined_bipartite: *refined_bipartite,
                tol,
            };
            let verdict = certify(&op, &opts).map_err(|e| Failure::core("check", e))?;
            if let Some(p) = out {
                emit(&render_verdict(&verdict, Format::Json), Some(p), stdout)?;
            }
            emit(&render_verdict(&verdict, *format), None, stdout)?;
            Ok(if verdict.satisfied {
                EXIT_OK
            } else {
                EXIT_VIOLATED
            })
        }
        Command::Gen(g) => generate(g, stdout),
        Command::Canonicalize(io) => {
            let tree = load_tree(&io.tree)?;
            match canonicalize(&tree, &tol).map_err(|e| Failure::core("canonicalize", e))? {
                MergeOutcome::Merged(t) => {
                    emit(&tree_to_string(&t), io.out.as_deref(), stdout)?;
                    Ok(EXIT_OK)
                }
                MergeOutcome::Unsupported { node, reason } => Err(Failure::invalid(format!(
                    "canonicalize: cannot merge at node {node}: {reason}"
                ))),
            }
        }
        Command::Extract(io) => {
            let tree = load_tree(&io.tree)?;
            let sep = extract_sep(&tree, &tol).map_err(|e| Failure::core("extract", e))?;
            emit(&sep_to_string(&sep), io.out.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Prune { tree, trace } => {
            let tree = load_tree(tree)?;
            if !is_canonical(&tree, &tol) {
                return Err(Failure::invalid(
                    "prune: tree is not canonical; run `canonicalize` first",
                ));
            }
            let sep = extract_sep(&tree, &tol).map_err(|e| Failure::core("prune", e))?;
            let opts = PruneOptions {
                trace: *trace,
                ..PruneOptions::default()
            };
            let outcome = prune(&tree, &sep, &tol, opts).map_err(|e| Failure::core("prune", e))?;
            for r in &outcome.records {
                let line =
                    serde_json::to_string(r).map_err(|e| Failure::internal(e.to_string()))?;
                emit(&line, None, stdout)?;
            }
            let _ = writeln!(
                stderr,
                "pruned {} removals: {} leaves, {} nodes, {} of {} extreme rays present",
                outcome.records.len(),
                outcome.leaves.len(),
                outcome.node_count(),
                outcome.surviving_rays.len(),
                outcome.total_rays
            );
            Ok(EXIT_OK)
        }
        Command::VerifyTree { tree } => {
            let tree = load_tree(tree)?;
            let diagnostics = validate_tree(&tree, &tol);
            for d in &diagnostics {
                let line =
                    serde_json::to_string(d).map_err(|e| Failure::internal(e.to_string()))?;
                emit(&line, None, stdout)?;
            }
            if !diagnostics.is_empty() {
                let _ = writeln!(stderr, "invalid tree: {} problem(s)", diagnostics.len());
                return Ok(EXIT_INVALID);
            }
            let binary = full_binary_check(&tree).map(|c| c.ok).unwrap_or(false);
            emit(
                &format!(
                    "valid; full binary: {}; canonical: {}",
                    yes_no(binary),
                    yes_no(is_canonical(&tree, &tol))
                ),
                None,
                stdout,
            )?;
            Ok(EXIT_OK)
        }
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn generate(g: &Gen, stdout: &mut dyn std::io::Write) -> Outcome {
    match g {
        Gen::AppendixA { dims, prime, out } => {
            let sep = appendix_a_sep_with_prime(dims, *prime)
                .map_err(|e| Failure::core("gen appendix-a", e))?;
            emit(&sep_to_string(&sep), out.as_deref(), stdout)?;
        }
        Gen::AppendixD {
            parties,
            dims,
            seed,
            omit,
            out,
        } => {
            let tree = appendix_d_tree(*parties, dims, *seed)
                .map_err(|e| Failure::core("gen appendix-d", e))?;
            let tree =
                appendix_d_omit(&tree, *omit).map_err(|e| Failure::core("gen appendix-d", e))?;
            emit(&tree_to_string(&tree), out.as_deref(), stdout)?;
        }
        Gen::Domino { out } => emit(&sep_to_string(&domino_fixture()), out.as_deref(), stdout)?,
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Versioned<'a> {
    schema: &'static str,
    #[serde(flatten)]
    verdict: &'a Verdict,
}

/// Stable rendering of a verdict; the JSON form carries the schema version.
pub fn render_verdict(v: &Verdict, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(&Versioned {
            schema: SCHEMA,
            verdict: v,
        })
        .expect("verdicts always serialize"),
        Format::Text => render_text(v),
    }
}

fn render_text(v: &Verdict) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "N = {}, parties = {}, active = {:?}",
        v.n, v.party_count, v.active_parties
    );
    for (party, e) in &v.e {
        let _ = writeln!(s, "party {party}: e = {e}");
    }
    for r in &v.reports {
        if !r.marginal.is_empty() {
            let _ = writeln!(
                s,
                "warning: party {} classes {:?} lie close to the cone tolerance",
                r.party, r.marginal
            );
        }
    }
    let rel = if v.theorem1_satisfied { "≤" } else { ">" };
    let _ = writeln!(
        s,
        "Σe = {} {rel} {} = 2(N−1), margin {}",
        v.sum_e, v.bound, v.margin
    );
    if v.theorem1_satisfied {
        let _ = write!(s, "SATISFIED ({NOT_SUFFICIENT_NOTE})");
        if v.is_saturated() {
            let _ = write!(s, ", saturated");
        }
        let _ = writeln!(s);
    } else {
        let _ = writeln!(s, "VIOLATED");
        let _ = writeln!(s, "certificate: not implementable by finite-round LOCC");
        if let Some(r) = v.violation_ratio {
            let _ = writeln!(s, "violation ratio {r:.4}");
        }
    }
    if let Some(r) = &v.refined {
        let rel = if r.satisfied { "≤" } else { ">" };
        let status = if r.satisfied { "satisfied" } else { "VIOLATED" };
        let _ = writeln!(
            s,
            "refined bipartite bound ({REFINED_NOTE}): Σe = {} {rel} {} = ⌊3N/2⌋, {status}",
            v.sum_e, r.bound
        );
    }
    for note in v.notes.iter().skip(1) {
        let _ = writeln!(s, "note: {note}");
    }
    s.truncate(s.trim_end().len());
    s
}
