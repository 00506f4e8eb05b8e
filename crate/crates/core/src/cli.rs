//! The `canslice` command line.
//!
//! Usage errors exit with status 2 (clap's convention). Data errors exit
//! with status 1 and print `{"kind": ..., "error": ...}` on stderr.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dbc::{parse_dbc, read_annotations, GroundTruth};
use crate::dbscan::DbscanParams;
use crate::document::SliceDocument;
use crate::error::{Error, Result};
use crate::eval::{evaluate, inferred_from_dbc, inferred_from_document, InferredMap};
use crate::features::write_feature_csv;
use crate::matching::{DtwOptions, DEFAULT_MAX_SERIES};
use crate::obd::{read_template_csv, TemplateSet};
use crate::pipeline::{self, InferOptions};
use crate::slicing::SlicingParams;
use crate::synth::{generate, write_corpus, SynthSpec};
use crate::trace::{group_by_id, parse_candump, parse_csv, ColumnMap, RawTrace, TraceFormat};

/// File names written by `infer`.
pub const SLICES_FILE: &str = "slices.json";
pub const INFERRED_DBC_FILE: &str = "inferred.dbc";

#[derive(Debug, Parser)]
#[command(
    name = "canslice",
    version,
    about = "Infer CAN payload signal layouts from traffic logs"
)]
pub struct Cli {
    /// Worker threads for per-ID work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut every payload into slices (trace -> slices JSON).
    Slice {
        #[command(flatten)]
        input: TraceInput,
        #[command(flatten)]
        slicing: SlicingArgs,
        /// Also write per-byte and per-bit features as CSV.
        #[arg(long, value_name = "FILE")]
        dump_features: Option<PathBuf>,
        /// Output file (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Assign general labels to a slices JSON.
    Label {
        slices: PathBuf,
        /// Fixed Switch threshold instead of the derived one.
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Give Dynamic slices a descriptive label by matching OBD-II templates.
    Match {
        slices: PathBuf,
        #[command(flatten)]
        input: TraceInput,
        #[command(flatten)]
        matching: MatchArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Slice, label and match, then emit the inferred DBC.
    Infer {
        #[command(flatten)]
        input: TraceInput,
        #[command(flatten)]
        slicing: SlicingArgs,
        #[arg(long)]
        eps0: Option<f64>,
        #[command(flatten)]
        matching: MatchArgs,
        /// Output directory for slices.json and inferred.dbc.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score an inferred map (DBC or slices JSON) against a ground-truth DBC.
    Eval {
        inferred: PathBuf,
        truth: PathBuf,
        /// Sidecar CSV: signal_name,category[,descriptive].
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Write the full report as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
        /// Write the per-ID breakdown as CSV.
        #[arg(long, value_name = "FILE")]
        per_id_csv: Option<PathBuf>,
    },
    /// Generate a synthetic corpus from a TOML spec.
    Synth {
        /// Spec file; omit to use the bundled reference corpus.
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the spec's duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Print the bundled reference spec and exit.
        #[arg(long, conflicts_with = "spec")]
        print_reference: bool,
        #[arg(short, long, required_unless_present = "print_reference")]
        output: Option<PathBuf>,
    },
    /// Dump per-byte and per-bit feature tables as CSV.
    Features {
        #[command(flatten)]
        input: TraceInput,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Candump,
    Csv,
}

#[derive(Debug, Args)]
pub struct TraceInput {
    /// Trace file.
    pub trace: PathBuf,
    #[arg(long, value_enum, default_value = "candump")]
    pub format: FormatArg,
    /// CSV header names, e.g. `timestamp=Time,id=ArbID,dlc=DLC,data=Data`.
    #[arg(long, value_name = "MAP")]
    pub csv_columns: Option<String>,
}

#[derive(Debug, Args)]
pub struct SlicingArgs {
    #[arg(long, default_value_t = 0.5)]
    pub eps_byte: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps_bit: f64,
    /// Minimum neighbourhood size at both levels.
    #[arg(long, default_value_t = 2)]
    pub min_pts: usize,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Templates as `timestamp,label,value` CSV instead of the trace's OBD-II responses.
    #[arg(long, value_name = "FILE")]
    pub template_csv: Option<PathBuf>,
    /// Compare raw values instead of z-normalized ones.
    #[arg(long)]
    pub no_normalize: bool,
    /// Sakoe-Chiba band half-width.
    #[arg(long)]
    pub dtw_band: Option<usize>,
    /// Downsample candidates longer than this.
    #[arg(long, default_value_t = DEFAULT_MAX_SERIES)]
    pub max_series: usize,
    /// Leave a slice without descriptive label when its best distance exceeds this.
    #[arg(long)]
    pub max_dtw: Option<f64>,
}

impl SlicingArgs {
    fn params(&self) -> Result<SlicingParams> {
        Ok(SlicingParams {
            byte: DbscanParams::new(self.eps_byte, self.min_pts)?,
            bit: DbscanParams::new(self.eps_bit, self.min_pts)?,
        })
    }
}

impl MatchArgs {
    fn dtw(&self) -> Result<DtwOptions> {
        if self.max_series < 2 {
            return Err(Error::Invalid("--max-series must be at least 2".into()));
        }
        Ok(DtwOptions {
            normalize: !self.no_normalize,
            band: self.dtw_band,
            max_series: self.max_series,
        })
    }

    fn templates(&self) -> Result<Option<TemplateSet>> {
        self.template_csv
            .as_deref()
            .map(|p| read_template_csv(&read(p)?))
            .transpose()
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn load_trace(input: &TraceInput) -> Result<RawTrace> {
    let text = read(&input.trace)?;
    let format = match input.format {
        FormatArg::Candump => TraceFormat::Candump,
        FormatArg::Csv => TraceFormat::Csv,
    };
    let mut trace = match format {
        TraceFormat::Candump => parse_candump(&text)?,
        TraceFormat::Csv => {
            let columns = match &input.csv_columns {
                Some(spec) => ColumnMap::parse_overrides(spec)?,
                None => ColumnMap::default(),
            };
            parse_csv(&text, &columns)?
        }
    };
    trace.source = input.trace.display().to_string();
    for w in &trace.warnings {
        eprintln!("warning: line {}: {}", w.line, w.message);
    }
    Ok(trace)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
        }
        None => {
            print!("{text}");
            std::io::stdout().flush()?;
        }
    }
    Ok(())
}

fn note(lines: &[String]) {
    for l in lines {
        eprintln!("note: {l}");
    }
}

fn load_inferred(path: &Path) -> Result<InferredMap> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        Ok(inferred_from_document(&SliceDocument::from_json(&text)?))
    } else {
        Ok(inferred_from_dbc(&parse_dbc(&text)?))
    }
}

fn load_truth(path: &Path, annotations: Option<&Path>) -> Result<GroundTruth> {
    let mut truth = parse_dbc(&read(path)?)?;
    truth.provenance = path.display().to_string();
    for w in &truth.warnings {
        eprintln!(
            "warning: {}: line {}: {}",
            path.display(),
            w.line,
            w.message
        );
    }
    for (id, a, b) in truth.overlaps() {
        eprintln!("warning: {id}: signals {a} and {b} overlap");
    }
    if let Some(p) = annotations {
        let applied = truth.apply_annotations(&read_annotations(&read(p)?)?);
        if applied == 0 {
            eprintln!(
                "warning: no annotation matched a signal in {}",
                path.display()
            );
        }
    }
    Ok(truth)
}

fn execute(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Slice {
            input,
            slicing,
            dump_features,
            output,
        } => {
            let trace = load_trace(&input)?;
            let opts = InferOptions {
                slicing: slicing.params()?,
                threads,
                ..InferOptions::default()
            };
            if let Some(path) = dump_features {
                let traces = group_by_id(&trace);
                let mut buf = Vec::new();
                write_feature_csv(&mut buf, traces.values())?;
                std::fs::write(path, buf)?;
            }
            let (doc, notes) = pipeline::slice_raw(&trace, &opts)?;
            note(&notes);
            emit(output.as_deref(), &doc.to_json()?)
        }
        Command::Label {
            slices,
            eps0,
            output,
        } => {
            let mut doc = SliceDocument::from_json(&read(&slices)?)?;
            pipeline::label_document(&mut doc, eps0)?;
            emit(output.as_deref(), &doc.to_json()?)
        }
        Command::Match {
            slices,
            input,
            matching,
            output,
        } => {
            let mut doc = SliceDocument::from_json(&read(&slices)?)?;
            let trace = load_trace(&input)?;
            let templates = match matching.templates()? {
                Some(t) => t,
                None => pipeline::templates_from_trace(&trace),
            };
            let opts = InferOptions {
                dtw: matching.dtw()?,
                max_dtw: matching.max_dtw,
                threads,
                ..InferOptions::default()
            };
            pipeline::match_document(&mut doc, &trace, &templates, &opts)?;
            emit(output.as_deref(), &doc.to_json()?)
        }
        Command::Infer {
            input,
            slicing,
            eps0,
            matching,
            output,
        } => {
            let trace = load_trace(&input)?;
            let opts = InferOptions {
                slicing: slicing.params()?,
                eps0,
                dtw: matching.dtw()?,
                max_dtw: matching.max_dtw,
                threads,
            };
            let templates = matching.templates()?;
            let result = pipeline::infer(&trace, templates.as_ref(), &opts)?;
            note(&result.notes);
            std::fs::create_dir_all(&output)?;
            std::fs::write(output.join(SLICES_FILE), result.document.to_json()?)?;
            std::fs::write(output.join(INFERRED_DBC_FILE), result.dbc)?;
            Ok(())
        }
        Command::Eval {
            inferred,
            truth,
            annotations,
            json,
            per_id_csv,
        } => {
            let inferred = load_inferred(&inferred)?;
            let truth = load_truth(&truth, annotations.as_deref())?;
            let report = evaluate(&inferred, &truth)?;
            if let Some(p) = json {
                emit(Some(&p), &report.to_json()?)?;
            }
            if let Some(p) = per_id_csv {
                emit(Some(&p), &report.per_id_csv()?)?;
            }
            emit(None, &report.to_table())
        }
        Command::Synth {
            spec,
            seed,
            duration,
            print_reference,
            output,
        } => {
            if print_reference {
                return emit(None, SynthSpec::reference_toml());
            }
            let mut spec = match spec {
                Some(p) => SynthSpec::from_toml(&read(&p)?)?,
                None => SynthSpec::reference(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(d) = duration {
                spec.duration_s = d;
            }
            let corpus = generate(&spec)?;
            write_corpus(&corpus, &output.expect("required by clap"))
        }
        Command::Features { input, output } => {
            let trace = load_trace(&input)?;
            let traces = group_by_id(&trace);
            let mut buf = Vec::new();
            write_feature_csv(&mut buf, traces.values())?;
            emit(
                output.as_deref(),
                &String::from_utf8(buf).expect("csv output is utf-8"),
            )
        }
    }
}

/// Machine-readable error line.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "kind": e.kind(), "error": e.to_string() }).to_string()
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["canslice"]), 2);
        assert_eq!(run(["canslice", "bogus"]), 2);
        assert_eq!(run(["canslice", "slice"]), 2);
        assert_eq!(run(["canslice", "--help"]), 0);
    }

    #[test]
    fn data_errors_exit_1() {
        assert_eq!(run(["canslice", "slice", "/nonexistent/trace.log"]), 1);
        assert_eq!(run(["canslice", "slice", "x.log", "--min-pts", "0"]), 1);
    }

    #[test]
    fn error_json_shape() {
        let v: serde_json::Value = serde_json::from_str(&error_json(&Error::NoOverlap)).unwrap();
        assert_eq!(v["kind"], "NoOverlap");
        assert!(v["error"].as_str().unwrap().contains("share no CAN IDs"));
    }
}
