use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use tna_core::ingest::{ingest_edge_list, sniff_schema, ColumnSchema, Granularity};
use tna_core::{graph, snapfile, TemporalGraph};

use crate::error::{require_file, CliError};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Schema {
    /// SNAP for three columns, KONECT for four or more.
    Auto,
    /// `source target timestamp`
    Snap,
    /// `source target weight timestamp`
    Konect,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Timestamped edge list.
    input: PathBuf,

    #[arg(long, value_enum, default_value = "auto")]
    schema: Schema,

    /// `week`, `month` or `fixed:<n>`.
    #[arg(long, default_value = "week")]
    granularity: String,

    /// Input rows are directed; direction is dropped either way.
    #[arg(long)]
    directed: bool,

    /// Snapshot file to write; defaults to `<out>/<input stem>.snap`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn execute(args: IngestArgs, out_dir: &Path) -> Result<(), CliError> {
    require_file(&args.input)?;
    let granularity: Granularity = args.granularity.parse()?;
    let schema = match args.schema {
        Schema::Snap => ColumnSchema::SNAP,
        Schema::Konect => ColumnSchema::KONECT,
        Schema::Auto => {
            let file = File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
            sniff_schema(BufReader::new(file))
                .map_err(|e| CliError::Usage(format!("{}: {e}", args.input.display())))?
        }
    };
    let report = ingest_edge_list(&args.input, &schema, granularity, args.directed)?;
    let output = args.output.unwrap_or_else(|| {
        let stem = args
            .input
            .file_stem()
            .map_or("graph".into(), |s| s.to_string_lossy());
        out_dir.join(format!("{stem}.snap"))
    });
    crate::write_file(&output, &snapfile::to_string(&report.graph))?;

    print_summary(&report.graph);
    if report.skipped_self_loops > 0 {
        println!("self-loops dropped: {}", report.skipped_self_loops);
    }
    println!("wrote {}", output.display());
    Ok(())
}

pub fn print_summary(g: &TemporalGraph) {
    println!("|V| = {}", g.vertex_count());
    println!("T = {} ({})", g.len(), g.granularity());
    println!("{:>5} {:>10} {:>10}", "t", "|E_t|", "new");
    for (k, s) in g.snapshots().iter().enumerate() {
        let new = if k == 0 {
            s.edge_count()
        } else {
            graph::edge_difference(s, &g.snapshots()[k - 1]).len()
        };
        println!("{:>5} {:>10} {:>10}", k + 1, s.edge_count(), new);
    }
}
