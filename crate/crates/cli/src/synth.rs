use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use tna_core::ingest::parse_static_edges;
use tna_core::synthetic::{generate_rewire_seeded, generate_sbm_seeded, RewireConfig, SbmConfig};
use tna_core::{snapfile, Snapshot, TnaError};

use crate::error::{require_file, CliError};
use crate::ingest::print_summary;

#[derive(Subcommand)]
pub enum SynthCommand {
    /// Stochastic block model whose vertices migrate between communities.
    Sbm(SbmArgs),
    /// Repeated random rewiring of a seed graph.
    Rewire(RewireArgs),
}

#[derive(Args)]
pub struct SbmArgs {
    #[arg(long = "n", default_value_t = 3000)]
    vertices: usize,
    #[arg(long = "k", default_value_t = 3)]
    communities: usize,
    #[arg(long = "t", default_value_t = 30)]
    snapshots: usize,
    #[arg(long, default_value_t = 20)]
    migrators: usize,
    #[arg(long, default_value_t = 0.01)]
    p_intra: f64,
    #[arg(long, default_value_t = 0.0005)]
    p_inter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Snapshot file; defaults to `<out>/sbm_s<seed>.snap`.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write per-step community labels as CSV (`t,vertex,community`).
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
pub struct RewireArgs {
    /// Static edge list (`source target` rows) or a snapshot file, whose
    /// last snapshot is used.
    #[arg(long)]
    seed_graph: PathBuf,
    #[arg(long = "t", default_value_t = 10)]
    snapshots: usize,
    #[arg(long, default_value_t = 100)]
    per_step: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Snapshot file; defaults to `<out>/rewire_s<seed>.snap`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn execute(cmd: SynthCommand, out_dir: &Path) -> Result<(), CliError> {
    match cmd {
        SynthCommand::Sbm(a) => sbm(a, out_dir),
        SynthCommand::Rewire(a) => rewire(a, out_dir),
    }
}

fn sbm(a: SbmArgs, out_dir: &Path) -> Result<(), CliError> {
    let config = SbmConfig {
        vertex_count: a.vertices,
        communities: a.communities,
        snapshots: a.snapshots,
        migrators_per_step: a.migrators,
        p_intra: a.p_intra,
        p_inter: a.p_inter,
        seed: a.seed,
    };
    let generated = generate_sbm_seeded(&config)?;
    let output = a
        .output
        .unwrap_or_else(|| out_dir.join(format!("sbm_s{}.snap", a.seed)));
    crate::write_file(&output, &snapfile::to_string(&generated.graph))?;
    if let Some(path) = a.labels {
        let mut csv = String::from("t,vertex,community\n");
        for (t, step) in generated.labels.iter().enumerate() {
            for (v, c) in step.iter().enumerate() {
                csv.push_str(&format!("{},{v},{c}\n", t + 1));
            }
        }
        crate::write_file(&path, &csv)?;
    }
    print_summary(&generated.graph);
    println!("wrote {}", output.display());
    Ok(())
}

fn load_seed_graph(path: &Path) -> Result<Snapshot, CliError> {
    require_file(path)?;
    match snapfile::read(path) {
        Ok(g) => Ok(g
            .snapshots()
            .last()
            .map(|s| (**s).clone())
            .unwrap_or_else(|| Snapshot::empty(0))),
        Err(TnaError::Format { .. }) => {
            let file = File::open(path).map_err(|e| CliError::io(path, e))?;
            let (snapshot, _) = parse_static_edges(BufReader::new(file))?;
            Ok(snapshot)
        }
        Err(e) => Err(e.into()),
    }
}

fn rewire(a: RewireArgs, out_dir: &Path) -> Result<(), CliError> {
    let source = load_seed_graph(&a.seed_graph)?;
    let config = RewireConfig {
        snapshots: a.snapshots,
        edges_rewired_per_step: a.per_step,
        seed: a.seed,
    };
    let g = generate_rewire_seeded(&source, &config)?;
    let output = a
        .output
        .unwrap_or_else(|| out_dir.join(format!("rewire_s{}.snap", a.seed)));
    crate::write_file(&output, &snapfile::to_string(&g))?;
    print_summary(&g);
    println!("wrote {}", output.display());
    Ok(())
}
