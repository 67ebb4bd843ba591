use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hinv::cluster::{Admissibility, BlockPartition, ClusterTree};
use hinv::experiment::{self, ExperimentConfig, Target};
use hinv::problem::Problem;
use hinv::Error;

#[derive(Parser)]
#[command(name = "hinv", about = "Hierarchical-matrix rank-decay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep block ranks and write the error table as CSV.
    Run(RunArgs),
    /// Print the mesh of a problem as plain text.
    MeshDump(ProblemArgs),
    /// Print the far/near block partition, one block per line.
    PartitionDump(PartitionArgs),
    /// Write the assembled matrix in Matrix Market format.
    MatrixMarket(ProblemArgs),
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, default_value = "mixed-2d")]
    problem: Problem,
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    base: ProblemArgs,
    #[arg(long, default_value_t = 2.0)]
    eta: f64,
    #[arg(long, default_value_t = 25)]
    nleaf: usize,
    #[arg(long, default_value = "strong")]
    mode: Admissibility,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    partition: PartitionArgs,
    /// Inclusive range `a..b` or comma list.
    #[arg(long, default_value = "1..16")]
    ranks: String,
    #[arg(long, default_value = "inverse")]
    target: Target,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = experiment::DEFAULT_MAX_DOFS)]
    max_dofs: usize,
    /// Write zeros in the `seconds` column for reproducible output.
    #[arg(long)]
    no_timing: bool,
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> hinv::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let p = &args.partition;
            let config = ExperimentConfig {
                problem: p.base.problem,
                n: p.base.n,
                eta: p.eta,
                leaf_size: p.nleaf,
                mode: p.mode,
                ranks: experiment::parse_ranks(&args.ranks)?,
                target: args.target,
                seed: args.seed,
                max_dofs: args.max_dofs,
                timing: !args.no_timing,
            };
            let report = experiment::run_experiment(&config)?;
            eprintln!(
                "{} n={} N={} depth={} C_sp={}",
                config.problem, config.n, report.dofs, report.depth, report.sparsity_constant
            );
            let mut out = output(&p.base.out)?;
            experiment::emit_csv(&report.records, &report.fits, &mut out)?;
            out.flush()?;
        }
        Command::MeshDump(args) => {
            let mesh = args.problem.build_mesh(args.n)?;
            let mut out = output(&args.out)?;
            mesh.write_dump(&mut out)?;
            out.flush()?;
        }
        Command::PartitionDump(args) => {
            let setup = args.base.problem.setup(args.base.n)?;
            let tree = ClusterTree::build(&setup.mesh, &setup.dofmap, args.nleaf)?;
            let partition = BlockPartition::build(&tree, args.eta, args.mode)?;
            let mut out = output(&args.base.out)?;
            partition.write_dump(&mut out)?;
            out.flush()?;
        }
        Command::MatrixMarket(args) => {
            let setup = args.problem.setup(args.n)?;
            let mut out = output(&args.out)?;
            setup.matrix.to_sparse().write_matrix_market(&mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hinv: {e}");
            match e {
                Error::Budget { .. } => ExitCode::from(2),
                Error::Singular { .. } | Error::NotPositiveDefinite { .. } | Error::NonFinite | Error::Numerical(_) => {
                    ExitCode::from(3)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}
