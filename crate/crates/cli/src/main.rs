use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;

use config::Generator;

#[derive(Parser, Debug)]
#[command(name = "bonefrac", version, about = "Bone adaptation and configurational-force fracture assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        v == OnOff::On
    }
}

/// Flags shared by the solver commands; each overrides the config file.
#[derive(clap::Args, Debug, Clone, Default)]
struct Overrides {
    /// Singular quarter-point elements at the crack front.
    #[arg(long, value_enum)]
    singular: Option<OnOff>,
    /// Global polynomial order.
    #[arg(long)]
    pg: Option<usize>,
    /// Additional order around the crack front.
    #[arg(long)]
    pl: Option<usize>,
    /// Seed for randomised checks (recorded in the manifest).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a density adaptation analysis.
    Adapt {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Static solve and crack-front assessment.
    Fracture {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Verification suites.
    Bench {
        #[arg(value_enum)]
        suite: commands::Suite,
        #[arg(long)]
        out: PathBuf,
        /// Highest combined order of the plate sweep.
        #[arg(long, default_value_t = 7)]
        cap: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build an MWLS density field from samples and evaluate it.
    MwlsFit {
        /// CSV `x,y,z,value`.
        #[arg(long, conflicts_with = "voxels", required_unless_present = "voxels")]
        samples: Option<PathBuf>,
        /// Voxel text file.
        #[arg(long)]
        voxels: Option<PathBuf>,
        /// CSV `grey,density` applied to the sample values.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// CSV `x,y,z` of query points; the sample points are used when absent.
        #[arg(long)]
        query: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check mesh topology, orientation, quality and crack groups.
    ValidateMesh {
        mesh: PathBuf,
        #[arg(long, default_value = bonefrac::mesh::CRACK_SURFACE)]
        crack_group: String,
    },
    /// Write a built-in mesh as Gmsh 2.2 ASCII.
    Generate {
        #[arg(value_enum)]
        kind: Generator,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Adapt { config, out, overrides } => commands::adapt(&config, &out, &overrides.into(), &args),
        Command::Fracture { config, out, overrides } => commands::fracture(&config, &out, &overrides.into(), &args),
        Command::Bench { suite, out, cap, overrides } => commands::bench(suite, &out, cap, &overrides.into(), &args),
        Command::MwlsFit { samples, voxels, calibration, radius, order, query, out } => commands::mwls_fit(
            commands::MwlsFitArgs { samples, voxels, calibration, radius, order, query },
            &out,
            &args,
        ),
        Command::ValidateMesh { mesh, crack_group } => commands::validate_mesh(&mesh, &crack_group),
        Command::Generate { kind, out } => commands::generate(kind, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

impl From<Overrides> for commands::Overrides {
    fn from(o: Overrides) -> Self {
        commands::Overrides {
            singular: o.singular.map(bool::from),
            pg: o.pg,
            pl: o.pl,
            seed: o.seed,
        }
    }
}
