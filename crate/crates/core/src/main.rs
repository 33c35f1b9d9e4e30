use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use mmstokes::assembly::{FormParameters, Stabilization};
use mmstokes::mesh::random_placements;
use mmstokes::study::{emit_report, run_patch_test, run_study, verify_geometry, StudyConfig};

#[derive(Parser)]
#[command(
    name = "mmstokes",
    version,
    about = "Multimesh Stokes solver and convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StabArg {
    Grad,
    L2,
}

#[derive(Subcommand)]
enum Command {
    /// Run a manufactured-solution convergence study.
    Study(StudyArgs),
    /// Check area, per-cell and interface-length conservation on random layouts.
    VerifyGeometry {
        #[arg(long, default_value_t = 8)]
        num_meshes: usize,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// Background subdivisions.
        #[arg(long, default_value_t = 16)]
        level: usize,
        #[arg(long, default_value_t = 10_000)]
        samples_per_facet: usize,
        #[arg(long, default_value_t = 0.2)]
        side_min: f64,
        #[arg(long, default_value_t = 0.4)]
        side_max: f64,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
    },
    /// Solve a polynomial problem the method must reproduce exactly.
    PatchTest {
        #[arg(long, default_value_t = 2)]
        num_meshes: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 6)]
        level: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct StudyArgs {
    /// JSON configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    num_meshes: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    stab: Option<StabArg>,
    #[arg(long)]
    average_weight: Option<f64>,
    #[arg(long)]
    per_pair_h: bool,
    #[arg(long)]
    side_min: Option<f64>,
    #[arg(long)]
    side_max: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    /// Output directory for the report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
    #[arg(long)]
    dump_meshes: bool,
    #[arg(long)]
    dump_quadrature: bool,
    #[arg(long)]
    dump_system: bool,
}

impl StudyArgs {
    fn into_config(self) -> anyhow::Result<StudyConfig> {
        let mut c = match &self.config {
            Some(path) => StudyConfig::from_json_file(path)?,
            None => StudyConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set!(
            k => c.k,
            num_meshes => c.num_meshes,
            levels => c.levels,
            seed => c.seed,
            beta0 => c.params.beta0,
            beta1 => c.params.beta1,
            beta2 => c.params.beta2,
            delta => c.params.delta,
            average_weight => c.params.average_weight,
            side_min => c.side_range[0],
            side_max => c.side_range[1],
            margin => c.margin,
        );
        if let Some(s) = self.stab {
            c.params.stabilization = match s {
                StabArg::Grad => Stabilization::Grad,
                StabArg::L2 => Stabilization::L2,
            };
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        c.params.per_pair_h |= self.per_pair_h;
        c.plot |= self.plot;
        c.dump_meshes |= self.dump_meshes;
        c.dump_quadrature |= self.dump_quadrature;
        c.dump_system |= self.dump_system;
        Ok(c)
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn study(args: StudyArgs) -> anyhow::Result<()> {
    let config = args.into_config()?;
    let report = run_study(&config)?;
    println!(
        "{:>6} {:>12} {:>8} {:>12} {:>12} {:>12} {:>12} {:>6}",
        "level", "h", "dofs", "L2(u)", "H1(u)", "L2(p)", "jump", "hidden"
    );
    for l in &report.levels {
        println!(
            "{:>6} {:>12.4e} {:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>6}",
            l.level, l.h, l.dofs, l.e_l2_u, l.e_h1_u, l.e_l2_p, l.jump_seminorm, l.hidden
        );
    }
    let r = &report.fitted;
    println!(
        "fitted rates: L2(u) {}  H1(u) {}  L2(p) {}",
        fmt_rate(r.l2_u),
        fmt_rate(r.h1_u),
        fmt_rate(r.l2_p)
    );
    if let Some(dir) = &config.out {
        for path in emit_report(&report, dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Study(args) => study(args),
        Command::VerifyGeometry {
            num_meshes,
            seeds,
            level,
            samples_per_facet,
            side_min,
            side_max,
            margin,
        } => (|| {
            let check = verify_geometry(
                num_meshes,
                0..seeds,
                level,
                (side_min, side_max),
                margin,
                samples_per_facet,
            )?;
            println!("area error:           {:.3e}", check.area_error);
            println!("cell partition error: {:.3e}", check.cell_partition_error);
            println!("interface error:      {:.3e}", check.interface_error);
            if check.area_error > 1e-10
                || check.cell_partition_error > 1e-10
                || check.interface_error > 1e-3
            {
                bail!("geometry conservation check failed");
            }
            Ok(())
        })(),
        Command::PatchTest {
            num_meshes,
            k,
            level,
            seed,
        } => (|| {
            let placements = random_placements(num_meshes, seed, (0.25, 0.45), 0.05)?;
            let report = run_patch_test(k, level, &placements, &FormParameters::default())
                .with_context(|| format!("patch test with {num_meshes} meshes, k = {k}"))?;
            println!("velocity error: {:.3e}", report.velocity_error);
            println!("pressure error: {:.3e}", report.pressure_error);
            if report.velocity_error > 1e-9 || report.pressure_error > 1e-8 {
                bail!("patch test failed");
            }
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
