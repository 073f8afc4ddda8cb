use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use s3forge::scene::{self, Format, RunOptions, Scene};
use s3forge::{Error, Result};

/// Generate printable meshes of designs in the 3-sphere.
#[derive(Parser)]
#[command(name = "s3forge", version)]
struct Cli {
    /// Mesh format; overrides the scene's output.format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Vertex weld tolerance in millimeters.
    #[arg(long, global = true, default_value_t = scene::DEFAULT_WELD_TOLERANCE_MM)]
    seed_tolerance: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh a scene file and write the mesh plus a diagnostics JSON.
    Generate {
        scene: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report feature ratio, bounding box and minimum printable scale without meshing.
    Analyze { scene: PathBuf },
    /// Mesh one of the built-in scenes.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the preset's scene JSON instead of meshing it.
        #[arg(long)]
        print: bool,
    },
    /// List the built-in scenes.
    ListPresets,
}

fn configure_threads() {
    if let Some(n) = std::env::var("S3FORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// "2 x95, 0 x1" style tally of per-shell Euler characteristics.
fn euler_summary(chi: &[i64]) -> String {
    let mut tally = std::collections::BTreeMap::new();
    for &c in chi {
        *tally.entry(c).or_insert(0usize) += 1;
    }
    tally
        .iter()
        .map(|(c, n)| format!("{c} x{n}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn generate(scene: &Scene, cli: &Cli, out: Option<PathBuf>) -> Result<i32> {
    let opts = RunOptions {
        format: cli.format,
        out,
        weld_tolerance_mm: Some(cli.seed_tolerance),
    };
    let outcome = scene::run(scene, &opts)?;
    let d = &outcome.generated.diagnostics;
    println!("wrote {}", outcome.mesh_path.display());
    println!("wrote {}", outcome.diagnostics_path.display());
    println!(
        "bbox {:.3} x {:.3} x {:.3} mm, volume {:.1} mm^3, {} shells (euler {}), min feature {}",
        d.bbox_mm[0],
        d.bbox_mm[1],
        d.bbox_mm[2],
        d.volume_mm3,
        d.euler_characteristic.len(),
        euler_summary(&d.euler_characteristic),
        d.min_feature_mm.map_or("n/a".to_string(), |m| format!("{m:.3} mm")),
    );
    for f in &outcome.generated.failures {
        eprintln!("validation: {f}");
    }
    Ok(outcome.exit_code())
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Generate { scene, out } => generate(&Scene::load(scene)?, cli, out.clone()),
        Command::Analyze { scene } => {
            println!("{}", scene::analyze(&Scene::load(scene)?)?.to_json());
            Ok(scene::EXIT_OK)
        }
        Command::Preset { name, out, print } => {
            let p = scene::preset(name)
                .ok_or_else(|| Error::Schema(format!("unknown preset '{name}'; see list-presets")))?;
            if *print {
                println!("{}", p.scene().to_json());
                return Ok(scene::EXIT_OK);
            }
            generate(&p.scene(), cli, out.clone())
        }
        Command::ListPresets => {
            print!("{}", scene::list_presets());
            Ok(scene::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let code = dispatch(&cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        scene::exit_code_for(&e)
    });
    ExitCode::from(code as u8)
}
