use std::path::PathBuf;
use std::process::ExitCode;

use aa_core::gcode::PrinterProfile;
use aa_core::pipeline::{run_pipeline, PipelineConfig};
use clap::Parser;

/// Anti-aliases flat-sliced G-code against the mesh it was sliced from.
#[derive(Debug, Parser)]
#[command(name = "aa", version)]
struct Args {
    #[arg(long)]
    gcode: PathBuf,
    /// STL, binary or ASCII.
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    out: PathBuf,

    /// Inner nozzle diameter, mm.
    #[arg(long, default_value_t = 0.8)]
    w: f64,
    /// Outer nozzle diameter, mm.
    #[arg(long, default_value_t = 1.25)]
    tau: f64,
    /// Nozzle side inclination, degrees.
    #[arg(long, default_value_t = 45.0)]
    alpha: f64,
    /// Layer thickness, mm.
    #[arg(long, default_value_t = 0.6)]
    h: f64,
    /// Slicing-plane position within the layer, mm. Defaults to h/2.
    #[arg(long)]
    s: Option<f64>,
    /// Nominal feedrate, mm/s.
    #[arg(long, default_value_t = 20.0)]
    fini: f64,
    /// Feedrate for the thickest deposit, mm/s.
    #[arg(long, default_value_t = 13.0)]
    fmin: f64,
    /// Filament diameter, mm.
    #[arg(long, default_value_t = 2.85)]
    filament: f64,

    /// Statistics as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Distance-to-surface samples; `.csv` or PLY otherwise.
    #[arg(long)]
    error_map: Option<PathBuf>,
    /// Error-map samples per mm².
    #[arg(long, default_value_t = 50.0)]
    error_map_density: f64,
    /// Slicing-plane positions for the overlap sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    sweep_s: Vec<f64>,
    #[arg(long)]
    weighted_seams: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_ordering: bool,
    #[arg(long)]
    no_overlap: bool,
    /// Node expansions per layer before the order search gives up on optimality.
    #[arg(long)]
    search_budget: Option<u64>,
}

impl Args {
    fn config(self) -> PipelineConfig {
        let profile = PrinterProfile {
            w: self.w,
            tau: self.tau,
            alpha: self.alpha.to_radians(),
            h: self.h,
            f_ini: self.fini,
            f_min: self.fmin,
            s: self.s.unwrap_or(self.h / 2.0),
            d: self.w,
            filament_diameter: self.filament,
        };
        let mut c = PipelineConfig::new(self.gcode, self.mesh, self.out);
        c.profile = profile;
        c.ordering = !self.no_ordering;
        c.weighted_seams = self.weighted_seams;
        c.overlap_compensation = !self.no_overlap;
        c.report = self.report;
        c.error_map = self.error_map;
        c.error_map_density = self.error_map_density;
        c.sweep_s = self.sweep_s;
        c.workers = self.workers;
        if let Some(b) = self.search_budget {
            c.search_budget = b;
        }
        c
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let config = Args::parse().config();
    match run_pipeline(&config) {
        Ok(r) => {
            eprintln!(
                "aa: {} layers, {} of {} vertices displaced, print time {:.0} s -> {:.0} s",
                r.layers, r.antialias.displacement.displaced, r.antialias.displacement.vertices_total, r.print_time_input_s, r.print_time_output_s
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("aa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
