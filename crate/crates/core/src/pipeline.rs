//! End-to-end run: parse, displace, compensate, order, relink, emit, report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::antialias::{antialias_program, sweep_slicing_plane, AntialiasError, AntialiasReport, SweepRow};
use crate::evaluate::{error_map, estimate_print_time, tracks_from_program, ErrorMap, ErrorSummary, EvalError};
use crate::gcode::{emit_gcode, parse_gcode, GcodeError, PrinterProfile, ProfileError};
use crate::geometry::{load_mesh, LoadReport, MeshError, VerticalRayIndex};
use crate::ordering::{order_layer, LayerOrderReport, OrderingError, DEFAULT_BUDGET};

/// Thinnest layer the printer is trusted to deposit, mm.
pub const MIN_THICKNESS: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("config: {0}")]
    Profile(#[from] ProfileError),
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("gcode: {0}")]
    Parse(#[from] GcodeError),
    #[error("geometry: {0}")]
    Mesh(#[from] MeshError),
    #[error("antialias: {0}")]
    Antialias(#[from] AntialiasError),
    #[error("ordering: {0}")]
    Ordering(#[from] OrderingError),
    #[error("evaluate: {0}")]
    Eval(#[from] EvalError),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Profile(_) | PipelineError::Io { .. } => 2,
            PipelineError::Parse(_) => 3,
            PipelineError::Mesh(_) | PipelineError::Antialias(_) | PipelineError::Eval(_) => 4,
            PipelineError::Ordering(_) => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub gcode: PathBuf,
    pub mesh: PathBuf,
    pub out: PathBuf,
    pub profile: PrinterProfile,
    pub ordering: bool,
    pub weighted_seams: bool,
    pub overlap_compensation: bool,
    pub report: Option<PathBuf>,
    pub error_map: Option<PathBuf>,
    pub error_map_density: f64,
    pub error_map_seed: u64,
    pub sweep_s: Vec<f64>,
    pub workers: Option<usize>,
    pub search_budget: u64,
}

impl PipelineConfig {
    pub fn new(gcode: impl Into<PathBuf>, mesh: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            gcode: gcode.into(),
            mesh: mesh.into(),
            out: out.into(),
            profile: PrinterProfile::default(),
            ordering: true,
            weighted_seams: false,
            overlap_compensation: true,
            report: None,
            error_map: None,
            error_map_density: 50.0,
            error_map_seed: 7,
            sweep_s: Vec::new(),
            workers: None,
            search_budget: DEFAULT_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.profile.validate()?;
        let p = &self.profile;
        // thinnest deposit happens at the bottom of the window: h + (s - h)
        if p.s < MIN_THICKNESS {
            return Err(PipelineError::Config(format!("s = {} would allow layers thinner than {MIN_THICKNESS} mm", p.s)));
        }
        if let Some(s) = self.sweep_s.iter().find(|s| !(0.0..=p.h).contains(*s)) {
            return Err(PipelineError::Config(format!("sweep value {s} outside [0, h]")));
        }
        if self.workers == Some(0) {
            return Err(PipelineError::Config("workers must be at least 1".into()));
        }
        if !(self.error_map_density > 0.0) {
            return Err(PipelineError::Config("error map density must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub antialias_ms: f64,
    pub ordering_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineReport {
    pub mesh: LoadReport,
    pub layers: usize,
    pub input_vertices: usize,
    pub output_vertices: usize,
    pub antialias: AntialiasReport,
    pub ordering: Vec<LayerOrderReport>,
    pub explored_orders: u64,
    pub print_time_input_s: f64,
    pub print_time_output_s: f64,
    pub sweep: Vec<SweepRow>,
    pub error_map: Option<ErrorSummary>,
    /// Wall-clock figures; the only part of the report that varies run to run.
    pub timing: Timing,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub gcode: String,
    pub report: PipelineReport,
    pub error_map: Option<ErrorMap>,
}

/// In-memory pipeline over G-code text and STL bytes.
pub fn process(gcode: &str, stl: &[u8], config: &PipelineConfig, want_error_map: bool) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let run = || process_inner(gcode, stl, config, want_error_map);
    match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

fn process_inner(gcode: &str, stl: &[u8], config: &PipelineConfig, want_error_map: bool) -> Result<PipelineOutput, PipelineError> {
    let t0 = Instant::now();
    let profile = &config.profile;
    let mut program = parse_gcode(gcode)?;
    let (mesh, load) = load_mesh(stl, None)?;
    let index = VerticalRayIndex::build(&mesh);
    let mut report = PipelineReport {
        mesh: load,
        layers: program.layers.len(),
        input_vertices: program.vertex_count(),
        print_time_input_s: estimate_print_time(&program)?,
        ..Default::default()
    };
    if !config.sweep_s.is_empty() {
        report.sweep = sweep_slicing_plane(&program, &index, &mesh, profile, &config.sweep_s)?;
    }

    let ta = Instant::now();
    report.antialias = antialias_program(&mut program, &index, &mesh, profile, config.overlap_compensation)?;
    report.timing.antialias_ms = ta.elapsed().as_secs_f64() * 1e3;
    info!("displaced {} of {} vertices", report.antialias.displacement.displaced, report.antialias.displacement.vertices_total);

    if config.ordering {
        let to = Instant::now();
        report.ordering = program
            .layers
            .par_iter_mut()
            .enumerate()
            .map(|(i, l)| order_layer(l, i, profile, config.weighted_seams, config.search_budget))
            .collect::<Result<Vec<_>, _>>()?;
        report.explored_orders = report.ordering.iter().map(|r| r.explored_orders).sum();
        report.timing.ordering_ms = to.elapsed().as_secs_f64() * 1e3;
    }

    let out = emit_gcode(&program);
    report.output_vertices = program.vertex_count();
    report.print_time_output_s = estimate_print_time(&program)?;
    let emap = if want_error_map {
        let tracks = tracks_from_program(&program, profile);
        let m = error_map(&mesh, &tracks, config.error_map_density, config.error_map_seed)?;
        report.error_map = Some(m.summary());
        Some(m)
    } else {
        None
    };
    report.timing.total_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(PipelineOutput { gcode: out, report, error_map: emap })
}

fn read(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

fn write_all(files: &[(&Path, Vec<u8>)]) -> Result<(), PipelineError> {
    let mut done: Vec<&Path> = Vec::new();
    for (path, bytes) in files {
        if let Err(source) = fs::write(path, bytes) {
            for p in done {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(path);
            return Err(PipelineError::Io { path: path.to_path_buf(), source });
        }
        done.push(path);
    }
    Ok(())
}

/// Runs the pipeline on files. Nothing is written unless every stage
/// succeeds, and a failed write removes what was already written.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    config.validate()?;
    let gcode_bytes = read(&config.gcode)?;
    let gcode = String::from_utf8(gcode_bytes).map_err(|e| PipelineError::Parse(GcodeError::Parse { line: 0, message: format!("not UTF-8: {e}") }))?;
    let stl = read(&config.mesh)?;
    let out = process(&gcode, &stl, config, config.error_map.is_some())?;
    let mut files: Vec<(&Path, Vec<u8>)> = vec![(config.out.as_path(), out.gcode.into_bytes())];
    if let (Some(path), Some(m)) = (&config.error_map, &out.error_map) {
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        files.push((path.as_path(), if is_csv { m.to_csv() } else { m.to_ply() }.into_bytes()));
    }
    if let Some(path) = &config.report {
        let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
        files.push((path.as_path(), json.into_bytes()));
    }
    write_all(&files)?;
    Ok(out.report)
}
