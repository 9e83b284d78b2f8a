//! Command-line frontend: `fit`, `refine`, `tessellate`, `deviate` and
//! `offset`. Every failure exits with code 2 and one JSON line on stderr
//! naming the error category.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitter::{FitConfig, FittedPatch, RatioRule};
use crate::mesh::{load_mesh, write_obj, write_ply, PlyColors, TriMesh};
use crate::network::{CurveNetwork, NetworkFile};
use crate::refine::{refine_until, PatchMeasure, RefineConfig, ReportRow};
use crate::ribbon::{BoundingMode, RibbonKind, RibbonMode, RibbonOptions};
use crate::tessellate::{
    colormap, deviation_map, fingerprint, load_patchwork, offset_patch, save_patchwork, tessellate_patch,
    DeviationStats, Patchwork, Provenance, PATCHWORK_FORMAT,
};

#[derive(Debug, Parser)]
#[command(name = "ipatch", version, about = "Fit implicit n-sided patches to a triangle mesh")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build ribbons and fit one patch per network face.
    Fit(FitArgs),
    /// Fit, then refine the network until the tolerance is met.
    Refine(FitArgs),
    /// Tessellate every patch of a patchwork to OBJ.
    Tessellate(TessellateArgs),
    /// Colored deviation map of a patchwork against a mesh.
    Deviate(DeviateArgs),
    /// Tessellate the offset of every patch.
    Offset(OffsetArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundingArg {
    Planar,
    Midpoint,
    Curved,
}

impl From<BoundingArg> for BoundingMode {
    fn from(b: BoundingArg) -> Self {
        match b {
            BoundingArg::Planar => BoundingMode::Planar,
            BoundingArg::Midpoint => BoundingMode::Midpoint,
            BoundingArg::Curved => BoundingMode::Curved,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RibbonArg {
    Auto,
    Iloft,
}

impl From<RibbonArg> for RibbonMode {
    fn from(r: RibbonArg) -> Self {
        match r {
            RibbonArg::Auto => RibbonMode::Auto,
            RibbonArg::Iloft => RibbonMode::Iloft,
        }
    }
}

/// Run flags. Unset flags fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file with any of the run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input mesh (OBJ, PLY or STL).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Curve network (JSON).
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Tolerance in percent of the mesh bounding-box diagonal.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Largest allowed ratio between weighted terms at the center (≥ 1).
    #[arg(long)]
    pub omega: Option<f64>,
    /// Grid cells along the longest axis of each patch box.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Refinement iterations (`refine` only).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Keep the default weights.
    #[arg(long)]
    pub no_optimize: bool,
    /// Bounding surfaces: averaged-normal planes, planes through the mesh point over the chord midpoint, or curved along open mesh borders (default).
    #[arg(long, value_enum)]
    pub bounding: Option<BoundingArg>,
    /// Ribbon choice: best of Liming and I-loft, or I-loft only.
    #[arg(long, value_enum)]
    pub ribbons: Option<RibbonArg>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Patchwork output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Stats output; defaults to the patchwork path with `.stats.json`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TessellateArgs {
    /// Patchwork written by `fit` or `refine`.
    #[arg(long)]
    pub patchwork: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Keep the zero set outside the patch domain.
    #[arg(long)]
    pub no_clip: bool,
    /// Output directory: one OBJ per patch plus `merged.obj`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DeviateArgs {
    /// Patchwork written by `fit` or `refine`.
    #[arg(long)]
    pub patchwork: PathBuf,
    /// Reference mesh.
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Colored PLY output.
    #[arg(long)]
    pub out: PathBuf,
    /// Stats output; defaults to the PLY path with `.stats.json`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OffsetArgs {
    /// Patchwork with plane or I-loft ribbons only.
    #[arg(long)]
    pub patchwork: PathBuf,
    /// Signed offset distance in model units.
    #[arg(short = 'd', long = "distance", allow_hyphen_values = true)]
    pub d: f64,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Keep the zero set outside the patch domain.
    #[arg(long)]
    pub no_clip: bool,
    /// Output directory: one OBJ per patch plus `merged.obj`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolved run settings; also the config file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub tol: f64,
    pub omega: f64,
    pub resolution: usize,
    pub max_iter: usize,
    pub optimize: bool,
    pub bounding: BoundingMode,
    pub ribbons: RibbonMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: None,
            network: None,
            tol: 0.3,
            omega: 5.0,
            resolution: 64,
            max_iter: 5,
            optimize: true,
            bounding: BoundingMode::default(),
            ribbons: RibbonMode::default(),
        }
    }
}

impl RunConfig {
    /// Config file (if any) overridden by the given flags.
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::SchemaError(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &args.mesh {
            cfg.mesh = Some(v.clone());
        }
        if let Some(v) = &args.network {
            cfg.network = Some(v.clone());
        }
        if let Some(v) = args.tol {
            cfg.tol = v;
        }
        if let Some(v) = args.omega {
            cfg.omega = v;
        }
        if let Some(v) = args.resolution {
            cfg.resolution = v;
        }
        if let Some(v) = args.max_iter {
            cfg.max_iter = v;
        }
        if args.no_optimize {
            cfg.optimize = false;
        }
        if let Some(v) = args.bounding {
            cfg.bounding = v.into();
        }
        if let Some(v) = args.ribbons {
            cfg.ribbons = v.into();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::SchemaError(format!("tolerance {} must be positive", self.tol)));
        }
        if self.mesh.is_none() {
            return Err(Error::SchemaError("no mesh given".into()));
        }
        if self.network.is_none() {
            return Err(Error::SchemaError("no network given".into()));
        }
        self.refine_config().fit.validate()
    }

    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig {
            fit: FitConfig {
                omega: self.omega,
                optimize: self.optimize,
                ..FitConfig::default()
            },
            ribbons: RibbonOptions {
                bounding: self.bounding,
                mode: self.ribbons,
            },
            resolution: self.resolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub id: i64,
    pub sides: usize,
    /// RMS and max distance at the fitting points (model units).
    pub rms: f64,
    pub max: f64,
    /// Tessellation-to-mesh deviation in percent of the mesh diagonal.
    pub avg_pct: f64,
    pub max_pct: f64,
    pub ribbon_kinds: Vec<RibbonKind>,
    pub rule: RatioRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    pub avg: f64,
    pub max: f64,
    pub avg_pct: f64,
    pub max_pct: f64,
}

impl From<DeviationStats> for GlobalStats {
    fn from(s: DeviationStats) -> Self {
        GlobalStats {
            avg: s.avg,
            max: s.max,
            avg_pct: s.avg_pct,
            max_pct: s.max_pct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub patches: Vec<PatchStats>,
    pub global: GlobalStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub report: Vec<ReportRow>,
}

/// A module error, with the patch it concerns when known.
#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub patch: Option<i64>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { error, patch: None }
    }
}

impl Failure {
    /// One-line JSON report: category, message and patch id.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.error.category(),
            "message": self.error.to_string(),
            "patch": self.patch,
        })
        .to_string()
    }
}

fn stats_path(out: &Path, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| out.with_extension("stats.json"))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::SchemaError(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn patch_stats(patches: &[FittedPatch], measures: &[PatchMeasure]) -> Vec<PatchStats> {
    patches
        .iter()
        .zip(measures)
        .map(|(fp, me)| PatchStats {
            id: fp.face_id,
            sides: fp.def.len(),
            rms: fp.rms,
            max: fp.max_dev,
            avg_pct: me.stats.avg_pct,
            max_pct: me.stats.max_pct,
            ribbon_kinds: fp.ribbon_kinds.clone(),
            rule: fp.rule,
        })
        .collect()
}

/// Output of a fit or refine run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub patchwork: Patchwork,
    pub stats: StatsFile,
}

/// Fit (`max_iter = 0`) or refine, without writing files.
pub fn run_pipeline(cfg: &RunConfig, max_iter: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let mesh_path = cfg.mesh.as_ref().expect("validated");
    let net_path = cfg.network.as_ref().expect("validated");
    let m = load_mesh(mesh_path)?;
    info!("mesh: {} vertices, {} triangles", m.vertices().len(), m.triangles().len());
    let bytes = std::fs::read(net_path).map_err(|e| Error::SchemaError(format!("{}: {e}", net_path.display())))?;
    let file: NetworkFile =
        serde_json::from_slice(&bytes).map_err(|e| Error::SchemaError(format!("{}: {e}", net_path.display())))?;
    let net = CurveNetwork::from_file(&file, &m)?;
    let out = refine_until(&m, net, cfg.tol, max_iter, &cfg.refine_config())?;
    for row in &out.report {
        info!(
            "iteration {}: {} patches, avg {:.4}%, max {:.4}%",
            row.iteration, row.patches, row.avg_pct, row.max_pct
        );
    }
    let stats = StatsFile {
        patches: patch_stats(&out.patches, &out.measures),
        global: out.stats.into(),
        iterations: (max_iter > 0).then_some(out.iterations),
        report: if max_iter > 0 { out.report.clone() } else { Vec::new() },
    };
    let patchwork = Patchwork {
        format: PATCHWORK_FORMAT,
        scale: m.scale(),
        patches: out.patches,
        stats: Some(out.stats),
        network: out.network.to_file(),
        provenance: Provenance {
            network_hash: fingerprint(&bytes),
            config: serde_json::to_value(cfg).map_err(|e| Error::SchemaError(e.to_string()))?,
        },
    };
    Ok(RunOutput { patchwork, stats })
}

pub fn cmd_fit(args: &FitArgs) -> Result<StatsFile> {
    let cfg = RunConfig::resolve(&args.run)?;
    write_run(run_pipeline(&cfg, 0)?, args)
}

pub fn cmd_refine(args: &FitArgs) -> Result<StatsFile> {
    let cfg = RunConfig::resolve(&args.run)?;
    write_run(run_pipeline(&cfg, cfg.max_iter)?, args)
}

fn write_run(run: RunOutput, args: &FitArgs) -> Result<StatsFile> {
    save_patchwork(&run.patchwork, &args.out)?;
    write_json(&run.stats, &stats_path(&args.out, &args.stats))?;
    Ok(run.stats)
}

/// Tessellations of the given patches, in order.
fn tessellate_all(patches: &[FittedPatch], resolution: usize, clip: bool) -> std::result::Result<Vec<TriMesh>, Failure> {
    patches
        .par_iter()
        .map(|fp| {
            let polished = tessellate_patch(fp, resolution, clip).map_err(|error| Failure {
                error,
                patch: Some(fp.face_id),
            })?;
            if !polished.failed.is_empty() {
                warn!("patch {}: {} vertices not polished", fp.face_id, polished.failed.len());
            }
            Ok(polished.mesh)
        })
        .collect()
}

/// Concatenated vertices, triangles and normals.
fn merged(meshes: &[TriMesh]) -> (Vec<crate::geom::Point>, Vec<[usize; 3]>, Vec<crate::geom::Vector>) {
    let (mut v, mut t, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for m in meshes {
        let base = v.len();
        v.extend_from_slice(m.vertices());
        n.extend_from_slice(m.normals());
        t.extend(m.triangles().iter().map(|tri| tri.map(|i| i + base)));
    }
    (v, t, n)
}

fn write_tessellations(patches: &[FittedPatch], meshes: &[TriMesh], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (fp, mesh) in patches.iter().zip(meshes) {
        let path = dir.join(format!("patch_{}.obj", fp.face_id));
        write_obj(&path, mesh.vertices(), mesh.triangles(), Some(mesh.normals()))?;
    }
    let (v, t, n) = merged(meshes);
    write_obj(dir.join("merged.obj"), &v, &t, Some(&n))
}

pub fn cmd_tessellate(args: &TessellateArgs) -> std::result::Result<(), Failure> {
    let pw = load_patchwork(&args.patchwork)?;
    let meshes = tessellate_all(&pw.patches, args.resolution, !args.no_clip)?;
    write_tessellations(&pw.patches, &meshes, &args.out)?;
    Ok(())
}

pub fn cmd_deviate(args: &DeviateArgs) -> std::result::Result<StatsFile, Failure> {
    let pw = load_patchwork(&args.patchwork)?;
    let m = load_mesh(&args.mesh)?;
    let diagonal = m.scale();
    let meshes = tessellate_all(&pw.patches, args.resolution, true)?;
    let per_patch: Vec<(Vec<f64>, DeviationStats)> = meshes.par_iter().map(|t| deviation_map(t, &m)).collect();
    let (v, t, _) = merged(&meshes);
    let values: Vec<f64> = per_patch.iter().flat_map(|(d, _)| d.iter().copied()).collect();
    let max = values.iter().fold(0.0f64, |a, b| a.max(*b));
    let rgb = colormap(&values, max);
    write_ply(&args.out, &v, &t, Some(PlyColors { rgb: &rgb, quality: &values }))?;
    let parts: Vec<DeviationStats> = per_patch.iter().map(|(_, s)| *s).collect();
    let stats = StatsFile {
        patches: pw
            .patches
            .iter()
            .zip(&parts)
            .map(|(fp, s)| PatchStats {
                id: fp.face_id,
                sides: fp.def.len(),
                rms: fp.rms,
                max: fp.max_dev,
                avg_pct: s.avg_pct,
                max_pct: s.max_pct,
                ribbon_kinds: fp.ribbon_kinds.clone(),
                rule: fp.rule,
            })
            .collect(),
        global: DeviationStats::combine(&parts, diagonal).into(),
        iterations: None,
        report: Vec::new(),
    };
    write_json(&stats, &stats_path(&args.out, &args.stats))?;
    Ok(stats)
}

pub fn cmd_offset(args: &OffsetArgs) -> std::result::Result<(), Failure> {
    let pw = load_patchwork(&args.patchwork)?;
    let offset: Vec<FittedPatch> = pw
        .patches
        .iter()
        .map(|fp| {
            offset_patch(fp, args.d).map_err(|error| Failure {
                error,
                patch: Some(fp.face_id),
            })
        })
        .collect::<std::result::Result<_, _>>()?;
    let meshes = tessellate_all(&offset, args.resolution, !args.no_clip)?;
    write_tessellations(&offset, &meshes, &args.out)?;
    Ok(())
}

/// Caps the worker pool from `IPATCH_THREADS`.
fn configure_threads() {
    let Ok(value) = std::env::var("IPATCH_THREADS") else {
        return;
    };
    match value.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                warn!("IPATCH_THREADS ignored: {e}");
            }
        }
        _ => warn!("IPATCH_THREADS={value} is not a positive integer"),
    }
}

pub fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    configure_threads();
    match &cli.command {
        Command::Fit(a) => cmd_fit(a).map(drop)?,
        Command::Refine(a) => cmd_refine(a).map(drop)?,
        Command::Tessellate(a) => cmd_tessellate(a)?,
        Command::Deviate(a) => cmd_deviate(a).map(drop)?,
        Command::Offset(a) => cmd_offset(a)?,
    }
    Ok(())
}

/// Process exit code for a run: 0 on success, 2 on any module error.
pub fn exit_code(cli: &Cli) -> i32 {
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.to_json());
            2
        }
    }
}
