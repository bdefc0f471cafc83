//! Run configuration and the cached offline/online stages.
//!
//! Every offline stage writes into its own directory under the artifact
//! root together with a `stage.txt` that records a key (hash of the
//! relevant configuration and of the upstream keys) and the sha256 of each
//! artifact. A stage is skipped when the key matches and every artifact is
//! present with the recorded hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::eval::{relative_l2_error, total_energy_error, ErrorReport};
use crate::fom::{Fom, FomConfig, FomRun};
use crate::fv::{Field, Mesh};
use crate::galerkin::{assemble_thermal_operators, assemble_velocity_operators, project_snapshots, supremizer_enrichment, ReducedOperators};
use crate::io::{read_field, read_key_values, sha256_file, sha256_hex, write_atomic, write_field, write_key_values, Bundle};
use crate::lifting::{homogenize, lift_combination, snapshot_average_lift, LiftingFunction};
use crate::pod::{nested_pod, standard_pod, FieldKind, PodBasis, SnapshotSet, Truncation};
use crate::rbf::{choose_spread, default_regularization, normalize, spread_for_condition, train, RbfInterpolant};
use crate::rom::{initial_conditions, reconstruct_state, Bases, ReducedModel, ReducedTrajectory, RomOptions, ThermalClosure};

pub const CACHE_ENV: &str = "ROMKIT_CACHE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PodMethod {
    Standard,
    Nested,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiftMethod {
    Harmonic,
    SnapshotAverage,
}

/// Rank, or an energy threshold that overrides it when present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldTruncation {
    pub rank: Option<usize>,
    pub energy: Option<f64>,
}

impl FieldTruncation {
    pub fn rank(r: usize) -> Self {
        FieldTruncation { rank: Some(r), energy: None }
    }

    pub fn truncation(&self) -> Result<Truncation> {
        match (self.energy, self.rank) {
            (Some(e), _) => Ok(Truncation::Energy(e)),
            (None, Some(r)) => Ok(Truncation::Rank(r)),
            (None, None) => Err(RomError::config("each field needs a rank or an energy threshold")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PodConfig {
    pub method: PodMethod,
    /// Local energy threshold of the nested method.
    pub local_threshold: f64,
    pub lift: LiftMethod,
    pub velocity: FieldTruncation,
    pub pressure: FieldTruncation,
    pub temperature: FieldTruncation,
    pub nut: FieldTruncation,
}

impl Default for PodConfig {
    fn default() -> Self {
        PodConfig {
            method: PodMethod::Standard,
            local_threshold: 0.999,
            lift: LiftMethod::Harmonic,
            velocity: FieldTruncation::rank(6),
            pressure: FieldTruncation::rank(10),
            temperature: FieldTruncation::rank(11),
            nut: FieldTruncation::rank(10),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpreadRule {
    /// γ = 1/(2 d_med²)
    Median,
    /// Median spread doubled until the kernel condition number is below
    /// `max_condition`.
    Conditioned,
    /// The configured `gamma`.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbfConfig {
    pub spread: SpreadRule,
    pub gamma: f64,
    pub max_condition: f64,
    /// Diagonal shift; negative selects the default.
    pub lambda: f64,
}

impl Default for RbfConfig {
    fn default() -> Self {
        RbfConfig {
            spread: SpreadRule::Median,
            gamma: 1.0,
            max_condition: 1e12,
            lambda: -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    pub test_mu: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    /// Zero means the FOM value.
    pub dt: f64,
    pub t_final: f64,
    /// Write reconstructed fields every this many steps; zero disables.
    pub field_every: usize,
    /// Scalar turbulent diffusivity for the reduced heat equation; negative
    /// selects the tensor closure.
    pub scalar_alpha_t: f64,
    pub energy_weights: (f64, f64),
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            test_mu: vec![vec![0.55, 0.73], vec![0.57, 0.75], vec![0.58, 0.76], vec![0.59, 0.77]],
            labels: ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect(),
            dt: 0.0,
            t_final: 0.0,
            field_every: 40,
            scalar_alpha_t: -1.0,
            energy_weights: (1.0, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output: PathBuf,
    pub fom: FomConfig,
    pub training_mu: Vec<Vec<f64>>,
    pub pod: PodConfig,
    pub rbf: RbfConfig,
    pub online: OnlineConfig,
}

pub fn default_training_mu() -> Vec<Vec<f64>> {
    (0..10).map(|k| vec![0.535 + 0.01 * k as f64, 0.715 + 0.01 * k as f64]).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output: PathBuf::from("romkit-run"),
            fom: FomConfig::default(),
            training_mu: default_training_mu(),
            pod: PodConfig::default(),
            rbf: RbfConfig::default(),
            online: OnlineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RomError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| RomError::config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.fom.validate()?;
        if self.training_mu.is_empty() {
            return Err(RomError::config("training μ list is empty"));
        }
        let d = self.training_mu[0].len();
        if self.training_mu.iter().chain(&self.online.test_mu).any(|m| m.len() != d) {
            return Err(RomError::config("all μ entries need the same length"));
        }
        if !self.online.labels.is_empty() && self.online.labels.len() != self.online.test_mu.len() {
            return Err(RomError::config("online labels and test μ differ in length"));
        }
        for t in [&self.pod.velocity, &self.pod.pressure, &self.pod.temperature, &self.pod.nut] {
            t.truncation()?;
        }
        if !(self.pod.local_threshold > 0.0 && self.pod.local_threshold <= 1.0) {
            return Err(RomError::config("local_threshold must lie in (0, 1]"));
        }
        if self.rbf.spread == SpreadRule::Fixed && !(self.rbf.gamma > 0.0) {
            return Err(RomError::config("a fixed spread needs gamma > 0"));
        }
        Ok(())
    }

    /// Artifact root: `ROMKIT_CACHE` when set, else `output`.
    pub fn root(&self) -> PathBuf {
        std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| self.output.clone())
    }

    pub fn label(&self, k: usize) -> String {
        self.online.labels.get(k).cloned().unwrap_or_else(|| format!("mu{k}"))
    }

    /// Per-coordinate training range.
    pub fn training_hull(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.training_mu[0].len();
        let lo = (0..d).map(|k| self.training_mu.iter().map(|m| m[k]).fold(f64::INFINITY, f64::min)).collect();
        let hi = (0..d).map(|k| self.training_mu.iter().map(|m| m[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
        (lo, hi)
    }

    pub fn outside_hull(&self, mu: &[f64]) -> bool {
        let (lo, hi) = self.training_hull();
        mu.iter().zip(lo.iter().zip(&hi)).any(|(m, (a, b))| *m < a - 1e-12 || *m > b + 1e-12)
    }
}

fn toml_of<T: Serialize>(x: &T) -> String {
    toml::to_string(x).expect("serializable")
}

// ---------------------------------------------------------------------------
// stage bookkeeping

pub const STAGES: [&str; 5] = ["generate", "lift", "pod", "project", "train-rbf"];

fn stage_dir(root: &Path, stage: &str) -> PathBuf {
    root.join(match stage {
        "generate" => "snapshots",
        "lift" => "lifts",
        "pod" => "pod",
        "project" => "operators",
        "train-rbf" => "rbf",
        other => other,
    })
}

/// Stage keys, each chaining the keys of its inputs.
pub fn stage_keys(cfg: &RunConfig) -> BTreeMap<&'static str, String> {
    let version = env!("CARGO_PKG_VERSION");
    let generate = sha256_hex(format!("generate|{version}|{}|{}", toml_of(&cfg.fom), toml_of(&Wrapper { mu: &cfg.training_mu })).as_bytes());
    let lift = sha256_hex(format!("lift|{generate}|{:?}", cfg.pod.lift).as_bytes());
    let pod = sha256_hex(format!("pod|{lift}|{}", toml_of(&cfg.pod)).as_bytes());
    let project = sha256_hex(format!("project|{pod}").as_bytes());
    let rbf = sha256_hex(format!("rbf|{project}|{}", toml_of(&cfg.rbf)).as_bytes());
    BTreeMap::from([("generate", generate), ("lift", lift), ("pod", pod), ("project", project), ("train-rbf", rbf)])
}

#[derive(Serialize)]
struct Wrapper<'a> {
    mu: &'a Vec<Vec<f64>>,
}

fn stage_file(dir: &Path) -> PathBuf {
    dir.join("stage.txt")
}

/// True when the stage in `dir` was completed with `key` and its artifacts
/// are intact.
pub fn stage_is_cached(dir: &Path, key: &str) -> bool {
    let Ok(kv) = read_key_values(&stage_file(dir)) else {
        return false;
    };
    if kv.get("key").map(String::as_str) != Some(key) {
        return false;
    }
    kv.iter()
        .filter_map(|(k, v)| k.strip_prefix("artifact.").map(|rel| (rel, v)))
        .all(|(rel, hash)| sha256_file(&dir.join(rel)).is_ok_and(|h| &h == hash))
}

fn finish_stage(dir: &Path, key: &str, artifacts: &[PathBuf]) -> Result<()> {
    let mut kv = BTreeMap::new();
    kv.insert("key".to_string(), key.to_string());
    for a in artifacts {
        let rel = a.strip_prefix(dir).unwrap_or(a).to_string_lossy().replace('\\', "/");
        kv.insert(format!("artifact.{rel}"), sha256_file(a)?);
    }
    write_key_values(&stage_file(dir), &kv)
}

fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// offline

/// What `offline` did per stage.
#[derive(Clone, Debug, Default)]
pub struct OfflineReport {
    pub ran: Vec<String>,
    pub cached: Vec<String>,
}

/// Snapshot layout: `mu_<k>/t_<j>/{U,p,T,nut}.romf`.
pub fn snapshot_path(root: &Path, k: usize, j: usize, kind: FieldKind) -> PathBuf {
    stage_dir(root, "generate")
        .join(format!("mu_{k}"))
        .join(format!("t_{j}"))
        .join(format!("{}.romf", kind.file_stem()))
}

pub fn run_generate(cfg: &RunConfig, fom: &Fom, root: &Path) -> Result<()> {
    let dir = stage_dir(root, "generate");
    reset_dir(&dir)?;
    let mut artifacts = Vec::new();
    let mut summary = BTreeMap::new();
    summary.insert("mesh_id".to_string(), fom.mesh().id().to_string());
    summary.insert("n_mu".to_string(), cfg.training_mu.len().to_string());
    summary.insert("times".to_string(), crate::io::join_reals(&cfg.fom.snapshot_times()));
    for (k, mu) in cfg.training_mu.iter().enumerate() {
        log::info!("FOM run {}/{} at μ = {mu:?}", k + 1, cfg.training_mu.len());
        let run = fom.run(mu)?;
        for (j, rec) in run.snapshots.iter().enumerate() {
            for (kind, f) in [(FieldKind::Velocity, &rec.u), (FieldKind::Pressure, &rec.p), (FieldKind::Temperature, &rec.theta), (FieldKind::EddyViscosity, &rec.nut)] {
                let path = snapshot_path(root, k, j, kind);
                std::fs::create_dir_all(path.parent().unwrap())?;
                write_field(&path, f)?;
                artifacts.push(path);
            }
        }
        summary.insert(format!("mu_{k}"), crate::io::join_reals(mu));
        summary.insert(format!("mu_{k}.wall_seconds"), run.wall_seconds.to_string());
        let max_div = run.stats.iter().map(|s| s.max_divergence).fold(0.0, f64::max);
        summary.insert(format!("mu_{k}.max_divergence"), max_div.to_string());
    }
    let manifest = dir.join("manifest.txt");
    write_key_values(&manifest, &summary)?;
    artifacts.push(manifest);
    write_atomic(&dir.join("mesh.txt"), fom.mesh().to_manifest().as_bytes())?;
    artifacts.push(dir.join("mesh.txt"));
    finish_stage(&dir, &stage_keys(cfg)["generate"], &artifacts)
}

/// Global snapshot set of one field from the cached FOM sweep.
pub fn load_snapshots(cfg: &RunConfig, mesh: &Mesh, root: &Path, kind: FieldKind) -> Result<SnapshotSet> {
    let times = cfg.fom.snapshot_times();
    let mut fields = Vec::with_capacity(cfg.training_mu.len() * times.len());
    for k in 0..cfg.training_mu.len() {
        for j in 0..times.len() {
            fields.push(read_field(&snapshot_path(root, k, j, kind), mesh)?);
        }
    }
    SnapshotSet::new(kind, mesh, &fields, cfg.training_mu.clone(), times)
}

/// Per-column lift amplitudes: μ for velocity, the fixed inlet
/// temperatures for temperature.
fn column_coefficients(set: &SnapshotSet, per_mu: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(set.n_snapshots());
    for mu in &set.params {
        for _ in &set.times {
            out.push(per_mu(mu));
        }
    }
    out
}

pub fn run_lift(cfg: &RunConfig, fom: &Fom, root: &Path) -> Result<()> {
    let dir = stage_dir(root, "lift");
    reset_dir(&dir)?;
    let lifts = match cfg.pod.lift {
        LiftMethod::Harmonic => fom.velocity_lifts.clone(),
        LiftMethod::SnapshotAverage => {
            let mesh = fom.mesh();
            let set = load_snapshots(cfg, mesh, root, FieldKind::Velocity)?;
            let base = fom.problem.velocity_bc(&cfg.training_mu[0])?;
            let mut out = Vec::new();
            for (i, (patch, dir)) in fom.problem.velocity_patches.iter().enumerate() {
                let coeffs: Vec<f64> = column_coefficients(&set, |mu| vec![mu[i]]).into_iter().map(|c| c[0]).collect();
                out.push(snapshot_average_lift(mesh, &base, patch, dir, &set, &coeffs)?);
            }
            out
        }
    };
    let mut b = Bundle::default();
    for (i, l) in lifts.iter().enumerate() {
        b.insert(&format!("U_{i}"), vec![l.field.values().len()], l.field.values().to_vec());
    }
    for (i, l) in fom.temperature_lifts.iter().enumerate() {
        b.insert(&format!("T_{i}"), vec![l.field.values().len()], l.field.values().to_vec());
    }
    let path = dir.join("lifts.rombin");
    b.save(&path)?;
    finish_stage(&dir, &stage_keys(cfg)["lift"], &[path.clone(), path.with_extension("rombin.manifest")])
}

/// Lifts with fields from the lift stage and boundary data from the FOM.
pub fn load_lifts(fom: &Fom, root: &Path) -> Result<(Vec<LiftingFunction>, Vec<LiftingFunction>)> {
    let b = Bundle::load(&stage_dir(root, "lift").join("lifts.rombin"))?;
    let mesh = fom.mesh();
    let mut u = fom.velocity_lifts.clone();
    for (i, l) in u.iter_mut().enumerate() {
        l.field = Field::from_values(mesh, 2, b.vector(&format!("U_{i}"))?)?;
    }
    let mut t = fom.temperature_lifts.clone();
    for (i, l) in t.iter_mut().enumerate() {
        l.field = Field::from_values(mesh, 1, b.vector(&format!("T_{i}"))?)?;
    }
    Ok((u, t))
}

/// Homogenized velocity and temperature sets plus raw pressure and ν_t.
pub struct TrainingSets {
    pub velocity: SnapshotSet,
    pub pressure: SnapshotSet,
    pub temperature: SnapshotSet,
    pub nut: SnapshotSet,
}

pub fn training_sets(cfg: &RunConfig, fom: &Fom, root: &Path) -> Result<TrainingSets> {
    let mesh = fom.mesh();
    let (u_lifts, t_lifts) = load_lifts(fom, root)?;
    let u = load_snapshots(cfg, mesh, root, FieldKind::Velocity)?;
    let u = homogenize(&u, &u_lifts, &column_coefficients(&u, |mu| mu.to_vec()))?;
    let g = fom.problem.temperature_values();
    let t = load_snapshots(cfg, mesh, root, FieldKind::Temperature)?;
    let t = homogenize(&t, &t_lifts, &column_coefficients(&t, |_| g.clone()))?;
    Ok(TrainingSets {
        velocity: u,
        pressure: load_snapshots(cfg, mesh, root, FieldKind::Pressure)?,
        temperature: t,
        nut: load_snapshots(cfg, mesh, root, FieldKind::EddyViscosity)?,
    })
}

/// POD of one set with the configured method.
pub fn reduce(set: &SnapshotSet, pod: &PodConfig, trunc: &FieldTruncation) -> Result<PodBasis> {
    let t = trunc.truncation()?;
    match pod.method {
        PodMethod::Standard => standard_pod(set, t),
        PodMethod::Nested => {
            let locals = (0..set.params.len()).map(|k| set.local(k)).collect::<Result<Vec<_>>>()?;
            Ok(nested_pod(&locals, pod.local_threshold, t)?.basis)
        }
    }
}

fn eigen_csv(basis: &PodBasis) -> String {
    let mut s = String::from("index,eigenvalue,cumulative_energy\n");
    for (i, (l, c)) in basis.eigenvalues.iter().zip(&basis.cumulative_energy).enumerate() {
        s.push_str(&format!("{i},{l:e},{c}\n"));
    }
    s
}

pub fn run_pod(cfg: &RunConfig, fom: &Fom, root: &Path) -> Result<()> {
    let dir = stage_dir(root, "pod");
    reset_dir(&dir)?;
    let sets = training_sets(cfg, fom, root)?;
    let mesh = fom.mesh();
    let pb = &fom.problem;
    let u = reduce(&sets.velocity, &cfg.pod, &cfg.pod.velocity)?;
    let p = reduce(&sets.pressure, &cfg.pod, &cfg.pod.pressure)?;
    let t = reduce(&sets.temperature, &cfg.pod, &cfg.pod.temperature)?;
    let nut = reduce(&sets.nut, &cfg.pod, &cfg.pod.nut)?;
    let sup = supremizer_enrichment(mesh, &pb.velocity_base, &p.modes, &pb.pressure_bc, &u.modes)?;
    log::info!("ranks: U {} + {} supremizers, p {}, T {}, nut {}", u.rank(), sup.ncols(), p.rank(), t.rank(), nut.rank());
    let mut b = Bundle::default();
    b.insert_matrix("U", &u.modes);
    b.insert_matrix("sup", &sup);
    b.insert_matrix("p", &p.modes);
    b.insert_matrix("T", &t.modes);
    b.insert_matrix("nut", &nut.modes);
    let path = dir.join("bases.rombin");
    b.save(&path)?;
    let mut artifacts = vec![path.clone(), path.with_extension("rombin.manifest")];
    for (name, basis) in [("U", &u), ("p", &p), ("T", &t), ("nut", &nut)] {
        let f = dir.join(format!("eigen_{name}.csv"));
        write_atomic(&f, eigen_csv(basis).as_bytes())?;
        artifacts.push(f);
    }
    finish_stage(&dir, &stage_keys(cfg)["pod"], &artifacts)
}

pub fn load_bases(fom: &Fom, root: &Path) -> Result<Bases> {
    let b = Bundle::load(&stage_dir(root, "pod").join("bases.rombin"))?;
    let (u_lifts, t_lifts) = load_lifts(fom, root)?;
    let u = b.matrix("U")?;
    let sup = b.matrix("sup")?;
    let mut velocity = DMatrix::zeros(u.nrows(), u.ncols() + sup.ncols());
    velocity.columns_mut(0, u.ncols()).copy_from(&u);
    velocity.columns_mut(u.ncols(), sup.ncols()).copy_from(&sup);
    Ok(Bases {
        velocity,
        pressure: b.matrix("p")?,
        temperature: b.matrix("T")?,
        nut: b.matrix("nut")?,
        velocity_lifts: u_lifts,
        temperature_lifts: t_lifts,
    })
}

pub fn assemble_operators(fom: &Fom, bases: &Bases) -> Result<ReducedOperators> {
    let mesh = fom.mesh();
    let pb = &fom.problem;
    let velocity = assemble_velocity_operators(mesh, &bases.velocity_lifts, &bases.velocity, &pb.velocity_base, &bases.pressure, &pb.pressure_bc, &bases.nut)?;
    let thermal = assemble_thermal_operators(
        mesh,
        &bases.velocity_lifts,
        &bases.velocity,
        &pb.velocity_base,
        &bases.temperature_lifts,
        &bases.temperature,
        &pb.temperature_bc.homogeneous(),
        &bases.nut,
    )?;
    Ok(ReducedOperators {
        velocity,
        thermal,
        nu: fom.config.nu,
        alpha: fom.config.alpha,
        pr_t: fom.config.pr_t,
    })
}

/// Projected training coefficients: rows are modes, columns snapshots.
pub struct Coefficients {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

pub fn project_training(sets: &TrainingSets, bases: &Bases) -> Result<Coefficients> {
    Ok(Coefficients {
        a: project_snapshots(&sets.velocity.data, &bases.velocity, &sets.velocity.weights)?,
        b: project_snapshots(&sets.pressure.data, &bases.pressure, &sets.pressure.weights)?,
        c: project_snapshots(&sets.temperature.data, &bases.temperature, &sets.temperature.weights)?,
        l: project_snapshots(&sets.nut.data, &bases.nut, &sets.nut.weights)?,
    })
}

pub fn run_project(cfg: &RunConfig, fom: &Fom, root: &Path) -> Result<()> {
    let dir = stage_dir(root, "project");
    reset_dir(&dir)?;
    let bases = load_bases(fom, root)?;
    let ops = assemble_operators(fom, &bases)?;
    let path = dir.join("operators.rombin");
    ops.to_bundle().save(&path)?;
    let coeffs = project_training(&training_sets(cfg, fom, root)?, &bases)?;
    let mut cb = Bundle::default();
    cb.insert_matrix("a", &coeffs.a);
    cb.insert_matrix("b", &coeffs.b);
    cb.insert_matrix("c", &coeffs.c);
    cb.insert_matrix("l", &coeffs.l);
    let cpath = dir.join("coefficients.rombin");
    cb.save(&cpath)?;
    finish_stage(
        &dir,
        &stage_keys(cfg)["project"],
        &[path.clone(), path.with_extension("rombin.manifest"), cpath.clone(), cpath.with_extension("rombin.manifest")],
    )
}

/// (μ, t) of every training snapshot column.
pub fn training_centers(cfg: &RunConfig) -> Vec<Vec<f64>> {
    let times = cfg.fom.snapshot_times();
    cfg.training_mu
        .iter()
        .flat_map(|mu| {
            times.iter().map(move |&t| {
                let mut p = mu.clone();
                p.push(t);
                p
            })
        })
        .collect()
}

/// Spread for the configured rule on the given raw centers.
pub fn spread(rbf: &RbfConfig, centers: &[Vec<f64>]) -> Result<f64> {
    let (norm, _, _) = normalize(centers)?;
    let rows: Vec<Vec<f64>> = (0..norm.nrows()).map(|r| norm.row(r).iter().copied().collect()).collect();
    match rbf.spread {
        SpreadRule::Fixed => Ok(rbf.gamma),
        SpreadRule::Median if rows.len() < 2 => Ok(1.0),
        SpreadRule::Median => choose_spread(&rows),
        SpreadRule::Conditioned => spread_for_condition(&rows, if rows.len() < 2 { 1.0 } else { choose_spread(&rows)? }, rbf.max_condition),
    }
}

pub fn run_train_rbf(cfg: &RunConfig, root: &Path) -> Result<()> {
    let dir = stage_dir(root, "train-rbf");
    reset_dir(&dir)?;
    let cb = Bundle::load(&stage_dir(root, "project").join("coefficients.rombin"))?;
    let l = cb.matrix("l")?;
    let centers = training_centers(cfg);
    let gamma = spread(&cfg.rbf, &centers)?;
    let lambda = if cfg.rbf.lambda < 0.0 { default_regularization() } else { cfg.rbf.lambda };
    let interp = train(&centers, &l, Some(gamma), lambda)?;
    log::info!("RBF: {} centers, γ = {gamma:.4e}, λ = {lambda:.1e}", interp.n_centers());
    let path = dir.join("rbf.rombin");
    interp.to_bundle().save(&path)?;
    finish_stage(&dir, &stage_keys(cfg)["train-rbf"], &[path.clone(), path.with_extension("rombin.manifest")])
}

/// Runs one offline stage unless cached; `force` reruns regardless.
pub fn run_stage(cfg: &RunConfig, fom: &Fom, stage: &str, force: bool) -> Result<bool> {
    let root = cfg.root();
    let keys = stage_keys(cfg);
    let key = keys.get(stage).ok_or_else(|| RomError::config(format!("unknown stage `{stage}`")))?;
    let dir = stage_dir(&root, stage);
    if !force && stage_is_cached(&dir, key) {
        log::info!("stage `{stage}`: cached");
        return Ok(false);
    }
    // inputs must be complete before a downstream stage runs
    let idx = STAGES.iter().position(|s| *s == stage).unwrap();
    let mut missing = Vec::new();
    for up in &STAGES[..idx] {
        if !stage_is_cached(&stage_dir(&root, up), &keys[up]) {
            missing.push(stage_file(&stage_dir(&root, up)).display().to_string());
        }
    }
    if !missing.is_empty() {
        return Err(RomError::MissingArtifacts(missing).in_stage(stage));
    }
    log::info!("stage `{stage}`: running");
    let r = match stage {
        "generate" => run_generate(cfg, fom, &root),
        "lift" => run_lift(cfg, fom, &root),
        "pod" => run_pod(cfg, fom, &root),
        "project" => run_project(cfg, fom, &root),
        _ => run_train_rbf(cfg, &root),
    };
    r.map_err(|e| e.in_stage(stage))?;
    Ok(true)
}

/// All offline stages in order, reusing cached ones, then the run manifest.
pub fn offline(cfg: &RunConfig) -> Result<OfflineReport> {
    cfg.validate()?;
    let root = cfg.root();
    std::fs::create_dir_all(&root)?;
    write_atomic(&root.join("config.toml"), cfg.to_toml().as_bytes())?;
    let fom = Fom::new(cfg.fom.clone())?;
    let mut report = OfflineReport::default();
    for stage in STAGES {
        if run_stage(cfg, &fom, stage, false)? {
            report.ran.push(stage.to_string());
        } else {
            report.cached.push(stage.to_string());
        }
    }
    write_run_manifest(cfg)?;
    Ok(report)
}

/// `manifest.txt` at the root: stage keys and every artifact hash.
pub fn write_run_manifest(cfg: &RunConfig) -> Result<()> {
    let root = cfg.root();
    let mut kv = BTreeMap::new();
    for (stage, key) in stage_keys(cfg) {
        kv.insert(format!("stage.{stage}"), key);
        let dir = stage_dir(&root, stage);
        if let Ok(st) = read_key_values(&stage_file(&dir)) {
            let name = dir.file_name().unwrap().to_string_lossy().to_string();
            for (k, v) in st {
                if let Some(rel) = k.strip_prefix("artifact.") {
                    kv.insert(format!("{name}/{rel}"), v);
                }
            }
        }
    }
    write_key_values(&root.join("manifest.txt"), &kv)
}

// ---------------------------------------------------------------------------
// online

/// Everything the online stage reads from the artifact root.
pub struct OnlineModel {
    pub fom: Fom,
    pub bases: Bases,
    pub model: ReducedModel,
}

pub fn required_artifacts(root: &Path) -> Vec<PathBuf> {
    vec![
        stage_dir(root, "lift").join("lifts.rombin"),
        stage_dir(root, "pod").join("bases.rombin"),
        stage_dir(root, "project").join("operators.rombin"),
        stage_dir(root, "train-rbf").join("rbf.rombin"),
    ]
}

pub fn load_online(cfg: &RunConfig) -> Result<OnlineModel> {
    let root = cfg.root();
    let missing: Vec<String> = required_artifacts(&root)
        .into_iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(RomError::MissingArtifacts(missing));
    }
    let fom = Fom::new(cfg.fom.clone())?;
    let bases = load_bases(&fom, &root)?;
    let ops = ReducedOperators::from_bundle(&Bundle::load(&stage_dir(&root, "project").join("operators.rombin"))?)?;
    let rbf = RbfInterpolant::from_bundle(&Bundle::load(&stage_dir(&root, "train-rbf").join("rbf.rombin"))?)?;
    let options = RomOptions {
        closure: if cfg.online.scalar_alpha_t >= 0.0 { ThermalClosure::Scalar(cfg.online.scalar_alpha_t) } else { ThermalClosure::Tensor },
        ..RomOptions::default()
    };
    let model = ReducedModel::new(ops, Some(rbf), options)?;
    Ok(OnlineModel { fom, bases, model })
}

pub struct OnlineResult {
    pub trajectory: ReducedTrajectory,
    pub report: Option<ErrorReport>,
    pub extrapolation: bool,
    pub out_dir: PathBuf,
}

impl OnlineModel {
    /// Integrates the ROM at `mu`.
    pub fn solve(&self, mu: &[f64], dt: f64, t_final: f64) -> Result<ReducedTrajectory> {
        let mesh = self.fom.mesh();
        let g = self.fom.problem.temperature_values();
        let u0 = lift_combination(mesh, &self.fom.velocity_lifts, mu)?;
        let t0 = lift_combination(mesh, &self.fom.temperature_lifts, &g)?;
        let s0 = initial_conditions(mesh, &self.bases, &self.model, mu, &g, &u0, &Field::zeros(mesh, 1), &t0)?;
        let n_steps = (t_final / dt).round() as usize;
        Ok(self.model.solve(mu, &g, s0, dt, n_steps)?)
    }

    /// ε_L2 series against a FOM run at the FOM snapshot times.
    pub fn compare(&self, traj: &ReducedTrajectory, fom_run: &FomRun, energy_weights: (f64, f64)) -> Result<ErrorReport> {
        let mesh = self.fom.mesh();
        let g = self.fom.problem.temperature_values();
        let mut rep = ErrorReport {
            energy_weights,
            fom_seconds: fom_run.wall_seconds,
            rom_seconds: traj.wall_seconds,
            ..Default::default()
        };
        for name in ["U", "p", "T", "nut"] {
            rep.series.insert(name.to_string(), Vec::new());
        }
        for rec in &fom_run.snapshots {
            let state = traj.at(rec.t);
            if (state.t - rec.t).abs() > 1e-9 * (1.0 + rec.t) {
                continue;
            }
            let r = reconstruct_state(mesh, &self.bases, &traj.mu, &g, state)?;
            rep.times.push(rec.t);
            for (name, f, x) in [("U", &rec.u, &r.u), ("p", &rec.p, &r.p), ("T", &rec.theta, &r.theta), ("nut", &rec.nut, &r.nut)] {
                let e = match relative_l2_error(mesh, f, x) {
                    Ok(v) => Some(v),
                    Err(RomError::UndefinedError) => None,
                    Err(e) => return Err(e),
                };
                rep.series.get_mut(name).unwrap().push(e);
            }
            rep.energy.push(total_energy_error(mesh, (&rec.u, &rec.theta), (&r.u, &r.theta), energy_weights)?);
        }
        if rep.times.is_empty() {
            return Err(RomError::data("ROM and FOM share no output times"));
        }
        Ok(rep)
    }
}

/// Solves at `mu`, writes coefficients and fields under `out`, and, when
/// `reference` is set, runs the FOM at the same μ and writes the error
/// report.
pub fn online(cfg: &RunConfig, om: &OnlineModel, mu: &[f64], dt: f64, t_final: f64, out: &Path, reference: bool) -> Result<OnlineResult> {
    std::fs::create_dir_all(out)?;
    let extrapolation = cfg.outside_hull(mu);
    if extrapolation {
        log::warn!("μ = {mu:?} lies outside the training range; the ROM extrapolates");
    }
    let traj = om.solve(mu, dt, t_final)?;
    traj.write_csv(&out.join("coefficients.csv"))?;
    let mesh = om.fom.mesh();
    let g = om.fom.problem.temperature_values();
    if cfg.online.field_every > 0 {
        for (n, s) in traj.states.iter().enumerate().step_by(cfg.online.field_every) {
            let r = reconstruct_state(mesh, &om.bases, mu, &g, s)?;
            let d = out.join("fields").join(format!("step_{n}"));
            std::fs::create_dir_all(&d)?;
            for (kind, f) in [(FieldKind::Velocity, &r.u), (FieldKind::Pressure, &r.p), (FieldKind::Temperature, &r.theta), (FieldKind::EddyViscosity, &r.nut)] {
                write_field(&d.join(format!("{}.romf", kind.file_stem())), f)?;
            }
        }
    }
    let report = if reference {
        let mut fc = cfg.fom.clone();
        fc.dt = dt;
        fc.t_final = t_final;
        let fom = if fc == cfg.fom { None } else { Some(Fom::new(fc)?) };
        let run = fom.as_ref().unwrap_or(&om.fom).run(mu)?;
        let rep = om.compare(&traj, &run, cfg.online.energy_weights)?;
        rep.write(out)?;
        Some(rep)
    } else {
        None
    };
    let mut kv = BTreeMap::new();
    kv.insert("mu".to_string(), crate::io::join_reals(mu));
    kv.insert("dt".to_string(), dt.to_string());
    kv.insert("t_final".to_string(), t_final.to_string());
    kv.insert("extrapolation".to_string(), extrapolation.to_string());
    kv.insert("rom_seconds".to_string(), traj.wall_seconds.to_string());
    kv.insert("max_constraint".to_string(), traj.max_constraint.to_string());
    kv.insert("coefficients.csv".to_string(), sha256_file(&out.join("coefficients.csv"))?);
    write_key_values(&out.join("manifest.txt"), &kv)?;
    Ok(OnlineResult {
        trajectory: traj,
        report,
        extrapolation,
        out_dir: out.to_path_buf(),
    })
}

/// Online dt and horizon: configured values or the FOM's.
pub fn online_time(cfg: &RunConfig) -> (f64, f64) {
    let dt = if cfg.online.dt > 0.0 { cfg.online.dt } else { cfg.fom.dt };
    let t = if cfg.online.t_final > 0.0 { cfg.online.t_final } else { cfg.fom.t_final };
    (dt, t)
}

/// Offline stages followed by the online stage at every test μ with a
/// FOM reference.
pub fn pipeline(cfg: &RunConfig) -> Result<Vec<OnlineResult>> {
    offline(cfg)?;
    let om = load_online(cfg).map_err(|e| e.in_stage("solve"))?;
    let (dt, t) = online_time(cfg);
    let root = cfg.root();
    cfg.online
        .test_mu
        .iter()
        .enumerate()
        .map(|(k, mu)| online(cfg, &om, mu, dt, t, &root.join("online").join(cfg.label(k)), true).map_err(|e| e.in_stage("eval")))
        .collect()
}
