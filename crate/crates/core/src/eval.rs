//! Error metrics, energy comparison, timing and probes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, RomError};
use crate::fv::{inner_product, Field, Mesh};
use crate::io::write_atomic;

/// 100·‖X_fom − X_rom‖ / ‖X_fom‖ in the volume-weighted L2 norm.
pub fn relative_l2_error(mesh: &Mesh, fom: &Field, rom: &Field) -> Result<f64> {
    fom.check_compatible(rom)?;
    let reference = inner_product(mesh, fom, fom)?;
    if reference == 0.0 {
        return Err(RomError::UndefinedError);
    }
    let mut diff = fom.clone();
    diff.axpy(-1.0, rom)?;
    Ok(100.0 * (inner_product(mesh, &diff, &diff)? / reference).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub avg: f64,
}

pub fn error_statistics(series: &[f64]) -> Result<Stats> {
    if series.is_empty() {
        return Err(RomError::data("empty error series"));
    }
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg = (series.iter().sum::<f64>() / series.len() as f64).clamp(min, max);
    Ok(Stats { min, max, avg })
}

/// E = w_k·½⟨u,u⟩ + w_θ·½⟨θ,θ⟩.
pub fn total_energy(mesh: &Mesh, u: &Field, theta: &Field, weights: (f64, f64)) -> Result<f64> {
    Ok(0.5 * weights.0 * inner_product(mesh, u, u)? + 0.5 * weights.1 * inner_product(mesh, theta, theta)?)
}

pub fn total_energy_error(mesh: &Mesh, fom: (&Field, &Field), rom: (&Field, &Field), weights: (f64, f64)) -> Result<f64> {
    let ef = total_energy(mesh, fom.0, fom.1, weights)?;
    if ef == 0.0 {
        return Err(RomError::UndefinedError);
    }
    let er = total_energy(mesh, rom.0, rom.1, weights)?;
    Ok(100.0 * (ef - er).abs() / ef)
}

pub fn speedup(fom_seconds: f64, rom_seconds: f64) -> Result<f64> {
    if !(fom_seconds > 0.0 && rom_seconds > 0.0) {
        return Err(RomError::data(format!("timings must be positive, got {fom_seconds} and {rom_seconds}")));
    }
    Ok(fom_seconds / rom_seconds)
}

/// Nearest-cell samples of one component at `n` points spaced evenly in
/// arc length along the polyline.
pub fn line_probe(mesh: &Mesh, field: &Field, component: usize, polyline: &[[f64; 2]], n: usize) -> Result<Vec<(f64, f64)>> {
    field.check_mesh(mesh)?;
    if polyline.len() < 2 || n < 2 {
        return Err(RomError::config("a probe needs two vertices and two samples"));
    }
    if component >= field.components() {
        return Err(RomError::dim(format!("component {component} of a {}-component field", field.components())));
    }
    let seg: Vec<f64> = polyline.windows(2).map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt()).collect();
    let total: f64 = seg.iter().sum();
    if total == 0.0 {
        return Err(RomError::config("probe has zero length"));
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let s = total * k as f64 / (n - 1) as f64;
        let (mut acc, mut idx) = (0.0, 0);
        while idx + 1 < seg.len() && acc + seg[idx] < s {
            acc += seg[idx];
            idx += 1;
        }
        let frac = if seg[idx] > 0.0 { ((s - acc) / seg[idx]).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (polyline[idx], polyline[idx + 1]);
        let (x, y) = (a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1]));
        let cell = mesh
            .locate(x, y)
            .ok_or_else(|| RomError::config(format!("probe point ({x}, {y}) lies outside the domain")))?;
        out.push((s, field.get(cell, component)));
    }
    Ok(out)
}

/// Per-field error series plus energy and timing.
#[derive(Clone, Debug, Default)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    /// Field name → ε_L2(t) in percent; `None` marks an undefined value.
    pub series: BTreeMap<String, Vec<Option<f64>>>,
    pub energy: Vec<f64>,
    pub energy_weights: (f64, f64),
    pub fom_seconds: f64,
    pub rom_seconds: f64,
}

impl ErrorReport {
    pub fn stats(&self, field: &str) -> Result<Stats> {
        let s = self.series.get(field).ok_or_else(|| RomError::data(format!("no series for `{field}`")))?;
        let defined: Vec<f64> = s.iter().flatten().copied().collect();
        error_statistics(&defined)
    }

    pub fn speedup(&self) -> Result<f64> {
        speedup(self.fom_seconds, self.rom_seconds)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, s) in &self.series {
            let mut text = String::from("t,percent\n");
            for (t, v) in self.times.iter().zip(s) {
                match v {
                    Some(v) => writeln!(text, "{t},{v}").unwrap(),
                    None => writeln!(text, "{t},undefined").unwrap(),
                }
            }
            write_atomic(&dir.join(format!("errors_{name}.csv")), text.as_bytes())?;
        }
        let mut stats = String::from("field,min,max,avg\n");
        for name in self.series.keys() {
            if let Ok(s) = self.stats(name) {
                writeln!(stats, "{name},{},{},{}", s.min, s.max, s.avg).unwrap();
            }
        }
        write_atomic(&dir.join("stats.csv"), stats.as_bytes())?;
        let mut energy = format!("# E = {}*0.5<u,u> + {}*0.5<T,T>\nt,percent\n", self.energy_weights.0, self.energy_weights.1);
        for (t, e) in self.times.iter().zip(&self.energy) {
            writeln!(energy, "{t},{e}").unwrap();
        }
        write_atomic(&dir.join("energy.csv"), energy.as_bytes())?;
        let speed = self.speedup().map(|s| s.to_string()).unwrap_or_else(|_| "undefined".into());
        let timing = format!("fom_seconds,rom_seconds,speedup\n{},{},{}\n", self.fom_seconds, self.rom_seconds, speed);
        write_atomic(&dir.join("timing.csv"), timing.as_bytes())
    }
}

pub fn write_probe(path: &Path, samples: &[(f64, f64)]) -> Result<()> {
    let mut text = String::from("arc_length,value\n");
    for (s, v) in samples {
        writeln!(text, "{s},{v}").unwrap();
    }
    write_atomic(path, text.as_bytes())
}
