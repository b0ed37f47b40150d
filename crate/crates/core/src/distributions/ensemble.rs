//! Weighted particle ensembles with flat, chunk-friendly storage.

use std::io::{BufRead, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::exec;
use crate::numfmt::fmt_g12;
use crate::phase_space::{Chart, PhaseMap, PhasePoint};

const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Per-weight tolerance on `w·N = 1` for the equal-weight check.
const EQUAL_WEIGHT_TOL: f64 = 1e-9;

/// `N` weighted phase-space points.
///
/// Coordinates are stored particle-major, `[q¹..qⁿ, k₁..kₙ]` per particle,
/// so a chunk of particles is a contiguous slice and per-particle kernels
/// stay cache friendly.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dof: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    seed: u64,
}

impl ParticleEnsemble {
    pub fn new(dof: usize, coords: Vec<f64>, weights: Vec<f64>, seed: u64) -> Result<Self> {
        let stride = 2 * dof;
        if dof == 0 || coords.len() != weights.len() * stride {
            return Err(Error::InvalidDistribution(format!(
                "coordinate buffer of {} values does not hold {} particles of {} dof",
                coords.len(),
                weights.len(),
                dof
            )));
        }
        if weights.len() < 2 {
            return Err(Error::InvalidDistribution(
                "ensemble needs at least 2 particles".into(),
            ));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution(
                "non-finite particle coordinates".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be positive and finite".into(),
            ));
        }
        let total = exec::sum(&weights);
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(ParticleEnsemble {
            dof,
            coords,
            weights,
            seed,
        })
    }

    /// Equal-weight ensemble over a flat coordinate buffer.
    pub fn equal_weight(dof: usize, coords: Vec<f64>, seed: u64) -> Result<Self> {
        let stride = 2 * dof;
        if stride == 0 || coords.len() % stride != 0 {
            return Err(Error::InvalidDistribution(
                "coordinate buffer does not divide into particles".into(),
            ));
        }
        let n = coords.len() / stride;
        if n < 2 {
            return Err(Error::InvalidDistribution(
                "ensemble needs at least 2 particles".into(),
            ));
        }
        Self::new(dof, coords, vec![1.0 / n as f64; n], seed)
    }

    pub fn from_points(points: &[PhasePoint], seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDistribution("no particles".into()));
        }
        let dof = points[0].dof();
        let mut coords = Vec::with_capacity(points.len() * 2 * dof);
        for p in points {
            if p.dof() != dof {
                return Err(Error::InvalidDistribution(
                    "particles have mixed dimensions".into(),
                ));
            }
            coords.extend_from_slice(p.q.as_slice());
            coords.extend_from_slice(p.k.as_slice());
        }
        Self::equal_weight(dof, coords, seed)
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    /// Particle `i` as flat coordinates.
    pub fn flat(&self, i: usize) -> &[f64] {
        let s = 2 * self.dof;
        &self.coords[i * s..(i + 1) * s]
    }

    pub fn point(&self, i: usize) -> PhasePoint {
        let f = self.flat(i);
        let n = self.dof;
        PhasePoint {
            q: DVector::from_row_slice(&f[..n]),
            k: DVector::from_row_slice(&f[n..]),
        }
    }

    /// True when every weight equals `1/N` to within `1e-9` relative.
    pub fn is_equal_weight(&self) -> bool {
        let n = self.len() as f64;
        self.weights.iter().all(|w| (w * n - 1.0).abs() <= EQUAL_WEIGHT_TOL)
    }

    /// Apply a phase-space map to every particle; weights are untouched.
    /// Liouville transport never resamples or renormalizes.
    pub fn map_points(&self, map: &PhaseMap) -> Result<Self> {
        if map.dof() != self.dof {
            return Err(Error::Domain(format!(
                "map dimension {} does not match ensemble dimension {}",
                map.dof(),
                self.dof
            )));
        }
        let stride = 2 * self.dof;
        let mut out = self.clone();
        let err = std::sync::atomic::AtomicBool::new(false);
        exec::for_each_chunk_mut(out.coords_mut(), exec::CHUNK * stride, |_, chunk| {
            for flat in chunk.chunks_mut(stride) {
                let x = PhasePoint::from_flat(&DVector::from_row_slice(flat));
                let y = map.apply(&x);
                if !y.is_finite() {
                    err.store(true, std::sync::atomic::Ordering::Relaxed);
                    return;
                }
                let n = y.dof();
                flat[..n].copy_from_slice(y.q.as_slice());
                flat[n..].copy_from_slice(y.k.as_slice());
            }
        });
        if err.into_inner() {
            return Err(Error::Domain(
                "map produced non-finite coordinates on the ensemble".into(),
            ));
        }
        Ok(out)
    }

    /// Write the `q1,...,qn,k1,...,kn,weight` CSV form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let chart = Chart::standard(self.dof);
        writeln!(w, "{},weight", chart.labels().join(","))?;
        for i in 0..self.len() {
            let mut row = String::new();
            for v in self.flat(i) {
                row.push_str(&fmt_g12(*v));
                row.push(',');
            }
            row.push_str(&fmt_g12(self.weights[i]));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    /// Parse the CSV form. The column count fixes the dimension.
    pub fn read_csv<R: BufRead>(reader: R, seed: u64) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty ensemble CSV".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 3 || cols.len() % 2 == 0 || cols.last() != Some(&"weight") {
            return Err(Error::Parse(format!(
                "expected header q1,..,k1,..,weight, got `{header}`"
            )));
        }
        let dof = (cols.len() - 1) / 2;
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    cols.len()
                )));
            }
            for f in &fields[..2 * dof] {
                coords.push(f.parse::<f64>().map_err(|e| {
                    Error::Parse(format!("row {}: bad number `{f}`: {e}", lineno + 2))
                })?);
            }
            weights.push(fields[2 * dof].parse::<f64>().map_err(|e| {
                Error::Parse(format!("row {}: bad weight: {e}", lineno + 2))
            })?);
        }
        // Tolerate formatting loss in round-tripped weights by renormalizing
        // the total only when it is already within CSV precision of 1.
        let total = exec::sum(&weights);
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        for w in &mut weights {
            *w /= total;
        }
        Self::new(dof, coords, weights, seed)
    }
}
