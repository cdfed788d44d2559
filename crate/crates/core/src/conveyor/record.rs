//! Trajectory records and their on-disk form: a directory holding
//! `series.csv`, `record.toml` and one table pair per snapshot.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conveyor::{BackendKind, StepSample};
use crate::error::{Error, Result};
use crate::model::DetectorConfig;
use crate::ops::{CMatrix, C64};
use crate::table::{column, read_table, write_table};

/// Full state information captured at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    /// Waveguide labels in ascending order.
    pub labels: Vec<i64>,
    /// Position of each labelled mode at `t`.
    pub positions: Vec<f64>,
    pub populations: Vec<f64>,
    pub emitter: f64,
    /// Reduced density matrix of the probe.
    pub probe: CMatrix,
}

impl Snapshot {
    /// Total excitation: emitter plus every waveguide mode.
    pub fn total_excitation(&self) -> f64 {
        self.emitter + self.populations.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Sample times, the end of every step.
    pub t: Vec<f64>,
    /// Homodyne current, present exactly when the probe is monitored.
    pub j_hom: Option<Vec<f64>>,
    pub y_mean: Vec<f64>,
    pub y_var: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub seed: u64,
    pub discarded_weight: f64,
    pub max_bond: usize,
    pub config_hash: String,
    pub backend: BackendKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordMeta {
    /// Decimal string: TOML integers are signed 64-bit.
    seed: String,
    discarded_weight: f64,
    max_bond: usize,
    config_hash: String,
    backend: BackendKind,
    snapshot_times: Vec<f64>,
    snapshot_emitter: Vec<f64>,
}

impl TrajectoryRecord {
    pub(crate) fn empty(cfg: &DetectorConfig, seed: u64, capacity: usize) -> Self {
        TrajectoryRecord {
            t: Vec::with_capacity(capacity),
            j_hom: (cfg.kappa_a() > 0.0).then(|| Vec::with_capacity(capacity)),
            y_mean: Vec::with_capacity(capacity),
            y_var: Vec::with_capacity(capacity),
            x_mean: Vec::with_capacity(capacity),
            snapshots: Vec::new(),
            seed,
            discarded_weight: 0.0,
            max_bond: 1,
            config_hash: cfg.config_hash(),
            backend: BackendKind::Mps,
        }
    }

    pub(crate) fn push(&mut self, s: &StepSample) {
        self.t.push(s.t);
        self.y_mean.push(s.moments.y_mean);
        self.y_var.push(s.moments.y_var);
        self.x_mean.push(s.moments.x_mean);
        if let (Some(j), Some(c)) = (self.j_hom.as_mut(), s.current) {
            j.push(c);
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut header = vec!["t", "y_mean", "y_var", "x_mean"];
        let mut cols: Vec<&[f64]> = vec![&self.t, &self.y_mean, &self.y_var, &self.x_mean];
        if let Some(j) = &self.j_hom {
            header.push("j_hom");
            cols.push(j);
        }
        write_table(&dir.join("series.csv"), &header, &cols)?;
        for (k, s) in self.snapshots.iter().enumerate() {
            let labels: Vec<f64> = s.labels.iter().map(|&j| j as f64).collect();
            write_table(
                &dir.join(format!("snapshot_{k}.csv")),
                &["label", "x", "population"],
                &[&labels, &s.positions, &s.populations],
            )?;
            let d = s.probe.nrows();
            let (mut row, mut col, mut re, mut im) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for r in 0..d {
                for c in 0..d {
                    row.push(r as f64);
                    col.push(c as f64);
                    re.push(s.probe[(r, c)].re);
                    im.push(s.probe[(r, c)].im);
                }
            }
            write_table(&dir.join(format!("probe_{k}.csv")), &["row", "col", "re", "im"], &[&row, &col, &re, &im])?;
        }
        let meta = RecordMeta {
            seed: self.seed.to_string(),
            discarded_weight: self.discarded_weight,
            max_bond: self.max_bond,
            config_hash: self.config_hash.clone(),
            backend: self.backend,
            snapshot_times: self.snapshots.iter().map(|s| s.t).collect(),
            snapshot_emitter: self.snapshots.iter().map(|s| s.emitter).collect(),
        };
        let text = toml::to_string(&meta).map_err(|e| Error::Parse(e.to_string()))?;
        let path = dir.join("record.toml");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("record.toml");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: RecordMeta = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let (h, c) = read_table(&dir.join("series.csv"))?;
        let j_hom = column(&h, &c, "j_hom").ok().map(<[f64]>::to_vec);
        let mut snapshots = Vec::new();
        for (k, (&t, &emitter)) in meta.snapshot_times.iter().zip(&meta.snapshot_emitter).enumerate() {
            let (sh, sc) = read_table(&dir.join(format!("snapshot_{k}.csv")))?;
            let (ph, pc) = read_table(&dir.join(format!("probe_{k}.csv")))?;
            let (rows, cols) = (column(&ph, &pc, "row")?, column(&ph, &pc, "col")?);
            let d = (rows.len() as f64).sqrt().round() as usize;
            let mut probe = CMatrix::zeros(d, d);
            for (i, (re, im)) in column(&ph, &pc, "re")?.iter().zip(column(&ph, &pc, "im")?).enumerate() {
                probe[(rows[i] as usize, cols[i] as usize)] = C64::new(*re, *im);
            }
            snapshots.push(Snapshot {
                t,
                labels: column(&sh, &sc, "label")?.iter().map(|&x| x as i64).collect(),
                positions: column(&sh, &sc, "x")?.to_vec(),
                populations: column(&sh, &sc, "population")?.to_vec(),
                emitter,
                probe,
            });
        }
        Ok(TrajectoryRecord {
            t: column(&h, &c, "t")?.to_vec(),
            j_hom,
            y_mean: column(&h, &c, "y_mean")?.to_vec(),
            y_var: column(&h, &c, "y_var")?.to_vec(),
            x_mean: column(&h, &c, "x_mean")?.to_vec(),
            snapshots,
            seed: meta.seed.parse().map_err(|e| Error::Parse(format!("seed: {e}")))?,
            discarded_weight: meta.discarded_weight,
            max_bond: meta.max_bond,
            config_hash: meta.config_hash,
            backend: meta.backend,
        })
    }
}
