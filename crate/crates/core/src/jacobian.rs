use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::vecops::dot;

/// Whether the rows hold gradients of the raw task losses or of their logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientKind {
    RawLoss,
    LogLoss,
}

/// `k` per-task gradients of length `m`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskJacobian {
    k: usize,
    m: usize,
    data: Vec<f64>,
    kind: GradientKind,
}

impl TaskJacobian {
    pub fn from_rows(rows: Vec<Vec<f64>>, kind: GradientKind) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidInput("jacobian needs at least one task".into()));
        }
        let m = rows[0].len();
        let mut data = Vec::with_capacity(k * m);
        for r in &rows {
            check_len(m, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { k, m, data, kind })
    }

    pub fn from_flat(k: usize, m: usize, data: Vec<f64>, kind: GradientKind) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("jacobian needs at least one task".into()));
        }
        check_len(k * m, data.len())?;
        Ok(Self { k, m, data, kind })
    }

    pub fn num_tasks(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> GradientKind {
        self.kind
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m.max(1)).take(self.k)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Converts raw-loss gradients into log-loss gradients, `∇ℓ_i / ℓ_i`,
    /// given strictly positive (shifted) losses.
    pub fn to_log_loss(&self, shifted_losses: &[f64]) -> Result<Self> {
        if self.kind != GradientKind::RawLoss {
            return Err(Error::InvalidInput("jacobian already holds log-loss gradients".into()));
        }
        check_len(self.k, shifted_losses.len())?;
        check_finite("losses", shifted_losses)?;
        if let Some(i) = shifted_losses.iter().position(|&l| l <= 0.0) {
            return Err(Error::Precondition(format!(
                "shifted loss {i} is {} (must be > 0)",
                shifted_losses[i]
            )));
        }
        let mut out = self.clone();
        out.kind = GradientKind::LogLoss;
        for (i, &l) in shifted_losses.iter().enumerate() {
            for x in out.row_mut(i) {
                *x /= l;
            }
        }
        Ok(out)
    }

    /// `Σ_i w_i · row_i`. Weights need not lie on the simplex.
    pub fn combine(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.k, w.len())?;
        let mut d = vec![0.0; self.m];
        for (row, &wi) in self.rows().zip(w) {
            for (dj, rj) in d.iter_mut().zip(row) {
                *dj += wi * rj;
            }
        }
        Ok(d)
    }

    /// Inner products `row_i · d` for every task.
    pub fn apply(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m, d.len())?;
        Ok(self.rows().map(|r| dot(r, d)).collect())
    }

    /// Row Gram matrix, `k × k` row-major.
    pub fn gram(&self) -> Vec<f64> {
        let k = self.k;
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let v = dot(self.row(i), self.row(j));
                g[i * k + j] = v;
                g[j * k + i] = v;
            }
        }
        g
    }
}

/// `G·x` for a row-major `k × k` matrix.
pub(crate) fn mat_vec(g: &[f64], k: usize, x: &[f64]) -> Vec<f64> {
    (0..k).map(|i| dot(&g[i * k..(i + 1) * k], x)).collect()
}
