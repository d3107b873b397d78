//! Banks of convex quadratic tasks `ℓ_i(θ) = s_i·(½(θ−a_i)ᵀB_i(θ−a_i) + c_i)`.
//!
//! Spectral tasks share one orthonormal basis `Q` drawn from the bank seed,
//! so `B_i = Q·diag(λ_i)·Qᵀ`. All spectral tasks are then evaluated in
//! eigen-coordinates: a weighted gradient costs two `m×m` products no matter
//! how many tasks there are, while a full jacobian costs `k + 1`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::jacobian::{GradientKind, TaskJacobian};
use crate::vecops::dot;

use super::MultiTaskProblem;

const BASIS_STREAM: u64 = 0;
const PARAM_STREAM: u64 = 1;
const PSD_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Curvature {
    /// Eigenvalues in the bank's shared seeded basis.
    Spectral { eigenvalues: Vec<f64> },
    /// An explicit symmetric matrix, one inner vector per row.
    Dense { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTaskSpec {
    pub curvature: Curvature,
    pub center: Vec<f64>,
    pub offset: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticBankSpec {
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub tasks: Vec<QuadraticTaskSpec>,
}

impl QuadraticBankSpec {
    /// Spectral tasks with `λ ~ U[0.1, 10]`, `a ~ N(0, I)`, `c ~ U[0.5, 1.5]`
    /// and unit scales.
    pub fn random(k: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PARAM_STREAM);
        let tasks = (0..k)
            .map(|_| QuadraticTaskSpec {
                curvature: Curvature::Spectral {
                    eigenvalues: (0..m).map(|_| rng.gen_range(0.1..10.0)).collect(),
                },
                center: (0..m).map(|_| rng.sample(StandardNormal)).collect(),
                offset: rng.gen_range(0.5..1.5),
                scale: 1.0,
            })
            .collect();
        Self { k, m, seed, tasks }
    }

    pub fn with_scales(mut self, scales: &[f64]) -> Self {
        for (t, &s) in self.tasks.iter_mut().zip(scales) {
            t.scale = s;
        }
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 {
            return Err(Error::InvalidInput("bank needs k ≥ 1 and m ≥ 1".into()));
        }
        check_len(self.k, self.tasks.len())?;
        for (i, t) in self.tasks.iter().enumerate() {
            check_len(self.m, t.center.len())?;
            check_finite("center", &t.center)?;
            if !(t.scale.is_finite() && t.scale > 0.0) {
                return Err(Error::InvalidInput(format!("task {i}: scale must be positive")));
            }
            if !(t.offset.is_finite() && t.offset >= 0.0) {
                return Err(Error::InvalidInput(format!("task {i}: offset must be ≥ 0")));
            }
            match &t.curvature {
                Curvature::Spectral { eigenvalues } => {
                    check_len(self.m, eigenvalues.len())?;
                    check_finite("eigenvalues", eigenvalues)?;
                    if let Some(l) = eigenvalues.iter().find(|&&l| l < 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "task {i}: curvature not PSD (eigenvalue {l})"
                        )));
                    }
                }
                Curvature::Dense { matrix } => {
                    check_len(self.m, matrix.len())?;
                    for row in matrix {
                        check_len(self.m, row.len())?;
                        check_finite("matrix", row)?;
                    }
                    check_psd(i, matrix)?;
                }
            }
        }
        Ok(())
    }
}

fn check_psd(task: usize, matrix: &[Vec<f64>]) -> Result<()> {
    let m = matrix.len();
    let b = DMatrix::from_fn(m, m, |r, c| matrix[r][c]);
    let scale = b.amax().max(1.0);
    for r in 0..m {
        for c in 0..r {
            if (b[(r, c)] - b[(c, r)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidInput(format!("task {task}: curvature not symmetric")));
            }
        }
    }
    let min = SymmetricEigen::new(b).eigenvalues.min();
    if min < -PSD_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "task {task}: curvature not PSD (eigenvalue {min})"
        )));
    }
    Ok(())
}

/// Row-major orthonormal `m×m` basis from the QR factorization of a seeded
/// Gaussian matrix, with signs fixed so that `R` has a positive diagonal.
fn seeded_basis(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BASIS_STREAM);
    let g = DMatrix::<f64>::from_fn(m, m, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..m {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    let mut out = Vec::with_capacity(m * m);
    for row in 0..m {
        out.extend(q.row(row).iter());
    }
    out
}

#[derive(Debug, Clone)]
enum Task {
    Spectral {
        lambda: Vec<f64>,
        /// `Qᵀa`
        center_eig: Vec<f64>,
    },
    Dense {
        /// Row-major `m×m`.
        b: Vec<f64>,
        center: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct QuadraticBank {
    name: String,
    m: usize,
    basis: Option<Vec<f64>>,
    tasks: Vec<Task>,
    offsets: Vec<f64>,
    scales: Vec<f64>,
    min_losses: Vec<f64>,
}

pub fn make_quadratic_bank(spec: &QuadraticBankSpec) -> Result<QuadraticBank> {
    spec.validate()?;
    let m = spec.m;
    let needs_basis = spec.tasks.iter().any(|t| matches!(t.curvature, Curvature::Spectral { .. }));
    let basis = needs_basis.then(|| seeded_basis(m, spec.seed));
    let mut tasks = Vec::with_capacity(spec.k);
    for t in &spec.tasks {
        tasks.push(match &t.curvature {
            Curvature::Spectral { eigenvalues } => {
                let mut center_eig = vec![0.0; m];
                tr_mul_into(basis.as_deref().expect("basis"), &t.center, &mut center_eig);
                Task::Spectral { lambda: eigenvalues.clone(), center_eig }
            }
            Curvature::Dense { matrix } => Task::Dense {
                b: matrix.iter().flatten().copied().collect(),
                center: t.center.clone(),
            },
        });
    }
    let offsets: Vec<f64> = spec.tasks.iter().map(|t| t.offset).collect();
    let scales: Vec<f64> = spec.tasks.iter().map(|t| t.scale).collect();
    let min_losses = offsets.iter().zip(&scales).map(|(c, s)| s * c).collect();
    Ok(QuadraticBank {
        name: format!("quadratic(k={}, m={}, seed={})", spec.k, m, spec.seed),
        m,
        basis,
        tasks,
        offsets,
        scales,
        min_losses,
    })
}

/// `out = Qᵀx` for row-major `Q`.
fn tr_mul_into(q: &[f64], x: &[f64], out: &mut [f64]) {
    let m = out.len();
    out.fill(0.0);
    for (r, &xr) in x.iter().enumerate() {
        if xr != 0.0 {
            for (o, &qrc) in out.iter_mut().zip(&q[r * m..(r + 1) * m]) {
                *o += xr * qrc;
            }
        }
    }
}

/// `out = Mx` for row-major square `M`.
fn mul_into(q: &[f64], x: &[f64], out: &mut [f64]) {
    let m = out.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&q[r * m..(r + 1) * m], x);
    }
}

impl QuadraticBank {
    /// The first `k` tasks, sharing this bank's basis.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.clamp(1, self.tasks.len());
        Self {
            name: format!("{}[..{k}]", self.name),
            m: self.m,
            basis: self.basis.clone(),
            tasks: self.tasks[..k].to_vec(),
            offsets: self.offsets[..k].to_vec(),
            scales: self.scales[..k].to_vec(),
            min_losses: self.min_losses[..k].to_vec(),
        }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    fn eigen_coords(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.basis.as_deref().map(|q| {
            let mut u = vec![0.0; self.m];
            tr_mul_into(q, theta, &mut u);
            u
        })
    }

    fn check_theta(&self, theta: &[f64]) {
        assert_eq!(theta.len(), self.m, "parameter length must equal bank dimension");
    }
}

impl MultiTaskProblem for QuadraticBank {
    fn name(&self) -> &str {
        &self.name
    }

    fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn dim(&self) -> usize {
        self.m
    }

    fn min_losses(&self) -> &[f64] {
        &self.min_losses
    }

    fn losses(&self, theta: &[f64]) -> Vec<f64> {
        self.check_theta(theta);
        let u = self.eigen_coords(theta);
        let mut scratch = Vec::new();
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let quad = match t {
                    Task::Spectral { lambda, center_eig } => {
                        let u = u.as_deref().expect("basis");
                        lambda
                            .iter()
                            .zip(u.iter().zip(center_eig))
                            .map(|(l, (x, a))| l * (x - a) * (x - a))
                            .sum::<f64>()
                    }
                    Task::Dense { b, center } => {
                        let r: Vec<f64> = theta.iter().zip(center).map(|(x, a)| x - a).collect();
                        scratch.resize(self.m, 0.0);
                        mul_into(b, &r, &mut scratch);
                        dot(&r, &scratch)
                    }
                };
                self.scales[i] * (0.5 * quad + self.offsets[i])
            })
            .collect()
    }

    fn jacobian(&self, theta: &[f64]) -> TaskJacobian {
        self.check_theta(theta);
        let m = self.m;
        let u = self.eigen_coords(theta);
        let mut data = vec![0.0; self.tasks.len() * m];
        let mut tmp = vec![0.0; m];
        for (i, t) in self.tasks.iter().enumerate() {
            let s = self.scales[i];
            let out = &mut data[i * m..(i + 1) * m];
            match t {
                Task::Spectral { lambda, center_eig } => {
                    let u = u.as_deref().expect("basis");
                    for j in 0..m {
                        tmp[j] = s * lambda[j] * (u[j] - center_eig[j]);
                    }
                    mul_into(self.basis.as_deref().expect("basis"), &tmp, out);
                }
                Task::Dense { b, center } => {
                    for j in 0..m {
                        tmp[j] = theta[j] - center[j];
                    }
                    mul_into(b, &tmp, out);
                    out.iter_mut().for_each(|x| *x *= s);
                }
            }
        }
        TaskJacobian::from_flat(self.tasks.len(), m, data, GradientKind::RawLoss).expect("shape")
    }

    fn weighted_gradient(&self, theta: &[f64], weights: &[f64]) -> Vec<f64> {
        self.check_theta(theta);
        assert_eq!(weights.len(), self.tasks.len(), "one weight per task");
        let m = self.m;
        let mut out = vec![0.0; m];
        // Spectral tasks are combined in eigen-coordinates, in place.
        if let Some(mut acc) = self.eigen_coords(theta) {
            for j in 0..m {
                let x = acc[j];
                let mut sum = 0.0;
                for (i, t) in self.tasks.iter().enumerate() {
                    if let Task::Spectral { lambda, center_eig } = t {
                        sum += weights[i] * self.scales[i] * lambda[j] * (x - center_eig[j]);
                    }
                }
                acc[j] = sum;
            }
            mul_into(self.basis.as_deref().expect("basis"), &acc, &mut out);
        }
        let mut r = Vec::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if let Task::Dense { b, center } = t {
                r.clear();
                r.extend(theta.iter().zip(center).map(|(x, a)| x - a));
                let ws = weights[i] * self.scales[i];
                for (row, o) in out.iter_mut().enumerate() {
                    *o += ws * dot(&b[row * m..(row + 1) * m], &r);
                }
            }
        }
        out
    }
}
