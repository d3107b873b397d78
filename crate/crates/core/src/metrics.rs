//! Summary metrics for comparing methods over tasks.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::jacobian::TaskJacobian;

/// Inner products below this are conflicts.
pub const CONFLICT_SLACK: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Per-task metric values for a set of methods plus a reference row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    tasks: Vec<String>,
    directions: Vec<Direction>,
    reference: Vec<f64>,
    methods: Vec<(String, Vec<f64>)>,
}

impl MetricTable {
    pub fn new(tasks: Vec<String>, directions: Vec<Direction>, reference: Vec<f64>) -> Result<Self> {
        check_len(tasks.len(), directions.len())?;
        check_len(tasks.len(), reference.len())?;
        for (i, (&r, d)) in reference.iter().zip(&directions).enumerate() {
            if !r.is_finite() || (*d == Direction::LowerBetter && r <= 0.0) {
                return Err(Error::InvalidInput(format!("reference value {r} for task {i} is not usable")));
            }
        }
        Ok(Self { tasks, directions, reference, methods: Vec::new() })
    }

    pub fn add_method(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        check_len(self.tasks.len(), values.len())?;
        let name = name.into();
        if self.methods.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidInput(format!("duplicate method {name}")));
        }
        self.methods.push((name, values));
        Ok(())
    }

    pub fn methods(&self) -> impl Iterator<Item = &str> {
        self.methods.iter().map(|(n, _)| n.as_str())
    }

    fn values(&self, method: &str) -> Result<&[f64]> {
        self.methods
            .iter()
            .find(|(n, _)| n == method)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::InvalidInput(format!("unknown method {method}")))
    }

    /// CSV with one row per method: task values, then `delta_m_percent` and
    /// `mean_rank`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method".to_string()];
        header.extend(self.tasks.iter().cloned());
        header.extend(["delta_m_percent".into(), "mean_rank".into()]);
        w.write_record(&header)?;
        let ranks = if self.methods.len() >= 2 { Some(mean_rank(self)?) } else { None };
        for (name, vals) in &self.methods {
            let mut row = vec![name.clone()];
            row.extend(vals.iter().map(|v| v.to_string()));
            row.push(delta_m_percent(self, name)?.to_string());
            row.push(ranks.as_ref().map_or(String::new(), |r| r[name].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(1/K) Σ_k (−1)^{δ_k} (M_k − B_k)/B_k × 100` with `δ_k = 1` when higher is
/// better. Negative is better than the reference.
pub fn delta_m_percent(table: &MetricTable, method: &str) -> Result<f64> {
    let vals = table.values(method)?;
    let mut sum = 0.0;
    for ((&m, &b), d) in vals.iter().zip(&table.reference).zip(&table.directions) {
        if b == 0.0 {
            return Err(Error::InvalidInput("reference value is zero".into()));
        }
        let sign = match d {
            Direction::HigherBetter => -1.0,
            Direction::LowerBetter => 1.0,
        };
        sum += sign * (m - b) / b;
    }
    Ok(sum / vals.len() as f64 * 100.0)
}

/// Average per-task rank (1 = best, ties share the mean of their ranks).
pub fn mean_rank(table: &MetricTable) -> Result<BTreeMap<String, f64>> {
    let n = table.methods.len();
    if n < 2 {
        return Err(Error::InvalidInput("mean rank needs at least two methods".into()));
    }
    let mut total = vec![0.0; n];
    for (t, dir) in table.directions.iter().enumerate() {
        let score = |i: usize| {
            let v = table.methods[i].1[t];
            match dir {
                Direction::HigherBetter => -v,
                Direction::LowerBetter => v,
            }
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| score(a).total_cmp(&score(b)));
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && score(order[j + 1]) == score(order[i]) {
                j += 1;
            }
            let rank = (i + j) as f64 / 2.0 + 1.0;
            for &o in &order[i..=j] {
                total[o] += rank;
            }
            i = j + 1;
        }
    }
    let k = table.tasks.len() as f64;
    Ok(table.methods.iter().zip(total).map(|((name, _), r)| (name.clone(), r / k)).collect())
}

/// `r_i = (ℓ_prev − ℓ_curr)/ℓ_prev`
pub fn improvement_rates(prev: &[f64], curr: &[f64]) -> Result<Vec<f64>> {
    check_len(prev.len(), curr.len())?;
    if let Some(i) = prev.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::Precondition(format!("previous loss {i} is {} (must be > 0)", prev[i])));
    }
    Ok(prev.iter().zip(curr).map(|(p, c)| (p - c) / p).collect())
}

/// Tasks whose loss the update `θ − αd` would increase to first order.
pub fn detect_conflict(jac: &TaskJacobian, d: &[f64]) -> Result<Vec<usize>> {
    Ok(jac
        .apply(d)?
        .iter()
        .enumerate()
        .filter(|(_, &p)| p < CONFLICT_SLACK)
        .map(|(i, _)| i)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::mgda_direction;
    use crate::jacobian::GradientKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn delta_m_examples() {
        let mut t = MetricTable::new(names(1), vec![Direction::LowerBetter], vec![10.0]).unwrap();
        t.add_method("same", vec![10.0]).unwrap();
        t.add_method("worse", vec![11.0]).unwrap();
        assert_eq!(delta_m_percent(&t, "same").unwrap(), 0.0);
        assert!((delta_m_percent(&t, "worse").unwrap() - 10.0).abs() < 1e-12);

        let mut t =
            MetricTable::new(names(2), vec![Direction::HigherBetter, Direction::LowerBetter], vec![50.0, 0.5]).unwrap();
        t.add_method("m", vec![55.0, 0.4]).unwrap();
        assert!((delta_m_percent(&t, "m").unwrap() + 15.0).abs() <= 1e-12);
        assert!(delta_m_percent(&t, "missing").is_err());
    }

    #[test]
    fn zero_reference_is_an_error() {
        let mut t = MetricTable::new(names(1), vec![Direction::HigherBetter], vec![0.0]).unwrap();
        t.add_method("m", vec![1.0]).unwrap();
        assert!(delta_m_percent(&t, "m").is_err());
        assert!(MetricTable::new(names(1), vec![Direction::LowerBetter], vec![0.0]).is_err());
    }

    #[test]
    fn mean_rank_examples() {
        let dirs = vec![Direction::LowerBetter, Direction::HigherBetter];
        let mut t = MetricTable::new(names(2), dirs.clone(), vec![1.0, 1.0]).unwrap();
        t.add_method("best", vec![0.1, 9.0]).unwrap();
        t.add_method("mid", vec![0.5, 5.0]).unwrap();
        t.add_method("split", vec![0.05, 1.0]).unwrap();
        let r = mean_rank(&t).unwrap();
        assert_eq!(r["split"], 2.0);
        assert_eq!(r["best"], 1.5);

        let mut t = MetricTable::new(names(2), dirs.clone(), vec![1.0, 1.0]).unwrap();
        t.add_method("a", vec![0.1, 9.0]).unwrap();
        t.add_method("b", vec![0.2, 8.0]).unwrap();
        t.add_method("c", vec![0.3, 1.0]).unwrap();
        assert_eq!(mean_rank(&t).unwrap()["a"], 1.0);

        let mut t = MetricTable::new(names(2), dirs, vec![1.0, 1.0]).unwrap();
        t.add_method("x", vec![0.3, 2.0]).unwrap();
        t.add_method("y", vec![0.3, 2.0]).unwrap();
        let r = mean_rank(&t).unwrap();
        assert_eq!((r["x"], r["y"]), (1.5, 1.5));
    }

    #[test]
    fn improvement_rate_examples() {
        assert_eq!(improvement_rates(&[2.0, 4.0, 1.0], &[2.0, 2.0, 2.0]).unwrap(), vec![0.0, 0.5, -1.0]);
        assert!(improvement_rates(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn conflict_examples() {
        let j = |rows: Vec<Vec<f64>>| TaskJacobian::from_rows(rows, GradientKind::RawLoss).unwrap();
        assert!(detect_conflict(&j(vec![vec![1.0, 0.0], vec![0.0, 1.0]]), &[1.0, 0.0]).unwrap().is_empty());
        assert_eq!(detect_conflict(&j(vec![vec![1.0, 2.0], vec![-1.0, -2.0]]), &[1.0, 2.0]).unwrap(), vec![1]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let k = rng.gen_range(2..5);
            let jac = j((0..k).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect());
            let s = mgda_direction(&jac, Default::default()).unwrap();
            assert!(detect_conflict(&jac, &s.direction).unwrap().is_empty());
        }
    }

    #[test]
    fn csv_has_one_row_per_method() {
        let mut t = MetricTable::new(names(2), vec![Direction::LowerBetter; 2], vec![1.0, 2.0]).unwrap();
        t.add_method("a", vec![1.0, 1.0]).unwrap();
        t.add_method("b", vec![2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,t0,t1,delta_m_percent,mean_rank");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("a,1,1,-25,1"));
    }

    proptest! {
        #[test]
        fn delta_m_is_invariant_to_per_task_rescaling(
            m in prop::collection::vec(0.1f64..10.0, 3),
            b in prop::collection::vec(0.1f64..10.0, 3),
            s in 0.01f64..100.0,
            task in 0usize..3,
        ) {
            let dirs = vec![Direction::LowerBetter, Direction::HigherBetter, Direction::LowerBetter];
            let mut t = MetricTable::new(names(3), dirs.clone(), b.clone()).unwrap();
            t.add_method("m", m.clone()).unwrap();
            let (mut m2, mut b2) = (m, b);
            m2[task] *= s;
            b2[task] *= s;
            let mut t2 = MetricTable::new(names(3), dirs, b2).unwrap();
            t2.add_method("m", m2).unwrap();
            let (x, y) = (delta_m_percent(&t, "m").unwrap(), delta_m_percent(&t2, "m").unwrap());
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }

        #[test]
        fn mean_rank_is_invariant_to_monotone_transforms(
            vals in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 4),
        ) {
            let dirs = vec![Direction::LowerBetter, Direction::HigherBetter];
            let build = |f: &dyn Fn(f64) -> f64| {
                let mut t = MetricTable::new(names(2), dirs.clone(), vec![1.0, 1.0]).unwrap();
                for (i, v) in vals.iter().enumerate() {
                    t.add_method(format!("m{i}"), v.iter().map(|&x| f(x)).collect()).unwrap();
                }
                mean_rank(&t).unwrap()
            };
            prop_assert_eq!(build(&|x| x), build(&|x| x.exp() * 3.0 + 1.0));
        }

        #[test]
        fn equal_rates_iff_equal_log_deltas(
            prev in prop::collection::vec(0.1f64..10.0, 3),
            ratio in 0.1f64..2.0,
        ) {
            let curr: Vec<f64> = prev.iter().map(|p| p * ratio).collect();
            let r = improvement_rates(&prev, &curr).unwrap();
            for x in &r {
                prop_assert!((x - r[0]).abs() < 1e-12);
            }
        }
    }
}
