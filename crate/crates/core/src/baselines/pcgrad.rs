use rand::seq::SliceRandom;
use rand::Rng;

use crate::jacobian::TaskJacobian;
use crate::vecops::{axpy, dot};

/// Projects each task gradient off the gradients it conflicts with, visiting
/// the other tasks in a fresh random order per task, then averages.
pub fn pcgrad_direction<R: Rng + ?Sized>(jac: &TaskJacobian, rng: &mut R) -> Vec<f64> {
    let (k, m) = (jac.num_tasks(), jac.dim());
    let sq: Vec<f64> = jac.rows().map(|r| dot(r, r)).collect();
    let mut d = vec![0.0; m];
    let mut order: Vec<usize> = Vec::with_capacity(k);
    for i in 0..k {
        let mut v = jac.row(i).to_vec();
        order.clear();
        order.extend((0..k).filter(|&j| j != i));
        order.shuffle(rng);
        for &j in &order {
            if sq[j] == 0.0 {
                continue;
            }
            let gj = jac.row(j);
            let p = dot(&v, gj);
            if p < 0.0 {
                axpy(-p / sq[j], gj, &mut v);
            }
        }
        for (di, vi) in d.iter_mut().zip(&v) {
            *di += vi;
        }
    }
    d.iter_mut().for_each(|x| *x /= k as f64);
    d
}
