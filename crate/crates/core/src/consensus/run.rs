use std::io::Write;

use nalgebra::DVector;

use super::{ConsensusError, NoiseSchedule, WeightMatrix};
use crate::rng::seeded;

/// Full trajectory of one run: `x(k)`, `x⁺(k) = x(k) + θ(k)` and `θ(k)` for
/// `k = 0..=K`, with `x(k+1) = W x⁺(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusRun {
    pub w: WeightMatrix,
    pub x0: DVector<f64>,
    pub xs: Vec<DVector<f64>>,
    pub xs_plus: Vec<DVector<f64>>,
    pub thetas: Vec<DVector<f64>>,
    /// Mean of `x(0)`, summed with compensation.
    pub xbar: f64,
    pub seed: u64,
}

pub fn run(
    w: &WeightMatrix,
    x0: &[f64],
    schedule: &NoiseSchedule,
    k_max: usize,
    seed: u64,
) -> Result<ConsensusRun, ConsensusError> {
    let n = w.n();
    if x0.len() != n {
        return Err(ConsensusError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    if k_max == 0 {
        return Err(ConsensusError::InvalidConfig("K must be at least 1".into()));
    }
    schedule.validate()?;
    let mut rng = seeded(seed);
    let mut gen = schedule.generator(n);
    let x0 = DVector::from_column_slice(x0);
    let mut xs = Vec::with_capacity(k_max + 1);
    let mut xs_plus = Vec::with_capacity(k_max + 1);
    let mut thetas = Vec::with_capacity(k_max + 1);
    let mut x = x0.clone();
    for k in 0..=k_max {
        let theta = gen.next(k, &mut rng);
        let xp = &x + &theta;
        let next = w.apply(&xp);
        xs.push(std::mem::replace(&mut x, next));
        xs_plus.push(xp);
        thetas.push(theta);
    }
    Ok(ConsensusRun {
        w: w.clone(),
        xbar: compensated_sum(x0.iter().copied()) / n as f64,
        x0,
        xs,
        xs_plus,
        thetas,
        seed,
    })
}

/// Neumaier summation.
pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

impl ConsensusRun {
    pub fn n(&self) -> usize {
        self.x0.len()
    }

    /// Last recorded step `K`.
    pub fn k_max(&self) -> usize {
        self.xs.len() - 1
    }

    /// `‖x(k) − x̄·1‖₂ / √n`.
    pub fn average_error(&self, k: usize) -> f64 {
        let n = self.n() as f64;
        let ss = compensated_sum(self.xs[k].iter().map(|v| (v - self.xbar).powi(2)));
        (ss / n).sqrt()
    }

    /// `Σ_{l=0}^{k} W^(k−l) θ(l)`.
    pub fn cumulative_noise(&self, k: usize) -> DVector<f64> {
        let mut c = DVector::zeros(self.n());
        for theta in &self.thetas[..=k] {
            c = self.w.apply(&c) + theta;
        }
        c
    }

    /// Largest deviation between the recorded `x(k)` and
    /// `W^k x(0) + W·cumulative_noise(k−1)`.
    pub fn trajectory_residual(&self) -> f64 {
        let mut wk_x0 = self.x0.clone();
        let mut c = DVector::zeros(self.n());
        let mut worst = 0.0f64;
        for k in 0..=self.k_max() {
            let predicted = if k == 0 { self.x0.clone() } else { &wk_x0 + self.w.apply(&c) };
            worst = worst.max((&self.xs[k] - predicted).amax());
            c = self.w.apply(&c) + &self.thetas[k];
            wk_x0 = self.w.apply(&wk_x0);
        }
        worst
    }

    /// CSV with columns `k,node,x,x_plus,theta`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ConsensusError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "node", "x", "x_plus", "theta"])?;
        for k in 0..=self.k_max() {
            for i in 0..self.n() {
                w.write_record([
                    k.to_string(),
                    i.to_string(),
                    self.xs[k][i].to_string(),
                    self.xs_plus[k][i].to_string(),
                    self.thetas[k][i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::Graph;
    use crate::density::DensitySpec;

    fn ring(n: usize) -> WeightMatrix {
        WeightMatrix::metropolis(&Graph::ring(n).unwrap())
    }

    fn laplace_iid() -> NoiseSchedule {
        NoiseSchedule::Iid {
            density: DensitySpec::laplace(0.0, 1.0).unwrap(),
        }
    }

    #[test]
    fn complete_graph_averages_in_one_step() {
        let w = WeightMatrix::metropolis(&Graph::complete(4).unwrap());
        let r = run(&w, &[1.0, 2.0, 3.0, 10.0], &NoiseSchedule::None, 1, 0).unwrap();
        assert!(r.xs[1].iter().all(|&v| (v - 4.0).abs() < 1e-15));
        assert!(r.average_error(1) < 1e-15);
    }

    #[test]
    fn noiseless_ring_envelope() {
        let w = ring(10);
        let x0: Vec<f64> = (0..10).map(f64::from).collect();
        let r = run(&w, &x0, &NoiseSchedule::None, 200, 0).unwrap();
        let lambda = w.convergence_factor();
        let e0 = r.average_error(0);
        for k in 0..=200 {
            assert!(r.average_error(k) <= lambda.powi(k as i32) * e0 * (1.0 + 1e-6), "k={k}");
        }
        assert!(r.average_error(200) <= 1e-8);
        assert!(r.cumulative_noise(200).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_tracks_injected_noise() {
        let w = ring(7);
        let r = run(&w, &[3.0; 7], &laplace_iid(), 50, 9).unwrap();
        for k in 0..50 {
            let before = r.xs[k].mean() + r.thetas[k].mean();
            assert!((r.xs[k + 1].mean() - before).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_identity_holds() {
        let w = WeightMatrix::metropolis(&Graph::erdos_renyi(12, 0.4, 2).unwrap());
        let x0: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let r = run(&w, &x0, &laplace_iid(), 100, 5).unwrap();
        assert!(r.trajectory_residual() < 1e-10);
    }

    #[test]
    fn first_average_error_is_population_sd() {
        let r = run(&ring(4), &[1.0, 2.0, 3.0, 4.0], &NoiseSchedule::None, 1, 0).unwrap();
        assert!((r.average_error(0) - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn runs_are_deterministic() {
        let w = ring(5);
        let a = run(&w, &[0.0; 5], &laplace_iid(), 30, 77).unwrap();
        let b = run(&w, &[0.0; 5], &laplace_iid(), 30, 77).unwrap();
        assert_eq!(a, b);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca).unwrap().starts_with("k,node,x,x_plus,theta\n"));
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            run(&ring(5), &[0.0; 4], &NoiseSchedule::None, 3, 0),
            Err(ConsensusError::Dimension { expected: 5, got: 4 })
        ));
        assert!(run(&ring(5), &[0.0; 5], &NoiseSchedule::None, 0, 0).is_err());
    }
}
