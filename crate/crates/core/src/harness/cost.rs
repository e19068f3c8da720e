use serde::Serialize;

use crate::bcgs::VariantId;
use crate::comm::SyncStats;
use crate::error::Error;

/// Latency-bandwidth-compute model of one run:
/// `alpha * syncs + beta * words + gamma * flops / P`.
///
/// The defaults are illustrative cluster magnitudes, not measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostModel {
    /// Seconds per synchronization.
    pub alpha: f64,
    /// Seconds per word reduced.
    pub beta: f64,
    /// Seconds per flop on one process.
    pub gamma: f64,
    pub procs: usize,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            alpha: 1e-5,
            beta: 1e-9,
            gamma: 1e-10,
            procs: 1,
        }
    }
}

impl CostModel {
    pub fn alpha_only(alpha: f64) -> Self {
        Self {
            alpha,
            beta: 0.0,
            gamma: 0.0,
            procs: 1,
        }
    }

    pub fn with_procs(mut self, procs: usize) -> Self {
        self.procs = procs;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        let ok = [self.alpha, self.beta, self.gamma]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite());
        if !ok || self.procs == 0 {
            return Err(Error::Shape(format!(
                "cost model parameters must be finite and nonnegative with P >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn predicted_time(&self, cost: &Cost) -> f64 {
        self.alpha * cost.sync_count as f64
            + self.beta * cost.words_reduced as f64
            + self.gamma * cost.flops / self.procs as f64
    }
}

/// Communication and arithmetic volume of one factorization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cost {
    pub sync_count: u64,
    pub words_reduced: u64,
    /// Leading-order flops summed over all processes.
    pub flops: f64,
}

impl Cost {
    /// Measured counters combined with analytic flops.
    pub fn from_stats(stats: &SyncStats, flops: f64) -> Self {
        Self {
            sync_count: stats.sync_count,
            words_reduced: stats.words_reduced,
            flops,
        }
    }
}

/// `time(baseline) / time(candidate)`; above 1 means the candidate is
/// predicted faster.
pub fn predict_speedup(model: &CostModel, candidate: &Cost, baseline: &Cost) -> Result<f64, Error> {
    model.validate()?;
    let tc = model.predicted_time(candidate);
    let tb = model.predicted_time(baseline);
    if tc == 0.0 || tb == 0.0 {
        return Err(Error::Shape("predicted time is zero; speedup undefined".into()));
    }
    Ok(tb / tc)
}

struct Tally {
    n: f64,
    s: usize,
    syncs: u64,
    words: u64,
    flops: f64,
}

impl Tally {
    /// One fused product `L^T R` of widths `l` and `r`.
    fn gram(&mut self, l: usize, r: usize) {
        self.syncs += 1;
        self.words += (l * r) as u64;
        self.gram_flops(l, r);
    }

    fn gram_flops(&mut self, l: usize, r: usize) {
        self.flops += 2.0 * self.n * (l * r) as f64;
    }

    /// TSQR of one block, with `extra` words of a piggybacked product.
    fn tsqr(&mut self, extra: usize) {
        let s = self.s;
        self.syncs += 1;
        self.words += (s * s + extra) as u64;
        self.flops += 4.0 * self.n * (s * s) as f64;
    }

    fn cholqr(&mut self) {
        let s = self.s;
        self.gram(s, s);
        self.solve();
    }

    /// `Y -= Q S` with `Q` of width `w`.
    fn axpy(&mut self, w: usize) {
        self.flops += 2.0 * self.n * (w * self.s) as f64;
    }

    /// `U G^{-1}` for an `s x s` triangle.
    fn solve(&mut self) {
        self.flops += self.n * (self.s * self.s) as f64;
    }
}

/// Analytic synchronizations, reduced words and leading-order flops of a
/// variant on an `n x (q s)` input. Syncs and words agree exactly with what
/// the implementation records; flops ignore the `O(s^3)` small-matrix work.
pub fn analytic_cost(variant: VariantId, n: usize, s: usize, q: usize) -> Cost {
    analytic_cost_with(variant, n, s, q, crate::intraorth::IntraorthKind::Tsqr)
}

pub fn analytic_cost_with(
    variant: VariantId,
    n: usize,
    s: usize,
    q: usize,
    intra: crate::intraorth::IntraorthKind,
) -> Cost {
    use crate::intraorth::IntraorthKind;
    let mut t = Tally {
        n: n as f64,
        s,
        syncs: 0,
        words: 0,
        flops: 0.0,
    };
    let classic_intra = |t: &mut Tally| match intra {
        IntraorthKind::Tsqr => t.tsqr(0),
        IntraorthKind::CholQr => t.cholqr(),
    };
    if q <= 1 {
        if variant == VariantId::Bcgs {
            classic_intra(&mut t);
        } else {
            t.tsqr(0);
        }
        return t.finish();
    }
    match variant {
        VariantId::Bcgs => {
            classic_intra(&mut t);
            for k in 1..q {
                t.gram(k * s, s);
                t.axpy(k * s);
                classic_intra(&mut t);
            }
        }
        VariantId::BcgsIro => {
            t.tsqr(0);
            for k in 1..q {
                for _ in 0..2 {
                    t.gram(k * s, s);
                    t.axpy(k * s);
                    t.tsqr(0);
                }
            }
        }
        VariantId::BcgsPipIro => {
            t.tsqr(0);
            for k in 1..q {
                for _ in 0..2 {
                    t.gram(k * s + s, s);
                    t.axpy(k * s);
                    t.solve();
                }
            }
        }
        VariantId::BcgsIroP1s | VariantId::BcgsIroP2s | VariantId::BcgsIro1s => {
            let pyth = variant == VariantId::BcgsIroP1s;
            let first_pass = |t: &mut Tally, k: usize| {
                t.axpy(k * s);
                match variant {
                    VariantId::BcgsIroP1s => t.solve(),
                    VariantId::BcgsIroP2s => t.tsqr(0),
                    _ => {}
                }
            };
            let piggy = if pyth { 2 * s * s } else { s * s };
            t.tsqr(piggy);
            t.gram_flops(piggy / s, s);
            first_pass(&mut t, 1);
            for k in 1..q {
                let has_next = k + 1 < q;
                let left = k * s + s + if pyth && has_next { s } else { 0 };
                let right = if has_next { 2 * s } else { s };
                t.gram(left, right);
                t.axpy(k * s);
                t.solve();
                if has_next {
                    first_pass(&mut t, k + 1);
                }
            }
        }
    }
    t.finish()
}

impl Tally {
    fn finish(self) -> Cost {
        Cost {
            sync_count: self.syncs,
            words_reduced: self.words,
            flops: self.flops,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intraorth::IntraorthKind;

    fn speedup(model: &CostModel, v: VariantId, n: usize, s: usize, q: usize) -> f64 {
        predict_speedup(
            model,
            &analytic_cost(v, n, s, q),
            &analytic_cost(VariantId::BcgsIro, n, s, q),
        )
        .unwrap()
    }

    #[test]
    fn latency_bound_ratios() {
        let alpha = CostModel::alpha_only(1.0);
        assert_eq!(speedup(&alpha, VariantId::BcgsIroP1s, 1000, 4, 16), 3.8125);
        assert_eq!(speedup(&alpha, VariantId::BcgsIroP2s, 1000, 4, 16), 61.0 / 31.0);
        assert_eq!(speedup(&alpha, VariantId::BcgsIro, 1000, 4, 16), 1.0);
        let far = speedup(&alpha, VariantId::BcgsIroP1s, 1000, 4, 4096);
        assert!(far > 3.999 && far < 4.0);
    }

    #[test]
    fn sync_formulas() {
        for q in [1, 2, 5, 16] {
            for v in VariantId::ALL {
                assert_eq!(
                    analytic_cost(v, 100, 2, q).sync_count,
                    v.expected_syncs(q) as u64,
                    "{v} q={q}"
                );
            }
            let c = analytic_cost_with(VariantId::Bcgs, 100, 2, q, IntraorthKind::CholQr);
            assert_eq!(c.sync_count, VariantId::Bcgs.expected_syncs(q) as u64);
        }
    }

    #[test]
    fn zero_time_is_an_error() {
        let zero = Cost {
            sync_count: 0,
            words_reduced: 0,
            flops: 0.0,
        };
        let one = analytic_cost(VariantId::Bcgs, 10, 1, 2);
        assert!(predict_speedup(&CostModel::alpha_only(1.0), &zero, &one).is_err());
        assert!(CostModel {
            alpha: -1.0,
            ..CostModel::default()
        }
        .validate()
        .is_err());
        assert!(CostModel::default().with_procs(0).validate().is_err());
    }

    #[test]
    fn more_rows_shrink_speedups() {
        let model = CostModel::default();
        let s: Vec<f64> = [1_000, 10_000, 100_000, 1_000_000]
            .iter()
            .map(|&n| speedup(&model, VariantId::BcgsIroP1s, n, 4, 16))
            .collect();
        assert!(s.windows(2).all(|w| w[1] < w[0]), "{s:?}");
    }

    #[test]
    fn strong_scaling_grows_speedups() {
        let s: Vec<f64> = [1, 2, 4, 8, 16, 32]
            .iter()
            .map(|&p| {
                speedup(
                    &CostModel::default().with_procs(p),
                    VariantId::BcgsIroP1s,
                    100_000,
                    4,
                    16,
                )
            })
            .collect();
        assert!(s.windows(2).all(|w| w[1] > w[0]), "{s:?}");
    }

    #[test]
    fn weak_scaling_is_nondecreasing() {
        for v in [VariantId::BcgsIroP1s, VariantId::BcgsIro1s] {
            let s: Vec<f64> = [1, 2, 4, 8, 16]
                .iter()
                .map(|&p| speedup(&CostModel::default().with_procs(p), v, 10_000 * p, 4, 16))
                .collect();
            assert!(s.windows(2).all(|w| w[1] >= w[0]), "{v}: {s:?}");
        }
    }

    #[test]
    fn column_count_keeps_variant_order() {
        let model = CostModel {
            alpha: 0.0,
            beta: 0.0,
            gamma: 1.0,
            procs: 1,
        };
        let order = |m: usize| {
            let mut vs = VariantId::ALL.to_vec();
            let cost = |v: &VariantId| model.predicted_time(&analytic_cost(*v, 100_000, 4, m / 4));
            vs.sort_by(|a, b| cost(a).total_cmp(&cost(b)));
            vs
        };
        assert_eq!(order(64), order(128));
        assert_eq!(order(128), order(256));
    }
}
