//! A quick self-check of the library's core invariants, run by
//! `blockgs verify`.

use serde::Serialize;

use crate::bcgs::{factor_dense, BcgsOptions, VariantId};
use crate::comm::{run_spmd, SpmdConfig};
use crate::distblock::DistBlockMatrix;
use crate::intraorth::tsqr;

use super::cost::{analytic_cost, predict_speedup, CostModel};
use super::genmat::{gen_matrix, MatrixSpec};
use super::metrics::{loss_of_orthogonality, residual};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<String, String>) -> InvariantCheck {
    match outcome {
        Ok(detail) => InvariantCheck {
            name,
            passed: true,
            detail,
        },
        Err(detail) => InvariantCheck {
            name,
            passed: false,
            detail,
        },
    }
}

fn sync_table() -> Result<String, String> {
    let cfg = SpmdConfig::default();
    for q in [2, 4, 8] {
        let x = gen_matrix(&MatrixSpec::geometric(64, 2 * q, 2, 10.0, 1)).map_err(|e| e.to_string())?;
        for procs in [1, 4] {
            for v in VariantId::ALL {
                let f = factor_dense(v, &x, 2, procs, &cfg, BcgsOptions::default()).map_err(|e| e.to_string())?;
                let want = v.expected_syncs(q) as u64;
                if f.stats.sync_count != want {
                    return Err(format!(
                        "{v} q={q} P={procs}: {} syncs, expected {want}",
                        f.stats.sync_count
                    ));
                }
                let analytic = analytic_cost(v, 64, 2, q);
                if (analytic.sync_count, analytic.words_reduced) != (f.stats.sync_count, f.stats.words_reduced) {
                    return Err(format!("{v} q={q}: analytic cost disagrees with measured counters"));
                }
            }
        }
    }
    Ok("q in {2,4,8}, P in {1,4}, all variants".into())
}

fn factorization() -> Result<String, String> {
    let x = gen_matrix(&MatrixSpec::geometric(200, 16, 4, 1e2, 2)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for v in VariantId::ALL {
        let f = factor_dense(v, &x, 4, 3, &SpmdConfig::default(), BcgsOptions::default()).map_err(|e| e.to_string())?;
        let res = residual(&x, &f.q, f.r.as_dense()).map_err(|e| e.to_string())?.value;
        if res > 1e-12 || !f.r.is_well_formed() {
            return Err(format!(
                "{v}: residual {res:e}, R well formed: {}",
                f.r.is_well_formed()
            ));
        }
        worst = worst.max(res);
    }
    Ok(format!("worst relative residual {worst:.3e}"))
}

fn distribution_transparency() -> Result<String, String> {
    let x = gen_matrix(&MatrixSpec::geometric(90, 12, 3, 1e3, 3)).map_err(|e| e.to_string())?;
    for v in [VariantId::BcgsIroP1s, VariantId::BcgsIro] {
        let serial =
            factor_dense(v, &x, 3, 1, &SpmdConfig::default(), BcgsOptions::default()).map_err(|e| e.to_string())?;
        for procs in [2, 4, 8] {
            let f = factor_dense(v, &x, 3, procs, &SpmdConfig::default(), BcgsOptions::default())
                .map_err(|e| e.to_string())?;
            if !f.q.bitwise_eq(&serial.q) || !f.r.as_dense().bitwise_eq(serial.r.as_dense()) {
                return Err(format!("{v}: P={procs} differs from P=1"));
            }
        }
    }
    Ok("bitwise identical for P in {1,2,4,8}".into())
}

fn tsqr_stability() -> Result<String, String> {
    let x = gen_matrix(&MatrixSpec::geometric(256, 4, 4, 1e12, 4)).map_err(|e| e.to_string())?;
    let run = run_spmd(4, &SpmdConfig::default(), |c| {
        let d = DistBlockMatrix::distribute(&x, 4, c)?;
        let qr = tsqr(&d, c, "tsqr/verify")?;
        Ok::<_, crate::Error>(qr.q.gather(c)?)
    })
    .map_err(|e| e.to_string())?;
    let q = run
        .results
        .into_iter()
        .next()
        .expect("rank 0")
        .map_err(|e| e.to_string())?;
    let loo = loss_of_orthogonality(&q);
    if loo < 1e-13 {
        Ok(format!("loss of orthogonality {loo:.3e} at kappa 1e12"))
    } else {
        Err(format!("loss of orthogonality {loo:.3e} at kappa 1e12"))
    }
}

fn speedup_limits() -> Result<String, String> {
    let model = CostModel::alpha_only(1.0);
    let base = analytic_cost(VariantId::BcgsIro, 1000, 4, 16);
    let one = predict_speedup(&model, &analytic_cost(VariantId::BcgsIroP1s, 1000, 4, 16), &base)
        .map_err(|e| e.to_string())?;
    let two = predict_speedup(&model, &analytic_cost(VariantId::BcgsIroP2s, 1000, 4, 16), &base)
        .map_err(|e| e.to_string())?;
    if one == 61.0 / 16.0 && two == 61.0 / 31.0 {
        Ok(format!("q=16: one-sync {one}, two-sync {two:.6}"))
    } else {
        Err(format!("q=16: one-sync {one}, two-sync {two}"))
    }
}

/// Runs every check and reports each outcome.
pub fn run_invariants() -> Vec<InvariantCheck> {
    vec![
        check("sync-count table", sync_table()),
        check("factorization residual and R structure", factorization()),
        check("distribution transparency", distribution_transparency()),
        check("TSQR unconditional stability", tsqr_stability()),
        check("latency-bound speedup limits", speedup_limits()),
    ]
}
