use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::Serialize;

use crate::dense::{householder_qr, DenseMatrix};
use crate::error::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    /// `U diag(sigma) V^T` with log-spaced singular values from 1 to `1/kappa`.
    #[default]
    Geometric,
    /// Independent standard normal entries; `kappa` is ignored.
    Gaussian,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Geometric => "geometric",
            Distribution::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "geometric" | "geometric-singular-values" => Ok(Distribution::Geometric),
            "gaussian" | "random-gaussian" => Ok(Distribution::Gaussian),
            other => Err(format!(
                "unknown distribution '{other}' (expected geometric or gaussian)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MatrixSpec {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub kappa: f64,
    pub seed: u64,
    pub distribution: Distribution,
}

impl MatrixSpec {
    pub fn geometric(n: usize, m: usize, s: usize, kappa: f64, seed: u64) -> Self {
        Self {
            n,
            m,
            s,
            kappa,
            seed,
            distribution: Distribution::Geometric,
        }
    }

    /// Number of block columns.
    pub fn q(&self) -> usize {
        self.m / self.s.max(1)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.s == 0 || !self.m.is_multiple_of(self.s) {
            return Err(Error::Shape(format!(
                "block width {} does not divide m = {}",
                self.s, self.m
            )));
        }
        if self.n < self.m {
            return Err(Error::Shape(format!("n = {} is smaller than m = {}", self.n, self.m)));
        }
        if self.kappa.is_nan() || self.kappa < 1.0 || self.kappa.is_infinite() {
            return Err(Error::Shape(format!(
                "kappa must be a finite number >= 1, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Builds the test matrix described by `spec`. The same spec always gives
/// the same bits.
pub fn gen_matrix(spec: &MatrixSpec) -> Result<DenseMatrix, Error> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.m);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal =
        |rows: usize, cols: usize| DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    match spec.distribution {
        Distribution::Gaussian => Ok(normal(n, m)),
        Distribution::Geometric => {
            let (u, _) = householder_qr(&normal(n, m))?;
            let (v, _) = householder_qr(&normal(m, m))?;
            let sigma: Vec<f64> = (0..m)
                .map(|i| {
                    if m == 1 {
                        1.0
                    } else {
                        spec.kappa.powf(-(i as f64) / (m - 1) as f64)
                    }
                })
                .collect();
            Ok(u.matmul(&DenseMatrix::diagonal(&sigma))?.matmul(&v.transpose())?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::condition_number;

    #[test]
    fn unit_kappa_is_orthonormal() {
        let x = gen_matrix(&MatrixSpec::geometric(60, 8, 2, 1.0, 3)).unwrap();
        let k = condition_number(&x).unwrap();
        assert!((1.0..=1.0001).contains(&k), "{k}");
    }

    #[test]
    fn hits_target_condition_number() {
        let x = gen_matrix(&MatrixSpec::geometric(500, 40, 4, 1e6, 7)).unwrap();
        let k = condition_number(&x).unwrap();
        assert!((0.95e6..=1.05e6).contains(&k), "{k:e}");
    }

    #[test]
    fn deterministic_per_seed() {
        for distribution in [Distribution::Geometric, Distribution::Gaussian] {
            let spec = MatrixSpec {
                distribution,
                ..MatrixSpec::geometric(30, 6, 3, 1e3, 11)
            };
            assert!(gen_matrix(&spec).unwrap().bitwise_eq(&gen_matrix(&spec).unwrap()));
            let other = MatrixSpec { seed: 12, ..spec };
            assert!(!gen_matrix(&spec).unwrap().bitwise_eq(&gen_matrix(&other).unwrap()));
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(gen_matrix(&MatrixSpec::geometric(5, 8, 2, 10.0, 1)).is_err());
        assert!(gen_matrix(&MatrixSpec::geometric(20, 8, 3, 10.0, 1)).is_err());
        assert!(gen_matrix(&MatrixSpec::geometric(20, 8, 2, 0.5, 1)).is_err());
        assert_eq!(
            "random-gaussian".parse::<Distribution>().unwrap(),
            Distribution::Gaussian
        );
        assert!("uniform".parse::<Distribution>().is_err());
    }
}
