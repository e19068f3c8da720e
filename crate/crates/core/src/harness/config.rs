//! Benchmark configuration: a flat `key = value` text format where any
//! numeric key may hold a comma-separated sweep list.
//!
//! ```text
//! # strong scaling of the one-sync variant against BCGSI+
//! variants = bcgsi+, bcgsi+p-1s
//! n = 4096
//! m = 64
//! s = 4
//! procs = 1, 2, 4, 8, 16
//! kappa = 1e3
//! ```
//!
//! Keys: `variants`, `n` or `rows_per_proc` (weak scaling, `n = rows_per_proc * P`),
//! `m`, `s`, `procs`, `kappa`, `seed`, `seeds`, `distribution`
//! (`geometric` | `gaussian`), `mode` (`run` | `model`), `baseline`
//! (`cell`: BCGSI+ at the same block width; `cgs`: BCGSI+ with `s = 1`),
//! `reduction` (`rank-ordered` | `tree`), `intra` (`tsqr` | `cholqr`, classic
//! BCGS only), `cost.alpha`, `cost.beta`, `cost.gamma`. Blank lines and
//! lines starting with `#` are ignored; unknown keys are errors.

use std::str::FromStr;

use crate::bcgs::VariantId;
use crate::comm::Reduction;
use crate::intraorth::IntraorthKind;

use super::cost::CostModel;
use super::genmat::Distribution;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    /// 1-based line number, 0 for problems with the file as a whole.
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BenchMode {
    /// Factor every cell and measure it.
    #[default]
    Run,
    /// Evaluate the analytic cost model only.
    Model,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Baseline {
    /// BCGSI+ with the cell's own block width.
    #[default]
    Cell,
    /// BCGSI+ with block width 1, i.e. column-wise CGSI+.
    Cgs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub variants: Vec<VariantId>,
    pub n: Vec<usize>,
    pub rows_per_proc: Vec<usize>,
    pub m: Vec<usize>,
    pub s: Vec<usize>,
    pub procs: Vec<usize>,
    pub kappa: Vec<f64>,
    pub seed: u64,
    pub seeds: usize,
    pub distribution: Distribution,
    pub mode: BenchMode,
    pub baseline: Baseline,
    pub reduction: Reduction,
    pub intra: IntraorthKind,
    pub cost: CostModel,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            variants: VariantId::ALL.to_vec(),
            n: Vec::new(),
            rows_per_proc: Vec::new(),
            m: vec![32],
            s: vec![4],
            procs: vec![1],
            kappa: vec![1e2],
            seed: 1,
            seeds: 3,
            distribution: Distribution::Geometric,
            mode: BenchMode::Run,
            baseline: Baseline::Cell,
            reduction: Reduction::RankOrdered,
            intra: IntraorthKind::Tsqr,
            cost: CostModel::default(),
        }
    }
}

/// One point of the sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub variant: VariantId,
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub procs: usize,
    pub kappa: f64,
}

fn list<T: FromStr>(value: &str, line: usize, key: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let items: Result<Vec<T>, _> = value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<T>().map_err(|e| ConfigError {
                line,
                message: format!("{key}: cannot parse '{v}': {e}"),
            })
        })
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(ConfigError {
            line,
            message: format!("{key}: empty value"),
        });
    }
    Ok(items)
}

fn single<T: FromStr>(value: &str, line: usize, key: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let mut items = list::<T>(value, line, key)?;
    if items.len() != 1 {
        return Err(ConfigError {
            line,
            message: format!("{key} takes a single value"),
        });
    }
    Ok(items.pop().expect("one item"))
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = BenchConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            let (key, value) = (key.trim().to_ascii_lowercase(), value.trim());
            match key.as_str() {
                "variants" | "variant" => cfg.variants = list(value, line, &key)?,
                "n" => cfg.n = list(value, line, &key)?,
                "rows_per_proc" => cfg.rows_per_proc = list(value, line, &key)?,
                "m" => cfg.m = list(value, line, &key)?,
                "s" => cfg.s = list(value, line, &key)?,
                "procs" | "p" => cfg.procs = list(value, line, &key)?,
                "kappa" => cfg.kappa = list(value, line, &key)?,
                "seed" => cfg.seed = single(value, line, &key)?,
                "seeds" => cfg.seeds = single(value, line, &key)?,
                "distribution" => cfg.distribution = single(value, line, &key)?,
                "reduction" => cfg.reduction = single(value, line, &key)?,
                "intra" => cfg.intra = single(value, line, &key)?,
                "mode" => {
                    cfg.mode = match value.to_ascii_lowercase().as_str() {
                        "run" => BenchMode::Run,
                        "model" => BenchMode::Model,
                        other => {
                            return Err(ConfigError {
                                line,
                                message: format!("mode must be run or model, got '{other}'"),
                            })
                        }
                    }
                }
                "baseline" => {
                    cfg.baseline = match value.to_ascii_lowercase().as_str() {
                        "cell" | "bcgsi+" => Baseline::Cell,
                        "cgs" | "cgsi+" => Baseline::Cgs,
                        other => {
                            return Err(ConfigError {
                                line,
                                message: format!("baseline must be cell or cgs, got '{other}'"),
                            })
                        }
                    }
                }
                "cost.alpha" => cfg.cost.alpha = single(value, line, &key)?,
                "cost.beta" => cfg.cost.beta = single(value, line, &key)?,
                "cost.gamma" => cfg.cost.gamma = single(value, line, &key)?,
                other => {
                    return Err(ConfigError {
                        line,
                        message: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let whole = |message: String| ConfigError { line: 0, message };
        if self.n.is_empty() == self.rows_per_proc.is_empty() {
            return Err(whole("exactly one of 'n' and 'rows_per_proc' must be given".into()));
        }
        if self.seeds == 0 {
            return Err(whole("seeds must be at least 1".into()));
        }
        if self.procs.contains(&0) {
            return Err(whole("procs must be at least 1".into()));
        }
        for &m in &self.m {
            for &s in &self.s {
                if s == 0 || m % s != 0 {
                    return Err(whole(format!("block width {s} does not divide m = {m}")));
                }
            }
        }
        if self.kappa.iter().any(|k| k.is_nan() || *k < 1.0 || k.is_infinite()) {
            return Err(whole("kappa values must be finite and >= 1".into()));
        }
        self.cost.validate().map_err(|e| whole(e.to_string()))?;
        Ok(())
    }

    /// Every cell of the sweep in report order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        let rows: Vec<(usize, bool)> = if self.n.is_empty() {
            self.rows_per_proc.iter().map(|&r| (r, true)).collect()
        } else {
            self.n.iter().map(|&n| (n, false)).collect()
        };
        for &(rows, per_proc) in &rows {
            for &m in &self.m {
                for &s in &self.s {
                    for &procs in &self.procs {
                        for &kappa in &self.kappa {
                            for &variant in &self.variants {
                                let n = if per_proc { rows * procs } else { rows };
                                out.push(Cell {
                                    variant,
                                    n,
                                    m,
                                    s,
                                    procs,
                                    kappa,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sweeps_and_defaults() {
        let cfg = BenchConfig::parse(
            "# comment\nvariants = BCGSI+, bcgsi+p-1s\nn = 100, 200\nm = 8\ns = 2,4\nprocs=1,4\nkappa = 1e3\ncost.alpha = 2e-5\n",
        )
        .unwrap();
        assert_eq!(cfg.variants, vec![VariantId::BcgsIro, VariantId::BcgsIroP1s]);
        assert_eq!(cfg.seeds, 3);
        assert_eq!(cfg.cost.alpha, 2e-5);
        assert_eq!(cfg.cells().len(), 2 * 2 * 2 * 2);
        assert_eq!(cfg.cells()[0].n, 100);
    }

    #[test]
    fn weak_scaling_rows() {
        let cfg = BenchConfig::parse("rows_per_proc = 50\nm = 4\ns = 2\nprocs = 1, 3\nvariants = bcgs").unwrap();
        let ns: Vec<usize> = cfg.cells().iter().map(|c| c.n).collect();
        assert_eq!(ns, vec![50, 150]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = BenchConfig::parse("n = 10\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = BenchConfig::parse("n = 10\nvariants = nope\n").unwrap_err();
        assert!(e.message.contains("unknown variant"));
        let e = BenchConfig::parse("n = 10\nm = 10\ns = 4\n").unwrap_err();
        assert_eq!(e.line, 0);
        assert!(BenchConfig::parse("m = 4").is_err());
        assert!(BenchConfig::parse("n = 10\njust words").is_err());
    }
}
