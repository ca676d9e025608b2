//! Synthetic tables for experiments. The fact table has columns
//! `g` (group), `k` (join key) and `x` (nonnegative integer measure); the
//! optional `dim` table has `k` and an integer weight `w`.

use crate::engine::{BlockTable, EngineError, Store};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Zipf};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// x ~ U{1..100} per row.
    Uniform,
    /// x ~ 1 + ⌊Exp(mean 50)⌋ per row.
    Exponential,
    /// One exponential draw per block shared by all of its rows, and one
    /// Zipf join key per block: the adversarial layout for row-level CLT.
    BlockCorrelated,
}

impl std::str::FromStr for Distribution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "exponential" => Ok(Distribution::Exponential),
            "block_correlated" | "block-correlated" => Ok(Distribution::BlockCorrelated),
            _ => Err(format!("unknown distribution '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct JoinSpec {
    /// Distinct join keys (dim has `keys · fanout` rows).
    pub keys: usize,
    /// Zipf exponent of the fact-side key distribution.
    pub zipf_s: f64,
    /// Dim rows per key.
    pub fanout: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DataSpec {
    pub distribution: Distribution,
    pub rows: usize,
    pub block_size: u64,
    pub groups: usize,
    pub join: Option<JoinSpec>,
    pub seed: u64,
}

impl DataSpec {
    pub fn new(distribution: Distribution, rows: usize, block_size: u64, groups: usize) -> Self {
        DataSpec { distribution, rows, block_size, groups: groups.max(1), join: None, seed: 0 }
    }
}

fn exp_draw(rng: &mut ChaCha8Rng, exp: &Exp<f64>) -> i64 {
    1 + exp.sample(rng).floor() as i64
}

pub fn fact_table(spec: &DataSpec) -> Result<BlockTable, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let exp = Exp::new(1.0 / 50.0).unwrap();
    let zipf = match spec.join {
        Some(j) => Some(Zipf::new(j.keys.max(1) as f64, j.zipf_s).map_err(|e| EngineError::Invalid(format!("zipf: {e}")))?),
        None => None,
    };
    let key = |rng: &mut ChaCha8Rng| zipf.as_ref().map_or(0, |z| z.sample(rng) as i64 - 1);
    let (mut g, mut k, mut x) = (Vec::with_capacity(spec.rows), Vec::with_capacity(spec.rows), Vec::with_capacity(spec.rows));
    let b = spec.block_size.max(1) as usize;
    let (mut block_x, mut block_k) = (0, 0);
    for i in 0..spec.rows {
        g.push(rng.random_range(0..spec.groups) as i64);
        match spec.distribution {
            Distribution::Uniform => {
                x.push(rng.random_range(1..=100));
                k.push(key(&mut rng));
            }
            Distribution::Exponential => {
                x.push(exp_draw(&mut rng, &exp));
                k.push(key(&mut rng));
            }
            Distribution::BlockCorrelated => {
                if i % b == 0 {
                    block_x = exp_draw(&mut rng, &exp);
                    block_k = key(&mut rng);
                }
                x.push(block_x);
                k.push(block_k);
            }
        }
    }
    BlockTable::from_ints("fact", &[("g", g), ("k", k), ("x", x)], spec.block_size)
}

/// Every key in 0..keys, `fanout` times, with weights in 1..=10.
pub fn dim_table(j: &JoinSpec, seed: u64, block_size: u64) -> Result<BlockTable, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (mut k, mut w) = (Vec::new(), Vec::new());
    for key in 0..j.keys {
        for _ in 0..j.fanout.max(1) {
            k.push(key as i64);
            w.push(rng.random_range(1..=10));
        }
    }
    BlockTable::from_ints("dim", &[("k", k), ("w", w)], block_size)
}

pub fn build_store(spec: &DataSpec) -> Result<Store, EngineError> {
    let store = Store::in_memory();
    store.put(fact_table(spec)?, false)?;
    if let Some(j) = &spec.join {
        store.put(dim_table(j, spec.seed, spec.block_size)?, false)?;
    }
    Ok(store)
}
