// Extended Bell numbers B(a, b): the number of distinct partitions formed by
// allocating a new items when b nonempty clusters already exist.
//
// B(0, b) = 1 and B(a + 1, b) = b B(a, b) + B(a, b + 1); B(a, 0) is the
// ordinary Bell number.

use std::sync::RwLock;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};

/// Hard bound on `a + b` for table growth, keeping memory modest.
pub const BELL_CAP_SUM: usize = 256;

/// Triangular table of exact values `B(a, b)` for all `a + b <= max_sum`.
pub struct BellTable {
    max_sum: usize,
    // values[a][b], with row a holding b = 0..=(max_sum - a).
    values: Vec<Vec<BigUint>>,
}

impl BellTable {
    pub fn with_capacity(max_sum: usize) -> Self {
        let mut values: Vec<Vec<BigUint>> = Vec::with_capacity(max_sum + 1);
        values.push(vec![BigUint::one(); max_sum + 1]);
        for a in 0..max_sum {
            let width = max_sum - a; // b = 0..=(max_sum - a - 1)
            let mut row = Vec::with_capacity(width);
            for b in 0..width {
                let term = BigUint::from(b) * &values[a][b] + &values[a][b + 1];
                row.push(term);
            }
            values.push(row);
        }
        Self { max_sum, values }
    }

    pub fn max_sum(&self) -> usize {
        self.max_sum
    }

    pub fn get(&self, a: usize, b: usize) -> Option<&BigUint> {
        self.values.get(a).and_then(|row| row.get(b))
    }
}

static TABLE: RwLock<Option<BellTable>> = RwLock::new(None);

fn with_table<T>(a: usize, b: usize, f: impl Fn(&BellTable) -> T) -> Result<T> {
    let sum = a + b;
    if sum > BELL_CAP_SUM {
        return Err(Error::Capacity {
            context: "extended_bell",
            limit: BELL_CAP_SUM,
            got: sum,
        });
    }
    {
        let guard = TABLE.read().expect("bell table lock poisoned");
        if let Some(table) = guard.as_ref() {
            if table.max_sum() >= sum {
                return Ok(f(table));
            }
        }
    }
    let mut guard = TABLE.write().expect("bell table lock poisoned");
    let need = sum.clamp(32, BELL_CAP_SUM);
    let stale = guard.as_ref().map(|t| t.max_sum() < need).unwrap_or(true);
    if stale {
        *guard = Some(BellTable::with_capacity(need));
    }
    Ok(f(guard.as_ref().unwrap()))
}

/// Exact `B(a, b)` from the cached, monotonically grown table.
pub fn extended_bell(a: usize, b: usize) -> Result<BigUint> {
    with_table(a, b, |t| t.get(a, b).unwrap().clone())
}

/// The `n`-th Bell number, `B(n, 0)`.
pub fn bell(n: usize) -> Result<BigUint> {
    extended_bell(n, 0)
}

/// Natural log of `B(a, b)`, backed by the exact integer value.
pub fn log_extended_bell(a: usize, b: usize) -> Result<f64> {
    with_table(a, b, |t| ln_biguint(t.get(a, b).unwrap()))
}

fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 900 {
        // Comfortably within f64 range (2^900 is about 1e271).
        x.to_f64().expect("finite conversion").ln()
    } else {
        let shift = bits - 64;
        let top = (x >> shift).to_f64().expect("64-bit mantissa");
        top.ln() + (shift as f64) * std::f64::consts::LN_2
    }
}
