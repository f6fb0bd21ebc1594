use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::PrecipDatabase;
use crate::error::{Error, Result};

/// Default train/validation/test fractions.
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.70, 0.15, 0.15);

/// Record positions (into the source database) of each partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded permutation split. Validation and test get `floor(N * f)` records;
/// train takes the remainder.
pub fn split_indices(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<SplitIndices> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) {
        return Err(Error::Config(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    if ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must sum to 1, got {}",
            ft + fv + fs
        )));
    }
    // The epsilon absorbs representation error such as 100 * 0.15 = 15.000000000000002
    // or 10 * 0.1 landing just under 1.
    let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let n_val = floor(fv);
    let n_test = floor(fs);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = perm.split_off(n - n_test);
    let val = perm.split_off(perm.len() - n_val);
    Ok(SplitIndices {
        train: perm,
        val,
        test,
    })
}

pub fn split_database(
    db: &PrecipDatabase,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(PrecipDatabase, PrecipDatabase, PrecipDatabase)> {
    let idx = split_indices(db.len(), fractions, seed)?;
    Ok((db.subset(&idx.train), db.subset(&idx.val), db.subset(&idx.test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fractions_on_100() {
        let s = split_indices(100, DEFAULT_FRACTIONS, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 15, 15));
    }

    #[test]
    fn floor_arithmetic_on_10() {
        let s = split_indices(10, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        let s = split_indices(7, (0.7, 0.15, 0.15), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (5, 1, 1));
    }

    #[test]
    fn bad_fractions_rejected() {
        let eps = 1e-6;
        assert!(matches!(
            split_indices(10, (1.0, eps, eps), 0),
            Err(Error::Config(_))
        ));
        assert!(split_indices(10, (1.0, 0.0, 0.0), 0).is_err());
        assert!(split_indices(10, (0.5, 0.6, -0.1), 0).is_err());
    }

    #[test]
    fn seeded_determinism_and_partition() {
        let a = split_indices(500, DEFAULT_FRACTIONS, 42).unwrap();
        let b = split_indices(500, DEFAULT_FRACTIONS, 42).unwrap();
        assert_eq!(a, b);
        let c = split_indices(500, DEFAULT_FRACTIONS, 43).unwrap();
        assert_ne!(a, c);
        assert_eq!(
            (a.train.len(), a.val.len(), a.test.len()),
            (c.train.len(), c.val.len(), c.test.len())
        );

        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
    }
}
