use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tabular::FeatureTable;

/// Seeded train/test split. With `stratify`, each binary class contributes
/// `round(n_class · test_fraction)` rows to the test side. Both sides keep
/// the input row order.
pub fn train_test_split(
    table: &FeatureTable,
    test_fraction: f64,
    stratify: bool,
    seed: u64,
) -> Result<(FeatureTable, FeatureTable)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction {test_fraction} not in (0, 1)"
        )));
    }
    let groups: Vec<Vec<usize>> = if stratify {
        let y = table.binary_labels()?;
        [0u8, 1]
            .iter()
            .map(|&c| (0..y.len()).filter(|&i| y[i] == c).collect())
            .collect()
    } else {
        vec![(0..table.n_rows()).collect()]
    };

    let mut test = Vec::new();
    for (g, mut members) in groups.into_iter().enumerate() {
        let take = (members.len() as f64 * test_fraction).round() as usize;
        members.shuffle(&mut substream(seed, g as u64));
        test.extend_from_slice(&members[..take]);
    }
    test.sort_unstable();
    let mut in_test = vec![false; table.n_rows()];
    for &i in &test {
        in_test[i] = true;
    }
    let train: Vec<usize> = (0..table.n_rows()).filter(|&i| !in_test[i]).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "test_fraction {test_fraction} leaves an empty split of {} rows",
            table.n_rows()
        )));
    }
    Ok((table.select_rows(&train), table.select_rows(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::ClassLabel;

    fn table(n0: usize, n1: usize) -> FeatureTable {
        let rows: Vec<Vec<f64>> = (0..n0 + n1).map(|i| vec![i as f64]).collect();
        let labels = (0..n0 + n1)
            .map(|i| ClassLabel {
                raw: String::new(),
                binary: Some(u8::from(i >= n0)),
            })
            .collect();
        FeatureTable::from_rows(vec!["id".into()], &rows, "Label", labels).unwrap()
    }

    #[test]
    fn stratified_quarter() {
        let t = table(2000, 2000);
        let (train, test) = train_test_split(&t, 0.25, true, 1).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (3000, 1000));
        let ones = test
            .binary_labels()
            .unwrap()
            .iter()
            .filter(|&&b| b == 1)
            .count();
        assert!((499..=501).contains(&ones));
    }

    #[test]
    fn union_is_input_multiset() {
        let t = table(37, 11);
        let (a, b) = train_test_split(&t, 0.3, true, 9).unwrap();
        let mut ids: Vec<f64> = a.column("id").unwrap().to_vec();
        ids.extend(b.column("id").unwrap());
        ids.sort_by(f64::total_cmp);
        assert_eq!(ids, t.column("id").unwrap());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let t = table(50, 50);
        let a = train_test_split(&t, 0.2, false, 4).unwrap();
        let b = train_test_split(&t, 0.2, false, 4).unwrap();
        let c = train_test_split(&t, 0.2, false, 5).unwrap();
        assert_eq!(a.1.rows(), b.1.rows());
        assert_ne!(a.1.rows(), c.1.rows());
    }

    #[test]
    fn empty_side_is_error() {
        let t = table(1, 1);
        assert!(train_test_split(&t, 0.1, false, 0).is_err());
        assert!(train_test_split(&t, 1.0, false, 0).is_err());
    }
}
