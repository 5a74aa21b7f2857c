use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Coders × units grid of nominal codes; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityMatrix {
    values: Vec<Vec<Option<String>>>,
}

impl ReliabilityMatrix {
    pub fn new(values: Vec<Vec<Option<String>>>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::argument("reliability data needs at least two coders"));
        }
        let units = values[0].len();
        if values.iter().any(|row| row.len() != units) {
            return Err(Error::argument("reliability matrix rows differ in length"));
        }
        let m = ReliabilityMatrix { values };
        if m.pairable_units() == 0 {
            return Err(Error::argument(
                "no unit carries two or more values; agreement is undefined",
            ));
        }
        Ok(m)
    }

    /// Convenience constructor from string slices, empty string = missing.
    pub fn from_rows<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|c| {
                            let c = c.as_ref().trim();
                            (!c.is_empty()).then(|| c.to_string())
                        })
                        .collect()
                })
                .collect(),
        )
    }

    pub fn coders(&self) -> usize {
        self.values.len()
    }

    pub fn units(&self) -> usize {
        self.values[0].len()
    }

    fn unit_values(&self, u: usize) -> impl Iterator<Item = &str> {
        self.values.iter().filter_map(move |row| row[u].as_deref())
    }

    fn pairable_units(&self) -> usize {
        (0..self.units())
            .filter(|&u| self.unit_values(u).count() >= 2)
            .count()
    }
}

/// Read a headerless CSV: one row per coder, one column per unit.
pub fn load_reliability_csv(path: impl AsRef<Path>) -> Result<ReliabilityMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    ReliabilityMatrix::from_rows(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Set when every pairable value is identical, so expected disagreement
    /// is zero and alpha is defined as 1.
    pub degenerate: bool,
}

/// Nominal-level Krippendorff's alpha via the coincidence matrix.
pub fn krippendorff_alpha(m: &ReliabilityMatrix) -> AlphaResult {
    let mut categories: BTreeMap<&str, usize> = BTreeMap::new();
    for row in &m.values {
        for v in row.iter().flatten() {
            let next = categories.len();
            categories.entry(v.as_str()).or_insert(next);
        }
    }
    let k = categories.len();
    let mut coincidence = vec![0.0f64; k * k];
    for u in 0..m.units() {
        let vals: Vec<usize> = m.unit_values(u).map(|v| categories[v]).collect();
        let mu = vals.len();
        if mu < 2 {
            continue;
        }
        let w = 1.0 / (mu as f64 - 1.0);
        for (i, &a) in vals.iter().enumerate() {
            for (j, &b) in vals.iter().enumerate() {
                if i != j {
                    coincidence[a * k + b] += w;
                }
            }
        }
    }
    let marginals: Vec<f64> = (0..k)
        .map(|c| coincidence[c * k..(c + 1) * k].iter().sum())
        .collect();
    let n: f64 = marginals.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c * k + d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    if expected == 0.0 {
        return AlphaResult {
            alpha: 1.0,
            degenerate: true,
        };
    }
    AlphaResult {
        alpha: 1.0 - (n - 1.0) * observed / expected,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[&str]]) -> ReliabilityMatrix {
        let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
        ReliabilityMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn perfect_agreement_is_one() {
        let m = mat(&[&["a", "b", "a", "c"], &["a", "b", "a", "c"]]);
        let r = krippendorff_alpha(&m);
        assert_eq!(r.alpha, 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn crossed_disagreement() {
        // Coincidences: o(a,b) = o(b,a) = 2, n_a = n_b = 2, n = 4.
        // alpha = 1 - (n-1) * 4 / (2*2 + 2*2) = -0.5.
        let m = mat(&[&["a", "b"], &["b", "a"]]);
        assert!((krippendorff_alpha(&m).alpha + 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_identical_values_are_flagged() {
        let m = mat(&[&["a", "a"], &["a", "a"]]);
        let r = krippendorff_alpha(&m);
        assert_eq!(r.alpha, 1.0);
        assert!(r.degenerate);
    }

    #[test]
    fn reference_example_with_missing_values() {
        // Krippendorff's nominal example: 4 coders, 12 units, alpha ≈ 0.743.
        let m = mat(&[
            &["1", "2", "3", "3", "2", "1", "4", "1", "2", "", "", ""],
            &["1", "2", "3", "3", "2", "2", "4", "1", "2", "5", "", "3"],
            &["", "3", "3", "3", "2", "3", "4", "2", "2", "5", "1", ""],
            &["1", "2", "3", "3", "2", "4", "4", "1", "2", "5", "1", ""],
        ]);
        assert!((krippendorff_alpha(&m).alpha - 0.743).abs() < 5e-4);
    }

    #[test]
    fn rejects_unpairable_data() {
        let rows = vec![vec!["a", ""], vec!["", "b"]];
        assert!(ReliabilityMatrix::from_rows(&rows).is_err());
        assert!(ReliabilityMatrix::from_rows(&[vec!["a"]]).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_relabeling_and_coder_order(
            cells in prop::collection::vec(prop::collection::vec(0usize..4, 6), 2..5),
            perm_seed in 0usize..24,
        ) {
            let names = ["w", "x", "y", "z"];
            let mut perm = [0usize, 1, 2, 3];
            // derangement-ish permutation of category names
            perm.rotate_left(perm_seed % 4);
            if perm_seed % 2 == 1 { perm.swap(0, 3); }
            let rows: Vec<Vec<&str>> = cells.iter().map(|r| r.iter().map(|&c| names[c]).collect()).collect();
            let relabeled: Vec<Vec<&str>> = cells.iter().map(|r| r.iter().map(|&c| names[perm[c]]).collect()).collect();
            let mut reordered = rows.clone();
            reordered.reverse();
            let a = krippendorff_alpha(&ReliabilityMatrix::from_rows(&rows).unwrap()).alpha;
            let b = krippendorff_alpha(&ReliabilityMatrix::from_rows(&relabeled).unwrap()).alpha;
            let c = krippendorff_alpha(&ReliabilityMatrix::from_rows(&reordered).unwrap()).alpha;
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((a - c).abs() < 1e-12);
            prop_assert!(a <= 1.0 + 1e-12);
        }
    }
}
