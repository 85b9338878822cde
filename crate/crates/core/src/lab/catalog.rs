//! Test mixtures shared by the verifier suite and endpoint checks.

use serde::{Deserialize, Serialize};

use crate::mixture::IsotropicGaussianMixture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogName {
    /// Single Gaussians only.
    Gaussian,
    Full,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub law: IsotropicGaussianMixture,
}

fn entry(name: &'static str, dim: usize, comps: Vec<(f64, Vec<f64>, f64)>) -> CatalogEntry {
    CatalogEntry {
        name,
        law: IsotropicGaussianMixture::new(dim, comps).expect("catalog mixtures are valid"),
    }
}

pub fn catalog(name: CatalogName) -> Vec<CatalogEntry> {
    let mut out = vec![
        entry("single_gaussian_1", 1, vec![(1.0, vec![0.0], 1.0)]),
        entry("single_gaussian_0.5", 1, vec![(1.0, vec![0.0], 0.25)]),
        entry("single_gaussian_0.1", 1, vec![(1.0, vec![0.0], 0.01)]),
    ];
    if name == CatalogName::Full {
        out.extend([
            entry("two_gaussian", 1, vec![(0.5, vec![-0.5], 1e-4), (0.5, vec![0.5], 1e-4)]),
            entry("asymmetric", 1, vec![(0.2, vec![-2.0], 0.25), (0.8, vec![1.0], 0.04)]),
            entry(
                "planar",
                2,
                vec![
                    (0.5, vec![0.0, 0.0], 0.1),
                    (0.3, vec![2.0, -1.0], 0.05),
                    (0.2, vec![-1.5, 1.5], 0.2),
                ],
            ),
        ]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_catalog_is_a_prefix_of_full() {
        let g = catalog(CatalogName::Gaussian);
        let f = catalog(CatalogName::Full);
        assert_eq!(g.len(), 3);
        assert!(f.len() > g.len());
        for (a, b) in g.iter().zip(&f) {
            assert_eq!(a.name, b.name);
        }
        assert!(g.iter().all(|e| e.law.components().len() == 1));
    }
}
