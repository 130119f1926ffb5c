use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::aggregation::MixtureWeights;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "fractions")]
pub enum PartitionMode {
    /// Uniform shuffle dealt round-robin; site sizes differ by at most one.
    Iid,
    /// Site `j` receives exactly the rows of mode (label) `j`; needs `K` = number of classes.
    ByMode,
    /// Label `y` goes to site `y mod K`; needs `K ≤` number of classes.
    ByLabel,
    /// Shuffled, then split by the given fractions (largest-remainder rounding).
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    #[serde(flatten)]
    pub mode: PartitionMode,
    #[serde(default)]
    pub seed: u64,
}

impl PartitionPlan {
    pub fn new(mode: PartitionMode, seed: u64) -> Self {
        Self { mode, seed }
    }
}

/// Per-site private datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct SitedDataset {
    sites: Vec<LabeledDataset>,
}

impl SitedDataset {
    pub fn new(sites: Vec<LabeledDataset>) -> Result<Self> {
        let first = sites.first().ok_or_else(|| Error::InvalidArgument("at least one site required".into()))?;
        let (d, c) = (first.dim(), first.num_classes());
        if sites.iter().any(|s| s.dim() != d || s.num_classes() != c) {
            return Err(Error::InvalidArgument("sites disagree on dimension or class count".into()));
        }
        if sites.iter().all(LabeledDataset::is_empty) {
            return Err(Error::InvalidArgument("all sites are empty".into()));
        }
        Ok(Self { sites })
    }

    pub fn sites(&self) -> &[LabeledDataset] {
        &self.sites
    }

    pub fn into_sites(self) -> Vec<LabeledDataset> {
        self.sites
    }

    pub fn site(&self, j: usize) -> &LabeledDataset {
        &self.sites[j]
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.sites.iter().map(|s| s.len() as u64).collect()
    }

    pub fn total(&self) -> usize {
        self.sites.iter().map(LabeledDataset::len).sum()
    }

    /// `π_j = n_j / n`.
    pub fn pi(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.sites.iter().map(|s| s.len() as f64 / n).collect()
    }

    /// `π` plus per-site label distributions `ω_j(y)`.
    pub fn weights(&self) -> Result<MixtureWeights> {
        let class_counts: Vec<Vec<u64>> = self.sites.iter().map(LabeledDataset::class_counts).collect();
        MixtureWeights::from_counts(&self.counts())?.with_class_counts(&class_counts)
    }

    /// All sites concatenated in site order.
    pub fn merged(&self) -> LabeledDataset {
        let d = self.sites[0].dim();
        let mut data = Vec::with_capacity(self.total() * d);
        let mut labels = Vec::with_capacity(self.total());
        for s in &self.sites {
            data.extend_from_slice(s.rows().data());
            labels.extend_from_slice(s.labels());
        }
        let n = labels.len();
        LabeledDataset::new(crate::autodiff::Tensor::new(vec![n, d], data).expect("sized"), labels, self.sites[0].num_classes())
            .expect("labels validated per site")
    }
}

pub fn partition(dataset: &LabeledDataset, plan: &PartitionPlan, k: usize) -> Result<SitedDataset> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let n = dataset.len();
    let classes = dataset.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut shuffled: Vec<usize> = (0..n).collect();
    let assignment: Vec<Vec<usize>> = match &plan.mode {
        PartitionMode::Iid => {
            shuffled.shuffle(&mut rng);
            let mut sites = vec![Vec::new(); k];
            for (pos, &i) in shuffled.iter().enumerate() {
                sites[pos % k].push(i);
            }
            sites
        }
        PartitionMode::ByMode | PartitionMode::ByLabel => {
            if matches!(plan.mode, PartitionMode::ByMode) && k != classes {
                return Err(Error::InvalidArgument(format!("by-mode partition needs K = {classes} modes, got {k}")));
            }
            if k > classes {
                return Err(Error::InvalidArgument(format!("by-label partition needs K <= {classes} classes, got {k}")));
            }
            let mut sites = vec![Vec::new(); k];
            for (i, &y) in dataset.labels().iter().enumerate() {
                sites[y as usize % k].push(i);
            }
            sites
        }
        PartitionMode::Custom(fractions) => {
            if fractions.len() != k {
                return Err(Error::InvalidArgument(format!("{} fractions for K = {k}", fractions.len())));
            }
            if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument("fractions must be nonnegative and sum to 1".into()));
            }
            shuffled.shuffle(&mut rng);
            let sizes = largest_remainder(fractions, n);
            let mut sites = Vec::with_capacity(k);
            let mut start = 0;
            for s in sizes {
                sites.push(shuffled[start..start + s].to_vec());
                start += s;
            }
            sites
        }
    };
    SitedDataset::new(assignment.iter().map(|idx| dataset.select(idx)).collect())
}

fn largest_remainder(fractions: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = n - sizes.iter().sum::<usize>();
    for &j in order.iter().take(short) {
        sizes[j] += 1;
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_gaussian_mixture, GaussianMixtureSpec};

    fn toy() -> LabeledDataset {
        gen_gaussian_mixture(&GaussianMixtureSpec::toy(250), 4).unwrap()
    }

    #[test]
    fn by_mode_sites_hold_one_label() {
        let sited = partition(&toy(), &PartitionPlan::new(PartitionMode::ByMode, 0), 4).unwrap();
        for (j, s) in sited.sites().iter().enumerate() {
            assert_eq!(s.len(), 250);
            assert!(s.labels().iter().all(|&y| y as usize == j));
        }
        assert!(partition(&toy(), &PartitionPlan::new(PartitionMode::ByMode, 0), 3).is_err());
    }

    #[test]
    fn single_site_holds_everything() {
        let ds = toy();
        let sited = partition(&ds, &PartitionPlan::new(PartitionMode::Iid, 0), 1).unwrap();
        assert_eq!(sited.pi(), vec![1.0]);
        assert_eq!(sited.site(0).len(), ds.len());
    }

    #[test]
    fn custom_fractions() {
        let plan = PartitionPlan::new(PartitionMode::Custom(vec![0.5, 0.25, 0.25]), 3);
        let sited = partition(&toy(), &plan, 3).unwrap();
        assert_eq!(sited.counts(), vec![500, 250, 250]);
        assert!(partition(&toy(), &PartitionPlan::new(PartitionMode::Custom(vec![0.5, 0.6]), 0), 2).is_err());
        assert!(partition(&toy(), &PartitionPlan::new(PartitionMode::Custom(vec![1.0]), 0), 2).is_err());
    }

    #[test]
    fn remainders_fill_exactly() {
        assert_eq!(largest_remainder(&[1.0 / 3.0; 3], 10).iter().sum::<usize>(), 10);
        assert_eq!(largest_remainder(&[0.7, 0.3], 3), vec![2, 1]);
    }

    #[test]
    fn plan_toml() {
        let plan: PartitionPlan = toml::from_str("mode = \"by-mode\"\nseed = 5").unwrap();
        assert_eq!(plan, PartitionPlan::new(PartitionMode::ByMode, 5));
        let plan: PartitionPlan = toml::from_str("mode = \"custom\"\nfractions = [0.5, 0.5]").unwrap();
        assert_eq!(plan.mode, PartitionMode::Custom(vec![0.5, 0.5]));
    }
}
