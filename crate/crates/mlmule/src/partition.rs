//! Synthetic dataset generation and data partitioning schemes.
//!
//! All partitioners are pure functions of their inputs plus an explicit
//! RNG, so runs with independent RNGs can execute in parallel.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::worldsim::{SpaceId, World, SPACES_PER_AREA};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub superclasses: usize,
    pub subclasses_per_super: usize,
    pub samples_per_subclass: usize,
    pub feature_dim: usize,
    pub sigma: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            superclasses: 2,
            subclasses_per_super: 5,
            samples_per_subclass: 500,
            feature_dim: 8,
            sigma: 0.3,
        }
    }
}

impl SynthSpec {
    pub fn n_subclasses(&self) -> usize {
        self.superclasses * self.subclasses_per_super
    }
}

/// One Gaussian cluster per subclass, means laid out on a unit-pitch 2D
/// grid (remaining feature dimensions are centered noise), so clusters
/// stay linearly separable for sigma well below the grid pitch.
pub fn synth_dataset(spec: &SynthSpec, rng: &mut SimRng) -> Result<LabeledDataset> {
    if spec.feature_dim < 2 {
        return Err(Error::config("feature_dim must be >= 2"));
    }
    if spec.sigma <= 0.0 {
        return Err(Error::config("sigma must be > 0"));
    }
    if spec.superclasses == 0 || spec.subclasses_per_super == 0 {
        return Err(Error::config("class hierarchy must be non-empty"));
    }

    let k = spec.n_subclasses();
    let grid = (k as f64).sqrt().ceil() as usize;
    let normal = Normal::new(0.0, spec.sigma).map_err(|e| Error::config(e.to_string()))?;

    let n = k * spec.samples_per_subclass;
    let mut features = Vec::with_capacity(n * spec.feature_dim);
    let mut labels = Vec::with_capacity(n);
    for subclass in 0..k {
        let mx = (subclass % grid) as f64;
        let my = (subclass / grid) as f64;
        for _ in 0..spec.samples_per_subclass {
            features.push(mx + normal.sample(rng));
            features.push(my + normal.sample(rng));
            for _ in 2..spec.feature_dim {
                features.push(normal.sample(rng));
            }
            labels.push(subclass);
        }
    }

    let hierarchy = (0..k).map(|s| s / spec.subclasses_per_super).collect();
    LabeledDataset::new(features, spec.feature_dim, labels, k, Some(hierarchy))
}

/// Disjoint owner -> sample-index lists covering the assigned samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionAssignment {
    owners: Vec<Vec<usize>>,
}

impl PartitionAssignment {
    pub fn new(owners: Vec<Vec<usize>>) -> Self {
        PartitionAssignment { owners }
    }

    pub fn n_owners(&self) -> usize {
        self.owners.len()
    }

    pub fn samples(&self, owner: usize) -> &[usize] {
        &self.owners[owner]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.owners.iter().map(Vec::len).collect()
    }

    /// Checks that every index in `0..n_samples` appears exactly once.
    pub fn check_conservation(&self, n_samples: usize) -> Result<()> {
        let mut seen = vec![false; n_samples];
        for list in &self.owners {
            for &i in list {
                if i >= n_samples {
                    return Err(Error::validation(format!("index {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::validation(format!("index {i} assigned twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::validation(format!("index {missing} unassigned")));
        }
        Ok(())
    }
}

/// Random permutation split into near-equal chunks (sizes differ by at
/// most one).
pub fn partition_iid(
    ds: &LabeledDataset,
    n_owners: usize,
    rng: &mut SimRng,
) -> Result<PartitionAssignment> {
    if n_owners == 0 {
        return Err(Error::config("need at least one owner"));
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    indices.shuffle(rng);
    let base = ds.len() / n_owners;
    let extra = ds.len() % n_owners;
    let mut owners = Vec::with_capacity(n_owners);
    let mut at = 0;
    for o in 0..n_owners {
        let take = base + usize::from(o < extra);
        owners.push(indices[at..at + take].to_vec());
        at += take;
    }
    Ok(PartitionAssignment::new(owners))
}

/// Per-class ownership proportions drawn from a symmetric Dirichlet.
/// Smaller alpha concentrates each class on fewer owners. Draws that
/// leave an owner empty are retried up to 100 times, and any still-empty
/// owner then receives one sample moved from the largest owner.
pub fn partition_dirichlet(
    ds: &LabeledDataset,
    n_owners: usize,
    alpha: f64,
    rng: &mut SimRng,
) -> Result<PartitionAssignment> {
    if n_owners == 0 {
        return Err(Error::config("need at least one owner"));
    }
    if alpha <= 0.0 {
        return Err(Error::config("dirichlet alpha must be > 0"));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for i in 0..ds.len() {
        by_class[ds.label(i)].push(i);
    }

    let mut owners: Vec<Vec<usize>> = Vec::new();
    for attempt in 0..100 {
        owners = vec![Vec::new(); n_owners];
        for class_samples in &by_class {
            if class_samples.is_empty() {
                continue;
            }
            let props = dirichlet_proportions(n_owners, alpha, rng);
            for &i in class_samples {
                owners[sample_categorical(&props, rng)].push(i);
            }
        }
        if owners.iter().all(|o| !o.is_empty()) {
            break;
        }
        if attempt == 99 {
            // Move one sample from the largest owner into each empty one.
            for empty in 0..n_owners {
                if owners[empty].is_empty() {
                    let largest = (0..n_owners)
                        .max_by_key(|&o| owners[o].len())
                        .expect("non-empty owner set");
                    let moved = owners[largest].pop().ok_or_else(|| {
                        Error::validation("not enough samples to cover all owners")
                    })?;
                    owners[empty].push(moved);
                }
            }
        }
    }
    Ok(PartitionAssignment::new(owners))
}

/// Symmetric Dirichlet draw via normalized Gammas. At very small alpha
/// every Gamma can underflow to zero; the correct limit is a point mass
/// on one owner, chosen uniformly.
fn dirichlet_proportions(n: usize, alpha: f64, rng: &mut SimRng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        let winner = rng.gen_range(0..n);
        return (0..n).map(|i| f64::from(i == winner)).collect();
    }
    draws.into_iter().map(|d| d / sum).collect()
}

fn sample_categorical(props: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in props.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    props.len() - 1
}

/// Shards layout produced by [`partition_shards`].
#[derive(Debug, Clone)]
pub struct ShardsPartition {
    /// Sample indices per space, indexed by `SpaceId`.
    pub space_samples: Vec<Vec<usize>>,
    /// Held-out "general knowledge" samples per superclass.
    pub general_pool: Vec<Vec<usize>>,
    /// Superclasses assigned to each area.
    pub area_superclasses: Vec<Vec<usize>>,
    /// The single subclass each space holds.
    pub space_subclass: Vec<usize>,
}

impl ShardsPartition {
    /// View as a flat assignment: owners `0..n_spaces` are spaces,
    /// followed by one pool owner per superclass.
    pub fn to_assignment(&self) -> PartitionAssignment {
        let mut owners = self.space_samples.clone();
        owners.extend(self.general_pool.clone());
        PartitionAssignment::new(owners)
    }
}

/// Splits superclasses evenly and disjointly across areas (one per
/// area, so every space ends up with exactly one subclass), then
/// assigns subclass `j` of the area's superclass to space `j`.
/// Subclasses past the space count (at least one is required) form the
/// per-superclass general-knowledge pool.
pub fn partition_shards(ds: &LabeledDataset, world: &World) -> Result<ShardsPartition> {
    let hierarchy = ds
        .hierarchy()
        .ok_or_else(|| Error::config("shards partitioning needs a class hierarchy"))?;
    let n_super = hierarchy.iter().copied().max().map_or(0, |m| m + 1);
    let n_areas = world.areas.len();
    if n_super != n_areas {
        return Err(Error::config(format!(
            "shards needs one superclass per area ({n_areas} areas, {n_super} superclasses)"
        )));
    }
    let subs_per_super = ds.n_classes() / n_super;
    if subs_per_super < SPACES_PER_AREA + 1 {
        return Err(Error::config(format!(
            "shards needs at least {} subclasses per superclass, got {subs_per_super}",
            SPACES_PER_AREA + 1
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for i in 0..ds.len() {
        by_class[ds.label(i)].push(i);
    }

    let n_spaces = world.n_spaces();
    let mut space_samples: Vec<Vec<usize>> = vec![Vec::new(); n_spaces];
    let mut space_subclass = vec![usize::MAX; n_spaces];
    let mut general_pool: Vec<Vec<usize>> = vec![Vec::new(); n_super];
    let mut area_superclasses: Vec<Vec<usize>> = vec![Vec::new(); n_areas];

    for (sup, pool) in general_pool.iter_mut().enumerate() {
        let area = sup;
        area_superclasses[area].push(sup);
        for j in 0..subs_per_super {
            let subclass = sup * subs_per_super + j;
            if j < SPACES_PER_AREA {
                let space = area * SPACES_PER_AREA + j;
                space_samples[space].extend(&by_class[subclass]);
                space_subclass[space] = subclass;
            } else {
                pool.extend(&by_class[subclass]);
            }
        }
    }

    Ok(ShardsPartition {
        space_samples,
        general_pool,
        area_superclasses,
        space_subclass,
    })
}

/// Draws a mule's seed data: `n_local` samples from its home space plus
/// `n_general` from the pool of the same superclass, both without
/// replacement (drawn indices are consumed from the partition).
pub fn seed_mobile_data(
    shards: &mut ShardsPartition,
    ds: &LabeledDataset,
    home_space: SpaceId,
    n_local: usize,
    n_general: usize,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    let subclass = shards.space_subclass[home_space.0];
    let superclass = ds
        .superclass_of(subclass)
        .ok_or_else(|| Error::config("dataset lost its hierarchy"))?;

    let mut drawn = draw_without_replacement(&mut shards.space_samples[home_space.0], n_local, rng)
        .ok_or_else(|| {
            Error::config(format!(
                "space {} has too few samples left for a {n_local}-sample local seed",
                home_space.0
            ))
        })?;
    let general = draw_without_replacement(&mut shards.general_pool[superclass], n_general, rng)
        .ok_or_else(|| {
            Error::config(format!(
                "general pool of superclass {superclass} has too few samples for {n_general}"
            ))
        })?;
    drawn.extend(general);
    Ok(drawn)
}

fn draw_without_replacement(
    pool: &mut Vec<usize>,
    n: usize,
    rng: &mut SimRng,
) -> Option<Vec<usize>> {
    if pool.len() < n {
        return None;
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let at = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(at));
    }
    Some(out)
}

/// Stratified train/test split: per class, a `test_frac` share (rounded)
/// goes to the test set, so both splits keep the label distribution to
/// within one sample per class.
pub fn train_test_split_indices(
    ds: &LabeledDataset,
    test_frac: f64,
    rng: &mut SimRng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_frac) || test_frac == 0.0 {
        return Err(Error::config("test_frac must be in (0, 1)"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for i in 0..ds.len() {
        by_class[ds.label(i)].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::validation(format!(
                "class {class} has fewer than 2 samples; cannot split"
            )));
        }
        members.shuffle(rng);
        let mut n_test = (test_frac * members.len() as f64).round() as usize;
        n_test = n_test.min(members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn train_test_split(
    ds: &LabeledDataset,
    test_frac: f64,
    rng: &mut SimRng,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = train_test_split_indices(ds, test_frac, rng)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Shannon entropy (nats) of a count histogram.
pub fn label_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.ln();
        }
    }
    h
}
