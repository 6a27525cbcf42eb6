use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bay::Geometry;
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Law of the batch sizes drawn by [`generate`].
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum BatchLaw {
    /// Uniform over `lo..=hi`.
    Uniform { lo: usize, hi: usize },
    Fixed(usize),
}

impl Default for BatchLaw {
    fn default() -> Self {
        BatchLaw::Uniform { lo: 1, hi: 3 }
    }
}

impl BatchLaw {
    fn check(self) -> Result<()> {
        match self {
            BatchLaw::Uniform { lo, hi } if lo >= 1 && lo <= hi => Ok(()),
            BatchLaw::Fixed(n) if n >= 1 => Ok(()),
            _ => Err(Error::InfeasibleRecipe(format!("batch sizes must be positive: {self:?}"))),
        }
    }

    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> usize {
        match self {
            BatchLaw::Uniform { lo, hi } => rng.random_range(lo..=hi),
            BatchLaw::Fixed(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenRecipe {
    pub tiers: usize,
    pub stacks: usize,
    /// Share of the `tiers * stacks` slots that are filled.
    pub fill: f64,
    pub batch_law: BatchLaw,
    pub count: usize,
    pub seed: u64,
}

impl GenRecipe {
    /// Number of containers, `round(fill * stacks * tiers)`.
    pub fn containers(&self) -> usize {
        (self.fill * (self.stacks * self.tiers) as f64).round() as usize
    }
}

/// Random instances following `recipe`; the same recipe gives the same instances.
pub fn generate(recipe: &GenRecipe) -> Result<Vec<Instance>> {
    let geometry = Geometry::new(recipe.tiers, recipe.stacks).map_err(|e| Error::InfeasibleRecipe(e.to_string()))?;
    if !(recipe.fill > 0.0 && recipe.fill <= 1.0) {
        return Err(Error::InfeasibleRecipe(format!("fill rate {} outside (0, 1]", recipe.fill)));
    }
    recipe.batch_law.check()?;
    let c = recipe.containers();
    if c == 0 {
        return Err(Error::InfeasibleRecipe("the recipe places no container".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    (0..recipe.count)
        .map(|_| {
            let mut sizes = Vec::new();
            let mut total = 0;
            while total < c {
                let s = recipe.batch_law.draw(&mut rng).min(c - total);
                sizes.push(s);
                total += s;
            }
            random_instance(geometry, &sizes, &mut rng)
        })
        .collect()
}

/// Uniform-order instance with the given batch sizes, containers dropped on
/// uniformly chosen non-full stacks in a random order.
pub fn random_instance<R: Rng + ?Sized>(geometry: Geometry, batch_sizes: &[usize], rng: &mut R) -> Result<Instance> {
    let c: usize = batch_sizes.iter().sum();
    let limit = geometry.capacity();
    if c > limit {
        return Err(Error::InfeasibleRecipe(format!(
            "{c} containers exceed the {limit} that a {}x{} bay can hold while retrieving",
            geometry.tiers(),
            geometry.stacks()
        )));
    }
    if batch_sizes.contains(&0) {
        return Err(Error::InfeasibleRecipe("batch sizes must be positive".into()));
    }
    let mut pool: Vec<usize> = batch_sizes
        .iter()
        .enumerate()
        .flat_map(|(w, &s)| std::iter::repeat_n(w + 1, s))
        .collect();
    pool.shuffle(rng);
    let mut columns: Vec<Vec<usize>> = vec![Vec::new(); geometry.stacks()];
    for w in pool {
        let open: Vec<usize> = (0..columns.len())
            .filter(|&s| columns[s].len() < geometry.tiers())
            .collect();
        let s = open[rng.random_range(0..open.len())];
        columns[s].push(w);
    }
    Instance::uniform(geometry, batch_sizes.to_vec(), &columns)
}

/// Coarsens batches: batch `w` joins batch `ceil(w / gamma)`. Orders become uniform.
/// `gamma <= 1` returns the instance unchanged.
pub fn merge_batches(instance: &Instance, gamma: usize) -> Instance {
    if gamma <= 1 {
        return instance.clone();
    }
    let mut sizes = vec![0; instance.batch_count().div_ceil(gamma)];
    for (w, &s) in instance.batch_sizes.iter().enumerate() {
        sizes[w / gamma] += s;
    }
    let columns: Vec<Vec<usize>> = instance
        .batch_indices()
        .into_iter()
        .map(|c| c.into_iter().map(|w| (w - 1) / gamma + 1).collect())
        .collect();
    Instance::uniform(instance.geometry, sizes, &columns).expect("merging keeps a valid instance")
}
