use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Draws `n_cases` cases and `n_controls` controls without replacement.
///
/// Returns the sample (cases first, each class in population order) and the
/// population row indices it came from.
pub fn sample_case_control<R: Rng + ?Sized>(
    population: &Dataset,
    n_cases: usize,
    n_controls: usize,
    rng: &mut R,
) -> Result<(Dataset, Vec<usize>)> {
    let cases: Vec<usize> = (0..population.n()).filter(|&i| population.d[i] == 1.0).collect();
    let controls: Vec<usize> = (0..population.n()).filter(|&i| population.d[i] == 0.0).collect();
    for (what, pool, want) in [("cases", &cases, n_cases), ("controls", &controls, n_controls)] {
        if pool.len() < want {
            return Err(Error::InvalidInput(format!(
                "population has {} {what} but {want} were requested",
                pool.len()
            )));
        }
    }
    let mut draw = |pool: &[usize], k: usize| -> Vec<usize> {
        let mut idx: Vec<usize> = sample(rng, pool.len(), k).into_iter().map(|j| pool[j]).collect();
        idx.sort_unstable();
        idx
    };
    let mut rows = draw(&cases, n_cases);
    rows.extend(draw(&controls, n_controls));
    Ok((population.subset(&rows), rows))
}
