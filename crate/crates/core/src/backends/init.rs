//! Seeded parameter initialization.
//!
//! candle's CPU device cannot be seeded, so every variable is overwritten
//! from a ChaCha stream, visiting variables in name order.

use candle_core::{Result, Tensor};
use candle_nn::VarMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Zeros,
    Ones,
    Uniform(f32),
    Normal(f32),
}

pub(crate) fn seeded_init<F>(varmap: &VarMap, seed: u64, rule: F) -> Result<()>
where
    F: Fn(&str, &[usize]) -> Init,
{
    let data = varmap.data().lock().unwrap();
    let mut names: Vec<&String> = data.keys().collect();
    names.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in names {
        let var = &data[name];
        let dims = var.dims().to_vec();
        let n: usize = dims.iter().product();
        let values: Vec<f32> = match rule(name, &dims) {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Uniform(a) => {
                let d = Uniform::new_inclusive(-a, a);
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            Init::Normal(std) => {
                let d = Normal::new(0.0f32, std).expect("std is positive");
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
        };
        let t = Tensor::from_vec(values, dims.as_slice(), var.device())?;
        var.set(&t)?;
    }
    Ok(())
}

/// Sorted `(name, tensor)` pairs of a var map.
pub(crate) fn sorted_vars(varmap: &VarMap) -> Vec<(String, Tensor)> {
    let data = varmap.data().lock().unwrap();
    let mut vars: Vec<(String, Tensor)> = data
        .iter()
        .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
        .collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    vars
}
