use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    /// Search box is `[-halfwidth, halfwidth]` in every dimension.
    pub search_halfwidth: f64,
    /// Places particle 0 at the origin so the initial point is always evaluated.
    pub seed_origin: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 24,
            iterations: 40,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            seed: 0,
            search_halfwidth: 0.5,
            seed_origin: true,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::Config(format!("swarm size must be at least 2, got {}", self.swarm_size)));
        }
        if !(self.search_halfwidth > 0.0) {
            return Err(Error::Config("search halfwidth must be positive".into()));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} coefficient must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsoOutcome {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Cost of the origin, when it was evaluated.
    pub origin_cost: Option<f64>,
    /// Global-best cost after initialisation and after every iteration.
    pub history: Vec<f64>,
}

/// Global-best particle swarm minimisation of `cost` over the search box.
/// Particles are evaluated in index order, so results depend only on the seed.
pub fn minimize(dim: usize, config: &PsoConfig, mut cost: impl FnMut(&[f64]) -> f64) -> Result<PsoOutcome> {
    config.validate()?;
    if dim == 0 {
        return Err(Error::Config("cannot optimise over zero dimensions".into()));
    }
    let hw = config.search_halfwidth;
    let vmax = hw;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.swarm_size;

    let mut pos: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            if i == 0 && config.seed_origin {
                vec![0.0; dim]
            } else {
                (0..dim).map(|_| rng.random_range(-hw..=hw)).collect()
            }
        })
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-vmax..=vmax) * 0.5).collect())
        .collect();

    let eval = |x: &[f64], cost: &mut dyn FnMut(&[f64]) -> f64| {
        let c = cost(x);
        if c.is_nan() {
            f64::INFINITY
        } else {
            c
        }
    };

    let mut pbest = pos.clone();
    let mut pbest_cost: Vec<f64> = pos.iter().map(|x| eval(x, &mut cost)).collect();
    let origin_cost = config.seed_origin.then(|| pbest_cost[0]);
    let mut g = argmin(&pbest_cost);
    let mut gbest = pbest[g].clone();
    let mut gbest_cost = pbest_cost[g];
    let mut history = vec![gbest_cost];

    for _ in 0..config.iterations {
        for i in 0..n {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = config.inertia * vel[i][d]
                    + config.cognitive * r1 * (pbest[i][d] - pos[i][d])
                    + config.social * r2 * (gbest[d] - pos[i][d]);
                vel[i][d] = v.clamp(-vmax, vmax);
                pos[i][d] = (pos[i][d] + vel[i][d]).clamp(-hw, hw);
            }
            let c = eval(&pos[i], &mut cost);
            if c < pbest_cost[i] {
                pbest_cost[i] = c;
                pbest[i].clone_from(&pos[i]);
            }
        }
        g = argmin(&pbest_cost);
        if pbest_cost[g] < gbest_cost {
            gbest_cost = pbest_cost[g];
            gbest.clone_from(&pbest[g]);
        }
        assert!(
            gbest_cost <= *history.last().unwrap(),
            "global-best cost increased"
        );
        history.push(gbest_cost);
    }
    Ok(PsoOutcome {
        best: gbest,
        best_cost: gbest_cost,
        origin_cost,
        history,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, c) in v.iter().enumerate() {
        if *c < v[best] {
            best = i;
        }
    }
    best
}
