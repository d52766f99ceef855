//! Synthetic communities with known guild structure.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CommunityData, Family};
use crate::design::{expand_guild_design, GuildCoefficients};
use crate::tree::GuildPartition;
use crate::{ChainRng, Error, Result};

/// True guild structure of one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePeriod {
    pub partition: GuildPartition,
    pub gamma: GuildCoefficients,
}

/// Generative settings. Sites are split into contiguous period blocks; the
/// holdout sites follow the fitting sites and are blocked the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub family: Family,
    pub n_sites: usize,
    pub n_holdout: usize,
    pub intercepts: Vec<f64>,
    pub periods: Vec<TruePeriod>,
    /// Structural-zero probability (abundance only).
    pub phi: f64,
    /// Latent process variance (abundance only).
    pub sigma2: f64,
    pub seed: u64,
}

impl SimSpec {
    /// Builds a spec from species-level slopes, one `J x K` table per
    /// period. Species with identical slope rows share a guild.
    pub fn from_species_slopes(
        family: Family,
        n_sites: usize,
        intercepts: Vec<f64>,
        slopes: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        let periods = slopes
            .iter()
            .map(|table| {
                let mut rows: Vec<&Vec<f64>> = Vec::new();
                let mut membership = Vec::with_capacity(table.len());
                for row in table {
                    match rows.iter().position(|r| *r == row) {
                        Some(g) => membership.push(g),
                        None => {
                            membership.push(rows.len());
                            rows.push(row);
                        }
                    }
                }
                let k = rows.first().map_or(0, |r| r.len());
                let mut gamma = GuildCoefficients::zeros(rows.len(), k);
                for (g, r) in rows.iter().enumerate() {
                    if r.len() != k {
                        return Err(Error::Dimension("ragged slope table".into()));
                    }
                    for (c, &v) in r.iter().enumerate() {
                        gamma.set(g, c, v);
                    }
                }
                Ok(TruePeriod {
                    partition: GuildPartition::from_membership(membership)?,
                    gamma,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            family,
            n_sites,
            n_holdout: 0,
            intercepts,
            periods,
            phi: 0.2,
            sigma2: 0.25,
            seed: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Six species in two guilds with slopes -1 and 0 on one predictor,
    /// 225 fitting and 225 holdout sites.
    pub fn two_guild_probit(seed: u64) -> Self {
        let slopes: Vec<Vec<f64>> = [-1.0, -1.0, -1.0, 0.0, 0.0, 0.0].iter().map(|&s| vec![s]).collect();
        let mut spec = Self::from_species_slopes(Family::Probit, 225, vec![0.0; 6], &[slopes]).expect("valid");
        spec.n_holdout = 225;
        spec.seed = seed;
        spec
    }

    pub fn n_species(&self) -> usize {
        self.intercepts.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.periods.first().map_or(0, |p| p.gamma.n_predictors())
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.n_species();
        if j == 0 || self.periods.is_empty() || self.n_sites == 0 {
            return Err(Error::InvalidConfig(
                "simulation needs species, periods and sites".into(),
            ));
        }
        let k = self.n_predictors();
        for p in &self.periods {
            if p.partition.n_species() != j
                || p.gamma.n_guilds() != p.partition.n_guilds()
                || p.gamma.n_predictors() != k
            {
                return Err(Error::Dimension(
                    "true period structure does not match species or predictors".into(),
                ));
            }
        }
        if k == 0 {
            return Err(Error::InvalidConfig("simulation needs at least one predictor".into()));
        }
        if self.family == Family::Zip && (!(0.0..=1.0).contains(&self.phi) || self.sigma2.is_nan() || self.sigma2 < 0.0)
        {
            return Err(Error::InvalidConfig("need 0 <= phi <= 1 and sigma2 >= 0".into()));
        }
        Ok(())
    }
}

/// Generating parameters recorded alongside simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: SimSpec,
    /// Species-level slopes per period, `J x K` row-major.
    pub species_slopes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    /// All sites; holdout sites are flagged in the holdout mask.
    pub data: CommunityData,
    pub truth: Truth,
}

fn block(i: usize, n: usize, t: usize) -> usize {
    i * t / n
}

/// Draws a synthetic community. Predictors are independent standard normal.
pub fn simulate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let mut rng = ChainRng::seed_from_u64(spec.seed);
    let (j_n, k) = (spec.n_species(), spec.n_predictors());
    let t_n = spec.periods.len();
    let total = spec.n_sites + spec.n_holdout;
    let mut predictors = Vec::with_capacity(total * k);
    let mut responses = Vec::with_capacity(total * j_n);
    let mut period = Vec::with_capacity(total);
    let noise = Normal::new(0.0, spec.sigma2.sqrt()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for i in 0..total {
        let t = if i < spec.n_sites {
            block(i, spec.n_sites, t_n)
        } else {
            block(i - spec.n_sites, spec.n_holdout, t_n)
        };
        period.push(t);
        let x: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = &spec.periods[t];
        let mu = expand_guild_design(&x, &p.partition, p.gamma.as_flat())?;
        for j in 0..j_n {
            let eta = spec.intercepts[j] + mu[j];
            let y = match spec.family {
                Family::Probit => {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    u32::from(eta + e > 0.0)
                }
                Family::Zip => {
                    let z = eta + noise.sample(&mut rng);
                    if rng.random::<f64>() < spec.phi {
                        0
                    } else {
                        poisson_count(z.exp(), &mut rng)?
                    }
                }
            };
            responses.push(y);
        }
        predictors.extend(x);
    }
    let species_names = (1..=j_n).map(|j| format!("sp{j}")).collect();
    let predictor_names = (1..=k).map(|c| format!("x{c}")).collect();
    let holdout = (spec.n_holdout > 0).then(|| (0..total).map(|i| i >= spec.n_sites).collect());
    let data = CommunityData::new(
        spec.family,
        responses,
        predictors,
        species_names,
        predictor_names,
        (t_n > 1).then_some(period),
        holdout,
    )?;
    let species_slopes = spec
        .periods
        .iter()
        .map(|p| {
            (0..j_n)
                .flat_map(|j| (0..k).map(move |c| (j, c)))
                .map(|(j, c)| p.gamma.get(p.partition.guild_of(j), c))
                .collect()
        })
        .collect();
    Ok(Simulated {
        data,
        truth: Truth {
            spec: spec.clone(),
            species_slopes,
        },
    })
}

fn poisson_count<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u32> {
    if rate <= 0.0 {
        return Ok(0);
    }
    if rate.is_nan() || rate >= 1e9 {
        return Err(Error::InvalidConfig(format!(
            "Poisson rate {rate} too large to simulate"
        )));
    }
    let v: f64 = Poisson::new(rate)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?
        .sample(rng);
    Ok(v as u32)
}
