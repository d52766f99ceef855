//! Guild design algebra: the Kronecker-expanded linear predictor, derived
//! species-level coefficients, and parameter accounting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Family;
use crate::tree::GuildPartition;
use crate::{Error, PosteriorDraw, Result};

/// Guild-level coefficients `gamma_{g,k}` stored predictor-major:
/// `(g1k1, g2k1, .., gGk1, g1k2, ..)`, the order in which `x_i' (x) Z`
/// lays out its columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuildCoefficients {
    n_guilds: usize,
    n_predictors: usize,
    values: Vec<f64>,
}

impl GuildCoefficients {
    pub fn zeros(n_guilds: usize, n_predictors: usize) -> Self {
        Self {
            n_guilds,
            n_predictors,
            values: vec![0.0; n_guilds * n_predictors],
        }
    }

    pub fn from_flat(n_guilds: usize, n_predictors: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_guilds * n_predictors {
            return Err(Error::Dimension(format!(
                "{} coefficients for {} guilds x {} predictors",
                values.len(),
                n_guilds,
                n_predictors
            )));
        }
        Ok(Self {
            n_guilds,
            n_predictors,
            values,
        })
    }

    pub fn n_guilds(&self) -> usize {
        self.n_guilds
    }

    pub fn n_predictors(&self) -> usize {
        self.n_predictors
    }

    #[inline]
    pub fn get(&self, guild: usize, predictor: usize) -> f64 {
        self.values[predictor * self.n_guilds + guild]
    }

    #[inline]
    pub fn set(&mut self, guild: usize, predictor: usize, v: f64) {
        self.values[predictor * self.n_guilds + guild] = v;
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Coefficients of one guild across predictors.
    pub fn guild(&self, guild: usize) -> Vec<f64> {
        (0..self.n_predictors).map(|k| self.get(guild, k)).collect()
    }

    /// New coefficients whose guild `g` is this object's guild `order[g]`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        let mut out = Self::zeros(order.len(), self.n_predictors);
        for (g, &src) in order.iter().enumerate() {
            for k in 0..self.n_predictors {
                out.set(g, k, self.get(src, k));
            }
        }
        out
    }

    /// `x' gamma_g`.
    #[inline]
    pub fn linear_predictor(&self, guild: usize, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(k, xk)| xk * self.values[k * self.n_guilds + guild])
            .sum()
    }
}

/// Returns `(x_i' (x) Z) gamma`: species `j` in guild `g` receives
/// `sum_k x_k gamma_{g,k}`.
pub fn expand_guild_design(x: &[f64], z: &GuildPartition, gamma: &[f64]) -> Result<Vec<f64>> {
    let g = z.n_guilds();
    let k = x.len();
    if gamma.len() != g * k {
        return Err(Error::Dimension(format!(
            "gamma has {} entries, expected G*K = {}*{}",
            gamma.len(),
            g,
            k
        )));
    }
    Ok((0..z.n_species())
        .map(|j| {
            let guild = z.guild_of(j);
            (0..k).map(|c| x[c] * gamma[c * g + guild]).sum()
        })
        .collect())
}

/// Species-level coefficients derived from one period of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesCoefficients {
    /// `J x K`.
    pub beta: DMatrix<f64>,
    /// `J x G` membership matrix used to build each `W_j = I_K (x) z_j'`.
    pub w: DMatrix<f64>,
}

impl SpeciesCoefficients {
    /// The `K x GK` matrix `W_j` linking guild coefficients to species `j`.
    pub fn w_matrix(&self, species: usize) -> DMatrix<f64> {
        let k = self.beta.ncols();
        let zj = self.w.row(species).into_owned();
        DMatrix::<f64>::identity(k, k).kronecker(&zj)
    }
}

/// `beta_j = W_j gamma` for every species and period of a draw.
pub fn species_coefficients(draw: &PosteriorDraw) -> Vec<SpeciesCoefficients> {
    draw.periods
        .iter()
        .map(|period| {
            let partition = period.partition();
            let n_species = partition.n_species();
            let k = period.gamma.n_predictors();
            let mut out = SpeciesCoefficients {
                beta: DMatrix::zeros(n_species, k),
                w: partition.indicator_matrix(),
            };
            let gamma = DVector::from_column_slice(period.gamma.as_flat());
            for j in 0..n_species {
                let bj = out.w_matrix(j) * &gamma;
                out.beta.row_mut(j).copy_from(&bj.transpose());
            }
            out
        })
        .collect()
}

/// Number of nonempty species subsets, `2^J - 1`: every distinct guild
/// composition that some binary tree can produce.
pub fn count_guild_compositions(n_species: usize) -> Result<u64> {
    match n_species {
        0 => Err(Error::InvalidConfig("at least one species required".into())),
        1..=63 => Ok((1u64 << n_species) - 1),
        64 => Ok(u64::MAX),
        _ => Err(Error::Overflow(n_species)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDimension {
    pub intercepts: usize,
    pub regression_coefficients: usize,
    pub family_scalars: usize,
}

impl ModelDimension {
    pub fn total(&self) -> usize {
        self.intercepts + self.regression_coefficients + self.family_scalars
    }
}

/// Parameter count for one partition per period: `J` intercepts, `G_t * K`
/// guild coefficients per period, plus `phi` and the process variance for
/// the abundance family.
pub fn model_dimension(
    partitions: &[GuildPartition],
    n_species: usize,
    n_predictors: usize,
    family: Family,
) -> Result<ModelDimension> {
    if let Some(p) = partitions.iter().find(|p| p.n_species() != n_species) {
        return Err(Error::Dimension(format!(
            "partition over {} species, model has {}",
            p.n_species(),
            n_species
        )));
    }
    Ok(ModelDimension {
        intercepts: n_species,
        regression_coefficients: partitions.iter().map(|p| p.n_guilds() * n_predictors).sum(),
        family_scalars: match family {
            Family::Probit => 0,
            Family::Zip => 2,
        },
    })
}
