//! Community data: a site x species response matrix and a site x predictor
//! design matrix.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Data family, which fixes the data model and the support of the responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Presence-absence with a probit link.
    Probit,
    /// Relative abundance with a zero-inflated Poisson data model.
    Zip,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Probit => "probit",
            Family::Zip => "zip",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "probit" | "presence-absence" => Ok(Family::Probit),
            "zip" | "abundance" => Ok(Family::Zip),
            other => Err(Error::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

/// Column means and standard deviations used to standardize predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityData {
    family: Family,
    n_sites: usize,
    n_species: usize,
    n_predictors: usize,
    /// Row-major `n_sites x n_species`.
    responses: Vec<u32>,
    /// Row-major `n_sites x n_predictors`.
    predictors: Vec<f64>,
    species_names: Vec<String>,
    predictor_names: Vec<String>,
    /// Zero-based period per site; `None` means a single period.
    period: Option<Vec<usize>>,
    n_periods: usize,
    holdout: Option<Vec<bool>>,
}

impl CommunityData {
    /// Builds and validates a data set. `period` labels are zero-based.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        family: Family,
        responses: Vec<u32>,
        predictors: Vec<f64>,
        species_names: Vec<String>,
        predictor_names: Vec<String>,
        period: Option<Vec<usize>>,
        holdout: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n_species = species_names.len();
        let n_predictors = predictor_names.len();
        if n_species == 0 {
            return Err(Error::InvalidData("no species".into()));
        }
        if n_predictors == 0 {
            return Err(Error::InvalidData("no predictors".into()));
        }
        if responses.is_empty() || !responses.len().is_multiple_of(n_species) {
            return Err(Error::Dimension(format!(
                "{} responses do not fill rows of {} species",
                responses.len(),
                n_species
            )));
        }
        let n_sites = responses.len() / n_species;
        if predictors.len() != n_sites * n_predictors {
            return Err(Error::Dimension(format!(
                "expected {} predictor values for {} sites, found {}",
                n_sites * n_predictors,
                n_sites,
                predictors.len()
            )));
        }
        if let Some(pos) = predictors.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite predictor `{}` at site {}",
                predictor_names[pos % n_predictors],
                pos / n_predictors + 1
            )));
        }
        if family == Family::Probit {
            if let Some(pos) = responses.iter().position(|&y| y > 1) {
                return Err(Error::InvalidData(format!(
                    "presence-absence response {} for species `{}` at site {} is not 0/1",
                    responses[pos],
                    species_names[pos % n_species],
                    pos / n_species + 1
                )));
            }
        }
        let n_periods = match &period {
            Some(p) => {
                if p.len() != n_sites {
                    return Err(Error::Dimension(format!(
                        "{} period labels for {} sites",
                        p.len(),
                        n_sites
                    )));
                }
                p.iter().max().map_or(1, |m| m + 1)
            }
            None => 1,
        };
        if let Some(h) = &holdout {
            if h.len() != n_sites {
                return Err(Error::Dimension(format!(
                    "{} holdout flags for {} sites",
                    h.len(),
                    n_sites
                )));
            }
        }
        Ok(Self {
            family,
            n_sites,
            n_species,
            n_predictors,
            responses,
            predictors,
            species_names,
            predictor_names,
            period,
            n_periods,
            holdout,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn n_predictors(&self) -> usize {
        self.n_predictors
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.predictor_names
    }

    #[inline]
    pub fn response(&self, site: usize, species: usize) -> u32 {
        self.responses[site * self.n_species + species]
    }

    pub fn responses(&self) -> &[u32] {
        &self.responses
    }

    /// Predictor row `x_i`.
    #[inline]
    pub fn x(&self, site: usize) -> &[f64] {
        &self.predictors[site * self.n_predictors..(site + 1) * self.n_predictors]
    }

    pub fn predictors(&self) -> &[f64] {
        &self.predictors
    }

    #[inline]
    pub fn period_of(&self, site: usize) -> usize {
        self.period.as_ref().map_or(0, |p| p[site])
    }

    pub fn periods(&self) -> Option<&[usize]> {
        self.period.as_deref()
    }

    pub fn holdout_mask(&self) -> Option<&[bool]> {
        self.holdout.as_deref()
    }

    /// Sites belonging to period `t`.
    pub fn sites_in_period(&self, t: usize) -> Vec<usize> {
        (0..self.n_sites).filter(|&i| self.period_of(i) == t).collect()
    }

    /// Restricts to the given sites, keeping the number of periods.
    pub fn subset(&self, sites: &[usize]) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidData("empty site subset".into()));
        }
        let mut responses = Vec::with_capacity(sites.len() * self.n_species);
        let mut predictors = Vec::with_capacity(sites.len() * self.n_predictors);
        for &i in sites {
            responses.extend_from_slice(&self.responses[i * self.n_species..(i + 1) * self.n_species]);
            predictors.extend_from_slice(self.x(i));
        }
        let period = self.period.as_ref().map(|p| sites.iter().map(|&i| p[i]).collect());
        let holdout = self.holdout.as_ref().map(|h| sites.iter().map(|&i| h[i]).collect());
        let mut out = Self::new(
            self.family,
            responses,
            predictors,
            self.species_names.clone(),
            self.predictor_names.clone(),
            period,
            holdout,
        )?;
        out.n_periods = self.n_periods;
        Ok(out)
    }

    /// Splits into the fitting sites and the holdout sites (if any). The
    /// returned pieces carry no holdout mask.
    pub fn split_holdout(&self) -> Result<(Self, Option<Self>)> {
        let Some(mask) = &self.holdout else {
            let mut fit = self.clone();
            fit.holdout = None;
            return Ok((fit, None));
        };
        let fit_sites: Vec<usize> = (0..self.n_sites).filter(|&i| !mask[i]).collect();
        let hold_sites: Vec<usize> = (0..self.n_sites).filter(|&i| mask[i]).collect();
        let mut fit = self.subset(&fit_sites)?;
        fit.holdout = None;
        let hold = if hold_sites.is_empty() {
            None
        } else {
            let mut h = self.subset(&hold_sites)?;
            h.holdout = None;
            Some(h)
        };
        Ok((fit, hold))
    }

    pub fn with_holdout(mut self, mask: Option<Vec<bool>>) -> Result<Self> {
        if let Some(m) = &mask {
            if m.len() != self.n_sites {
                return Err(Error::Dimension("holdout mask length".into()));
            }
        }
        self.holdout = mask;
        Ok(self)
    }

    /// Centers and scales every predictor column to unit sample standard
    /// deviation. Constant columns are only centered.
    pub fn standardize(&mut self) -> Standardization {
        let n = self.n_sites as f64;
        let k = self.n_predictors;
        let mut means = vec![0.0; k];
        let mut sds = vec![1.0; k];
        for c in 0..k {
            let mean = (0..self.n_sites).map(|i| self.predictors[i * k + c]).sum::<f64>() / n;
            let ss: f64 = (0..self.n_sites)
                .map(|i| (self.predictors[i * k + c] - mean).powi(2))
                .sum();
            let sd = if self.n_sites > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
            means[c] = mean;
            sds[c] = if sd > 0.0 { sd } else { 1.0 };
            for i in 0..self.n_sites {
                let v = &mut self.predictors[i * k + c];
                *v = (*v - mean) / sds[c];
            }
        }
        Standardization {
            names: self.predictor_names.clone(),
            means,
            sds,
        }
    }

    /// Applies scaling constants computed on other data, e.g. fitting-site
    /// constants to holdout sites.
    pub fn apply_standardization(&mut self, s: &Standardization) -> Result<()> {
        if s.names != self.predictor_names {
            return Err(Error::Dimension(format!(
                "standardization covers {:?} but data has predictors {:?}",
                s.names, self.predictor_names
            )));
        }
        let k = self.n_predictors;
        for (i, v) in self.predictors.iter_mut().enumerate() {
            let c = i % k;
            *v = (*v - s.means[c]) / s.sds[c];
        }
        Ok(())
    }

    /// Fraction of sites at which each species was observed (`y > 0`).
    pub fn prevalence(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_species];
        for i in 0..self.n_sites {
            for (j, c) in counts.iter_mut().enumerate() {
                if self.response(i, j) > 0 {
                    *c += 1;
                }
            }
        }
        counts.into_iter().map(|c| c as f64 / self.n_sites as f64).collect()
    }
}
