use super::enumerate::sequential_tables;
use super::DiscreteWorld;
use crate::error::{Error, Result};
use crate::nuisance::{FitContext, NuisanceProvider, SeqTask};
use crate::panel::PanelDataset;

/// Exact nuisances read off a world, for data sampled from it.
#[derive(Debug, Clone)]
pub struct WorldNuisance<'w> {
    world: &'w DiscreteWorld<f64>,
}

impl<'w> WorldNuisance<'w> {
    pub fn new(world: &'w DiscreteWorld<f64>) -> Self {
        WorldNuisance { world }
    }

    /// `H_t` index of every observation.
    pub fn history_indices(&self, data: &PanelDataset, t: usize) -> Result<Vec<usize>> {
        if data.horizon() != self.world.horizon() {
            return Err(Error::Config(format!(
                "panel has T={} but the world has T={}",
                data.horizon(),
                self.world.horizon()
            )));
        }
        (0..data.n())
            .map(|i| {
                let tr = data.trajectory(i);
                let x: Vec<f64> = tr.covariates[..t]
                    .iter()
                    .map(|c| c.first().copied().unwrap_or(f64::NAN))
                    .collect();
                self.world.encode(&x, &tr.treatments[..t - 1]).ok_or_else(|| {
                    Error::Config(format!(
                        "subject {}: history at t={t} is not in the world's support",
                        data.ids()[i]
                    ))
                })
            })
            .collect()
    }
}

impl NuisanceProvider for WorldNuisance<'_> {
    fn propensity(&self, ctx: &FitContext, t: usize) -> Result<Vec<f64>> {
        let hs = self.history_indices(ctx.data, t)?;
        Ok(hs.into_iter().map(|h| self.world.propensity(t, h)).collect())
    }

    fn sequential(&self, ctx: &FitContext, task: &SeqTask) -> Result<[Vec<f64>; 2]> {
        let tables = sequential_tables(self.world, task.regime, task.weight, task.functional)?;
        let table = &tables[task.t - 1];
        let hs = self.history_indices(ctx.data, task.t)?;
        Ok([hs.iter().map(|&h| table[h][0]).collect(), hs.iter().map(|&h| table[h][1]).collect()])
    }
}
