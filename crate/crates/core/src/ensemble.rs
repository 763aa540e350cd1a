//! Convex combinations `f = sum_i alpha_i g_i` of basis modules and the weight
//! moves used by the Frank-Wolfe family: blend toward a new atom, step away
//! from an existing one, and transfer weight pairwise.
//!
//! Every move renormalizes the weights by their sum afterwards, so the simplex
//! invariant survives long sequences of updates.

use crate::basis::{BasisModule, Scratch};
use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;
const STEP_SLACK: f64 = 1e-12;

/// An atom entering a move: either a fresh module (appended) or an atom
/// already in the ensemble, by index.
#[derive(Debug, Clone)]
pub enum Incoming {
    New(BasisModule),
    Existing(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexEnsemble {
    atoms: Vec<BasisModule>,
    weights: Vec<f64>,
    bound: f64,
}

impl ConvexEnsemble {
    pub fn single(atom: BasisModule) -> Self {
        ConvexEnsemble {
            bound: atom.bound(),
            atoms: vec![atom],
            weights: vec![1.0],
        }
    }

    pub fn from_parts(atoms: Vec<BasisModule>, weights: Vec<f64>) -> Result<Self> {
        let first = atoms.first().ok_or(Error::EmptyEnsemble)?;
        Error::check_dim(atoms.len(), weights.len())?;
        let bound = first.bound();
        let ens = ConvexEnsemble { atoms, weights, bound };
        for a in &ens.atoms {
            ens.check_compatible(a)?;
        }
        if ens.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let sum: f64 = ens.weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(ens)
    }

    pub fn atoms(&self) -> &[BasisModule] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.atoms[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.atoms[0].output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.atoms.iter().map(BasisModule::n_params).sum::<usize>() + self.weights.len()
    }

    fn check_compatible(&self, g: &BasisModule) -> Result<()> {
        let first = &self.atoms[0];
        Error::check_dim(first.input_dim(), g.input_dim())?;
        Error::check_dim(first.output_dim(), g.output_dim())?;
        if g.bound() != self.bound {
            return Err(Error::invalid(format!(
                "atom bound {} differs from ensemble bound {}",
                g.bound(),
                self.bound
            )));
        }
        Ok(())
    }

    fn check_index(&self, a: usize) -> Result<()> {
        if a < self.atoms.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "atom index {a} out of range for {} atoms",
                self.atoms.len()
            )))
        }
    }

    fn renormalize(&mut self) {
        for w in &mut self.weights {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if sum > 0.0 {
            for w in &mut self.weights {
                *w /= sum;
            }
        }
    }

    fn resolve(&mut self, g: Incoming) -> Result<usize> {
        match g {
            Incoming::New(module) => {
                self.check_compatible(&module)?;
                self.atoms.push(module);
                self.weights.push(0.0);
                Ok(self.atoms.len() - 1)
            }
            Incoming::Existing(i) => {
                self.check_index(i)?;
                Ok(i)
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.atoms.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        Error::check_dim(self.input_dim(), x.len())?;
        let m = self.output_dim();
        let mut out = vec![0.0; m];
        let mut buf = vec![0.0; m];
        let mut scratch = Scratch::default();
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            a.forward_with(&mut scratch, x, &mut buf);
            for (o, v) in out.iter_mut().zip(&buf) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// Predictions for every row of a row-major `n x d` matrix, as `n x m`.
    pub fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        if self.atoms.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let d = self.input_dim();
        if !rows.len().is_multiple_of(d) {
            return Err(Error::invalid("row buffer is not a multiple of the input dimension"));
        }
        let n = rows.len() / d;
        let m = self.output_dim();
        let mut out = vec![0.0; n * m];
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            for (o, v) in out.iter_mut().zip(a.outputs(rows)) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// `f <- (1 - alpha) f + alpha g`. Returns the index of `g`.
    pub fn add_blend(&mut self, g: Incoming, alpha: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("blend weight {alpha} outside [0,1]")));
        }
        let idx = self.resolve(g)?;
        for w in &mut self.weights {
            *w *= 1.0 - alpha;
        }
        self.weights[idx] += alpha;
        self.renormalize();
        Ok(idx)
    }

    /// Largest admissible away step for atom `a`: `alpha_a / (1 - alpha_a)`.
    pub fn away_cap(&self, a: usize) -> Result<f64> {
        self.check_index(a)?;
        let wa = self.weights[a];
        if wa >= 1.0 {
            return Err(Error::invalid("away step from an atom holding all the weight"));
        }
        Ok(wa / (1.0 - wa))
    }

    /// `f <- (1 + gamma) f - gamma g_a`, with `0 <= gamma <= alpha_a / (1 - alpha_a)`.
    pub fn away_reweight(&mut self, a: usize, gamma: f64) -> Result<()> {
        let cap = self.away_cap(a)?;
        if !(gamma >= 0.0) || gamma > cap * (1.0 + STEP_SLACK) + STEP_SLACK {
            return Err(Error::invalid(format!("away step {gamma} outside [0, {cap}]")));
        }
        let wa = self.weights[a];
        for w in &mut self.weights {
            *w *= 1.0 + gamma;
        }
        self.weights[a] = if gamma >= cap { 0.0 } else { wa - gamma * (1.0 - wa) };
        self.renormalize();
        Ok(())
    }

    /// Moves `gamma` of weight from atom `a` to `g`. Returns the index of `g`.
    pub fn pairwise_swap(&mut self, a: usize, g: Incoming, gamma: f64) -> Result<usize> {
        self.check_index(a)?;
        let wa = self.weights[a];
        if !(gamma >= 0.0) || gamma > wa * (1.0 + STEP_SLACK) {
            return Err(Error::invalid(format!(
                "pairwise step {gamma} exceeds source weight {wa}"
            )));
        }
        let idx = self.resolve(g)?;
        if idx == a {
            return Ok(idx);
        }
        let gamma = gamma.min(wa);
        self.weights[a] = if gamma >= wa { 0.0 } else { wa - gamma };
        self.weights[idx] += gamma;
        self.renormalize();
        Ok(idx)
    }

    /// Drops atoms with weight `<= eps` and renormalizes. Returns the original
    /// indices of the surviving atoms, in order.
    pub fn prune(&mut self, eps: f64) -> Result<Vec<usize>> {
        let keep: Vec<usize> = (0..self.weights.len()).filter(|&i| self.weights[i] > eps).collect();
        if keep.is_empty() {
            return Err(Error::invalid(format!("every weight is <= {eps}")));
        }
        if keep.len() < self.weights.len() {
            let mut i = 0;
            self.atoms.retain(|_| {
                i += 1;
                self.weights[i - 1] > eps
            });
            self.weights.retain(|&w| w > eps);
        }
        self.renormalize();
        Ok(keep)
    }

    /// Replaces all weights at once; they must lie on the simplex.
    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        let candidate = ConvexEnsemble::from_parts(self.atoms.clone(), weights)?;
        self.weights = candidate.weights;
        self.renormalize();
        Ok(())
    }
}
