//! Indexing of the stacked estimate vector.
//!
//! Player `i` keeps one estimate for every member of `Ñ_I^in(i)`. The blocks
//! are laid out player by player, each block in ascending order of the
//! estimated player, giving a vector of length `m = Σ_i m_i^in`.
//!
//! `H` (`m × N`) marks, in column `j`, every slot that holds an estimate of
//! player `j`. That includes the owner's own slot `s_jj`, which is what makes
//! `HᵀH = diag(m^out)` hold with `m_j^out = outdeg(j) + 1`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::digraph::Digraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EstimateLayout {
    n: usize,
    m: usize,
    neighborhoods: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    m_in: Vec<usize>,
    m_out: Vec<usize>,
    /// slot positions per estimated player, ascending by owner
    columns: Vec<Vec<usize>>,
    /// (owner, estimated) per slot, zero-based
    slots: Vec<(usize, usize)>,
}

impl EstimateLayout {
    /// Builds the layout for interference graph `g_i` using the cumulative
    /// slot formula `s_ij = Σ_{l≤j} B(i,l) + Σ_{r<i} m_r^in`, then checks
    /// that it is a bijection with contiguous, ordered blocks.
    pub fn build(g_i: &Digraph) -> Result<Self> {
        if !g_i.is_strongly_connected() {
            return Err(Error::NotStronglyConnected("interference graph".into()));
        }
        Self::build_unchecked(g_i)
    }

    /// Layout without the connectivity precondition, for forced runs.
    pub(crate) fn build_unchecked(g_i: &Digraph) -> Result<Self> {
        let n = g_i.n();
        let b: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| j == i || g_i.has_edge0(j, i)).collect())
            .collect();
        let m_in: Vec<usize> = (0..n).map(|i| g_i.in0(i).len() + 1).collect();
        let m_out: Vec<usize> = (0..n).map(|i| g_i.out0(i).len() + 1).collect();
        let m: usize = m_in.iter().sum();

        let mut slots = vec![(usize::MAX, usize::MAX); m];
        let mut offsets = Vec::with_capacity(n);
        let mut before = 0usize;
        for i in 0..n {
            offsets.push(before);
            let mut running = 0usize;
            for j in 0..n {
                running += b[i][j] as usize;
                if b[i][j] {
                    // 1-based s_ij = running + before
                    let s = running + before;
                    if slots[s - 1].0 != usize::MAX {
                        return Err(Error::Input(format!("slot {s} assigned twice")));
                    }
                    slots[s - 1] = (i, j);
                }
            }
            before += m_in[i];
        }
        let neighborhoods: Vec<Vec<usize>> = (0..n).map(|i| g_i.closed_in0(i)).collect();

        // exhaustive layout check: contiguous blocks, ascending estimated player
        for i in 0..n {
            for (k, &j) in neighborhoods[i].iter().enumerate() {
                if slots[offsets[i] + k] != (i, j) {
                    return Err(Error::Input(format!(
                        "slot layout broken at player {}",
                        i + 1
                    )));
                }
            }
        }
        let mut columns = vec![Vec::new(); n];
        for (s, &(_, j)) in slots.iter().enumerate() {
            columns[j].push(s);
        }
        debug_assert!(columns.iter().zip(&m_out).all(|(c, &mo)| c.len() == mo));

        Ok(EstimateLayout {
            n,
            m,
            neighborhoods,
            offsets,
            m_in,
            m_out,
            columns,
            slots,
        })
    }

    pub fn complete(n: usize) -> Self {
        EstimateLayout::build(&Digraph::complete(n))
            .expect("complete digraph is strongly connected")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m_in(&self) -> &[usize] {
        &self.m_in
    }

    pub fn m_out(&self) -> &[usize] {
        &self.m_out
    }

    /// Zero-based members of `Ñ_I^in(i)` for zero-based `i`.
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    /// First position of zero-based player `i`'s block.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Position in the stacked vector of player `i`'s estimate of player `j`
    /// (1-based players; zero-based position, so the conventional slot
    /// number is the result plus one). `None` if `j ∉ Ñ_I^in(i)`.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i == 0 || j == 0 || i > self.n || j > self.n {
            return None;
        }
        self.slot0(i - 1, j - 1)
    }

    pub(crate) fn slot0(&self, i: usize, j: usize) -> Option<usize> {
        self.neighborhoods[i]
            .binary_search(&j)
            .ok()
            .map(|k| self.offsets[i] + k)
    }

    /// Zero-based `(owner, estimated)` of each slot.
    pub fn slot_owners(&self) -> &[(usize, usize)] {
        &self.slots
    }

    /// Slots holding an estimate of zero-based player `j` (column `j` of `H`).
    pub fn column(&self, j: usize) -> &[usize] {
        &self.columns[j]
    }

    /// Dense `B` (`b_ij = 1` iff `j ∈ Ñ_I^in(i)`).
    pub fn b_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if self.neighborhoods[i].binary_search(&j).is_ok() {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Dense `H`. With `include_diagonal = false` the owners' own slots are
    /// left out, which is the negative control for the `W^I H = H` check.
    pub fn h_dense(&self, include_diagonal: bool) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.m, self.n);
        for (j, col) in self.columns.iter().enumerate() {
            for &s in col {
                if include_diagonal || self.slots[s].0 != j {
                    h[(s, j)] = 1.0;
                }
            }
        }
        h
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `z = diag(1./m^out) Hᵀ x̃`: mean of all slots estimating each player.
    pub fn player_average(&self, x_tilde: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x_tilde)?;
        Ok(self.player_average_unchecked(x_tilde))
    }

    fn player_average_unchecked(&self, x_tilde: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().map(|&s| x_tilde[s]).sum::<f64>() / col.len() as f64)
            .collect()
    }

    /// `Z = H z`: every slot replaced by the mean for its estimated player.
    pub fn augmented_average(&self, x_tilde: &[f64]) -> Result<Vec<f64>> {
        let z = self.player_average(x_tilde)?;
        Ok(self.slots.iter().map(|&(_, j)| z[j]).collect())
    }

    /// `‖x̃ − Z‖`, reusing `scratch` for the player means.
    pub fn consensus_error(&self, x_tilde: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend(
            self.columns
                .iter()
                .map(|col| col.iter().map(|&s| x_tilde[s]).sum::<f64>() / col.len() as f64),
        );
        self.slots
            .iter()
            .zip(x_tilde)
            .map(|(&(_, j), &v)| (v - scratch[j]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn slot_table(&self) -> SlotTable {
        SlotTable {
            n: self.n,
            m: self.m,
            m_in: self.m_in.clone(),
            m_out: self.m_out.clone(),
            slots: self
                .slots
                .iter()
                .enumerate()
                .map(|(s, &(i, j))| SlotEntry {
                    slot: s + 1,
                    owner: i + 1,
                    estimates: j + 1,
                })
                .collect(),
        }
    }
}

/// Diagnostic dump of the slot assignment (1-based throughout).
#[derive(Debug, Clone, Serialize)]
pub struct SlotTable {
    pub n: usize,
    pub m: usize,
    pub m_in: Vec<usize>,
    pub m_out: Vec<usize>,
    pub slots: Vec<SlotEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlotEntry {
    pub slot: usize,
    pub owner: usize,
    pub estimates: usize,
}
