//! Finite discrete distributions and their trimmed means.

use serde::{Deserialize, Serialize};

/// Support point with its probability mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub mass: f64,
}

/// Finite discrete distribution with distinct, ascending support points.
///
/// Prefix and suffix sums are kept so trimmed means cost `O(log n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    atoms: Vec<Atom>,
    // cum_mass[i] = mass of atoms[..i]; same layout for the first moment
    cum_mass: Vec<f64>,
    cum_moment: Vec<f64>,
    // suffix sums: tail_mass[i] = mass of atoms[i..]
    tail_mass: Vec<f64>,
    tail_moment: Vec<f64>,
}

impl Default for DiscreteDist {
    fn default() -> Self {
        Self::from_sorted_atoms(Vec::new())
    }
}

impl DiscreteDist {
    /// Build from `(value, weight)` pairs; weights are normalized by their
    /// total and equal values are merged. Non-positive weights are dropped.
    pub fn from_weights<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().filter(|&(_, w)| w > 0.0).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut atoms: Vec<Atom> = Vec::with_capacity(pairs.len());
        let mut run_weight = 0.0;
        for (i, &(value, w)) in pairs.iter().enumerate() {
            run_weight += w;
            let last_of_run = pairs.get(i + 1).is_none_or(|next| next.0 != value);
            if last_of_run {
                atoms.push(Atom {
                    value,
                    mass: run_weight / total,
                });
                run_weight = 0.0;
            }
        }
        Self::from_sorted_atoms(atoms)
    }

    /// Empirical distribution of `values`, one unit of weight each.
    pub fn empirical(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut atoms: Vec<Atom> = Vec::new();
        let mut start = 0;
        while start < sorted.len() {
            let value = sorted[start];
            let mut end = start + 1;
            while end < sorted.len() && sorted[end] == value {
                end += 1;
            }
            atoms.push(Atom {
                value,
                mass: (end - start) as f64 / n,
            });
            start = end;
        }
        Self::from_sorted_atoms(atoms)
    }

    fn from_sorted_atoms(atoms: Vec<Atom>) -> Self {
        let n = atoms.len();
        let mut cum_mass = Vec::with_capacity(n + 1);
        let mut cum_moment = Vec::with_capacity(n + 1);
        cum_mass.push(0.0);
        cum_moment.push(0.0);
        for a in &atoms {
            cum_mass.push(cum_mass.last().unwrap() + a.mass);
            cum_moment.push(cum_moment.last().unwrap() + a.mass * a.value);
        }
        let mut tail_mass = vec![0.0; n + 1];
        let mut tail_moment = vec![0.0; n + 1];
        for i in (0..n).rev() {
            tail_mass[i] = tail_mass[i + 1] + atoms[i].mass;
            tail_moment[i] = tail_moment[i + 1] + atoms[i].mass * atoms[i].value;
        }
        Self {
            atoms,
            cum_mass,
            cum_moment,
            tail_mass,
            tail_moment,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        *self.cum_mass.last().unwrap()
    }

    pub fn mass_at(&self, value: f64) -> f64 {
        self.atoms
            .binary_search_by(|a| a.value.total_cmp(&value))
            .map(|i| self.atoms[i].mass)
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        Some(self.cum_moment.last().unwrap() / self.total_mass())
    }

    pub fn min(&self) -> Option<f64> {
        self.atoms.first().map(|a| a.value)
    }

    pub fn max(&self) -> Option<f64> {
        self.atoms.last().map(|a| a.value)
    }

    /// Mean of the lowest `fraction` of the mass, splitting a boundary atom
    /// fractionally. `fraction` is clamped to `[0, 1]`; at zero the limit
    /// (the minimum support point) is returned.
    pub fn bottom_trimmed_mean(&self, fraction: f64) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let fraction = fraction.clamp(0.0, 1.0);
        if fraction == 0.0 {
            return self.min();
        }
        let target = fraction * self.total_mass();
        // first index whose prefix mass reaches the target
        let k = self.cum_mass.partition_point(|&m| m < target);
        if k == 0 {
            return self.min();
        }
        let k = k.min(self.atoms.len());
        let taken_before = self.cum_mass[k - 1];
        let partial = (target - taken_before).clamp(0.0, self.atoms[k - 1].mass);
        let moment = self.cum_moment[k - 1] + partial * self.atoms[k - 1].value;
        Some(moment / target)
    }

    /// Mean of the highest `fraction` of the mass; mirror of
    /// [`bottom_trimmed_mean`](Self::bottom_trimmed_mean).
    pub fn top_trimmed_mean(&self, fraction: f64) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let fraction = fraction.clamp(0.0, 1.0);
        if fraction == 0.0 {
            return self.max();
        }
        let target = fraction * self.total_mass();
        let n = self.atoms.len();
        // last index i whose suffix mass tail_mass[i] reaches the target
        let j = self.tail_mass[..n].partition_point(|&m| m >= target);
        if j == 0 {
            // target exceeds total by rounding; whole distribution
            return self.mean();
        }
        let i = j - 1;
        let taken_after = self.tail_mass[i + 1];
        let partial = (target - taken_after).clamp(0.0, self.atoms[i].mass);
        let moment = self.tail_moment[i + 1] + partial * self.atoms[i].value;
        Some(moment / target)
    }

    /// Add `shift` to every support point.
    pub fn shifted(&self, shift: f64) -> Self {
        Self::from_sorted_atoms(
            self.atoms
                .iter()
                .map(|a| Atom {
                    value: a.value + shift,
                    mass: a.mass,
                })
                .collect(),
        )
    }
}

impl Serialize for DiscreteDist {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.atoms.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DiscreteDist {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let atoms = Vec::<Atom>::deserialize(deserializer)?;
        Ok(Self::from_weights(atoms.into_iter().map(|a| (a.value, a.mass))))
    }
}
