//! Population management: which valid candidates survive.
//!
//! Three strategy families are supported:
//!
//! * [`PopulationStrategy::SingleBest`] keeps only the incumbent and replaces
//!   it on strict improvement.
//! * [`PopulationStrategy::Elite`] keeps the `capacity` best candidates ever
//!   inserted.
//! * [`PopulationStrategy::Islands`] partitions trials round-robin over
//!   independent sub-populations, each managed with the elite rule. There is
//!   no migration between islands.
//!
//! Members are always ordered by fitness descending, ties broken by the
//! earlier trial index.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{Candidate, CandidateStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationStrategy {
    SingleBest,
    Elite,
    Islands,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub strategy: PopulationStrategy,
    /// Elite: k. Islands: per-island capacity. SingleBest: always 1.
    pub capacity: usize,
    /// Only meaningful for `Islands`.
    pub island_count: usize,
}

impl PopulationConfig {
    pub fn single_best() -> Self {
        PopulationConfig {
            strategy: PopulationStrategy::SingleBest,
            capacity: 1,
            island_count: 1,
        }
    }

    pub fn elite(k: usize) -> Self {
        PopulationConfig {
            strategy: PopulationStrategy::Elite,
            capacity: k,
            island_count: 1,
        }
    }

    pub fn islands(island_count: usize, per_island: usize) -> Self {
        PopulationConfig {
            strategy: PopulationStrategy::Islands,
            capacity: per_island,
            island_count,
        }
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.capacity == 0 {
            return Err(PopulationError::InvalidConfig("capacity must be >= 1"));
        }
        if self.island_count == 0 {
            return Err(PopulationError::InvalidConfig("island_count must be >= 1"));
        }
        Ok(())
    }

    fn effective_capacity(&self) -> usize {
        match self.strategy {
            PopulationStrategy::SingleBest => 1,
            _ => self.capacity,
        }
    }

    fn effective_islands(&self) -> usize {
        match self.strategy {
            PopulationStrategy::Islands => self.island_count,
            _ => 1,
        }
    }
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig::elite(4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PopulationError {
    NotValid { id: String, status: CandidateStatus },
    MissingFitness { id: String },
    NotIslands,
    InvalidConfig(&'static str),
}

impl fmt::Display for PopulationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PopulationError::NotValid { id, status } => write!(
                f,
                "only valid candidates may enter a population ({id} has status {})",
                status.as_str()
            ),
            PopulationError::MissingFitness { id } => {
                write!(f, "candidate {id} has no timing, so its fitness is undefined")
            }
            PopulationError::NotIslands => f.write_str("island routing requires the islands strategy"),
            PopulationError::InvalidConfig(msg) => write!(f, "invalid population config: {msg}"),
        }
    }
}

impl core::error::Error for PopulationError {}

/// A retained candidate together with its fitness (speedup over baseline).
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub candidate: Candidate,
    pub fitness: f64,
}

/// Ranking used everywhere: fitness descending, then trial index ascending.
pub fn rank_order(a_fitness: f64, a_trial: u32, b_fitness: f64, b_trial: u32) -> Ordering {
    b_fitness
        .total_cmp(&a_fitness)
        .then_with(|| a_trial.cmp(&b_trial))
}

fn member_order(a: &Member, b: &Member) -> Ordering {
    rank_order(
        a.fitness,
        a.candidate.trial_index,
        b.fitness,
        b.candidate.trial_index,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    config: PopulationConfig,
    baseline_mean_ms: f64,
    islands: Vec<Vec<Member>>,
    total_inserted: u64,
}

impl Population {
    pub fn new(config: PopulationConfig, baseline_mean_ms: f64) -> Result<Self, PopulationError> {
        config.validate()?;
        let islands = vec![Vec::new(); config.effective_islands()];
        Ok(Population {
            config,
            baseline_mean_ms,
            islands,
            total_inserted: 0,
        })
    }

    pub fn config(&self) -> &PopulationConfig {
        &self.config
    }

    pub fn total_inserted(&self) -> u64 {
        self.total_inserted
    }

    pub fn len(&self) -> usize {
        self.islands.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Members of one island (index 0 for non-island strategies).
    pub fn island(&self, index: usize) -> &[Member] {
        self.islands.get(index).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn island_count(&self) -> usize {
        self.islands.len()
    }

    /// All members, island by island.
    pub fn members(&self) -> impl Iterator<Item = (usize, &Member)> {
        self.islands
            .iter()
            .enumerate()
            .flat_map(|(i, island)| island.iter().map(move |m| (i, m)))
    }

    /// Island that owns `trial_index`: round-robin over the islands.
    pub fn island_route(&self, trial_index: u32) -> Result<usize, PopulationError> {
        if self.config.strategy != PopulationStrategy::Islands {
            return Err(PopulationError::NotIslands);
        }
        Ok(trial_index as usize % self.islands.len())
    }

    /// Offers a valid candidate. Returns whether it was retained.
    pub fn insert(&mut self, candidate: Candidate) -> Result<bool, PopulationError> {
        if candidate.status != CandidateStatus::Valid {
            return Err(PopulationError::NotValid {
                id: candidate.id,
                status: candidate.status,
            });
        }
        let fitness = candidate
            .fitness(self.baseline_mean_ms)
            .ok_or_else(|| PopulationError::MissingFitness {
                id: candidate.id.clone(),
            })?;
        let island_index = match self.config.strategy {
            PopulationStrategy::Islands => self.island_route(candidate.trial_index)?,
            _ => 0,
        };
        let capacity = self.config.effective_capacity();
        self.total_inserted += 1;

        let island = &mut self.islands[island_index];
        let member = Member { candidate, fitness };
        if self.config.strategy == PopulationStrategy::SingleBest {
            let replace = match island.first() {
                None => true,
                Some(incumbent) => fitness > incumbent.fitness,
            };
            if replace {
                island.clear();
                island.push(member);
            }
            return Ok(replace);
        }

        let pos = island
            .binary_search_by(|probe| member_order(probe, &member))
            .unwrap_or_else(|p| p);
        if pos >= capacity {
            return Ok(false);
        }
        island.insert(pos, member);
        island.truncate(capacity);
        Ok(true)
    }

    /// Best member overall (across islands).
    pub fn incumbent(&self) -> Option<&Member> {
        self.islands
            .iter()
            .filter_map(|island| island.first())
            .min_by(|a, b| member_order(a, b))
    }

    /// Up to `n` members in rank order. For islands, only members of the
    /// island that `trial_index` routes to are returned.
    pub fn context_solutions(&self, n: usize, trial_index: u32) -> Vec<&Member> {
        let island = match self.config.strategy {
            PopulationStrategy::Islands => {
                trial_index as usize % self.islands.len()
            }
            _ => 0,
        };
        self.islands[island].iter().take(n).collect()
    }
}
