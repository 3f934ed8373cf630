use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::evaluator::{EvalConfig, Stage};
use crate::llm::GenerationParams;
use crate::population::PopulationStrategy;
use crate::traverse::{StrategyConfig, StrategyName};

/// Everything that determines a search, recorded in every archive header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: StrategyConfig,
    pub budget_trials: u32,
    /// Cold-start trials (generation 0) for elite strategies.
    pub init_trials: u32,
    pub offspring_per_generation: u32,
    pub generations: u32,
    pub seed: u64,
    pub generation_params: GenerationParams,
    pub eval_config: EvalConfig,
    pub runs_repeat: u32,
    pub insight_capacity: usize,
    /// Characters of compile/test feedback carried into the next prompt.
    pub feedback_limit: usize,
}

impl RunConfig {
    /// Defaults for a named configuration: 45 trials; elite strategies use
    /// 5 initialization trials then 10 generations of 4 offspring.
    pub fn new(name: StrategyName) -> Self {
        let strategy = StrategyConfig::new(name);
        let (init_trials, offspring_per_generation, generations) =
            match strategy.population.strategy {
                PopulationStrategy::Elite | PopulationStrategy::Islands => (5, 4, 10),
                PopulationStrategy::SingleBest => (0, 1, 45),
            };
        RunConfig {
            strategy,
            budget_trials: 45,
            init_trials,
            offspring_per_generation,
            generations,
            seed: 0,
            generation_params: GenerationParams::default(),
            eval_config: EvalConfig::default(),
            runs_repeat: 3,
            insight_capacity: 10,
            feedback_limit: 2000,
        }
    }

    pub fn schedule(&self) -> Schedule {
        match self.strategy.population.strategy {
            PopulationStrategy::SingleBest => Schedule::Flat {
                budget: self.budget_trials,
            },
            _ => Schedule::Generational {
                init: self.init_trials,
                offspring: self.offspring_per_generation,
                generations: self.generations,
            },
        }
    }

    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        if let Err(e) = self.strategy.validate() {
            errors.push(e);
        }
        if self.budget_trials == 0 {
            errors.push(String::from("budget_trials must be >= 1"));
        }
        if self.offspring_per_generation == 0 {
            errors.push(String::from("offspring_per_generation must be >= 1"));
        }
        if self.generations == 0 {
            errors.push(String::from("generations must be >= 1"));
        }
        if self.runs_repeat == 0 {
            errors.push(String::from("runs_repeat must be >= 1"));
        }
        if let Schedule::Generational {
            init,
            offspring,
            generations,
        } = self.schedule()
        {
            let planned = u64::from(init) + u64::from(offspring) * u64::from(generations);
            if planned != u64::from(self.budget_trials) {
                errors.push(format!(
                    "init_trials + offspring_per_generation * generations = {planned}, but budget_trials = {}",
                    self.budget_trials
                ));
            }
        }
        if let Err(e) = self.generation_params.validate() {
            errors.push(String::from(e));
        }
        if let Err(e) = self.eval_config.validate() {
            errors.push(e);
        }
        if !self.eval_config.runs(Stage::Time) {
            errors.push(String::from(
                "searches need the time stage: fitness is the measured speedup",
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Configuration of the `repeat`-th independent run.
    pub fn for_repeat(&self, repeat: u32) -> RunConfig {
        let mut cfg = self.clone();
        cfg.seed = self.seed.wrapping_add(u64::from(repeat));
        cfg
    }
}

/// Order in which trials are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// One trial after another against a single incumbent.
    Flat { budget: u32 },
    /// `init` cold-start trials (generation 0), then `generations` rounds of
    /// `offspring` trials each.
    Generational {
        init: u32,
        offspring: u32,
        generations: u32,
    },
}

impl Schedule {
    pub fn generation_of(&self, trial_index: u32) -> u32 {
        match *self {
            Schedule::Flat { .. } => trial_index,
            Schedule::Generational {
                init, offspring, ..
            } => {
                if trial_index < init {
                    0
                } else {
                    1 + (trial_index - init) / offspring.max(1)
                }
            }
        }
    }

    pub fn is_cold_start(&self, trial_index: u32) -> bool {
        match *self {
            Schedule::Flat { .. } => false,
            Schedule::Generational { init, .. } => trial_index < init,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_defaults_validate() {
        for name in StrategyName::ALL {
            let cfg = RunConfig::new(name);
            assert_eq!(cfg.validate(), Ok(()), "{name}");
            assert_eq!(cfg.budget_trials, 45);
        }
    }

    #[test]
    fn elite_schedule_must_fill_budget() {
        let mut cfg = RunConfig::new(StrategyName::Full);
        cfg.generations = 9;
        let errors = cfg.validate().unwrap_err();
        assert!(errors[0].contains("= 41"));
    }

    #[test]
    fn generation_numbers() {
        let s = RunConfig::new(StrategyName::Full).schedule();
        let gens: Vec<u32> = (0..45).map(|t| s.generation_of(t)).collect();
        assert_eq!(&gens[..5], &[0; 5]);
        assert_eq!(&gens[5..9], &[1; 4]);
        assert_eq!(gens[44], 10);
        assert!(s.is_cold_start(4));
        assert!(!s.is_cold_start(5));

        let flat = RunConfig::new(StrategyName::Free).schedule();
        assert_eq!(flat.generation_of(17), 17);
        assert!(!flat.is_cold_start(0));
    }

    #[test]
    fn repeats_shift_seed() {
        let mut cfg = RunConfig::new(StrategyName::Insight);
        cfg.seed = 40;
        assert_eq!(cfg.for_repeat(2).seed, 42);
    }
}
