//! Objectives and the machine's threshold rules in uniform [0, 1]-time.
//!
//! Rules see only the arrival index j, the relative rank r_j and the
//! transformed time τ_j = F̃(T_j). Rank objectives other than "best" use
//! tables built offline by simulation; they ship as a JSON artifact that
//! records its build seed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::game::{Decision, GameInstance};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Objective {
    /// Finish with exactly this final rank.
    ExactRank { rank: u32 },
    /// Finish among the ⌈qN/100⌉ best.
    TopPercent { q: u32 },
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Objective::ExactRank { rank } if rank >= 1 => Ok(()),
            Objective::TopPercent { q } if (1..=100).contains(&q) => Ok(()),
            _ => Err(invalid(format!("bad objective {self:?}"))),
        }
    }

    /// Number of final ranks that count as success for `n` observations.
    pub fn cutoff(&self, n: u32) -> u32 {
        match *self {
            Objective::ExactRank { rank } => rank,
            Objective::TopPercent { q } => (q * n).div_ceil(100),
        }
    }

    pub fn satisfied(&self, final_rank: u32, n: u32) -> bool {
        match *self {
            Objective::ExactRank { rank } => final_rank == rank,
            Objective::TopPercent { .. } => final_rank <= self.cutoff(n),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Objective::ExactRank { rank } => format!("EXACT_RANK({rank})"),
            Objective::TopPercent { q } => format!("TOP_PERCENT({q})"),
        }
    }
}

/// The default hypothesis grid, also the set of shipped tables.
pub fn objective_grid() -> Vec<Objective> {
    let mut grid: Vec<Objective> = (1..=3).map(|rank| Objective::ExactRank { rank }).collect();
    grid.extend([5, 10, 15, 20, 25, 30, 40, 50].map(|q| Objective::TopPercent { q }));
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Rule {
    /// Accept a relative best once τ ≥ 1/e.
    OneOverE,
    /// Accept relative rank s ≤ taus.len() once τ ≥ taus[s − 1].
    RankTimes { taus: Vec<f64> },
    /// Split [0, 1] into equal τ-cells; in cell i accept r_j ≤ θ_i · j.
    Fraction { thetas: Vec<f64> },
}

impl Rule {
    pub fn accepts(&self, j: usize, rel_rank: usize, tau: f64) -> bool {
        match self {
            Rule::OneOverE => rel_rank == 1 && tau >= (-1.0f64).exp(),
            Rule::RankTimes { taus } => rel_rank <= taus.len() && tau >= taus[rel_rank - 1],
            Rule::Fraction { thetas } => {
                let cell = ((tau * thetas.len() as f64) as usize).min(thetas.len() - 1);
                rel_rank as f64 <= thetas[cell] * j as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub objective: Objective,
    #[serde(flatten)]
    pub rule: Rule,
    /// Training success rate, or the asymptotic rate for the 1/e rule.
    pub success: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableBuild {
    pub seed: u64,
    /// Training N is uniform on 1..=m.
    pub m: u32,
    pub games: usize,
    /// Grid steps per unit for τ and θ.
    pub resolution: u32,
}

impl Default for TableBuild {
    fn default() -> Self {
        TableBuild { seed: 0x4e616d7572, m: 100, games: 4000, resolution: 40 }
    }
}

/// All machine tables with their build settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSet {
    pub build: TableBuild,
    pub tables: Vec<ThresholdTable>,
}

const SHIPPED: &str = include_str!("../../data/threshold_tables.json");

impl TableSet {
    /// The tables versioned with the crate.
    pub fn shipped() -> &'static TableSet {
        static CELL: std::sync::OnceLock<TableSet> = std::sync::OnceLock::new();
        CELL.get_or_init(|| serde_json::from_str(SHIPPED).expect("shipped tables parse"))
    }

    pub fn build(objectives: &[Objective], build: TableBuild) -> Result<TableSet> {
        let games = training_games(&build)?;
        let tables = objectives.iter().map(|&o| build_table(o, &games, build.resolution)).collect::<Result<_>>()?;
        Ok(TableSet { build, tables })
    }

    pub fn get(&self, objective: Objective) -> Option<&ThresholdTable> {
        self.tables.iter().find(|t| t.objective == objective)
    }

    /// The rule for `objective`. Objectives without a table fall back to the
    /// nearest tabulated one of the same kind.
    pub fn rule_for(&self, objective: Objective) -> &Rule {
        if let Some(t) = self.get(objective) {
            return &t.rule;
        }
        let distance = |o: &Objective| match (o, objective) {
            (Objective::ExactRank { rank: a }, Objective::ExactRank { rank: b }) => a.abs_diff(b),
            (Objective::TopPercent { q: a }, Objective::TopPercent { q: b }) => a.abs_diff(b),
            _ => u32::MAX,
        };
        &self.tables.iter().min_by_key(|t| distance(&t.objective)).expect("tables are nonempty").rule
    }
}

/// One machine decision. `m` bounds N, so the m-th arrival is known to be
/// the last and must be taken.
pub fn rule_decision(rule: &Rule, j: usize, rel_rank: usize, tau: f64, m: u32) -> Decision {
    if j as u64 >= m as u64 || rule.accepts(j, rel_rank, tau) {
        Decision::Accept
    } else {
        Decision::Pass
    }
}

/// A training game in uniform time.
#[derive(Debug, Clone)]
pub struct TrainingGame {
    pub n: u32,
    pub taus: Vec<f64>,
    pub rel_ranks: Vec<usize>,
    pub final_ranks: Vec<usize>,
}

pub fn training_games(build: &TableBuild) -> Result<Vec<TrainingGame>> {
    if build.m == 0 || build.games == 0 || build.resolution == 0 {
        return Err(invalid("table build needs m, games and resolution positive"));
    }
    Ok((0..build.games as u64)
        .into_par_iter()
        .map(|g| {
            let mut rng = stream_rng(build.seed, g);
            let n = rng.random_range(1..=build.m);
            let mut taus: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            taus.sort_by(f64::total_cmp);
            let values = (0..n).map(|_| rng.random::<f64>()).collect();
            let view = GameInstance::from_values(values).expect("uniform values").rank_view();
            TrainingGame { n, taus, rel_ranks: view.relative_ranks, final_ranks: view.final_ranks }
        })
        .collect())
}

/// Success count of `rule` on `games`. Training games always end by forced
/// acceptance of the last arrival, whatever m was.
pub fn successes(rule: &Rule, objective: Objective, games: &[TrainingGame]) -> usize {
    games
        .par_iter()
        .filter(|g| {
            let n = g.taus.len();
            let k = (0..n).find(|&i| rule.accepts(i + 1, g.rel_ranks[i], g.taus[i])).unwrap_or(n - 1);
            objective.satisfied(g.final_ranks[k] as u32, g.n)
        })
        .count()
}

fn build_table(objective: Objective, games: &[TrainingGame], resolution: u32) -> Result<ThresholdTable> {
    objective.validate()?;
    let grid: Vec<f64> = (0..=resolution).map(|i| i as f64 / resolution as f64).collect();
    let mut rule = match objective {
        Objective::ExactRank { rank: 1 } => {
            return Ok(ThresholdTable { objective, rule: Rule::OneOverE, success: (-1.0f64).exp() });
        }
        Objective::ExactRank { rank } => Rule::RankTimes { taus: vec![0.5; rank as usize] },
        Objective::TopPercent { q } => {
            let start = grid[((q * resolution) as f64 / 100.0).round() as usize];
            Rule::Fraction { thetas: vec![start; 10] }
        }
    };
    let mut best = successes(&rule, objective, games);
    for _sweep in 0..4 {
        let mut improved = false;
        let len = match &rule {
            Rule::RankTimes { taus } => taus.len(),
            Rule::Fraction { thetas } => thetas.len(),
            Rule::OneOverE => 0,
        };
        for i in 0..len {
            for &g in &grid {
                let mut trial = rule.clone();
                match &mut trial {
                    Rule::RankTimes { taus } => taus[i] = g,
                    Rule::Fraction { thetas } => thetas[i] = g,
                    Rule::OneOverE => {}
                }
                let s = successes(&trial, objective, games);
                if s > best {
                    best = s;
                    rule = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(ThresholdTable { objective, rule, success: best as f64 / games.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoffs_round_up() {
        assert_eq!(Objective::TopPercent { q: 10 }.cutoff(30), 3);
        assert_eq!(Objective::TopPercent { q: 10 }.cutoff(31), 4);
        assert!(Objective::TopPercent { q: 10 }.satisfied(3, 30));
        assert!(!Objective::TopPercent { q: 10 }.satisfied(4, 30));
        assert!(Objective::TopPercent { q: 5 }.satisfied(1, 1));
        assert!(Objective::ExactRank { rank: 2 }.satisfied(2, 9));
        assert!(!Objective::ExactRank { rank: 2 }.satisfied(1, 9));
        assert!(Objective::TopPercent { q: 0 }.validate().is_err());
    }

    #[test]
    fn objective_json_shape() {
        let o = Objective::TopPercent { q: 20 };
        assert_eq!(serde_json::to_string(&o).unwrap(), r#"{"kind":"TOP_PERCENT","q":20}"#);
    }

    #[test]
    fn the_last_possible_arrival_is_forced() {
        assert_eq!(rule_decision(&Rule::OneOverE, 1, 3, 0.0, 1), Decision::Accept);
        assert_eq!(rule_decision(&Rule::OneOverE, 1, 1, 0.1, 5), Decision::Pass);
        assert_eq!(rule_decision(&Rule::OneOverE, 2, 1, 0.5, 5), Decision::Accept);
    }

    #[test]
    fn shipped_tables_cover_the_grid() {
        let set = TableSet::shipped();
        for o in objective_grid() {
            assert!(set.get(o).is_some(), "{o:?}");
        }
        assert_eq!(set.rule_for(Objective::TopPercent { q: 22 }), set.rule_for(Objective::TopPercent { q: 20 }));
    }

    #[test]
    fn looser_objectives_succeed_more_often() {
        let set = TableSet::shipped();
        let rates: Vec<f64> =
            [5, 10, 20, 50].iter().map(|&q| set.get(Objective::TopPercent { q }).unwrap().success).collect();
        assert!(rates.windows(2).all(|w| w[0] < w[1]), "{rates:?}");
    }
}
