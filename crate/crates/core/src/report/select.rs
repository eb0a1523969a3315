//! Forward selection of interaction terms by held-out AUC.
//!
//! Each step fits the current model plus one candidate on the training
//! blocks, scores the test blocks, and keeps the candidate with the highest
//! AUC (ties go to the lexicographically smallest term name). Candidates
//! whose fit cannot be identified are dropped from the pool. Selection stops
//! at the first step that does not improve AUC.

use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::csv::INTERCEPT_NAME;
use crate::data::split_train_test;
use crate::error::{PasaError, Result};
use crate::executor::{partition, run_pasa, PartitionPlan, RunConfig};
use crate::glm::{sigmoid, BatchData, GlmFamily};
use crate::report::metrics::auc;

/// Named numeric columns plus a binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(PasaError::Schema(format!("{} names for {} columns", names.len(), columns.len())));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != y.len()) {
            return Err(PasaError::Dimension(format!("column of length {} against {} outcomes", c.len(), y.len())));
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(PasaError::Schema(format!("duplicate column `{n}`")));
            }
        }
        Ok(FeatureTable { names, columns, y, index })
    }

    /// Splits a design into named columns, dropping the intercept column.
    pub fn from_design(batch: &BatchData, names: &[String]) -> Result<Self> {
        if names.len() != batch.p() {
            return Err(PasaError::Schema(format!("{} names for {} design columns", names.len(), batch.p())));
        }
        let mut kept_names = Vec::new();
        let mut columns = Vec::new();
        for (j, n) in names.iter().enumerate() {
            if n == INTERCEPT_NAME {
                continue;
            }
            kept_names.push(n.clone());
            columns.push(batch.rows().map(|r| r[j]).collect());
        }
        FeatureTable::new(kept_names, columns, batch.y().to_vec())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    fn column(&self, name: &str) -> Result<&[f64]> {
        self.index
            .get(name)
            .map(|&i| self.columns[i].as_slice())
            .ok_or_else(|| PasaError::Schema(format!("unknown column `{name}`")))
    }

    /// Design with an optional intercept followed by one column per term.
    pub fn design(&self, terms: &[Term], intercept: bool) -> Result<BatchData> {
        let factors: Vec<Vec<&[f64]>> = terms
            .iter()
            .map(|t| t.0.iter().map(|n| self.column(n)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let p = terms.len() + usize::from(intercept);
        let mut x = Vec::with_capacity(self.len() * p);
        for i in 0..self.len() {
            if intercept {
                x.push(1.0);
            }
            for f in &factors {
                x.push(f.iter().map(|c| c[i]).product());
            }
        }
        BatchData::new(self.y.clone(), x, p)
    }
}

/// A product of one or more named columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Term(pub Vec<String>);

impl Term {
    pub fn main(name: &str) -> Term {
        Term(vec![name.to_string()])
    }

    pub fn interaction(parents: &[&str]) -> Term {
        Term(parents.iter().map(|s| s.to_string()).collect())
    }

    /// Parses `a:b:c`.
    pub fn parse(text: &str) -> Term {
        Term(text.split(':').map(|s| s.trim().to_string()).collect())
    }

    pub fn name(&self) -> String {
        self.0.join(":")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Every product of two distinct base terms.
pub fn pairwise_interactions(base: &[Term]) -> Vec<Term> {
    let mut out = Vec::new();
    for i in 0..base.len() {
        for j in (i + 1)..base.len() {
            let mut parents = base[i].0.clone();
            parents.extend(base[j].0.iter().cloned());
            out.push(Term(parents));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub k: usize,
    pub q: usize,
    pub train_blocks: usize,
    pub intercept: bool,
    pub seed: u64,
    pub run: RunConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { k: 20, q: 10, train_blocks: 15, intercept: true, seed: 0, run: RunConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub term: String,
    pub auc: Option<f64>,
    /// Set when the candidate was dropped because its fit failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub candidates: Vec<CandidateScore>,
    /// Term added at this step; `None` on the final, non-improving step.
    pub chosen: Option<String>,
    pub best_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub base_terms: Vec<String>,
    pub base_auc: f64,
    pub steps: Vec<SelectionStep>,
    /// Terms in the order they were added.
    pub path: Vec<String>,
    /// AUC after each addition on `path`.
    pub path_auc: Vec<f64>,
    pub final_terms: Vec<String>,
    pub final_auc: f64,
    pub models_evaluated: usize,
    pub total_time_s: f64,
}

struct Evaluator<'a> {
    table: &'a FeatureTable,
    train: PartitionPlan,
    test: Vec<usize>,
    config: &'a SelectionConfig,
}

impl Evaluator<'_> {
    fn test_auc(&self, terms: &[Term]) -> Result<f64> {
        let design = self.table.design(terms, self.config.intercept)?;
        let est = run_pasa(GlmFamily::BernoulliLogit, &design, &self.train, &self.config.run)?;
        let beta = est.beta.as_slice();
        let mut scores = Vec::with_capacity(self.test.len());
        let mut labels = Vec::with_capacity(self.test.len());
        for &r in &self.test {
            scores.push(sigmoid(crate::glm::dot(design.row(r), beta)));
            labels.push(design.y()[r]);
        }
        auc(&scores, &labels)
    }
}

pub fn forward_select(
    base_terms: &[Term],
    candidate_terms: &[Term],
    table: &FeatureTable,
    config: &SelectionConfig,
) -> Result<SelectionTrace> {
    let start = Instant::now();
    if candidate_terms.is_empty() {
        return Err(PasaError::Config("forward selection needs at least one candidate term".into()));
    }
    if table.y().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(PasaError::Config("forward selection needs a binary outcome".into()));
    }
    let p_max = base_terms.len() + candidate_terms.len() + usize::from(config.intercept);
    let plan = partition(table.len(), config.k, config.q, p_max, config.seed)?;
    let (train, test) = split_train_test(&plan, config.train_blocks)?;
    let eval = Evaluator { table, train, test, config };

    let mut current: Vec<Term> = base_terms.to_vec();
    let base_auc = eval.test_auc(&current)?;
    let mut models_evaluated = 1;
    let mut current_auc = base_auc;

    let mut pool: Vec<Term> = candidate_terms.to_vec();
    pool.sort_by_key(Term::name);
    pool.dedup();

    let mut steps = Vec::new();
    let mut path = Vec::new();
    let mut path_auc = Vec::new();
    while !pool.is_empty() {
        let mut scores = Vec::with_capacity(pool.len());
        let mut best: Option<(usize, f64)> = None;
        let mut failed = Vec::new();
        for (i, cand) in pool.iter().enumerate() {
            let mut terms = current.clone();
            terms.push(cand.clone());
            models_evaluated += 1;
            match eval.test_auc(&terms) {
                Ok(a) => {
                    if best.is_none_or(|(_, b)| a > b) {
                        best = Some((i, a));
                    }
                    scores.push(CandidateScore { term: cand.name(), auc: Some(a), error: None });
                }
                Err(e) if e.is_identification() => {
                    failed.push(i);
                    scores.push(CandidateScore { term: cand.name(), auc: None, error: Some(e.to_string()) });
                }
                Err(e) => return Err(e),
            }
        }
        match best {
            Some((i, a)) if a > current_auc => {
                let chosen = pool[i].clone();
                steps.push(SelectionStep { candidates: scores, chosen: Some(chosen.name()), best_auc: Some(a) });
                path.push(chosen.name());
                path_auc.push(a);
                current.push(chosen);
                current_auc = a;
                failed.push(i);
            }
            other => {
                steps.push(SelectionStep { candidates: scores, chosen: None, best_auc: other.map(|(_, a)| a) });
                break;
            }
        }
        failed.sort_unstable();
        for i in failed.into_iter().rev() {
            pool.remove(i);
        }
    }

    // Highest-AUC prefix of the path; with the stopping rule above this is the whole path.
    let best_len = path_auc
        .iter()
        .enumerate()
        .fold((0, base_auc), |(bi, ba), (i, &a)| if a > ba { (i + 1, a) } else { (bi, ba) });
    let mut final_terms: Vec<String> = base_terms.iter().map(Term::name).collect();
    final_terms.extend(path[..best_len.0].iter().cloned());

    Ok(SelectionTrace {
        base_terms: base_terms.iter().map(Term::name).collect(),
        base_auc,
        steps,
        path,
        path_auc,
        final_terms,
        final_auc: best_len.1,
        models_evaluated,
        total_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Synthetic click-conversion style data: one standardized count, dummy
/// indicators for age, device (3 levels) and gender, and a planted
/// `age_2:clicks` interaction.
pub fn simulate_selection_table(n: usize, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["clicks", "age_2", "device_2", "device_3", "gender_2"];
    let mut columns = vec![Vec::with_capacity(n); names.len()];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let clicks: f64 = rng.sample(StandardNormal);
        let age2 = f64::from(u8::from(rng.random::<f64>() < 0.4));
        let device: f64 = rng.random();
        let dev2 = f64::from(u8::from(device < 0.3));
        let dev3 = f64::from(u8::from((0.3..0.6).contains(&device)));
        let gender2 = f64::from(u8::from(rng.random::<f64>() < 0.5));
        let eta = -1.5 + 0.5 * clicks + 0.3 * age2 - 0.3 * dev2 + 0.2 * dev3 + 0.25 * gender2
            + PLANTED_EFFECT * age2 * clicks;
        y.push(f64::from(u8::from(rng.random::<f64>() < sigmoid(eta))));
        for (col, v) in columns.iter_mut().zip([clicks, age2, dev2, dev3, gender2]) {
            col.push(v);
        }
    }
    FeatureTable::new(names.iter().map(|s| s.to_string()).collect(), columns, y)
        .expect("generated columns are consistent")
}

/// Coefficient of the planted interaction in [`simulate_selection_table`].
pub const PLANTED_EFFECT: f64 = 0.6;

/// Name of the planted interaction term.
pub fn planted_term() -> Term {
    Term::interaction(&["clicks", "age_2"])
}
