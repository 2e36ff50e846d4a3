//! Hyperparameter selection by nested, family-aware k-fold cross-validation.
//!
//! For each outer fold, patterns are generalized from the malicious entries
//! of the training portion only. The training portion is split 9:1; the
//! (λ, τ) grid point with the best F1 on the inner validation part is then
//! scored once on the untouched outer test fold. Folds never separate
//! members of one attack family.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::extract::ExtractedLogic;
use crate::matcher::{blend, generalize, CompiledPattern, LogicKey, MatchError, SideScore};
use crate::metrics::{mean_std, metrics_from_confusion, Confusion, Label, Metrics, MetricsError};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorpusEntry {
    pub logic: ExtractedLogic,
    pub label: Label,
    /// Attack family (the seed an imitation derives from).
    pub family: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCorpus {
    pub entries: Vec<CorpusEntry>,
}

impl LabeledCorpus {
    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Same logics and families with the labels randomly permuted.
    pub fn with_shuffled_labels(&self, seed: u64) -> LabeledCorpus {
        let mut labels: Vec<Label> = self.entries.iter().map(|e| e.label).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        LabeledCorpus {
            entries: self
                .entries
                .iter()
                .zip(labels)
                .map(|(e, label)| CorpusEntry { label, ..e.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TuneError {
    #[error("corpus needs both labels in every fold")]
    DegenerateInput,
    #[error("grid is empty")]
    GridEmpty,
    #[error("grid step {0} must lie in (0, 1]")]
    InvalidGridStep(f64),
    #[error("corpus has {found} entries, at least {needed} required")]
    TooFewEntries { needed: usize, found: usize },
    #[error("not enough benign entries for ratio {0}")]
    InsufficientBenign(Ratio),
    #[error("families {families:?} appear in both train and test of fold {fold}")]
    Leakage { fold: usize, families: Vec<String> },
    #[error("invalid ratio {0:?}")]
    InvalidRatio(String),
    #[error(transparent)]
    Match(#[from] MatchError),
}

impl From<MetricsError> for TuneError {
    fn from(_: MetricsError) -> Self {
        TuneError::DegenerateInput
    }
}

/// The (λ, τ) lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lambdas: Vec<f64>,
    pub taus: Vec<f64>,
}

impl Grid {
    /// Both axes `0, step, 2·step, …, 1`.
    pub fn with_step(step: f64) -> Result<Self, TuneError> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(TuneError::InvalidGridStep(step));
        }
        let exact = libm::round(1.0 / step);
        let axis: Vec<f64> = if libm::fabs(exact * step - 1.0) < 1e-9 {
            let n = exact as usize;
            (0..=n).map(|i| i as f64 / n as f64).collect()
        } else {
            let n = libm::floor(1.0 / step) as usize;
            (0..=n).map(|i| i as f64 * step).collect()
        };
        Ok(Grid {
            lambdas: axis.clone(),
            taus: axis,
        })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid::with_step(0.02).expect("valid default step")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub outer_folds: usize,
    /// The inner split holds out one part in `inner_parts` for validation
    /// (10 gives the 9:1 split).
    pub inner_parts: usize,
    pub grid: Grid,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            outer_folds: 4,
            inner_parts: 10,
            grid: Grid::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridPoint {
    pub lambda: f64,
    pub tau: f64,
    /// Mean inner-validation F1 across outer folds.
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldReport {
    pub fold: usize,
    pub lambda: f64,
    pub tau: f64,
    pub inner_f1: f64,
    pub test: Metrics,
    pub train_size: usize,
    pub test_size: usize,
    pub pattern_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuneResult {
    pub best_lambda: f64,
    pub best_tau: f64,
    pub best_f1: f64,
    pub per_fold: Vec<FoldReport>,
    pub mean_outer_f1: f64,
    pub std_outer_f1: f64,
    pub lambda_axis: Vec<f64>,
    pub tau_axis: Vec<f64>,
    /// λ-major surface: `grid[i * tau_axis.len() + j]` is (λ_i, τ_j).
    pub grid: Vec<GridPoint>,
}

impl TuneResult {
    /// Number of grid points 4-connected to the best point whose F1 is
    /// within `tolerance` of the best F1 (including the best point).
    pub fn plateau_size(&self, tolerance: f64) -> usize {
        let nt = self.tau_axis.len();
        let nl = self.lambda_axis.len();
        let Some(start) = self
            .grid
            .iter()
            .position(|p| p.lambda == self.best_lambda && p.tau == self.best_tau)
        else {
            return 0;
        };
        let floor = self.best_f1 - tolerance;
        let mut seen = vec![false; self.grid.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 0;
        while let Some(idx) = stack.pop() {
            count += 1;
            let (i, j) = (idx / nt, idx % nt);
            let mut neighbours = Vec::with_capacity(4);
            if i > 0 {
                neighbours.push(idx - nt);
            }
            if i + 1 < nl {
                neighbours.push(idx + nt);
            }
            if j > 0 {
                neighbours.push(idx - 1);
            }
            if j + 1 < nt {
                neighbours.push(idx + 1);
            }
            for n in neighbours {
                if !seen[n] && self.grid[n].f1 >= floor {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        count
    }
}

/// Malicious:benign ratio such as `1:5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ratio {
    pub malicious: u32,
    pub benign: u32,
}

impl Ratio {
    pub const fn new(malicious: u32, benign: u32) -> Self {
        Ratio { malicious, benign }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.malicious, self.benign)
    }
}

impl FromStr for Ratio {
    type Err = TuneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TuneError::InvalidRatio(String::from(s));
        let (m, b) = s.split_once(':').ok_or_else(bad)?;
        let m: u32 = m.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if m == 0 || b == 0 {
            return Err(bad());
        }
        Ok(Ratio::new(m, b))
    }
}

/// Assigns every entry of `subset` to one of `k` folds so that members of
/// a family share a fold and each class is spread as evenly as possible.
/// Returns the fold per position in `subset`.
fn family_folds(corpus: &LabeledCorpus, subset: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    // Units in order of first appearance, for determinism.
    let mut unit_of_family: BTreeMap<&str, usize> = BTreeMap::new();
    let mut units: Vec<Vec<usize>> = Vec::new();
    for (pos, &idx) in subset.iter().enumerate() {
        match corpus.entries[idx].family.as_deref() {
            Some(f) => {
                let u = *unit_of_family.entry(f).or_insert_with(|| {
                    units.push(Vec::new());
                    units.len() - 1
                });
                units[u].push(pos);
            }
            None => units.push(vec![pos]),
        }
    }
    units.shuffle(rng);
    let mut load = vec![[0usize; 2]; k];
    let mut fold_of = vec![0usize; subset.len()];
    for unit in &units {
        let class = match corpus.entries[subset[unit[0]]].label {
            Label::Malicious => 0,
            Label::Benign => 1,
        };
        let fold = (0..k)
            .min_by_key(|&f| (load[f][class], load[f][0] + load[f][1], f))
            .expect("k > 0");
        load[fold][class] += unit.len();
        for &pos in unit {
            fold_of[pos] = fold;
        }
    }
    fold_of
}

fn assert_no_leakage(corpus: &LabeledCorpus, train: &[usize], test: &[usize], fold: usize) -> Result<(), TuneError> {
    let families = |idx: &[usize]| -> BTreeSet<&str> {
        idx.iter()
            .filter_map(|&i| corpus.entries[i].family.as_deref())
            .collect()
    };
    let train_f = families(train);
    let shared: Vec<String> = families(test)
        .intersection(&train_f)
        .map(|s| String::from(*s))
        .collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(TuneError::Leakage { fold, families: shared })
    }
}

/// Patterns generalized from the malicious entries among `train`,
/// deduplicated by key sets. Entries without token-bearing items are
/// skipped.
pub fn patterns_from(corpus: &LabeledCorpus, train: &[usize]) -> Result<Vec<CompiledPattern>, TuneError> {
    let mut seen: BTreeSet<(Vec<LogicKey>, Vec<LogicKey>)> = BTreeSet::new();
    let mut out = Vec::new();
    for &i in train {
        let entry = &corpus.entries[i];
        if entry.label != Label::Malicious {
            continue;
        }
        let pattern = match generalize(&entry.logic, 0.5, 0.0, 0) {
            Ok(p) => p,
            Err(MatchError::EmptyPattern) => continue,
            Err(e) => return Err(e.into()),
        };
        if seen.insert((pattern.core_set().to_vec(), pattern.proto_set().to_vec())) {
            out.push(CompiledPattern::new(pattern));
        }
    }
    Ok(out)
}

/// Side scores of every entry against every pattern.
fn score_table(
    corpus: &LabeledCorpus,
    entries: &[usize],
    patterns: &[CompiledPattern],
) -> Vec<Vec<(SideScore, SideScore)>> {
    entries
        .iter()
        .map(|&i| patterns.iter().map(|p| p.side_scores(&corpus.entries[i].logic)).collect())
        .collect()
}

fn best_scores(table: &[Vec<(SideScore, SideScore)>], lambda: f64) -> Vec<f64> {
    table
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(c, p)| blend(lambda, c, p))
                .fold(0.0, f64::max)
        })
        .collect()
}

fn confusion_at(corpus: &LabeledCorpus, entries: &[usize], best: &[f64], tau: f64) -> Confusion {
    let mut c = Confusion::default();
    for (&i, &s) in entries.iter().zip(best) {
        c.record(corpus.entries[i].label, s >= tau);
    }
    c
}

fn f1_or_zero(c: &Confusion) -> f64 {
    if c.tp == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / (2 * c.tp + c.fp + c.fn_) as f64
    }
}

/// F1 surface over the grid, λ-major.
fn surface(corpus: &LabeledCorpus, entries: &[usize], patterns: &[CompiledPattern], grid: &Grid) -> Vec<f64> {
    let table = score_table(corpus, entries, patterns);
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in &grid.lambdas {
        let best = best_scores(&table, lambda);
        for &tau in &grid.taus {
            out.push(f1_or_zero(&confusion_at(corpus, entries, &best, tau)));
        }
    }
    out
}

/// Index of the best point: highest F1, then higher τ, then lower λ.
fn select(values: &[f64], grid: &Grid) -> usize {
    let nt = grid.taus.len();
    let mut best = 0;
    for idx in 1..values.len() {
        let (bi, bj) = (best / nt, best % nt);
        let (i, j) = (idx / nt, idx % nt);
        let better = values[idx] > values[best]
            || (values[idx] == values[best]
                && (grid.taus[j] > grid.taus[bj] || (grid.taus[j] == grid.taus[bj] && grid.lambdas[i] < grid.lambdas[bi])));
        if better {
            best = idx;
        }
    }
    best
}

/// Metrics of a fixed (λ, τ) on `test` with patterns from `train`.
fn evaluate_split(
    corpus: &LabeledCorpus,
    patterns: &[CompiledPattern],
    test: &[usize],
    lambda: f64,
    tau: f64,
) -> Result<Metrics, TuneError> {
    let table = score_table(corpus, test, patterns);
    let best = best_scores(&table, lambda);
    Ok(metrics_from_confusion(confusion_at(corpus, test, &best, tau))?)
}

fn split_by_fold(subset: &[usize], fold_of: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (pos, &idx) in subset.iter().enumerate() {
        if fold_of[pos] == fold {
            test.push(idx);
        } else {
            train.push(idx);
        }
    }
    (train, test)
}

fn check_corpus(corpus: &LabeledCorpus, folds: usize) -> Result<(), TuneError> {
    let needed = folds * 2;
    if corpus.entries.len() < needed || folds < 2 {
        return Err(TuneError::TooFewEntries {
            needed: needed.max(4),
            found: corpus.entries.len(),
        });
    }
    if corpus.count(Label::Malicious) < folds || corpus.count(Label::Benign) < folds {
        return Err(TuneError::DegenerateInput);
    }
    Ok(())
}

/// Outer fold of every corpus entry, exactly as [`nested_cv`] assigns them
/// for `seed`; exposed so callers can audit the split independently.
pub fn outer_fold_assignment(corpus: &LabeledCorpus, folds: usize, seed: u64) -> Vec<usize> {
    let all: Vec<usize> = (0..corpus.entries.len()).collect();
    family_folds(corpus, &all, folds, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Nested k-fold cross-validation over the (λ, τ) grid.
pub fn nested_cv(corpus: &LabeledCorpus, config: &TuneConfig) -> Result<TuneResult, TuneError> {
    if config.grid.is_empty() {
        return Err(TuneError::GridEmpty);
    }
    check_corpus(corpus, config.outer_folds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let all: Vec<usize> = (0..corpus.entries.len()).collect();
    let outer = family_folds(corpus, &all, config.outer_folds, &mut rng);

    let mut sum_surface = vec![0.0; config.grid.len()];
    let mut per_fold = Vec::with_capacity(config.outer_folds);
    for fold in 0..config.outer_folds {
        let (train, test) = split_by_fold(&all, &outer, fold);
        assert_no_leakage(corpus, &train, &test, fold)?;

        let inner = family_folds(corpus, &train, config.inner_parts, &mut rng);
        let (inner_train, validation) = split_by_fold(&train, &inner, 0);
        assert_no_leakage(corpus, &inner_train, &validation, fold)?;

        let inner_patterns = patterns_from(corpus, &inner_train)?;
        let surf = surface(corpus, &validation, &inner_patterns, &config.grid);
        for (acc, v) in sum_surface.iter_mut().zip(&surf) {
            *acc += v;
        }
        let chosen = select(&surf, &config.grid);
        let nt = config.grid.taus.len();
        let (lambda, tau) = (config.grid.lambdas[chosen / nt], config.grid.taus[chosen % nt]);

        let patterns = patterns_from(corpus, &train)?;
        let metrics = evaluate_split(corpus, &patterns, &test, lambda, tau)?;
        per_fold.push(FoldReport {
            fold,
            lambda,
            tau,
            inner_f1: surf[chosen],
            test: metrics,
            train_size: train.len(),
            test_size: test.len(),
            pattern_count: patterns.len(),
        });
    }

    let k = config.outer_folds as f64;
    let nt = config.grid.taus.len();
    let grid: Vec<GridPoint> = sum_surface
        .iter()
        .enumerate()
        .map(|(idx, s)| GridPoint {
            lambda: config.grid.lambdas[idx / nt],
            tau: config.grid.taus[idx % nt],
            f1: s / k,
        })
        .collect();
    let means: Vec<f64> = grid.iter().map(|p| p.f1).collect();
    let best = select(&means, &config.grid);
    let outer_f1: Vec<f64> = per_fold.iter().map(|f| f.test.f1_or_zero()).collect();
    let (mean_outer_f1, std_outer_f1) = mean_std(&outer_f1);
    Ok(TuneResult {
        best_lambda: grid[best].lambda,
        best_tau: grid[best].tau,
        best_f1: grid[best].f1,
        per_fold,
        mean_outer_f1,
        std_outer_f1,
        lambda_axis: config.grid.lambdas.clone(),
        tau_axis: config.grid.taus.clone(),
        grid,
    })
}

/// Mean and standard deviation of one metric across folds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Spread { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatioReport {
    pub ratio: Ratio,
    pub malicious: usize,
    pub benign: usize,
    pub f1: Spread,
    pub fpr: Spread,
    pub fnr: Spread,
    pub accuracy: Spread,
    pub recall: Spread,
    /// Change relative to the first ratio (F1 in points of 1.0).
    pub f1_drift: f64,
    pub fpr_drift: f64,
    pub fnr_drift: f64,
}

/// Subsamples `corpus` to `ratio`, keeping every benign entry the ratio
/// allows and drawing malicious entries at random.
pub fn subsample(corpus: &LabeledCorpus, ratio: Ratio, min_malicious: usize, seed: u64) -> Result<LabeledCorpus, TuneError> {
    let mut mal: Vec<usize> = Vec::new();
    let mut ben: Vec<usize> = Vec::new();
    for (i, e) in corpus.entries.iter().enumerate() {
        match e.label {
            Label::Malicious => mal.push(i),
            Label::Benign => ben.push(i),
        }
    }
    let (m, b) = (ratio.malicious as usize, ratio.benign as usize);
    let n_mal = mal.len().min(ben.len() * m / b);
    let n_ben = n_mal * b / m;
    if n_mal < min_malicious.max(1) || n_ben == 0 {
        return Err(TuneError::InsufficientBenign(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mal.shuffle(&mut rng);
    mal.truncate(n_mal);
    ben.truncate(n_ben);
    let mut keep: Vec<usize> = mal.into_iter().chain(ben).collect();
    keep.sort_unstable();
    Ok(LabeledCorpus {
        entries: keep.into_iter().map(|i| corpus.entries[i].clone()).collect(),
    })
}

/// Family-aware k-fold metrics at a fixed (λ, τ) for each ratio.
pub fn skewed_eval(
    corpus: &LabeledCorpus,
    ratios: &[Ratio],
    lambda: f64,
    tau: f64,
    folds: usize,
    seed: u64,
) -> Result<Vec<RatioReport>, TuneError> {
    let mut reports: Vec<RatioReport> = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let sub = subsample(corpus, ratio, folds, seed)?;
        check_corpus(&sub, folds)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<usize> = (0..sub.entries.len()).collect();
        let fold_of = family_folds(&sub, &all, folds, &mut rng);
        let mut fold_metrics = Vec::with_capacity(folds);
        for fold in 0..folds {
            let (train, test) = split_by_fold(&all, &fold_of, fold);
            assert_no_leakage(&sub, &train, &test, fold)?;
            let patterns = patterns_from(&sub, &train)?;
            fold_metrics.push(evaluate_split(&sub, &patterns, &test, lambda, tau)?);
        }
        let col = |f: fn(&Metrics) -> f64| Spread::of(&fold_metrics.iter().map(f).collect::<Vec<_>>());
        let f1 = col(Metrics::f1_or_zero);
        let fpr = col(|m| m.fpr);
        let fnr = col(|m| m.fnr);
        let (f1_drift, fpr_drift, fnr_drift) = match reports.first() {
            Some(first) => (f1.mean - first.f1.mean, fpr.mean - first.fpr.mean, fnr.mean - first.fnr.mean),
            None => (0.0, 0.0, 0.0),
        };
        reports.push(RatioReport {
            ratio,
            malicious: sub.count(Label::Malicious),
            benign: sub.count(Label::Benign),
            f1,
            fpr,
            fnr,
            accuracy: col(|m| m.accuracy),
            recall: col(|m| m.recall),
            f1_drift,
            fpr_drift,
            fnr_drift,
        });
    }
    Ok(reports)
}

/// Flags each entry when any pattern flags it and scores the predictions.
pub fn evaluate_patterns(patterns: &[CompiledPattern], corpus: &LabeledCorpus) -> Result<Metrics, TuneError> {
    let predictions: Vec<(Label, bool)> = corpus
        .entries
        .iter()
        .map(|e| (e.label, patterns.iter().any(|p| p.match_logic(&e.logic).flagged)))
        .collect();
    Ok(crate::metrics::compute_metrics(&predictions)?)
}

/// Human-readable one-line summary of a fold, for logs.
pub fn describe_fold(f: &FoldReport) -> String {
    format!(
        "fold {}: lambda={:.2} tau={:.2} inner_f1={:.3} test_f1={:.3} fpr={:.3} fnr={:.3}",
        f.fold,
        f.lambda,
        f.tau,
        f.inner_f1,
        f.test.f1_or_zero(),
        f.test.fpr,
        f.test.fnr
    )
}
