//! Bandit instances with a cost subsidy: parsing, validation, ingestion from
//! ratings data, and the static quantities derived from the true means.
//!
//! Arms are 0-based everywhere in the library. Text output produced by the
//! CLI and the run files switches to 1-based arm labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("line {line}: malformed input: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: need at least 2 arms, got {arms}")]
    TooFewArms { line: usize, arms: usize },
    #[error("line {line}: mean {value} outside [0, 1]")]
    MeanOutOfRange { line: usize, value: f64 },
    #[error("line {line}: negative cost {value}")]
    NegativeCost { line: usize, value: f64 },
    #[error("line {line}: alpha {value} outside the open interval (0, 1)")]
    AlphaOutOfRange { line: usize, value: f64 },
    #[error("declared {declared} arms but found {found}")]
    ArmCountMismatch { declared: usize, found: usize },
    #[error("means and costs differ in length ({means} vs {costs})")]
    LengthMismatch { means: usize, costs: usize },
    #[error("costs are not sorted in non-decreasing order at arm {arm}")]
    UnsortedCosts { arm: usize },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("ratings input is empty")]
    Empty,
    #[error("{source_name} row {row}: {reason}")]
    BadRow {
        source_name: &'static str,
        row: usize,
        reason: String,
    },
    #[error("rating scale maximum must be positive, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Ground truth for one experiment: Bernoulli means, known costs (sorted
/// non-decreasing) and the subsidy factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditInstance {
    means: Vec<f64>,
    costs: Vec<f64>,
    alpha: f64,
}

fn check_alpha(alpha: f64, line: usize) -> Result<(), InstanceError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(InstanceError::AlphaOutOfRange { line, value: alpha })
    }
}

impl BanditInstance {
    /// Builds an instance whose costs are already sorted.
    pub fn new(means: Vec<f64>, costs: Vec<f64>, alpha: f64) -> Result<Self, InstanceError> {
        Self::validate(&means, &costs, alpha)?;
        if let Some(arm) = (1..costs.len()).find(|&i| costs[i] < costs[i - 1]) {
            return Err(InstanceError::UnsortedCosts { arm });
        }
        Ok(Self {
            means,
            costs,
            alpha,
        })
    }

    /// Builds an instance from arms in arbitrary cost order. Arms are
    /// stable-sorted by cost; the flag reports whether any reordering was
    /// needed.
    pub fn from_unsorted(
        means: Vec<f64>,
        costs: Vec<f64>,
        alpha: f64,
    ) -> Result<(Self, bool), InstanceError> {
        Self::validate(&means, &costs, alpha)?;
        let order = cost_order(&costs);
        let resorted = order.iter().enumerate().any(|(i, &j)| i != j);
        let means = order.iter().map(|&i| means[i]).collect();
        let costs = order.iter().map(|&i| costs[i]).collect();
        Ok((
            Self {
                means,
                costs,
                alpha,
            },
            resorted,
        ))
    }

    fn validate(means: &[f64], costs: &[f64], alpha: f64) -> Result<(), InstanceError> {
        if means.len() != costs.len() {
            return Err(InstanceError::LengthMismatch {
                means: means.len(),
                costs: costs.len(),
            });
        }
        if means.len() < 2 {
            return Err(InstanceError::TooFewArms {
                line: 0,
                arms: means.len(),
            });
        }
        for (i, (&m, &c)) in means.iter().zip(costs).enumerate() {
            if !(0.0..=1.0).contains(&m) {
                return Err(InstanceError::MeanOutOfRange {
                    line: i + 1,
                    value: m,
                });
            }
            if c.is_nan() || c < 0.0 || c.is_infinite() {
                return Err(InstanceError::NegativeCost {
                    line: i + 1,
                    value: c,
                });
            }
        }
        check_alpha(alpha, 0)
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Same arms under a different subsidy factor.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self, InstanceError> {
        check_alpha(alpha, 0)?;
        Ok(Self {
            alpha,
            ..self.clone()
        })
    }

    /// Multiplies every cost by `factor > 0`. Cost order is unchanged.
    pub fn with_scaled_costs(&self, factor: f64) -> Self {
        assert!(factor > 0.0 && factor.is_finite());
        Self {
            costs: self.costs.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    /// Serializes to the instance file grammar.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "alpha {}", self.alpha);
        let _ = writeln!(out, "K {}", self.num_arms());
        for (m, c) in self.means.iter().zip(&self.costs) {
            let _ = writeln!(out, "{m} {c}");
        }
        out
    }
}

/// Stable permutation that sorts `costs` ascending.
fn cost_order(costs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    order
}

/// Result of parsing an instance file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedInstance {
    pub instance: BanditInstance,
    /// Arms were listed out of cost order and have been re-sorted.
    pub resorted: bool,
}

/// Parses the plain-text instance format:
///
/// ```text
/// alpha 0.3
/// K 3
/// 0.44 1   # mean cost
/// 0.70 2
/// 0.71 3
/// ```
///
/// `#` starts a comment; blank lines are ignored.
pub fn parse_instance(text: &str) -> Result<ParsedInstance, InstanceError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let malformed = |line: usize, reason: &str| InstanceError::Malformed {
        line,
        reason: reason.to_string(),
    };
    let keyed =
        |entry: Option<(usize, &str)>, key: &str| -> Result<(usize, String), InstanceError> {
            let (line, content) =
                entry.ok_or_else(|| malformed(0, &format!("missing `{key}` line")))?;
            let mut fields = content.split_whitespace();
            match (fields.next(), fields.next(), fields.next()) {
                (Some(k), Some(v), None) if k == key => Ok((line, v.to_string())),
                _ => Err(malformed(line, &format!("expected `{key} <value>`"))),
            }
        };

    let (alpha_line, alpha_text) = keyed(lines.next(), "alpha")?;
    let alpha: f64 = alpha_text
        .parse()
        .map_err(|_| malformed(alpha_line, "alpha is not a number"))?;
    check_alpha(alpha, alpha_line)?;

    let (k_line, k_text) = keyed(lines.next(), "K")?;
    let k: usize = k_text
        .parse()
        .map_err(|_| malformed(k_line, "K is not a non-negative integer"))?;
    if k < 2 {
        return Err(InstanceError::TooFewArms {
            line: k_line,
            arms: k,
        });
    }

    let mut means = Vec::with_capacity(k);
    let mut costs = Vec::with_capacity(k);
    for (line, content) in lines {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(malformed(line, "expected `<mean> <cost>`"));
        }
        let mean: f64 = fields[0]
            .parse()
            .map_err(|_| malformed(line, "mean is not a number"))?;
        let cost: f64 = fields[1]
            .parse()
            .map_err(|_| malformed(line, "cost is not a number"))?;
        if !(0.0..=1.0).contains(&mean) {
            return Err(InstanceError::MeanOutOfRange { line, value: mean });
        }
        if !(cost >= 0.0 && cost.is_finite()) {
            return Err(InstanceError::NegativeCost { line, value: cost });
        }
        means.push(mean);
        costs.push(cost);
    }
    if means.len() != k {
        return Err(InstanceError::ArmCountMismatch {
            declared: k,
            found: means.len(),
        });
    }
    let (instance, resorted) = BanditInstance::from_unsorted(means, costs, alpha)?;
    Ok(ParsedInstance { instance, resorted })
}

/// Every static symbol derived from an instance. Index sets are sorted
/// ascending; ties in arg max / arg min go to the lowest index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceAnalysis {
    pub alpha: f64,
    pub mu_star: f64,
    pub i_star: usize,
    pub mu_cs: f64,
    pub feasible_set: Vec<usize>,
    pub a_star: usize,
    pub cheap_arms: Vec<usize>,
    pub expensive_arms: Vec<usize>,
    pub a_dagger: Option<usize>,
    pub mu_dagger: Option<f64>,
    /// Arms whose subsidized mean strictly exceeds `mu_dagger`. Empty when
    /// there are no cheap arms.
    pub dagger_set: Vec<usize>,
    /// `mu_cs - mu_k`
    pub quality_gaps: Vec<f64>,
    /// `c_k - c_{a*}`
    pub cost_gaps: Vec<f64>,
    /// `mu_star - mu_k`
    pub reward_gaps: Vec<f64>,
    /// `(1 - alpha) mu_k - mu_dagger`, absent when there are no cheap arms.
    pub dagger_gaps: Option<Vec<f64>>,
    means: Vec<f64>,
}

impl InstanceAnalysis {
    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn clipped_quality_gap(&self, k: usize) -> f64 {
        self.quality_gaps[k].max(0.0)
    }

    pub fn clipped_cost_gap(&self, k: usize) -> f64 {
        self.cost_gaps[k].max(0.0)
    }

    /// `(1 - alpha) mu_i - mu_ell`
    pub fn pair_gap(&self, i: usize, ell: usize) -> f64 {
        (1.0 - self.alpha) * self.means[i] - self.means[ell]
    }

    /// Arms able to prove `ell` infeasible (strictly positive pair gap),
    /// ordered by mean descending, lowest index first on ties.
    pub fn eliminators_by_reward(&self, ell: usize) -> Vec<usize> {
        let mut set: Vec<usize> = (0..self.num_arms())
            .filter(|&i| self.pair_gap(i, ell) > 0.0)
            .collect();
        set.sort_by(|&a, &b| self.means[b].total_cmp(&self.means[a]).then(a.cmp(&b)));
        set
    }

    pub fn is_cheap(&self, k: usize) -> bool {
        k < self.a_star
    }

    pub fn is_expensive(&self, k: usize) -> bool {
        k > self.a_star && k < self.num_arms()
    }
}

fn argmax_lowest(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    values.fold(None, |best, (i, v)| match best {
        Some((_, bv)) if v <= bv => best,
        _ => Some((i, v)),
    })
}

pub fn analyze(inst: &BanditInstance) -> InstanceAnalysis {
    let means = inst.means();
    let costs = inst.costs();
    let alpha = inst.alpha();
    let k = inst.num_arms();

    let (i_star, mu_star) =
        argmax_lowest(means.iter().copied().enumerate()).expect("instances have at least two arms");
    let mu_cs = (1.0 - alpha) * mu_star;
    let feasible_set: Vec<usize> = (0..k).filter(|&i| means[i] >= mu_cs).collect();
    // Arms are cost-sorted, so the lowest feasible index is the cheapest.
    let a_star = feasible_set[0];
    let cheap_arms: Vec<usize> = (0..a_star).collect();
    let expensive_arms: Vec<usize> = (a_star + 1..k).collect();

    let dagger = argmax_lowest(cheap_arms.iter().map(|&i| (i, means[i])));
    let a_dagger = dagger.map(|(i, _)| i);
    let mu_dagger = dagger.map(|(_, m)| m);
    let dagger_gaps = mu_dagger.map(|md| {
        means
            .iter()
            .map(|m| (1.0 - alpha) * m - md)
            .collect::<Vec<_>>()
    });
    let dagger_set = dagger_gaps
        .as_ref()
        .map(|g| (0..k).filter(|&i| g[i] > 0.0).collect())
        .unwrap_or_default();

    InstanceAnalysis {
        alpha,
        mu_star,
        i_star,
        mu_cs,
        feasible_set,
        a_star,
        cheap_arms,
        expensive_arms,
        a_dagger,
        mu_dagger,
        dagger_set,
        quality_gaps: means.iter().map(|m| mu_cs - m).collect(),
        cost_gaps: costs.iter().map(|c| c - costs[a_star]).collect(),
        reward_gaps: means.iter().map(|m| mu_star - m).collect(),
        dagger_gaps,
        means: means.to_vec(),
    }
}

/// Per-genre arms built from ratings data. May hold a single arm; turning it
/// into a [`BanditInstance`] needs at least two.
#[derive(Debug, Clone, PartialEq)]
pub struct GenreArms {
    /// Genre label per arm, in cost order.
    pub labels: Vec<String>,
    pub means: Vec<f64>,
    pub costs: Vec<f64>,
    pub warnings: Vec<String>,
}

impl GenreArms {
    pub fn into_instance(self, alpha: f64) -> Result<BanditInstance, InstanceError> {
        BanditInstance::new(self.means, self.costs, alpha)
    }
}

fn read_rows<R: Read>(
    reader: R,
    source_name: &'static str,
) -> Result<Vec<(usize, String, String)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 2 {
            return Err(IngestError::BadRow {
                source_name,
                row: i + 1,
                reason: format!("expected 2 fields, got {}", rec.len()),
            });
        }
        rows.push((i + 1, rec[0].to_string(), rec[1].to_string()));
    }
    Ok(rows)
}

/// Builds one arm per genre from `item_id,rating` rows and `item_id,genre`
/// rows. A leading header row is skipped when its rating field is not
/// numeric. Items tagged with several genres count toward each of them.
/// Costs are Uniform(0, 1) draws from ChaCha8 seeded with `cost_seed`,
/// assigned in genre-name order before sorting arms by cost.
pub fn ingest_ratings<R1: Read, R2: Read>(
    ratings: R1,
    genre_map: R2,
    rating_scale_max: f64,
    cost_seed: u64,
) -> Result<GenreArms, IngestError> {
    if !(rating_scale_max > 0.0 && rating_scale_max.is_finite()) {
        return Err(IngestError::BadScale(rating_scale_max));
    }
    let mut genres_of: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut all_genres: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    for (_, item, genre) in read_rows(genre_map, "genre map")? {
        if genre.is_empty() {
            continue;
        }
        all_genres.entry(genre.clone()).or_insert((0.0, 0));
        let tags = genres_of.entry(item).or_default();
        if !tags.contains(&genre) {
            tags.push(genre);
        }
    }

    let rows = read_rows(ratings, "ratings")?;
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    let mut warnings = Vec::new();
    let mut untagged = 0usize;
    for (idx, (row, item, rating_text)) in rows.iter().enumerate() {
        let rating: f64 = match rating_text.parse() {
            Ok(r) => r,
            Err(_) if idx == 0 => continue,
            Err(_) => {
                return Err(IngestError::BadRow {
                    source_name: "ratings",
                    row: *row,
                    reason: format!("rating `{rating_text}` is not a number"),
                })
            }
        };
        if !(rating > 0.0 && rating <= rating_scale_max) {
            return Err(IngestError::BadRow {
                source_name: "ratings",
                row: *row,
                reason: format!("rating {rating} outside (0, {rating_scale_max}]"),
            });
        }
        match genres_of.get(item) {
            Some(tags) => {
                for g in tags {
                    let acc = all_genres.get_mut(g).expect("genre registered with item");
                    acc.0 += rating;
                    acc.1 += 1;
                }
            }
            None => untagged += 1,
        }
    }
    if untagged > 0 {
        warnings.push(format!(
            "{untagged} ratings reference items without a genre"
        ));
    }

    let mut labels = Vec::new();
    let mut means = Vec::new();
    for (genre, (sum, count)) in all_genres {
        if count == 0 {
            warnings.push(format!("genre `{genre}` has no ratings; excluded"));
            continue;
        }
        labels.push(genre);
        means.push((sum / (count as f64 * rating_scale_max)).clamp(0.0, 1.0));
    }
    if labels.is_empty() {
        return Err(IngestError::Empty);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cost_seed);
    let costs: Vec<f64> = labels.iter().map(|_| rng.random::<f64>()).collect();
    let order = cost_order(&costs);
    Ok(GenreArms {
        labels: order.iter().map(|&i| labels[i].clone()).collect(),
        means: order.iter().map(|&i| means[i]).collect(),
        costs: order.iter().map(|&i| costs[i]).collect(),
        warnings,
    })
}
