use serde::{Deserialize, Serialize};

use super::{DoeError, FactorialPlan, IncidenceMatrix, Result};

/// Main effects per member, factor and level.
///
/// With `R` runs and `L` levels of a factor, `effect = (L · s − T) / R`
/// where `s` is a member's summed response at the level and `T` its total.
/// `numerators` holds `L · s − T`; for 0/1 incidences these are integers,
/// so the zero-sum identity over levels holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub factors: Vec<String>,
    pub continuous: Vec<bool>,
    pub levels: Vec<Vec<f64>>,
    pub runs: usize,
    /// `[member][factor][level]`.
    pub numerators: Vec<Vec<Vec<f64>>>,
    pub effects: Vec<Vec<Vec<f64>>>,
}

impl EffectTable {
    pub fn members(&self) -> usize {
        self.effects.len()
    }
}

fn check_shape(matrix: &IncidenceMatrix, plan: &FactorialPlan) -> Result<()> {
    if matrix.runs != plan.runs() {
        return Err(DoeError::DimensionMismatch {
            expected: plan.runs(),
            found: matrix.runs,
        });
    }
    Ok(())
}

pub fn factor_effects(matrix: &IncidenceMatrix, plan: &FactorialPlan) -> Result<EffectTable> {
    check_shape(matrix, plan)?;
    let r = plan.runs();
    let levels_of: Vec<Vec<usize>> = (0..r).map(|run| plan.run_levels(run)).collect();
    let mut numerators = Vec::with_capacity(matrix.members);
    for m in 0..matrix.members {
        let col = matrix.column(m);
        let total: f64 = col.iter().sum();
        let per_factor: Vec<Vec<f64>> = plan
            .factors
            .iter()
            .enumerate()
            .map(|(f, pf)| {
                let l = pf.levels.len();
                let mut sums = vec![0.0; l];
                for (run, v) in col.iter().enumerate() {
                    sums[levels_of[run][f]] += v;
                }
                sums.iter().map(|s| l as f64 * s - total).collect()
            })
            .collect();
        numerators.push(per_factor);
    }
    let effects = numerators
        .iter()
        .map(|m| {
            m.iter()
                .map(|f| f.iter().map(|n| n / r as f64).collect())
                .collect()
        })
        .collect();
    Ok(EffectTable {
        factors: plan.factors.iter().map(|f| f.name.clone()).collect(),
        continuous: plan.factors.iter().map(|f| f.continuous).collect(),
        levels: plan.factors.iter().map(|f| f.levels.clone()).collect(),
        runs: r,
        numerators,
        effects,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEnvelope {
    pub factor: String,
    pub continuous: bool,
    pub levels: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEnvelope {
    pub members: usize,
    pub factors: Vec<FactorEnvelope>,
}

impl EffectEnvelope {
    /// Number of (factor, level) cells.
    pub fn entries(&self) -> usize {
        self.factors.iter().map(|f| f.levels.len()).sum()
    }
}

/// Per (factor, level), the smallest and largest effect over members.
pub fn envelope(table: &EffectTable) -> EffectEnvelope {
    let factors = table
        .factors
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let n = table.levels[f].len();
            let mut lower = vec![f64::INFINITY; n];
            let mut upper = vec![f64::NEG_INFINITY; n];
            for member in &table.effects {
                for (l, &e) in member[f].iter().enumerate() {
                    lower[l] = lower[l].min(e);
                    upper[l] = upper[l].max(e);
                }
            }
            FactorEnvelope {
                factor: name.clone(),
                continuous: table.continuous[f],
                levels: table.levels[f].clone(),
                lower,
                upper,
            }
        })
        .collect();
    EffectEnvelope {
        members: table.members(),
        factors,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Recommendation {
    /// Contiguous run of grid levels of a continuous factor.
    Interval { lower: f64, upper: f64 },
    /// Non-contiguous levels, or the states of a discrete factor.
    Levels { levels: Vec<f64> },
    /// No level keeps every member at or below the mean risk.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRecommendation {
    pub factor: String,
    pub recommendation: Recommendation,
}

impl std::fmt::Display for FactorRecommendation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.recommendation {
            Recommendation::Interval { lower, upper } => {
                write!(f, "{} between {} and {}", self.factor, lower, upper)
            }
            Recommendation::Levels { levels } => {
                let l: Vec<String> = levels.iter().map(|v| v.to_string()).collect();
                write!(f, "{} at one of {{{}}}", self.factor, l.join(", "))
            }
            Recommendation::Empty => write!(f, "{}: no safe level", self.factor),
        }
    }
}

/// Levels whose upper envelope is at most zero, i.e. where no member
/// predicts a raised risk.
pub fn recommend_bounds(env: &EffectEnvelope) -> Vec<FactorRecommendation> {
    env.factors
        .iter()
        .map(|fe| {
            let ok: Vec<usize> = (0..fe.levels.len()).filter(|&l| fe.upper[l] <= 0.0).collect();
            let recommendation = if ok.is_empty() {
                Recommendation::Empty
            } else if fe.continuous && ok.last().unwrap() - ok[0] + 1 == ok.len() {
                Recommendation::Interval {
                    lower: fe.levels[ok[0]],
                    upper: fe.levels[*ok.last().unwrap()],
                }
            } else {
                Recommendation::Levels {
                    levels: ok.iter().map(|&l| fe.levels[l]).collect(),
                }
            };
            FactorRecommendation {
                factor: fe.factor.clone(),
                recommendation,
            }
        })
        .collect()
}

/// `level,lower,upper` lines for one factor, with a header.
pub fn envelope_csv(fe: &FactorEnvelope) -> String {
    let mut out = String::from("level,lower,upper\n");
    for l in 0..fe.levels.len() {
        out.push_str(&format!("{},{},{}\n", fe.levels[l], fe.lower[l], fe.upper[l]));
    }
    out
}

/// Two-factor interaction effects,
/// `mean(A_i, B_j) − mean(A_i) − mean(B_j) + grand mean`, with the same
/// exact numerator convention as [`EffectTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTable {
    pub factor_a: String,
    pub factor_b: String,
    pub levels_a: Vec<f64>,
    pub levels_b: Vec<f64>,
    pub runs: usize,
    /// `[member][i][j]`.
    pub numerators: Vec<Vec<Vec<f64>>>,
    pub effects: Vec<Vec<Vec<f64>>>,
}

pub fn interaction_effects(
    matrix: &IncidenceMatrix,
    plan: &FactorialPlan,
    factor_a: &str,
    factor_b: &str,
) -> Result<InteractionTable> {
    check_shape(matrix, plan)?;
    let fa = plan
        .position(factor_a)
        .ok_or_else(|| DoeError::NotInPlan(factor_a.to_string()))?;
    let fb = plan
        .position(factor_b)
        .ok_or_else(|| DoeError::NotInPlan(factor_b.to_string()))?;
    if fa == fb {
        return Err(DoeError::NotInPlan(format!("{factor_a} paired with itself")));
    }
    let (la, lb) = (plan.factors[fa].levels.len(), plan.factors[fb].levels.len());
    let r = plan.runs();
    let cells: Vec<(usize, usize)> = (0..r)
        .map(|run| (plan.level_of(run, fa), plan.level_of(run, fb)))
        .collect();
    let mut numerators = Vec::with_capacity(matrix.members);
    for m in 0..matrix.members {
        let mut cell = vec![vec![0.0; lb]; la];
        let mut row_a = vec![0.0; la];
        let mut row_b = vec![0.0; lb];
        let mut total = 0.0;
        for (run, &(i, j)) in cells.iter().enumerate() {
            let v = matrix.get(run, m);
            cell[i][j] += v;
            row_a[i] += v;
            row_b[j] += v;
            total += v;
        }
        let grid: Vec<Vec<f64>> = (0..la)
            .map(|i| {
                (0..lb)
                    .map(|j| {
                        (la * lb) as f64 * cell[i][j] - la as f64 * row_a[i] - lb as f64 * row_b[j]
                            + total
                    })
                    .collect()
            })
            .collect();
        numerators.push(grid);
    }
    let effects = numerators
        .iter()
        .map(|m| {
            m.iter()
                .map(|row| row.iter().map(|n| n / r as f64).collect())
                .collect()
        })
        .collect();
    Ok(InteractionTable {
        factor_a: factor_a.to_string(),
        factor_b: factor_b.to_string(),
        levels_a: plan.factors[fa].levels.clone(),
        levels_b: plan.factors[fb].levels.clone(),
        runs: r,
        numerators,
        effects,
    })
}
