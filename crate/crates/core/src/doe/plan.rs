use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    envelope, factor_effects, recommend_bounds, DoeError, EffectEnvelope, FactorRecommendation,
    Result,
};
use crate::data::{Encoder, FactorKind, Reference, Schema};
use crate::ensemble::EnsembleModel;

/// Natural-unit values of the uncontrollable factors, keyed by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatingPoint {
    pub values: BTreeMap<String, f64>,
}

/// A value outside the historical bounds of a continuous factor. It is still
/// evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub factor: String,
    pub value: f64,
    pub bounds: [f64; 2],
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} = {} lies outside [{}, {}]",
            self.factor, self.value, self.bounds[0], self.bounds[1]
        )
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl OperatingPoint {
    /// Reference operating point from historical rows: discrete factors at
    /// their first state, continuous factors at the column mean unless the
    /// factor asks for its median. Without rows, continuous factors sit at
    /// the middle of their bounds.
    pub fn reference(schema: &Schema, raw: &[Vec<f64>]) -> Self {
        let mut values = BTreeMap::new();
        for (i, f) in schema.uncontrollable() {
            let column = || raw.iter().map(|r| r[i]);
            let v = match &f.kind {
                FactorKind::Discrete { states } => states[0],
                FactorKind::Continuous { bounds } if raw.is_empty() => 0.5 * (bounds[0] + bounds[1]),
                FactorKind::Continuous { bounds } => match f.reference {
                    Some(Reference::Median) => median(column().collect()),
                    Some(Reference::FirstState) => bounds[0],
                    _ => column().sum::<f64>() / raw.len() as f64,
                },
            };
            values.insert(f.name.clone(), v);
        }
        OperatingPoint { values }
    }

    /// Checks that exactly the uncontrollable factors are present and
    /// encodable, and reports out-of-bounds continuous values.
    pub fn validate(&self, schema: &Schema) -> Result<Vec<Warning>> {
        for name in self.values.keys() {
            match schema.index_of(name) {
                None => return Err(DoeError::UnknownFactor(name.clone())),
                Some(i) if schema.factors[i].controllable => {
                    return Err(DoeError::Controllable(name.clone()))
                }
                _ => {}
            }
        }
        let mut warnings = Vec::new();
        for (_, f) in schema.uncontrollable() {
            let v = *self
                .values
                .get(&f.name)
                .ok_or_else(|| DoeError::MissingFactor(f.name.clone()))?;
            check_value(f, v, &mut warnings)?;
        }
        Ok(warnings)
    }
}

fn check_value(f: &crate::data::FactorSpec, v: f64, warnings: &mut Vec<Warning>) -> Result<()> {
    if !v.is_finite() {
        return Err(DoeError::NotFinite {
            factor: f.name.clone(),
            value: v,
        });
    }
    match &f.kind {
        FactorKind::Continuous { bounds } => {
            if !f.admits(v) {
                warnings.push(Warning {
                    factor: f.name.clone(),
                    value: v,
                    bounds: *bounds,
                });
            }
        }
        FactorKind::Discrete { .. } => {
            if !f.admits(v) {
                return Err(DoeError::Data(crate::data::DataError::UnknownState {
                    factor: f.name.clone(),
                    value: v,
                }));
            }
        }
    }
    Ok(())
}

/// Natural-unit row in schema order from an operating point and values for
/// every controllable factor.
pub fn assemble_row(
    schema: &Schema,
    op: &OperatingPoint,
    setting: &BTreeMap<String, f64>,
) -> Result<(Vec<f64>, Vec<Warning>)> {
    let mut warnings = op.validate(schema)?;
    for name in setting.keys() {
        match schema.index_of(name) {
            None => return Err(DoeError::UnknownFactor(name.clone())),
            Some(i) if !schema.factors[i].controllable => {
                return Err(DoeError::NotControllable(name.clone()))
            }
            _ => {}
        }
    }
    let mut row = Vec::with_capacity(schema.factors.len());
    for f in &schema.factors {
        let v = if f.controllable {
            let v = *setting
                .get(&f.name)
                .ok_or_else(|| DoeError::MissingFactor(f.name.clone()))?;
            check_value(f, v, &mut warnings)?;
            v
        } else {
            op.values[&f.name]
        };
        row.push(v);
    }
    Ok((row, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelSpec {
    /// Levels for continuous factors without an override.
    pub default: usize,
    pub per_factor: BTreeMap<String, usize>,
}

impl Default for LevelSpec {
    fn default() -> Self {
        LevelSpec {
            default: 10,
            per_factor: BTreeMap::new(),
        }
    }
}

impl LevelSpec {
    pub fn uniform(levels: usize) -> Self {
        LevelSpec {
            default: levels,
            per_factor: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFactor {
    pub name: String,
    /// Position in the schema.
    pub index: usize,
    pub continuous: bool,
    pub levels: Vec<f64>,
}

/// Full cross product of the controllable factors' levels. Run `r` sets
/// factor `f` to level `level_of(r, f)`; the last factor varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialPlan {
    pub factors: Vec<PlanFactor>,
}

impl FactorialPlan {
    pub fn runs(&self) -> usize {
        self.factors.iter().map(|f| f.levels.len()).product()
    }

    pub fn level_of(&self, run: usize, factor: usize) -> usize {
        let stride: usize = self.factors[factor + 1..].iter().map(|f| f.levels.len()).product();
        (run / stride) % self.factors[factor].levels.len()
    }

    pub fn run_levels(&self, run: usize) -> Vec<usize> {
        (0..self.factors.len()).map(|f| self.level_of(run, f)).collect()
    }

    pub fn setting(&self, run: usize) -> BTreeMap<String, f64> {
        self.factors
            .iter()
            .enumerate()
            .map(|(f, pf)| (pf.name.clone(), pf.levels[self.level_of(run, f)]))
            .collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }
}

/// Continuous factors get an inclusive evenly spaced grid over their bounds;
/// discrete factors take all their states.
pub fn build_plan(schema: &Schema, op: &OperatingPoint, levels: &LevelSpec) -> Result<FactorialPlan> {
    op.validate(schema)?;
    for name in levels.per_factor.keys() {
        match schema.index_of(name) {
            None => return Err(DoeError::UnknownFactor(name.clone())),
            Some(i) if !schema.factors[i].controllable => {
                return Err(DoeError::NotControllable(name.clone()))
            }
            _ => {}
        }
    }
    let mut factors = Vec::new();
    for (index, f) in schema.controllable() {
        let grid = match &f.kind {
            FactorKind::Discrete { states } => states.clone(),
            FactorKind::Continuous { bounds } => {
                let n = *levels.per_factor.get(&f.name).unwrap_or(&levels.default);
                if n < 2 {
                    return Err(DoeError::LevelCount {
                        factor: f.name.clone(),
                        count: n,
                    });
                }
                let [lo, hi] = *bounds;
                (0..n)
                    .map(|i| {
                        if i == n - 1 {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / (n - 1) as f64
                        }
                    })
                    .collect()
            }
        };
        factors.push(PlanFactor {
            name: f.name.clone(),
            index,
            continuous: f.is_continuous(),
            levels: grid,
        });
    }
    if factors.is_empty() {
        return Err(DoeError::NoControllable);
    }
    Ok(FactorialPlan { factors })
}

/// What each member contributes per run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    /// Hard class, 0 or 1.
    #[default]
    Incidence,
    /// Real score, for smoother envelopes.
    Score,
}

/// `runs × members`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceMatrix {
    pub runs: usize,
    pub members: usize,
    pub values: Vec<f64>,
}

impl IncidenceMatrix {
    pub fn new(runs: usize, members: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != runs * members {
            return Err(DoeError::DimensionMismatch {
                expected: runs * members,
                found: values.len(),
            });
        }
        Ok(IncidenceMatrix {
            runs,
            members,
            values,
        })
    }

    pub fn get(&self, run: usize, member: usize) -> f64 {
        self.values[run * self.members + member]
    }

    pub fn column(&self, member: usize) -> Vec<f64> {
        (0..self.runs).map(|r| self.get(r, member)).collect()
    }
}

pub fn simulate_plan(
    ensemble: &EnsembleModel,
    encoder: &Encoder,
    plan: &FactorialPlan,
    op: &OperatingPoint,
    response: Response,
) -> Result<IncidenceMatrix> {
    if encoder.width() != ensemble.input_width() {
        return Err(DoeError::DimensionMismatch {
            expected: ensemble.input_width(),
            found: encoder.width(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..plan.runs())
        .into_par_iter()
        .map(|run| -> Result<Vec<f64>> {
            let (raw, _) = assemble_row(&encoder.schema, op, &plan.setting(run))?;
            let x = encoder.encode(&raw)?;
            Ok(ensemble
                .members
                .iter()
                .map(|m| match response {
                    Response::Incidence => m.predict(&x) as f64,
                    Response::Score => m.score(&x),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    IncidenceMatrix::new(plan.runs(), ensemble.len(), rows.concat())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeResult {
    pub operating_point: OperatingPoint,
    pub response: Response,
    pub runs: usize,
    pub members: usize,
    pub envelope: EffectEnvelope,
    pub recommendations: Vec<FactorRecommendation>,
    pub warnings: Vec<Warning>,
}

/// Plan, simulate, and summarize in one call.
pub fn run_doe(
    ensemble: &EnsembleModel,
    encoder: &Encoder,
    op: &OperatingPoint,
    levels: &LevelSpec,
    response: Response,
) -> Result<DoeResult> {
    let warnings = op.validate(&encoder.schema)?;
    let plan = build_plan(&encoder.schema, op, levels)?;
    let matrix = simulate_plan(ensemble, encoder, &plan, op, response)?;
    let table = factor_effects(&matrix, &plan)?;
    let env = envelope(&table);
    Ok(DoeResult {
        operating_point: op.clone(),
        response,
        runs: matrix.runs,
        members: matrix.members,
        recommendations: recommend_bounds(&env),
        envelope: env,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FactorSpec;

    fn schema3() -> Schema {
        Schema::new(vec![
            FactorSpec::continuous("env", 0.0, 10.0, false),
            FactorSpec::continuous("a", 0.0, 1.0, true),
            FactorSpec::continuous("b", 10.0, 20.0, true),
            FactorSpec::discrete("c", &[1.0, 2.0], true),
        ])
        .unwrap()
    }

    fn op() -> OperatingPoint {
        OperatingPoint {
            values: [("env".to_string(), 5.0)].into(),
        }
    }

    #[test]
    fn inclusive_grid() {
        let s = Schema::new(vec![FactorSpec::continuous("a", 0.0, 1.0, true)]).unwrap();
        let p = build_plan(&s, &OperatingPoint::default(), &LevelSpec::uniform(3)).unwrap();
        assert_eq!(p.factors[0].levels, vec![0.0, 0.5, 1.0]);
        let p2 = build_plan(&s, &OperatingPoint::default(), &LevelSpec::uniform(2)).unwrap();
        assert_eq!(p2.runs(), 2);
        assert_eq!(p2.factors[0].levels, vec![0.0, 1.0]);
        assert!(matches!(
            build_plan(&s, &OperatingPoint::default(), &LevelSpec::uniform(1)),
            Err(DoeError::LevelCount { .. })
        ));
    }

    #[test]
    fn paper_scale_plan() {
        let schema = Schema::lacquering();
        let op = OperatingPoint::reference(&schema, &[]);
        let p = build_plan(&schema, &op, &LevelSpec::uniform(10)).unwrap();
        assert_eq!(p.factors.len(), 3);
        assert_eq!(p.runs(), 1000);
    }

    #[test]
    fn row_major_enumeration() {
        let p = build_plan(&schema3(), &op(), &LevelSpec::uniform(3)).unwrap();
        assert_eq!(p.runs(), 18);
        assert_eq!(p.run_levels(0), vec![0, 0, 0]);
        assert_eq!(p.run_levels(1), vec![0, 0, 1]);
        assert_eq!(p.run_levels(2), vec![0, 1, 0]);
        assert_eq!(p.run_levels(17), vec![2, 2, 1]);
        let mut seen: Vec<Vec<usize>> = (0..18).map(|r| p.run_levels(r)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 18);
    }

    #[test]
    fn operating_point_checks() {
        let s = schema3();
        assert!(matches!(
            OperatingPoint::default().validate(&s),
            Err(DoeError::MissingFactor(_))
        ));
        let mut extra = op();
        extra.values.insert("a".into(), 0.5);
        assert!(matches!(extra.validate(&s), Err(DoeError::Controllable(_))));
        let mut out = op();
        out.values.insert("env".into(), 11.0);
        assert_eq!(out.validate(&s).unwrap().len(), 1);
    }

    #[test]
    fn row_assembly() {
        let s = schema3();
        let setting: BTreeMap<String, f64> =
            [("a".into(), 0.25), ("b".into(), 30.0), ("c".into(), 2.0)].into();
        let (row, warnings) = assemble_row(&s, &op(), &setting).unwrap();
        assert_eq!(row, vec![5.0, 0.25, 30.0, 2.0]);
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].factor, "b");
        let bad: BTreeMap<String, f64> =
            [("a".into(), 0.25), ("b".into(), 15.0), ("c".into(), 3.0)].into();
        assert!(assemble_row(&s, &op(), &bad).is_err());
    }

    #[test]
    fn reference_point_uses_median_and_first_state() {
        let schema = Schema::lacquering();
        let raw: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let v = i as f64;
                vec![2.0 + v, 1.0, [1.0, 2.0, 3.0, 50.0, 60.0][i], 2.0, 3.0, 100.0, 100.0, 5.0, 20.0, 1000.0, 50.0]
            })
            .collect();
        let op = OperatingPoint::reference(&schema, &raw);
        assert_eq!(op.values["products"], 3.0);
        assert_eq!(op.values["time_per_table"], 4.0);
        assert_eq!(op.values["passes"], 1.0);
        assert_eq!(op.values["layers"], 1.0);
        assert!(!op.values.contains_key("basis_weight"));
        assert_eq!(op.values.len(), 8);
    }
}
