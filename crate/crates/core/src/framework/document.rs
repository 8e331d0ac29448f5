//! TOML description of a model, a stopping rule and a set of priors, and the
//! report of all measures evaluated on it.
//!
//! ```toml
//! alphabet = ["0", "1"]
//! pre_dist = [0.75, 0.25]
//! post_dist = [0.25, 0.75]
//! horizon = 12
//! extended_times = [0, 2]        # optional
//!
//! [rule]
//! family = "threshold-on-likelihood-ratio"
//! c = 1.0
//!
//! [[prior]]
//! name = "geometric"
//! geometric = 0.5                # or: varpi = [...]
//! ```
//!
//! Rule families: `threshold-on-likelihood-ratio` (`c`), `fixed-time` (`n`)
//! and `table` (`stop`, a list of prefixes, each a list of symbols).

use std::fmt::Write as _;

use serde::Deserialize;

use super::{geometric_weights, DiscreteChangeModel, Evaluation, FrameworkError, MeasureValue, StoppingRule};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub alphabet: Vec<String>,
    pub pre_dist: Vec<f64>,
    pub post_dist: Vec<f64>,
    pub horizon: usize,
    pub rule: RuleSpec,
    #[serde(default)]
    pub prior: Vec<PriorSpec>,
    pub extended_times: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RuleSpec {
    ThresholdOnLikelihoodRatio { c: f64 },
    FixedTime { n: usize },
    Table { stop: Vec<Vec<String>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub name: String,
    pub varpi: Option<Vec<f64>>,
    pub geometric: Option<f64>,
}

impl ModelDocument {
    pub fn parse(text: &str) -> Result<Self, FrameworkError> {
        toml::from_str(text).map_err(|e| FrameworkError::Document(e.to_string().trim_end().to_string()))
    }

    pub fn model(&self) -> Result<DiscreteChangeModel, FrameworkError> {
        DiscreteChangeModel::new(
            self.horizon,
            self.alphabet.clone(),
            self.pre_dist.clone(),
            self.post_dist.clone(),
        )
    }

    pub fn rule(&self, model: &DiscreteChangeModel) -> Result<StoppingRule, FrameworkError> {
        Ok(match &self.rule {
            RuleSpec::ThresholdOnLikelihoodRatio { c } => {
                if c.is_nan() {
                    return Err(FrameworkError::Document("rule threshold c must be a number".into()));
                }
                StoppingRule::threshold_on_likelihood_ratio(model, *c)
            }
            RuleSpec::FixedTime { n } => StoppingRule::fixed_time(model, *n),
            RuleSpec::Table { stop } => {
                let prefixes = stop
                    .iter()
                    .map(|p| p.iter().map(|s| model.symbol_index(s)).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()?;
                if let Some(p) = prefixes.iter().find(|p| p.len() > model.horizon()) {
                    return Err(FrameworkError::TimeOutOfRange {
                        t: p.len(),
                        horizon: model.horizon(),
                    });
                }
                StoppingRule::from_table(model, &prefixes)
            }
        })
    }

    /// Resolved `varpi` of every prior, in document order.
    pub fn priors(&self) -> Result<Vec<(String, Vec<f64>)>, FrameworkError> {
        self.prior
            .iter()
            .map(|p| {
                let varpi = match (&p.varpi, p.geometric) {
                    (Some(v), None) => v.clone(),
                    (None, Some(delta)) => geometric_weights(self.horizon, delta)?,
                    _ => {
                        return Err(FrameworkError::Document(format!(
                            "prior '{}' needs exactly one of 'varpi' or 'geometric'",
                            p.name
                        )))
                    }
                };
                Ok((p.name.clone(), varpi))
            })
            .collect()
    }
}

/// One line of a [`FrameworkReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub measure: &'static str,
    /// Prior name for `J_S`, empty otherwise.
    pub prior: String,
    pub outcome: Result<MeasureValue, FrameworkError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkReport {
    pub cap_error: f64,
    pub rows: Vec<ReportRow>,
    alphabet: Vec<String>,
}

pub const REPORT_CSV_HEADER: &str = "measure,prior,value,argmax_t,argmax_history,cap_error,note";

/// Parses and validates the document, then evaluates `J_S` for every prior,
/// `J_P`, `J_L` and, when `extended_times` is given, `J_EL`. Validation
/// failures are returned as errors; undefined measures are reported per row.
pub fn evaluate_document(text: &str) -> Result<FrameworkReport, FrameworkError> {
    let doc = ModelDocument::parse(text)?;
    let model = doc.model()?;
    let rule = doc.rule(&model)?;
    let priors = doc.priors()?;
    let ev = Evaluation::new(&model, &rule);

    let mut rows = Vec::new();
    for (name, varpi) in priors {
        let outcome = ev.measure_shiryaev(&varpi);
        // invalid priors are document errors, not undefined measures
        if let Err(
            e @ (FrameworkError::PriorLength { .. }
            | FrameworkError::NegativeWeight(_)
            | FrameworkError::PriorNotNormalized(_)),
        ) = &outcome
        {
            return Err(FrameworkError::Document(format!("prior '{name}': {e}")));
        }
        rows.push(ReportRow {
            measure: "J_S",
            prior: name,
            outcome,
        });
    }
    rows.push(ReportRow {
        measure: "J_P",
        prior: String::new(),
        outcome: ev.measure_pollak(),
    });
    rows.push(ReportRow {
        measure: "J_L",
        prior: String::new(),
        outcome: ev.measure_lorden(),
    });
    if let Some(times) = &doc.extended_times {
        let outcome = ev.measure_extended_lorden(times);
        if let Err(e @ (FrameworkError::EmptyTimes | FrameworkError::TimeOutOfRange { .. })) = &outcome {
            return Err(FrameworkError::Document(format!("extended_times: {e}")));
        }
        rows.push(ReportRow {
            measure: "J_EL",
            prior: String::new(),
            outcome,
        });
    }
    Ok(FrameworkReport {
        cap_error: ev.cap_error(),
        rows,
        alphabet: model.alphabet().to_vec(),
    })
}

impl FrameworkReport {
    pub fn value(&self, measure: &str) -> Option<&MeasureValue> {
        self.rows
            .iter()
            .find(|r| r.measure == measure)
            .and_then(|r| r.outcome.as_ref().ok())
    }

    pub fn has_undefined(&self) -> bool {
        self.rows.iter().any(|r| r.outcome.is_err())
    }

    fn history(&self, h: &[usize]) -> String {
        h.iter()
            .map(|&x| self.alphabet[x].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{REPORT_CSV_HEADER}").unwrap();
        for row in &self.rows {
            match &row.outcome {
                Ok(v) => writeln!(
                    out,
                    "{},{},{},{},{},{},",
                    row.measure,
                    row.prior,
                    v.value,
                    v.argmax_t.map(|t| t.to_string()).unwrap_or_default(),
                    v.argmax_history.as_deref().map(|h| self.history(h)).unwrap_or_default(),
                    v.cap_error
                ),
                Err(e) => writeln!(
                    out,
                    "{},{},,,,{},\"{}\"",
                    row.measure,
                    row.prior,
                    self.cap_error,
                    e.to_string().replace('"', "'")
                ),
            }
            .unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "cap error (P_0[stop forced by horizon]): {}", self.cap_error).unwrap();
        for row in &self.rows {
            let label = if row.prior.is_empty() {
                row.measure.to_string()
            } else {
                format!("{} [{}]", row.measure, row.prior)
            };
            match &row.outcome {
                Ok(v) => {
                    write!(out, "{label}: {}", v.value).unwrap();
                    if let Some(t) = v.argmax_t {
                        write!(out, "  (t = {t}").unwrap();
                        if let Some(h) = &v.argmax_history {
                            write!(out, ", history = [{}]", self.history(h)).unwrap();
                        }
                        out.push(')');
                    }
                    out.push('\n');
                }
                Err(e) => writeln!(out, "{label}: undefined ({e})").unwrap(),
            }
        }
        out
    }
}
