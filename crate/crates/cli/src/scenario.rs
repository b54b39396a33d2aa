//! Scenario files: flat `key = value` lines with dotted keys.
//!
//! `# comments`, blank lines and `[section]` headers (which prefix the keys
//! that follow) are allowed. Every key may appear once.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use acdesign::model::FamilyKind;
use acdesign::{
    ControlModel, Criterion, Design, DoseRange, DrugFamily, DrugModel, KMatrix, MeanFunction, Point, SolveOptions,
    TrialModel,
};
use nalgebra::DMatrix;

use crate::error::CliError;

const KEYS: &[&str] = &[
    "name",
    "family",
    "variance",
    "failures",
    "drug.mean",
    "drug.e0",
    "drug.emax",
    "drug.ed50",
    "drug.variance",
    "drug.failures",
    "dose.lower",
    "dose.upper",
    "control.response",
    "control.variance",
    "control.failures",
    "criterion",
    "criterion.p",
    "criterion.k",
    "criterion.k11",
    "criterion.k22",
    "design",
    "solver.grid",
    "solver.iterations",
    "solver.weight-tolerance",
    "solver.starts",
    "solver.seed",
    "verify.grid",
    "verify.tol",
    "output.design",
    "output.report",
    "output.sensitivity",
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub design: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub sensitivity: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: TrialModel,
    pub criterion: Criterion,
    /// Short criterion label used in reports.
    pub criterion_label: String,
    pub design: Option<Design>,
    pub solve: SolveOptions,
    pub outputs: Outputs,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::parse(&text, base, fallback)
    }

    pub fn parse(text: &str, base: &Path, fallback_name: &str) -> Result<Self, CliError> {
        Parsed::new(text)?.build(base, fallback_name)
    }
}

struct Parsed {
    entries: BTreeMap<String, Entry>,
}

fn parse_error(line: usize, key: &str, message: impl Into<String>) -> CliError {
    CliError::Scenario {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

impl Parsed {
    fn new(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_error(line, content, "section header must end with ']'"))?
                    .trim();
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| parse_error(line, content, "expected `key = value`"))?;
            let key = key.trim();
            let key = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if !KEYS.contains(&key.as_str()) {
                return Err(parse_error(line, &key, "unknown key"));
            }
            let value = value.trim().to_string();
            if value.is_empty() {
                return Err(parse_error(line, &key, "missing value"));
            }
            if let Some(prev) = entries.insert(key.clone(), Entry { line, value }) {
                return Err(parse_error(line, &key, format!("duplicate key (first set on line {})", prev.line)));
            }
        }
        Ok(Self { entries })
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn line(&self, key: &str) -> usize {
        self.get(key).map(|e| e.line).unwrap_or(0)
    }

    fn required(&self, key: &str) -> Result<&Entry, CliError> {
        self.get(key).ok_or_else(|| parse_error(0, key, "required key is missing"))
    }

    fn number(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get(key).map(|e| parse_number(e, key)).transpose()
    }

    fn required_number(&self, key: &str) -> Result<f64, CliError> {
        parse_number(self.required(key)?, key)
    }

    fn integer<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|e| {
                e.value
                    .parse::<T>()
                    .map_err(|_| parse_error(e.line, key, format!("`{}` is not a non-negative integer", e.value)))
            })
            .transpose()
    }

    /// Arm-specific value, falling back to the shared key.
    fn shared_number(&self, key: &str, arm: &str) -> Result<Option<(f64, String)>, CliError> {
        let specific = format!("{arm}.{key}");
        if let Some(v) = self.number(&specific)? {
            return Ok(Some((v, specific)));
        }
        Ok(self.number(key)?.map(|v| (v, key.to_string())))
    }

    fn build(&self, base: &Path, fallback_name: &str) -> Result<Scenario, CliError> {
        let family = self.family()?;
        let model = self.model(family)?;
        let (criterion, criterion_label) = self.criterion(&model)?;
        let design = self
            .get("design")
            .map(|e| parse_inline_design(&e.value).map_err(|m| parse_error(e.line, "design", m)))
            .transpose()?;
        let mut solve = SolveOptions::default();
        if let Some(v) = self.integer("solver.grid")? {
            solve.grid_size = v;
        }
        if let Some(v) = self.integer("solver.iterations")? {
            solve.max_iterations = v;
        }
        if let Some(v) = self.number("solver.weight-tolerance")? {
            solve.weight_tolerance = v;
        }
        if let Some(v) = self.integer("solver.starts")? {
            solve.multistart = v;
        }
        if let Some(v) = self.integer("solver.seed")? {
            solve.seed = v;
        }
        if let Some(v) = self.integer("verify.grid")? {
            solve.verify.grid_size = v;
        }
        if let Some(v) = self.number("verify.tol")? {
            solve.verify.tol = v;
        }
        let path = |key: &str| self.get(key).map(|e| base.join(&e.value));
        Ok(Scenario {
            name: self.get("name").map(|e| e.value.clone()).unwrap_or_else(|| fallback_name.to_string()),
            model,
            criterion,
            criterion_label,
            design,
            solve,
            outputs: Outputs {
                design: path("output.design"),
                report: path("output.report"),
                sensitivity: path("output.sensitivity"),
            },
        })
    }

    fn family(&self) -> Result<FamilyKind, CliError> {
        let e = self.required("family")?;
        match e.value.as_str() {
            "normal" => Ok(FamilyKind::Normal),
            "negative-binomial" => Ok(FamilyKind::NegativeBinomial),
            "binomial" => Ok(FamilyKind::Binomial),
            "poisson" => Ok(FamilyKind::Poisson),
            other => Err(parse_error(
                e.line,
                "family",
                format!("`{other}` is not one of normal, negative-binomial, binomial, poisson"),
            )),
        }
    }

    fn arm_failures(&self, arm: &str) -> Result<u32, CliError> {
        let specific = format!("{arm}.failures");
        let key = if self.get(&specific).is_some() { specific } else { "failures".to_string() };
        self.integer::<u32>(&key)?
            .ok_or_else(|| parse_error(0, &key, "required for the negative binomial family"))
    }

    fn arm_variance(&self, arm: &str) -> Result<f64, CliError> {
        self.shared_number("variance", arm)?
            .map(|(v, _)| v)
            .ok_or_else(|| parse_error(0, &format!("{arm}.variance"), "required for the normal family"))
    }

    fn model(&self, family: FamilyKind) -> Result<TrialModel, CliError> {
        let mean_entry = self.required("drug.mean")?;
        let ed50 = self.required_number("drug.ed50")?;
        let emax = self.required_number("drug.emax")?;
        let mean = match mean_entry.value.as_str() {
            "emax" => MeanFunction::emax(self.required_number("drug.e0")?, emax, ed50),
            "michaelis-menten" => {
                if self.get("drug.e0").is_some() {
                    return Err(parse_error(
                        self.line("drug.e0"),
                        "drug.e0",
                        "a Michaelis-Menten curve has no placebo effect",
                    ));
                }
                MeanFunction::michaelis_menten(emax, ed50)
            }
            other => {
                return Err(parse_error(
                    mean_entry.line,
                    "drug.mean",
                    format!("`{other}` is not one of emax, michaelis-menten"),
                ))
            }
        }
        .map_err(|e| parse_error(self.line("drug.ed50"), "drug.ed50", e.to_string()))?;
        let range = DoseRange::new(self.required_number("dose.lower")?, self.required_number("dose.upper")?)
            .map_err(|e| parse_error(self.line("dose.upper"), "dose.upper", e.to_string()))?;
        let response = self.required_number("control.response")?;
        let (drug_family, control) = match family {
            FamilyKind::Normal => (
                DrugFamily::Normal {
                    variance: self.arm_variance("drug")?,
                },
                ControlModel::normal(response, self.arm_variance("control")?),
            ),
            FamilyKind::NegativeBinomial => {
                let failures = self.arm_failures("control")?;
                (
                    DrugFamily::NegativeBinomial {
                        failures: self.arm_failures("drug")?,
                    },
                    ControlModel::negative_binomial(failures, response),
                )
            }
            FamilyKind::Binomial => (DrugFamily::Binomial, ControlModel::binomial(response)),
            FamilyKind::Poisson => (DrugFamily::Poisson, ControlModel::poisson(response)),
        };
        let control = control.map_err(|e| parse_error(self.line("control.response"), "control.response", e.to_string()))?;
        let drug = DrugModel::new(drug_family, mean, range)
            .map_err(|e| parse_error(mean_entry.line, "drug", e.to_string()))?;
        TrialModel::new(drug, control).map_err(|e| parse_error(0, "family", e.to_string()))
    }

    fn criterion(&self, model: &TrialModel) -> Result<(Criterion, String), CliError> {
        let entry = self.required("criterion")?;
        let (s1, s2) = (model.s1(), model.s2());
        let reject_extra = |keys: &[&str]| -> Result<(), CliError> {
            for key in keys {
                if self.get(key).is_some() {
                    return Err(parse_error(
                        self.line(key),
                        key,
                        format!("not used by criterion `{}`", entry.value),
                    ));
                }
            }
            Ok(())
        };
        match entry.value.as_str() {
            "d-optimal" => {
                reject_extra(&["criterion.p", "criterion.k", "criterion.k11", "criterion.k22"])?;
                Ok((Criterion::d_optimal(model), "d-optimal".into()))
            }
            "target-dose" => {
                reject_extra(&["criterion.p", "criterion.k", "criterion.k11", "criterion.k22"])?;
                Ok((Criterion::TargetDose, "target-dose".into()))
            }
            "phi" => {
                let p = self.required_number("criterion.p")?;
                let k = match (self.get("criterion.k"), self.get("criterion.k11"), self.get("criterion.k22")) {
                    (Some(e), None, None) => {
                        let m = parse_matrix(&e.value).map_err(|m| parse_error(e.line, "criterion.k", m))?;
                        KMatrix::general(m).map_err(|err| parse_error(e.line, "criterion.k", err.to_string()))?
                    }
                    (None, Some(a), Some(b)) => {
                        let k11 = parse_matrix(&a.value).map_err(|m| parse_error(a.line, "criterion.k11", m))?;
                        let k22 = parse_matrix(&b.value).map_err(|m| parse_error(b.line, "criterion.k22", m))?;
                        if k11.nrows() != s1 {
                            return Err(parse_error(a.line, "criterion.k11", format!("needs {s1} rows")));
                        }
                        if k22.nrows() != s2 {
                            return Err(parse_error(b.line, "criterion.k22", format!("needs {s2} rows")));
                        }
                        KMatrix::block(k11, k22).map_err(|err| parse_error(a.line, "criterion.k11", err.to_string()))?
                    }
                    (None, None, None) => KMatrix::identity(s1, s2),
                    _ => {
                        return Err(parse_error(
                            self.line("criterion.k"),
                            "criterion.k",
                            "give either criterion.k or both criterion.k11 and criterion.k22",
                        ))
                    }
                };
                if k.rows() != s1 + s2 {
                    return Err(parse_error(
                        self.line("criterion.k"),
                        "criterion.k",
                        format!("needs {} rows (drug and control parameters)", s1 + s2),
                    ));
                }
                let label = format!("phi(p = {})", acdesign::text::format_sig(p, 6));
                let c = Criterion::phi(p, k).map_err(|e| parse_error(self.line("criterion.p"), "criterion.p", e.to_string()))?;
                Ok((c, label))
            }
            other => Err(parse_error(
                entry.line,
                "criterion",
                format!("`{other}` is not one of d-optimal, phi, target-dose"),
            )),
        }
    }
}

fn parse_number(e: &Entry, key: &str) -> Result<f64, CliError> {
    match e.value.as_str() {
        "-inf" => Ok(f64::NEG_INFINITY),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| parse_error(e.line, key, format!("`{v}` is not a number"))),
    }
}

/// Rows separated by `;`, entries by `,`.
fn parse_matrix(text: &str) -> Result<DMatrix<f64>, String> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", v.trim())))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err("rows have different lengths".into());
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// `dose:weight` pairs separated by `,`; the control is written `C:weight`.
fn parse_inline_design(text: &str) -> Result<Design, String> {
    let points: Vec<(Point, f64)> = text
        .split(',')
        .map(|item| {
            let (d, w) = item
                .split_once(':')
                .ok_or_else(|| format!("`{}` is not `dose:weight`", item.trim()))?;
            let w: f64 = w.trim().parse().map_err(|_| format!("`{}` is not a weight", w.trim()))?;
            let point = match d.trim() {
                "C" => Point::Control,
                d => Point::Drug(d.parse().map_err(|_| format!("`{d}` is not a dose"))?),
            };
            Ok((point, w))
        })
        .collect::<Result<_, String>>()?;
    crate::design_io::from_points(&points)
}
