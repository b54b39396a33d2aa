use std::io::Write;
use std::path::Path;

use acdesign::criteria::{ac_efficiency, criterion_value, d_efficiency, efficiency, psi_ac};
use acdesign::solvers::{ac_optimal, d_opt_emax, d_opt_mm, numeric_solve};
use acdesign::text::format_sig;
use acdesign::{verify, Criterion, Design, Error, KMatrix, SensitivityReport, TrialModel};
use serde_json::{json, Value};

use crate::design_io;
use crate::error::CliError;
use crate::json::{self, num};
use crate::scenario::Scenario;

pub struct Solution {
    pub design: Design,
    pub method: String,
}

fn is_d_optimal(model: &TrialModel, criterion: &Criterion) -> bool {
    matches!(criterion, Criterion::PhiP { p, k } if *p == 0.0 && *k == KMatrix::identity(model.s1(), model.s2()))
}

/// Closed forms where one applies, the numeric solver otherwise.
pub fn solve(sc: &Scenario) -> Result<Solution, CliError> {
    let model = &sc.model;
    let family = model.kind().name();
    let mm = model.drug.mean_function().is_michaelis_menten();
    let numeric = || -> Result<Solution, CliError> {
        Ok(Solution {
            design: numeric_solve(model, &sc.criterion, &sc.solve)?,
            method: "numeric/vertex-exchange".into(),
        })
    };
    if is_d_optimal(model, &sc.criterion) {
        let (closed, shape) = if mm {
            (d_opt_mm(model), "michaelis-menten")
        } else {
            (d_opt_emax(model), "emax")
        };
        return match closed {
            Ok(design) => Ok(Solution {
                design,
                method: format!("closed-form/{shape}-{family}"),
            }),
            Err(Error::InfeasibleGeometry(_)) => numeric(),
            Err(e) => Err(e.into()),
        };
    }
    if sc.criterion == Criterion::TargetDose {
        let s = ac_optimal(model, &sc.solve)?;
        let method = match &s.elfving {
            Some(e) => format!("elfving/{}-{family}", e.case.as_str()),
            None => "composition/numeric-drug-part".into(),
        };
        return Ok(Solution { design: s.design, method });
    }
    numeric()
}

/// `φ_p` for `φ_p` criteria, `ψ` for the target dose.
fn reported_value(design: &Design, sc: &Scenario) -> Result<f64, CliError> {
    Ok(match sc.criterion {
        Criterion::TargetDose => psi_ac(design, &sc.model)?,
        _ => criterion_value(design, &sc.model, &sc.criterion)?,
    })
}

fn orientation(sc: &Scenario) -> &'static str {
    match sc.criterion {
        Criterion::TargetDose => "minimise",
        _ => "maximise",
    }
}

fn model_json(sc: &Scenario) -> Value {
    let m = &sc.model;
    json!({
        "family": m.kind().name(),
        "mean": if m.drug.mean_function().is_michaelis_menten() { "michaelis-menten" } else { "emax" },
        "drug_parameters": m.drug.theta().into_iter().map(num).collect::<Vec<_>>(),
        "control_parameters": m.control.theta().into_iter().map(num).collect::<Vec<_>>(),
        "dose_range": [num(m.range().lower()), num(m.range().upper())],
        "target_dose": m.target_dose().ok().map(num),
    })
}

fn verification_json(r: &SensitivityReport) -> Value {
    json!({
        "verdict": r.verdict.as_str(),
        "max_violation": num(r.max_violation),
        "argmax": json::point(r.argmax),
        "support_residual": num(r.support_residual),
        "control_sensitivity": num(r.control_value),
        "support": r.support_values.iter().map(|(p, v)| json!({ "point": json::point(*p), "sensitivity": num(*v) })).collect::<Vec<_>>(),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("values serialise") + "\n"
}

pub fn cmd_solve(sc: &Scenario, as_json: bool, out: &mut impl Write) -> Result<(), CliError> {
    let solution = solve(sc)?;
    let report = verify(&solution.design, &sc.model, &sc.criterion, sc.solve.verify)?;
    let value = reported_value(&solution.design, sc)?;
    let doc = json!({
        "scenario": sc.name,
        "model": model_json(sc),
        "criterion": sc.criterion_label,
        "method": solution.method,
        "design": json::design(&solution.design),
        "criterion_value": num(value),
        "orientation": orientation(sc),
        "verification": verification_json(&report),
    });
    if let Some(path) = &sc.outputs.design {
        design_io::write(path, &solution.design)?;
    }
    if let Some(path) = &sc.outputs.report {
        write_file(path, &to_json(&doc))?;
    }
    if let Some(path) = &sc.outputs.sensitivity {
        write_file(path, &report.to_csv())?;
    }
    if as_json {
        write!(out, "{}", to_json(&doc)).map_err(stdout_error)?;
    } else {
        let text = format!(
            "scenario: {}\ncriterion: {}\nmethod: {}\ncriterion value: {}\nverdict: {} (max violation {})\n{}",
            sc.name,
            sc.criterion_label,
            solution.method,
            format_sig(value, 6),
            report.verdict.as_str(),
            format_sig(report.max_violation, 3),
            design_io::to_csv(&solution.design)
        );
        write!(out, "{text}").map_err(stdout_error)?;
    }
    Ok(())
}

fn reference_design(sc: &Scenario, file: Option<&Path>) -> Result<Design, CliError> {
    match file {
        Some(path) => design_io::read(path),
        None => sc.design.clone().ok_or(CliError::MissingDesign),
    }
}

pub fn cmd_verify(
    sc: &Scenario,
    file: Option<&Path>,
    as_json: bool,
    out: &mut impl Write,
    err: &mut impl Write,
) -> Result<(), CliError> {
    let design = reference_design(sc, file)?;
    let report = verify(&design, &sc.model, &sc.criterion, sc.solve.verify)?;
    let summary = format!(
        "verdict: {} (max violation {} at {}, support residual {})\n",
        report.verdict.as_str(),
        format_sig(report.max_violation, 3),
        match report.argmax {
            acdesign::Point::Drug(d) => format_sig(d, 6),
            acdesign::Point::Control => "C".into(),
        },
        format_sig(report.support_residual, 3)
    );
    let csv = report.to_csv();
    if let Some(path) = &sc.outputs.sensitivity {
        write_file(path, &csv)?;
    }
    if as_json {
        let doc = json!({
            "scenario": sc.name,
            "criterion": sc.criterion_label,
            "design": json::design(&design),
            "verification": verification_json(&report),
        });
        write!(out, "{}", to_json(&doc)).map_err(stdout_error)?;
    } else if sc.outputs.sensitivity.is_some() {
        write!(out, "{summary}").map_err(stdout_error)?;
    } else {
        write!(out, "{csv}").map_err(stdout_error)?;
        write!(err, "{summary}").map_err(stdout_error)?;
    }
    Ok(())
}

/// `Ok(None)` when the design cannot estimate what the criterion needs.
fn guarded(r: acdesign::Result<f64>) -> Result<Option<f64>, CliError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NotEstimable { .. }) => Ok(Some(0.0)),
        Err(Error::NoTargetDose { .. } | Error::DegenerateGradient { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_efficiency(sc: &Scenario, file: Option<&Path>, as_json: bool, out: &mut impl Write) -> Result<(), CliError> {
    let design = reference_design(sc, file)?;
    let model = &sc.model;
    let d_sc = Scenario {
        criterion: Criterion::d_optimal(model),
        ..sc.clone()
    };
    let d_opt = solve(&d_sc)?.design;
    let d = guarded(d_efficiency(&design, &d_opt, model))?;
    let ac = match model.target_dose() {
        Ok(_) => {
            let best = ac_optimal(model, &sc.solve)?.design;
            guarded(ac_efficiency(&design, &best, model))?
        }
        Err(_) => None,
    };
    let own = match &sc.criterion {
        Criterion::PhiP { .. } if !is_d_optimal(model, &sc.criterion) => {
            let best = solve(sc)?.design;
            guarded(efficiency(&design, &best, model, &sc.criterion))?
        }
        _ => None,
    };
    if as_json {
        let doc = json!({
            "scenario": sc.name,
            "design": json::design(&design),
            "d_efficiency": d.map(num),
            "ac_efficiency": ac.map(num),
            "criterion_efficiency": own.map(num),
        });
        write!(out, "{}", to_json(&doc)).map_err(stdout_error)?;
    } else {
        let mut text = String::new();
        for (label, v) in [("d-efficiency", d), ("ac-efficiency", ac), ("criterion-efficiency", own)] {
            if let Some(v) = v {
                text.push_str(&format!("{label}: {}\n", format_sig(v, 6)));
            }
        }
        write!(out, "{text}").map_err(stdout_error)?;
    }
    Ok(())
}

pub fn stdout_error(e: std::io::Error) -> CliError {
    CliError::io(Path::new("<stdout>"), e)
}
