mod common;

use acdesign::criteria::psi_ac;
use acdesign::model::{DoseRange, DrugFamily, DrugModel, FamilyKind, MeanFunction, ResponseScale};
use acdesign::solvers::{ac_optimal, c_opt_elfving_2d, d_opt_emax, d_opt_mm, emax_binary_equation, ElfvingCase};
use acdesign::{verify, Criterion, SolveOptions, VerifyOptions};
use common::{random_model, rng, FAMILIES};
use nalgebra::Vector2;
use proptest::prelude::*;

fn mm_drug(family: DrugFamily, emax: f64, ed50: f64, r: f64) -> DrugModel {
    DrugModel::new(
        family,
        MeanFunction::michaelis_menten(emax, ed50).unwrap(),
        DoseRange::new(0.0, r).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elfving_representation_holds(seed in any::<u64>(), frac in 0.01..0.99f64) {
        let mut g = rng(seed);
        let model = random_model(&mut g, FAMILIES[(seed % 4) as usize], true);
        let range = model.range();
        let d = range.lower() + frac * range.width();
        let c = model.drug.response_gradient(d, ResponseScale::Mean);
        let s = match c_opt_elfving_2d(&model.drug, &c) {
            Ok(s) => s,
            Err(acdesign::Error::InfeasibleGeometry(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let mut sum = Vector2::zeros();
        for ((&x, &w), &e) in s.doses.iter().zip(&s.weights).zip(&s.signs) {
            let f = model.drug.elfving_vector(x).unwrap();
            sum += Vector2::new(f[0], f[1]) * (w * e);
        }
        let c2 = Vector2::new(c[0], c[1]);
        prop_assert!((sum - c2 * s.gamma).norm() <= 1e-8 * (1.0 + s.gamma * c2.norm()));
        prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

/// δ(d*) just below and just above the threshold dose.
fn delta_jump(drug: &DrugModel, threshold: f64) -> (f64, f64, ElfvingCase, ElfvingCase) {
    let h = 1e-12 * drug.range().width();
    let at = |d: f64| c_opt_elfving_2d(drug, &drug.response_gradient(d, ResponseScale::Mean)).unwrap();
    let (below, above) = (at(threshold - h), at(threshold + h));
    (below.delta, above.delta, below.case, above.case)
}

#[test]
fn threshold_crossing_is_continuous() {
    for (emax, ed50, r) in [(1.0, 1.5, 10.0), (0.7, 3.0, 50.0), (2.0, 0.5, 200.0)] {
        let poisson = mm_drug(DrugFamily::Poisson, emax, ed50, r);
        let x = r * ed50 / (3.0 * r + 4.0 * ed50);
        let normal = mm_drug(DrugFamily::Normal { variance: 0.01 }, emax, ed50, r);
        let s2 = 2f64.sqrt();
        let xn = (s2 * r * r * ed50 + (s2 - 1.0) * r * ed50 * ed50) / (2.0 * r * r + 4.0 * r * ed50 + ed50 * ed50);
        for (drug, threshold) in [(poisson, x), (normal, xn)] {
            let (lo, hi, case_lo, case_hi) = delta_jump(&drug, threshold);
            assert_eq!(case_lo, ElfvingCase::LeftThreshold);
            assert_eq!(case_hi, ElfvingCase::OnePoint);
            assert!((lo - hi).abs() <= 1e-6 * hi, "{lo} vs {hi}");
        }
    }
}

#[test]
fn binary_equation_root_has_small_residual() {
    let mut g = rng(21);
    let mut checked = 0;
    while checked < 20 {
        let kind = if checked % 2 == 0 { FamilyKind::Binomial } else { FamilyKind::NegativeBinomial };
        let model = random_model(&mut g, kind, false);
        let Ok(design) = d_opt_emax(&model) else { continue };
        let d = design.doses()[1];
        let residual = emax_binary_equation(&model, d).unwrap();
        let scale = 2.0 / d + 2.0 / (model.range().upper() - d);
        assert!(residual.abs() <= 1e-10 * scale, "residual {residual} at {d}");
        checked += 1;
    }
}

#[test]
fn closed_forms_are_certified_on_random_models() {
    let mut g = rng(22);
    for kind in FAMILIES {
        for mm in [true, false] {
            let mut done = 0;
            while done < 3 {
                let model = random_model(&mut g, kind, mm);
                let design = if mm { d_opt_mm(&model) } else { d_opt_emax(&model) };
                let Ok(design) = design else { continue };
                let report = verify(&design, &model, &Criterion::d_optimal(&model), VerifyOptions::default()).unwrap();
                assert!(report.is_optimal(), "{model:?}: {}", report.max_violation);
                // control weight is exactly optimal for block contrasts
                let c = acdesign::equivalence::sensitivity(
                    &design,
                    &model,
                    &Criterion::d_optimal(&model),
                    acdesign::Point::Control,
                )
                .unwrap();
                assert!(c.abs() <= 1e-12, "{c}");
                done += 1;
            }
        }
    }
}

#[test]
fn verdict_does_not_depend_on_grid_size() {
    let model = acdesign::scenarios::gouty(FamilyKind::Poisson).unwrap();
    let optimal = d_opt_emax(&model).unwrap();
    let standard = acdesign::scenarios::gouty_standard();
    let c = Criterion::d_optimal(&model);
    for grid_size in [200, 512, 2000] {
        let opts = VerifyOptions { grid_size, tol: 1e-5 };
        assert!(verify(&optimal, &model, &c, opts).unwrap().is_optimal());
        assert!(!verify(&standard, &model, &c, opts).unwrap().is_optimal());
    }
}

#[test]
fn allocation_forms_agree_for_michaelis_menten_models() {
    let mut g = rng(23);
    for kind in FAMILIES {
        for _ in 0..3 {
            let model = random_model(&mut g, kind, true);
            // ac_optimal cross-checks the family allocation against ρ₋₁
            let s = ac_optimal(&model, &SolveOptions::default()).unwrap();
            assert!(s.elfving.is_some());
            assert!((s.design.control_weight() - (1.0 - s.drug_share)).abs() <= 1e-12);
            assert!(psi_ac(&s.design, &model).unwrap().is_finite());
        }
    }
}
