mod common;

use acdesign::model::{DoseRange, DrugFamily, DrugModel, FamilyKind, MeanFunction};
use acdesign::Error;
use common::{random_model, rng, FAMILIES};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn draw(seed: u64) -> acdesign::TrialModel {
    let mut g = rng(seed);
    let kind = FAMILIES[(seed % 4) as usize];
    random_model(&mut g, kind, seed % 8 < 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fisher_is_symmetric_psd(seed in any::<u64>(), frac in 0.0..=1.0f64) {
        let model = draw(seed);
        let range = model.range();
        let m = model.drug.fisher(range.lower() + frac * range.width()).unwrap();
        prop_assert!((&m - m.transpose()).amax() == 0.0);
        let scale = m.amax().max(1e-300);
        for v in SymmetricEigen::new(m).eigenvalues.iter() {
            prop_assert!(*v >= -1e-10 * scale, "eigenvalue {v}");
        }
    }

    #[test]
    fn mean_gradient_matches_finite_differences(seed in any::<u64>(), frac in 0.0..=1.0f64) {
        let model = draw(seed);
        let range = model.range();
        let d = range.lower() + frac * range.width();
        let mean = model.drug.mean_function();
        let theta = mean.parameters();
        let g = model.drug.mean_grad(d).unwrap();
        for j in 0..theta.len() {
            let h = 1e-6 * theta[j].abs().max(1e-3);
            let at = |s: f64| {
                let mut t = theta.clone();
                t[j] += s;
                mean.with_parameters(&t).value(d)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-3), "{fd} vs {}", g[j]);
        }
        // the variance component of the normal family does not enter the mean
        for j in theta.len()..g.len() {
            prop_assert_eq!(g[j], 0.0);
        }
    }

    #[test]
    fn normal_information_has_no_mean_variance_coupling(seed in any::<u64>(), frac in 0.0..=1.0f64) {
        let mut g = rng(seed);
        let model = random_model(&mut g, FamilyKind::Normal, seed % 2 == 0);
        let range = model.range();
        let m = model.drug.fisher(range.lower() + frac * range.width()).unwrap();
        let last = m.nrows() - 1;
        for i in 0..last {
            prop_assert_eq!(m[(i, last)], 0.0);
            prop_assert_eq!(m[(last, i)], 0.0);
        }
        prop_assert!(m[(last, last)] > 0.0);
    }

    #[test]
    fn negative_binomial_information_is_scaled_binomial(
        emax in 0.2..0.9f64,
        ed50 in 0.5..20.0f64,
        e0 in 0.01..0.09f64,
        failures in 1u32..30,
        frac in 0.0..=1.0f64,
    ) {
        let mean = MeanFunction::emax(e0, emax, ed50).unwrap();
        let range = DoseRange::new(0.0, 100.0).unwrap();
        let nb = DrugModel::new(DrugFamily::NegativeBinomial { failures }, mean, range).unwrap();
        let bin = DrugModel::new(DrugFamily::Binomial, mean, range).unwrap();
        let d = frac * 100.0;
        let pi = mean.value(d);
        let expected = bin.fisher(d).unwrap() * (failures as f64 / pi);
        let got = nb.fisher(d).unwrap();
        prop_assert!((&got - &expected).amax() <= 1e-12 * expected.amax());
    }
}

#[test]
fn target_dose_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let model = draw(seed);
        let (g1, g2) = model.target_dose_grad().unwrap();
        let (t1, t2) = (model.drug.theta(), model.control.theta());
        let scale = g1.amax().max(g2.amax());
        for j in 0..t1.len() + t2.len() {
            let shifted = |s: f64| {
                let (mut a, mut b) = (t1.clone(), t2.clone());
                if j < a.len() {
                    a[j] += s;
                } else {
                    b[j - t1.len()] += s;
                }
                let m = acdesign::TrialModel::new(model.drug.with_theta(&a).unwrap(), model.control.with_theta(&b).unwrap())
                    .unwrap();
                m.target_dose().unwrap()
            };
            let (base, exact) = if j < t1.len() { (t1[j], g1[j]) } else { (t2[j - t1.len()], g2[j - t1.len()]) };
            let h = 1e-6 * base.abs().max(1e-3);
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            assert!((fd - exact).abs() <= 1e-5 * scale, "seed {seed}, component {j}: {fd} vs {exact}");
        }
    }
}

#[test]
fn binomial_mean_must_stay_below_one() {
    let mean = MeanFunction::michaelis_menten(1.2, 2.0).unwrap();
    let range = DoseRange::new(0.0, 50.0).unwrap();
    assert!(matches!(
        DrugModel::new(DrugFamily::Binomial, mean, range),
        Err(Error::InvalidParameter(_))
    ));
    assert!(DrugModel::new(DrugFamily::Poisson, mean, range).is_ok());
}
