#![allow(dead_code)]

use acdesign::model::{ControlModel, DoseRange, DrugFamily, DrugModel, FamilyKind, MeanFunction, TrialModel};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FAMILIES: [FamilyKind; 4] = [
    FamilyKind::Normal,
    FamilyKind::NegativeBinomial,
    FamilyKind::Binomial,
    FamilyKind::Poisson,
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn drug_family(kind: FamilyKind, variance: f64, failures: u32) -> DrugFamily {
    match kind {
        FamilyKind::Normal => DrugFamily::Normal { variance },
        FamilyKind::NegativeBinomial => DrugFamily::NegativeBinomial { failures },
        FamilyKind::Binomial => DrugFamily::Binomial,
        FamilyKind::Poisson => DrugFamily::Poisson,
    }
}

pub fn control(kind: FamilyKind, value: f64, variance: f64, failures: u32) -> acdesign::Result<ControlModel> {
    match kind {
        FamilyKind::Normal => ControlModel::normal(value, variance),
        FamilyKind::NegativeBinomial => ControlModel::negative_binomial(failures, value),
        FamilyKind::Binomial => ControlModel::binomial(value),
        FamilyKind::Poisson => ControlModel::poisson(value),
    }
}

/// Random valid trial model. The control response equals the drug response
/// at a random interior dose, so the target dose exists.
pub fn random_model(rng: &mut ChaCha8Rng, kind: FamilyKind, michaelis_menten: bool) -> TrialModel {
    loop {
        let r: f64 = rng.random_range(20.0..300.0);
        let mean = if michaelis_menten {
            let ed50 = rng.random_range(0.5..15.0);
            let emax = match kind {
                FamilyKind::Binomial | FamilyKind::NegativeBinomial => rng.random_range(0.2..0.9),
                _ => rng.random_range(0.2..2.0),
            };
            MeanFunction::michaelis_menten(emax, ed50).unwrap()
        } else {
            let ed50 = rng.random_range(2.0..30.0);
            let e0 = rng.random_range(0.05..0.3);
            let emax = rng.random_range(0.2..0.6);
            MeanFunction::emax(e0, emax, ed50).unwrap()
        };
        let l = if michaelis_menten && rng.random_bool(0.3) {
            rng.random_range(0.0..0.2 * mean.ed50())
        } else {
            0.0
        };
        let variance = rng.random_range(0.001..0.05);
        let failures = rng.random_range(1..20);
        let range = DoseRange::new(l, r).unwrap();
        let Ok(drug) = DrugModel::new(drug_family(kind, variance, failures), mean, range) else {
            continue;
        };
        let target = rng.random_range(l + 0.05 * (r - l)..r - 0.05 * (r - l));
        let Ok(ctrl) = control(kind, mean.value(target), variance, failures) else {
            continue;
        };
        if let Ok(m) = TrialModel::new(drug, ctrl) {
            return m;
        }
    }
}

/// Relative difference `|a − b| / max(|a|, |b|, tiny)`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Collects pass/fail lines and fails the test at the end if any check failed.
pub struct Report {
    criterion: &'static str,
    failures: Vec<String>,
    count: usize,
}

impl Report {
    pub fn new(criterion: &'static str) -> Self {
        Self {
            criterion,
            failures: Vec::new(),
            count: 0,
        }
    }

    pub fn check(&mut self, name: &str, ok: bool, detail: impl std::fmt::Display) {
        self.count += 1;
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {} {name}: {detail}", self.criterion);
        if !ok {
            self.failures.push(format!("{name}: {detail}"));
        }
    }

    pub fn finish(self) {
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "{status} {}: {} of {} checks passed",
            self.criterion,
            self.count - self.failures.len(),
            self.count
        );
        assert!(self.failures.is_empty(), "{} failed:\n{}", self.criterion, self.failures.join("\n"));
    }
}
