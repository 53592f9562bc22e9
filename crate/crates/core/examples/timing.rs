//! Quick timing probe for the simulation pipeline at reference scale.

use std::time::Instant;

use epb_core::npmle::{fit_dual_variance_prior, fit_variance_ratio_prior, default_tolerance};
use epb_core::pvalues::{attach_q_values, run_all, MethodId, Priors, RunSettings};
use epb_core::simulate::{generate, LambdaLaw, SimulationScenario};

fn main() {
    let scenario = SimulationScenario::with_defaults(LambdaLaw::UnequalF, 3, 9, 7);
    let t0 = Instant::now();
    let (features, _truth) = generate(&scenario, 0).unwrap();
    println!("generate: {:?}", t0.elapsed());

    let tol = default_tolerance();
    let t0 = Instant::now();
    let vr = fit_variance_ratio_prior(&features, 1000, &tol).unwrap();
    println!(
        "vr fit: {:?} (iters {}, gap {:.2e}, atoms {}, converged {})",
        t0.elapsed(),
        vr.iterations,
        vr.certificate_gap,
        vr.prior.support().len(),
        vr.converged
    );

    let t0 = Instant::now();
    let dv = fit_dual_variance_prior(&features, 80, 80, &tol).unwrap();
    println!(
        "dv fit: {:?} (iters {}, gap {:.2e}, atoms {}, converged {})",
        t0.elapsed(),
        dv.iterations,
        dv.certificate_gap,
        dv.prior.weights().len(),
        dv.converged
    );

    let priors = Priors {
        variance_ratio: Some(vr.prior),
        dual_variance: Some(dv.prior),
    };
    let settings = RunSettings::new([
        MethodId::Vrepb,
        MethodId::Dvepb,
        MethodId::Ev,
        MethodId::Welch,
        MethodId::Bf,
    ]);
    let t0 = Instant::now();
    let mut rows = run_all(&features, &settings, &priors).unwrap();
    println!("run_all (5 methods): {:?}", t0.elapsed());
    let t0 = Instant::now();
    attach_q_values(&mut rows, 0.1).unwrap();
    println!("bh: {:?}", t0.elapsed());
}
