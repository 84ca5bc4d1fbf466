//! Full positivity / k-EB ladder for a single channel, the library-level
//! counterpart of `keb-lab analyze`.

use keb_lab::channels::{family_make, Family};
use keb_lab::keb::{keb_certify, keb_refute};
use keb_lab::positivity::{is_cp, is_positive_map, is_ppt_map, Verdict};
use keb_lab::ToleranceProfile;

fn main() -> keb_lab::Result<()> {
    let tol = ToleranceProfile::default();

    let phi = family_make(Family::WernerHolevo { lambda: 0.4, d: 3 })?;
    println!("Werner-Holevo map, lambda = 0.4, d = 3");
    println!("  positive:            {:?}", is_positive_map(&phi, &tol)?.verdict);
    println!("  completely positive: {:?}", is_cp(&phi, &tol)?.verdict);
    println!("  ppt:                 {:?}", is_ppt_map(&phi, &tol)?.verdict);
    for k in 1..=3 {
        let cert = keb_certify(&phi, k, &tol)?;
        print!("  {k}-EB: {:?} ({})", cert.verdict.verdict, cert.details);
        if cert.verdict.verdict == Verdict::Unknown {
            let ref_report = keb_refute(&phi, k, &tol)?;
            print!(" / refuter: {:?}", ref_report.verdict.verdict);
        }
        println!();
    }

    // A point inside the family's unresolved strip: the necessary bound
    // admits it, the sufficient bound does not reach it.
    let psi = family_make(Family::PhiLambda { lambda: -0.28, d: 4 })?;
    println!("\nPhi_lambda map, lambda = -0.28, d = 4, order 2");
    let cert = keb_certify(&psi, 2, &tol)?;
    println!("  certifier: {:?} ({})", cert.verdict.verdict, cert.details);
    if let Some(w) = &cert.verdict.warning {
        println!("  warning:   {w}");
    }
    let refuted = keb_refute(&psi, 2, &tol)?;
    println!("  refuter:   {:?} ({})", refuted.verdict.verdict, refuted.details);
    Ok(())
}
