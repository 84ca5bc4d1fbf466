//! Schmidt decompositions of vectors and Schmidt number bounds of operators.

use keb_lab::core_linalg::{cx, kron, omega_vector};
use keb_lab::schmidt::{schmidt_decompose, sn_bounds, sn_regroup, SCHMIDT_RANK_TOL};
use keb_lab::{BipartiteOperator, CVector, ToleranceProfile};

fn main() -> keb_lab::Result<()> {
    let tol = ToleranceProfile::default();

    // A 3x3 vector with two Schmidt terms and a phase on the second one.
    let mut xi = CVector::zeros(9);
    xi[0] = cx(0.8, 0.0);
    xi[4] = cx(0.0, 0.6);
    let dec = schmidt_decompose(&xi, 3, 3, SCHMIDT_RANK_TOL)?;
    println!("schmidt coefficients: {:?}", dec.coefficients);
    println!("schmidt rank:         {}", dec.rank());
    let back = dec.reconstruct(3, 3);
    println!("reconstruction error: {:.3e}", (&back - &xi).norm());

    // Schmidt number bounds for the maximally entangled projector.
    let omega = omega_vector(3);
    let x = BipartiteOperator::new(&omega * omega.adjoint(), 3, 3)?;
    let bounds = sn_bounds(&x, &tol)?;
    println!(
        "\n|Omega_3>: sn in [{}, {}]\n  lower: {}\n  upper: {}",
        bounds.lower, bounds.upper, bounds.lower_evidence, bounds.upper_evidence
    );

    // Regrouping pure parts by Schmidt rank: each part of rank j factors
    // through an isometry from C^j.
    let mut eta = CVector::zeros(9);
    eta[0] = cx(1.0, 0.0);
    let mut zeta = CVector::zeros(9);
    zeta[0] = cx(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    zeta[8] = cx(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    println!();
    for part in sn_regroup(&[eta.clone(), zeta.clone()], 3, 3, &tol)? {
        let expanded = kron(&part.isometry, &keb_lab::core_linalg::identity(3)) * &part.compressed;
        let source = if part.rank == 1 { &eta } else { &zeta };
        println!(
            "part of rank {}: isometry {}x{}, expansion error {:.3e}",
            part.rank,
            part.isometry.nrows(),
            part.isometry.ncols(),
            (&expanded - source).norm()
        );
    }
    Ok(())
}
