//! Refutation and certification on a few standard bipartite operators.

use keb_lab::core_linalg::{identity, kron, omega_projector, realignment, swap_operator};
use keb_lab::separability::{horodecki_2x4, sep_certify, sep_refute};
use keb_lab::{BipartiteOperator, ToleranceProfile};

fn main() -> keb_lab::Result<()> {
    let tol = ToleranceProfile::default();

    // Maximally entangled projector on 2x2: refuted through partial transpose.
    let omega = BipartiteOperator::new(omega_projector(2), 2, 2)?;
    let cert = sep_refute(&omega, &tol)?;
    println!("|Omega_2><Omega_2|:  {:?} via {}", cert.verdict, cert.method);

    // Pure product state: certified with a one-term decomposition.
    let a = identity(3).scale(0.5);
    let product = BipartiteOperator::new(kron(&a, &a), 3, 3)?;
    let (cert, decomp) = sep_certify(&product, &tol)?;
    println!(
        "A (x) B:             {:?} via {} ({} terms)",
        cert.verdict,
        cert.method,
        decomp.map_or(0, |d| d.terms.len()),
    );

    // Separable Werner point I(x)I - Delta/d: inside the twirl cone.
    let d = 3;
    let werner = kron(&identity(d), &identity(d)) - swap_operator(d).scale(1.0 / d as f64);
    let werner = BipartiteOperator::new(werner, d, d)?;
    let (cert, decomp) = sep_certify(&werner, &tol)?;
    println!(
        "I - Delta/3 point:   {:?} via {} ({} terms)",
        cert.verdict,
        cert.method,
        decomp.map_or(0, |d| d.terms.len()),
    );

    // The 2x4 bound entangled family: PPT by construction, and the plain
    // realignment value stays below the trace, so the refuter cannot see it.
    let rho = horodecki_2x4(0.5)?;
    let cert = sep_refute(&rho, &tol)?;
    let ccnr = keb_lab::core_linalg::singular_value_sum(&realignment(&rho))?;
    let trace = rho.mat.trace().re;
    println!("horodecki(b = 0.5):  {:?} via {}", cert.verdict, cert.method);
    println!("  realignment singular value sum {ccnr:.6} vs trace {trace:.6}");
    Ok(())
}
