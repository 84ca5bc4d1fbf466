//! Orthogonal twirl of a product state: exact projection, closed form,
//! Monte Carlo agreement, and cone membership.

use keb_lab::core_linalg::{kron, random_state_vector};
use keb_lab::twirl::{
    twirl_cone_membership, twirl_monte_carlo, twirl_product_coeffs, twirl_project,
    DEFAULT_SAMPLE_POINTS,
};
use keb_lab::{BipartiteOperator, ToleranceProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> keb_lab::Result<()> {
    let tol = ToleranceProfile::default();
    let d = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_state_vector(&mut rng, d);
    let y = random_state_vector(&mut rng, d);
    let xx = &x * x.adjoint();
    let yy = &y * y.adjoint();
    let a = BipartiteOperator::new(kron(&xx, &yy), d, d)?;

    let (projected, coeffs) = twirl_project(&a)?;
    println!("projection coefficients: a = {:.8}, b = {:.8}, c = {:.8}", coeffs.a, coeffs.b, coeffs.c);

    let closed = twirl_product_coeffs(&x, &y, d)?;
    println!("closed form:             a = {:.8}, b = {:.8}, c = {:.8}", closed.a, closed.b, closed.c);

    let samples = 20_000;
    let mc = twirl_monte_carlo(&a, samples, 7)?;
    let dev = (&mc.mat - &projected.mat).norm();
    println!("monte carlo deviation over {samples} samples: {dev:.3e}");

    let membership = twirl_cone_membership(&coeffs, d, DEFAULT_SAMPLE_POINTS)?;
    println!("cone membership: {:?} via {}", membership.verdict, membership.method);
    Ok(())
}
