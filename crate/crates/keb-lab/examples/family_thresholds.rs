//! Exact lambda intervals for the built-in parametric families.

use keb_lab::channels::Family;
use keb_lab::keb::keb_threshold;

fn show(family_name: &str, family: &Family, orders: &[usize]) -> keb_lab::Result<()> {
    println!("{family_name}");
    println!("  {:>2}  {:>18}  {:>18}  gap", "k", "certified", "necessary");
    for &k in orders {
        let row = keb_threshold(family, k)?;
        let gap = match row.gap {
            Some([lo, hi]) => format!("[{lo:.4}, {hi:.4})"),
            None => "-".into(),
        };
        println!(
            "  {:>2}  [{:>7.4}, {:>7.4}]  [{:>7.4}, {:>7.4}]  {}{}",
            row.k,
            row.certified[0],
            row.certified[1],
            row.necessary[0],
            row.necessary[1],
            gap,
            if row.exact { "" } else { "  (not exact)" },
        );
    }
    Ok(())
}

fn main() -> keb_lab::Result<()> {
    let d = 4;
    let orders = [1, 2, 3, 4];
    show(
        "Werner-Holevo family, d = 4",
        &Family::WernerHolevo { lambda: 0.0, d },
        &orders,
    )?;
    println!();
    show(
        "Phi_lambda family, d = 4",
        &Family::PhiLambda { lambda: 0.0, d },
        &orders,
    )?;
    println!("\nThe lambda stored in the family value is ignored by the");
    println!("threshold scan; intervals depend only on d and k.");
    Ok(())
}
