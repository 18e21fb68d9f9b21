//! Computes the Margulis volume-growth prefactor c(x) at an off-origin
//! basepoint and prints the normalized ball-volume series behind it.

use horolab::flow::ball_volume;
use horolab::measures::margulis_c;
use horolab::{Point, SurfaceMetric};

fn main() -> horolab::Result<()> {
    let metric = SurfaceMetric::hyperbolic();
    let x = Point::new(0.2, -0.1)?;
    let h = 1.0; // volume entropy of the hyperbolic disk

    // h·vol(B_t(x))·e^{-ht} stabilizes to c(x); the estimate carries a
    // Cauchy-gap certificate comparing the last two checkpoints.
    let est = margulis_c(&metric, x, h, 10.0, 64, 1e-3)?;
    println!("c(x) = {:.6}   (Cauchy gap {:.2e})", est.c(), est.cauchy_gap());

    let ts: Vec<f64> = (2..=10).map(f64::from).collect();
    let series = ball_volume(&metric, x, &ts, 64, 1e-3)?;
    for &(t, v) in series.samples() {
        println!("t = {t:>4}   h·vol·e^(-ht) = {:.6}", h * v * (-h * t).exp());
    }
    Ok(())
}
