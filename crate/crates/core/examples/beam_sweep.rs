//! Sweeps a 64-beam DFT codebook over a two-path channel and prints the
//! strongest beams with their rates.

use beamwork::beamcore::{build_dft_codebook, link_metrics, oracle_beam, steering_vector, sweep_powers, ComplexVec};
use num_complex::Complex64;

fn main() -> beamwork::Result<()> {
    let codebook = build_dft_codebook(16, 64)?;
    let los = steering_vector(16, 20f64.to_radians())?;
    let reflection = steering_vector(16, (-35f64).to_radians())?.scaled(Complex64::from_polar(0.4, 1.1));
    let channel = ComplexVec::new(
        los.as_slice()
            .iter()
            .zip(reflection.as_slice())
            .map(|(a, b)| a + b)
            .collect(),
    )?;

    let noise_var = 0.01;
    let clean = sweep_powers(&channel, &codebook, 0.0, 0)?;
    let noisy = sweep_powers(&channel, &codebook, noise_var, 7)?;
    let best = oracle_beam(&clean)?;
    println!(
        "oracle beam {best} at {:.1} deg (LoS at 20.0 deg)",
        codebook.beam_angle(best).to_degrees()
    );

    let mut order: Vec<usize> = (0..64).collect();
    order.sort_by(|&a, &b| clean.as_slice()[b].total_cmp(&clean.as_slice()[a]));
    println!("beam  angle(deg)   power   noisy power  rate(b/s/Hz)");
    for &i in order.iter().take(6) {
        let p = clean.as_slice()[i];
        println!(
            "{i:>4}  {:>9.1}  {p:>7.3}  {:>11.3}  {:>11.3}",
            codebook.beam_angle(i).to_degrees(),
            noisy.as_slice()[i],
            link_metrics(p, noise_var)?.rate
        );
    }
    println!("noisy sweep picks beam {}", oracle_beam(&noisy)?);
    Ok(())
}
