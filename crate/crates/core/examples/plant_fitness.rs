//! Simulates the seed controller on the ball-on-plate plant and scores a few
//! others.
//!
//!     cargo run --example plant_fitness

use gabench::plant::{seed_params, simulate_traced, ControllerParams, FitnessModel, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = SimConfig::default();
    let model = FitnessModel::new(sim)?;
    println!(
        "calibration: k = {:.4}, seed fitness = {:.4}",
        model.calibration.scale_k, model.calibration.seed_fitness
    );

    // Every 50th step of the seed controller's episode.
    println!("\n{:>6} {:>9} {:>9} {:>9}", "t", "x", "y", "theta_x");
    let mut k = 0;
    let ise = simulate_traced(&seed_params(), &sim, |s, theta_x, _| {
        k += 1;
        if k % 50 == 0 {
            println!("{:>6.2} {:>9.4} {:>9.4} {:>9.4}", s.t, s.x, s.y, theta_x);
        }
    })?;
    println!("seed ISE = {ise:.6}");

    let candidates = [
        ("zero", ControllerParams::ZERO),
        ("seed", seed_params()),
        ("stiff PD", ControllerParams::from_array([12.0, 0.0, 4.0, 12.0, 0.0, 4.0])),
        ("PID", ControllerParams::from_array([6.0, 0.5, 3.0, 6.0, 0.5, 3.0])),
        ("underdamped", ControllerParams::from_array([20.0, 0.0, 0.2, 20.0, 0.0, 0.2])),
    ];
    println!();
    for (name, p) in candidates {
        println!("{name:>12}: fitness {:>9.3}", model.fitness(&p)?);
    }
    Ok(())
}
