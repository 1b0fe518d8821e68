//! Runs every strategy at both stiffnesses and prints outcome and energy.

use std::time::Instant;

use beamsim_core::controller::{run_strategy, Strategy};
use beamsim_core::experiments::energy_parts;
use beamsim_core::WorldConfig;

fn main() -> beamsim_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let names: Vec<&str> = if args.is_empty() {
        vec!["ff", "ff-limited", "avoid", "force-feedback"]
    } else {
        args.iter().map(String::as_str).collect()
    };
    for name in names {
        for k in [0.01, 0.2] {
            let cfg = WorldConfig::default().with_stiffness(k, k);
            let strategy = Strategy::parse(name, &cfg)?;
            let start = Instant::now();
            let log = run_strategy(&strategy, &cfg, 0)?;
            let parts = energy_parts(&log);
            println!(
                "{name:>15} k={k:<5} {:?} {:?} E={:.1} mJ (Fx {:.1}, T {:.1}) pitch {:.1} roll {:.1} dur {:.2}s Fmax {:.2} k_hat {:?} [{:.1}s]",
                log.outcome,
                log.termination,
                log.energy_mj,
                parts.force_x,
                parts.torque,
                log.max_abs_pitch().to_degrees(),
                log.max_abs_roll().to_degrees(),
                log.rows.len() as f64 * cfg.dt_control,
                log.max_contact_force(),
                log.events.k_estimate,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
