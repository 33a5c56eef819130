//! Command-line front end: problem files in, certificates out.

pub mod commands;
pub mod report;
pub mod repro;

/// Reads `CONESTAB_SEED`; unset means 0.
pub fn seed_from_env() -> Result<u64, commands::InputError> {
    match std::env::var("CONESTAB_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| {
            commands::InputError(format!("CONESTAB_SEED: not an unsigned integer: '{s}'"))
        }),
        Err(_) => Ok(0),
    }
}
