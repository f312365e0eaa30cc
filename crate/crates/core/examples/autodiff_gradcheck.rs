//! Runs the finite-difference checks for every graph op and for the whole
//! fusion model.

use beamwork::tensor::gradcheck::run_op_suite;
use beamwork::trainer::end_to_end_gradcheck;

fn main() -> beamwork::Result<()> {
    let mut reports = run_op_suite(0)?;
    reports.push(end_to_end_gradcheck(0)?);
    for r in &reports {
        println!(
            "{:<48} {:.2e} {}",
            r.name,
            r.max_rel_error,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", reports.len());
    Ok(())
}
