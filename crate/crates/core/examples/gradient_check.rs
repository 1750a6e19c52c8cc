//! Finite-difference check of the full network on a twelve-subject graph.

use connfuse::fusion::FusionMode;
use connfuse::harness::GradCheckInstance;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for fusion in FusionMode::ALL {
        let report = GradCheckInstance { fusion, ..GradCheckInstance::default() }.run()?;
        println!(
            "{:<10} {} entries, max relative error {:.2e} at {}{:?}",
            fusion.as_str(),
            report.entries_checked,
            report.max_rel_error,
            report.worst_param,
            report.worst_index
        );
    }
    Ok(())
}
