//! Desk-scale rejection table: `cargo run --release --example rejection_table -- [sims] [boot]`.

use frcb_core::frcb::Calibration;
use frcb_core::simkit::{rejection_table, SimDesign, SimFunction, SimTest};

fn main() -> frcb_core::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("counts are integers"));
    let sims = args.next().unwrap_or(SimDesign::DEFAULT_SIMS);
    let boot = args.next().unwrap_or(SimDesign::DEFAULT_BOOT);
    let cells = [
        (SimFunction::M1, 250),
        (SimFunction::Flat1, 250),
        (SimFunction::Flat1, 1000),
        (SimFunction::M3, 1000),
        (SimFunction::M4, 1000),
    ];
    let designs: Vec<SimDesign> = cells
        .iter()
        .map(|&(f, n)| SimDesign { n_sims: sims, n_boot: boot, ..SimDesign::new(f, n, 2024) })
        .collect();
    let table = rejection_table(&designs, &[SimTest::Cb, SimTest::Frcb], Calibration::Exceedance)?;
    print!("{}", table.to_pretty());
    Ok(())
}
