//! Cavity-enhanced retrieval-efficiency models.
//!
//! Compares free-space, single-control-mode, and dual-control-mode retrieval
//! over a range of cooperativities, and walks the single→double relation that
//! links the two measured curves.
//!
//! Run with: `cargo run --example efficiency_model`

use dlcz_sim::memory::{
    cavity_factor, double_from_single, double_mode_efficiency, free_space_efficiency,
    single_mode_efficiency, MemoryParams, FINESSE_H,
};

fn main() {
    let finesse = FINESSE_H;
    println!(
        "finesse F = {finesse}  ->  cavity enhancement factor 2F/pi = {:.3}\n",
        cavity_factor(finesse).unwrap()
    );

    println!("{:>8} {:>12} {:>12} {:>12} {:>10}", "C", "free-space", "single-mode", "double-mode", "ratio");
    for c in [0.01, 0.05, 0.1212, 0.3, 1.0, 3.0] {
        let m = MemoryParams::new(finesse, c).unwrap();
        let r_sg = single_mode_efficiency(&m);
        let r_db = double_mode_efficiency(&m);
        println!(
            "{:>8} {:>12.4} {:>12.4} {:>12.4} {:>10.3}",
            c,
            free_space_efficiency(c).unwrap(),
            r_sg,
            r_db,
            r_db / r_sg
        );
    }

    println!("\nsingle-mode -> double-mode relation at F = {finesse}:");
    println!("{:>8} {:>10} {:>10}", "R_sg", "R_db", "R_db/R_sg");
    for r_sg in [0.001, 0.01, 0.1, 0.3, 0.5, 0.77, 0.95] {
        let r_db = double_from_single(r_sg, finesse).unwrap();
        println!("{:>8} {:>10.4} {:>10.4}", r_sg, r_db, r_db / r_sg);
    }
    println!("\nthe ratio climbs from 1/2 (free-space penalty for dual read modes)");
    println!("toward 1 as the cavity enhancement dominates at high efficiency.");

    // the measured operating point: single-mode 0.77 maps onto dual-mode 0.61,
    // consistent with the separately measured 0.58(2)
    let at_measured = double_from_single(0.77, finesse).unwrap();
    println!("\nR_sg = 0.77  ->  R_db = {at_measured:.3}   (measured dual-mode initial: 0.58 ± 0.02)");
}
