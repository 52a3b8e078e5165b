//! Reruns a short session under a ladder of per-message byte budgets.

use facecodec::sim::{budget_sweep, parse_budgets, sweep_csv, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = SimConfig::parse("width = 256\nheight = 256\nframes = 12\ntrajectory = sweep(-10,10)\n")?;
    cfg.save_frames = false;
    let rows = budget_sweep(&cfg, &parse_budgets("unlimited,1000,400,150")?)?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
