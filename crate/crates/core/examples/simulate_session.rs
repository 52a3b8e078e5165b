//! Simulates a short yaw sweep and prints the per-frame report.

use facecodec::sim::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = SimConfig::parse(
        "width = 256\nheight = 256\nframes = 24\ntrajectory = sweep(0,30)\nseed = 42\npayload_cap = 126\n",
    )?;
    cfg.save_frames = false;
    let out = simulate(&cfg, None)?;
    print!("{}", out.report.to_csv());
    println!(
        "sources {} / frames {}, bpp {:.6}, mean PSNR {:.2} dB, mean SSIM {:.4}, bitstream {} bytes",
        out.report.source_count(),
        out.report.rows.len(),
        out.report.bpp(),
        out.report.mean_psnr(),
        out.report.mean_ssim(),
        out.bitstream.len()
    );
    Ok(())
}
