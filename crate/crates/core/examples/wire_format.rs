//! Builds a driving message, dumps its bytes and parses it back.

use facecodec::geometry::EulerPose;
use facecodec::image::BBox;
use facecodec::wire::{deserialize, serialize, Packet, WireMessage, HEADER_LEN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let msg = WireMessage::Driving(Packet {
        frame_index: 7,
        pose: EulerPose::new(10.0, -5.25, 0.0)?.quantize(),
        bbox: BBox::new(100, 120, 256, 256),
        payload: vec![0xAB; 12],
    });
    let bytes = serialize(&msg)?;
    let hex: Vec<String> = bytes.iter().map(|b| format!("{b:02X}")).collect();
    println!("header ({HEADER_LEN} bytes): {}", hex[..HEADER_LEN].join(" "));
    println!(
        "payload ({} bytes): {}",
        bytes.len() - HEADER_LEN,
        hex[HEADER_LEN..].join(" ")
    );
    let back = deserialize(&bytes)?;
    assert_eq!(back, msg);
    println!(
        "round trip ok: {:?} pose {:?}",
        back.kind(),
        back.packet().pose.dequantize()
    );

    let mut corrupt = bytes.clone();
    corrupt[2] = 9;
    println!("corrupted version byte: {}", deserialize(&corrupt).unwrap_err());
    Ok(())
}
