//! Base codec backed by external encoder/decoder commands.
//!
//! The encoder command receives a raw frame (`FAIVRAW1` layout) on stdin and
//! writes the compressed payload to stdout; the decoder command does the
//! reverse. The token `{quality}` in the encoder command line is replaced by
//! the tier number.

use std::io::Write;
use std::process::{Command, Stdio};

use super::{BaseCodec, CodecError, Quality};
use crate::image::io::{decode_raw, encode_raw};
use crate::image::Frame;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCodec {
    encoder: Vec<String>,
    decoder: Vec<String>,
}

impl ExternalCodec {
    /// Command lines are split on whitespace; the first word is the program.
    pub fn new(encoder: &str, decoder: &str) -> Result<Self, CodecError> {
        let split = |s: &str| s.split_whitespace().map(str::to_owned).collect::<Vec<_>>();
        let (encoder, decoder) = (split(encoder), split(decoder));
        if encoder.is_empty() || decoder.is_empty() {
            return Err(CodecError::External("empty command".into()));
        }
        Ok(ExternalCodec { encoder, decoder })
    }

    fn run(argv: &[String], input: &[u8]) -> Result<Vec<u8>, CodecError> {
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| CodecError::External(format!("{}: {e}", argv[0])))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let data = input.to_vec();
        // feed stdin from a thread so a child that writes before reading cannot deadlock
        let feeder = std::thread::spawn(move || stdin.write_all(&data));
        let out = child
            .wait_with_output()
            .map_err(|e| CodecError::External(format!("{}: {e}", argv[0])))?;
        feeder
            .join()
            .map_err(|_| CodecError::External("stdin writer panicked".into()))?
            .map_err(|e| CodecError::External(format!("{}: stdin: {e}", argv[0])))?;
        if !out.status.success() {
            return Err(CodecError::External(format!(
                "{} exited with {}: {}",
                argv[0],
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(out.stdout)
    }
}

impl BaseCodec for ExternalCodec {
    fn name(&self) -> &str {
        "external"
    }

    fn encode(&self, frame: &Frame, quality: Quality) -> Result<Vec<u8>, CodecError> {
        let argv: Vec<String> = self
            .encoder
            .iter()
            .map(|a| a.replace("{quality}", &quality.get().to_string()))
            .collect();
        Self::run(&argv, &encode_raw(frame))
    }

    fn decode(&self, bytes: &[u8]) -> Result<Frame, CodecError> {
        let raw = Self::run(&self.decoder, bytes)?;
        Ok(decode_raw(&raw)?)
    }
}
