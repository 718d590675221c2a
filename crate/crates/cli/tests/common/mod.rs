#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plc_lab::audio_io::write_wav;
use plc_lab::trace_model::{write_trace, PacketTrace};
use plc_lab::Waveform;

pub fn plc_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plc-lab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn plc-lab")
}

pub fn tone(packets: usize, freq: f64, amp: f64) -> Waveform {
    let n = packets * 512 + 100;
    Waveform::new(
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 44_100.0).sin())
            .collect(),
        44_100,
    )
}

pub fn write_tone(path: &Path, packets: usize, freq: f64) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    write_wav(&tone(packets, freq, 0.5), path).unwrap();
}

pub fn write_digits(path: &Path, digits: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    write_trace(&digits.parse::<PacketTrace>().unwrap(), path).unwrap();
}

/// Reference, anchor and four system directories holding 12 clips each.
pub fn stimuli(root: &Path) -> (PathBuf, PathBuf, Vec<String>) {
    let reference = root.join("ref");
    let anchor = root.join("anchor");
    let mut systems = Vec::new();
    for (k, name) in ["ar", "repeat", "teamA", "teamB"].iter().enumerate() {
        let dir = root.join(name);
        for c in 0..12 {
            write_tone(&dir.join(format!("clip{c:02}.wav")), 4, 200.0 + k as f64);
        }
        systems.push(format!("{name}={}", dir.display()));
    }
    for c in 0..12 {
        write_tone(&reference.join(format!("clip{c:02}.wav")), 4, 200.0);
        write_tone(&anchor.join(format!("clip{c:02}.wav")), 4, 100.0);
    }
    (reference, anchor, systems)
}
