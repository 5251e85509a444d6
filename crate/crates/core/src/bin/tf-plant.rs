//! Serve the plant trial protocol on stdin/stdout for a transfer function
//! given as JSON (`{"num": [...], "den": [...], "fs_hz": ...}`).
//!
//! ```text
//! tf-plant <tf.json>
//! tf-plant --inline '<json>'
//! ```

use std::io::{stdin, stdout, BufWriter};
use std::process::ExitCode;

use loopshape::oracle::serve_trials;
use loopshape::RationalTf;

fn load(args: &[String]) -> Result<RationalTf, String> {
    let text = match args {
        [flag, json] if flag == "--inline" => json.clone(),
        [path] => std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?,
        _ => return Err("usage: tf-plant <tf.json> | --inline <json>".into()),
    };
    RationalTf::from_json(&text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tf = match load(&args) {
        Ok(tf) => tf,
        Err(e) => {
            eprintln!("tf-plant: {e}");
            return ExitCode::from(4);
        }
    };
    if !tf.is_proper() {
        eprintln!("tf-plant: transfer function is improper");
        return ExitCode::from(4);
    }
    match serve_trials(&tf, stdin().lock(), BufWriter::new(stdout().lock())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tf-plant: {e}");
            ExitCode::from(3)
        }
    }
}
