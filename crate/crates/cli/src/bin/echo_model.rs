//! Reference child for the external-model line protocol.
//!
//! `lfmc-echo-model <mode> [args]` reads `{"id": n, "inputs": [...]}` lines
//! and answers `{"id": n, "output": y}`. Modes:
//!
//! - `sum`: sum of the inputs
//! - `linear A B`: `A − B·x₁`
//! - `sine A B C`: `A − B·x₁ + C·sin x₁`
//! - `exit CODE`: write to stderr and exit immediately
//! - `wrong-id`: reply with `id + 1`
//! - `garbage`: reply with a line that is not JSON
//! - `sleep MS`: sum of the inputs after a delay
//! - `die-after N`: answer N requests, then exit with code 3

use std::io::{BufRead, Write};

fn arg(args: &[String], i: usize) -> f64 {
    args.get(i)
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("argument {i} must be a number"))
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map_or("sum", String::as_str);
    if mode == "exit" {
        eprintln!("echo model exiting on request");
        std::process::exit(arg(&args, 1) as i32);
    }
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for (served, line) in stdin.lock().lines().enumerate() {
        let line = line.expect("stdin");
        let request: serde_json::Value = serde_json::from_str(&line).expect("request is JSON");
        let id = request["id"].as_u64().expect("id");
        let x: Vec<f64> = request["inputs"]
            .as_array()
            .expect("inputs")
            .iter()
            .map(|v| v.as_f64().expect("number"))
            .collect();
        let reply = match mode {
            "sum" => serde_json::json!({"id": id, "output": x.iter().sum::<f64>()}),
            "linear" => serde_json::json!({"id": id, "output": arg(&args, 1) - arg(&args, 2) * x[0]}),
            "sine" => serde_json::json!({
                "id": id,
                "output": arg(&args, 1) - arg(&args, 2) * x[0] + arg(&args, 3) * x[0].sin()
            }),
            "wrong-id" => serde_json::json!({"id": id + 1, "output": 0.0}),
            "garbage" => {
                writeln!(stdout, "this is not json").expect("stdout");
                stdout.flush().expect("stdout");
                continue;
            }
            "sleep" => {
                std::thread::sleep(std::time::Duration::from_millis(arg(&args, 1) as u64));
                serde_json::json!({"id": id, "output": x.iter().sum::<f64>()})
            }
            "die-after" => {
                if served as f64 >= arg(&args, 1) {
                    eprintln!("echo model giving up after {served} requests");
                    std::process::exit(3);
                }
                serde_json::json!({"id": id, "output": x.iter().sum::<f64>()})
            }
            other => panic!("unknown mode {other}"),
        };
        writeln!(stdout, "{reply}").expect("stdout");
        stdout.flush().expect("stdout");
    }
}
