use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};

/// Runs `command` under `sh -c`, writes `payload` to its stdin and collects
/// its stdout lines. The process is killed if it has not closed stdout
/// within `timeout`.
pub(crate) fn run_piped(command: &str, payload: Vec<u8>, timeout: Duration) -> Result<Vec<String>> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| Error::Transport(format!("cannot start `{command}`: {e}")))?;

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let stdout = child.stdout.take().expect("stdout is piped");
    let writer = thread::spawn(move || {
        // A child that exits early closes the pipe; the reader reports it.
        let _ = stdin.write_all(&payload);
    });
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let lines: std::io::Result<Vec<String>> = BufReader::new(stdout).lines().collect();
        let _ = tx.send(lines);
    });

    let lines = match rx.recv_timeout(timeout) {
        Ok(lines) => lines.map_err(|e| Error::Transport(e.to_string()))?,
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Timeout(timeout));
        }
    };
    let _ = writer.join();
    let _ = child.wait();
    Ok(lines)
}
