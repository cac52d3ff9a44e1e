//! PASS/FAIL reporting for the acceptance target. The checks themselves live
//! in `tests/acceptance.rs`; run them with `cargo test -p policygraph-acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Collects one verdict per criterion.
#[derive(Debug, Default)]
pub struct Report {
    failed: Vec<String>,
    total: usize,
}

impl Report {
    /// Runs `check`, printing `PASS name` or `FAIL name: reason`. A panic
    /// counts as a failure with the panic message as the reason.
    pub fn check(&mut self, name: &str, check: impl FnOnce() -> Result<(), String>) {
        self.total += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(()) => println!("PASS {name} ({ms} ms)"),
            Err(reason) => {
                println!("FAIL {name} ({ms} ms): {reason}");
                self.failed.push(name.to_string());
            }
        }
    }

    pub fn failures(&self) -> &[String] {
        &self.failed
    }

    /// Prints the tally; the process should exit non-zero when this is false.
    pub fn finish(&self) -> bool {
        println!("{} of {} criteria passed", self.total - self.failed.len(), self.total);
        self.failed.is_empty()
    }
}

/// Fails with `msg` unless `cond` holds.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}
