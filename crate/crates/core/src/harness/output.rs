//! CSV persistence. Floats use Rust's shortest round-trip formatting, so a
//! rerun with the same config reproduces the file byte for byte.

use std::fmt::Display;
use std::io::{self, Write};

use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Mode};
use super::sandwich::SandwichReport;
use super::CurveRecord;

/// SHA-256 of `"blob <len>\0" + canonical config`, in hex.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let text = config.canonical();
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn header<W: Write>(w: &mut W, kind: &str, config: &ExperimentConfig) -> io::Result<()> {
    writeln!(w, "# bvm {kind}")?;
    writeln!(w, "# config-hash sha256:{}", config_hash(config))?;
    for line in config.canonical().lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

pub fn write_curve_csv<W: Write>(w: &mut W, config: &ExperimentConfig, records: &[CurveRecord]) -> io::Result<()> {
    header(w, "curve", config)?;
    if config.mode == Some(Mode::Range) {
        writeln!(w, "t,mean,stderr,mean_range,local_exponent")?;
        for r in records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.t,
                r.estimate,
                r.stderr,
                opt(r.mean_range),
                opt(r.local_exponent)
            )?;
        }
        return Ok(());
    }
    writeln!(w, "t,estimate,stderr,lower,lower_stderr,upper,upper_stderr,mean_range,audit")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            r.estimate,
            r.stderr,
            opt(r.lower),
            opt(r.lower_stderr),
            opt(r.upper),
            opt(r.upper_stderr),
            opt(r.mean_range),
            opt(r.audit.map(|a| if a { "ok" } else { "violated" }))
        )?;
    }
    Ok(())
}

pub fn write_sandwich_csv<W: Write>(w: &mut W, config: &ExperimentConfig, report: &SandwichReport) -> io::Result<()> {
    header(w, "sandwich", config)?;
    writeln!(w, "# target-gamma {}", report.target_gamma)?;
    writeln!(w, "# window {}:{}", report.window.0, report.window.1)?;
    writeln!(w, "# upper-hypothesis {}", report.upper_hypothesis)?;
    writeln!(w, "# lower-hypothesis {}", report.lower_hypothesis)?;
    for (name, fit) in [
        ("lower", &report.lower_fit),
        ("estimate", &report.estimate_fit),
        ("upper", &report.upper_fit),
    ] {
        match fit {
            Ok(f) => writeln!(w, "# fit {name} gamma={} ci={} points={}", f.gamma, f.ci_halfwidth, f.points)?,
            Err(e) => writeln!(w, "# fit {name} unavailable: {e}")?,
        }
    }
    writeln!(w, "# ordering {}", if report.ordering_ok { "ok" } else { "violated" })?;
    writeln!(w, "# bracket {}", opt(report.bracket_ok))?;
    for note in &report.notes {
        writeln!(w, "# note {note}")?;
    }
    writeln!(w, "t,lower,estimate,upper,stderr,lower_stderr,upper_stderr,mean_range,audit")?;
    for r in &report.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            opt(r.lower),
            r.estimate,
            opt(r.upper),
            r.stderr,
            opt(r.lower_stderr),
            opt(r.upper_stderr),
            opt(r.mean_range),
            opt(r.audit.map(|a| if a { "ok" } else { "violated" }))
        )?;
    }
    Ok(())
}
