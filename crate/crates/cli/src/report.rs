use std::fmt::Write as _;

use conestab::{Certificate, Tol, Verdict};
use serde::{Deserialize, Serialize};

/// One decision in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub certificate: Certificate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Verdict>,
}

impl Entry {
    pub fn new(name: &str, certificate: Certificate) -> Entry {
        Entry {
            name: name.to_string(),
            certificate,
            expected: None,
        }
    }

    pub fn expect(mut self, v: Verdict) -> Entry {
        self.expected = Some(v);
        self
    }

    pub fn matches(&self) -> bool {
        self.expected
            .map_or(true, |e| e == self.certificate.verdict)
    }
}

/// A scalar result, optionally compared against a reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
}

impl Measurement {
    pub fn matches(&self) -> bool {
        match (self.expected, self.abs_tol) {
            (Some(e), Some(t)) => (self.value - e).abs() <= t,
            (Some(e), None) => self.value == e,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub subject: String,
    pub tol: Tol,
    pub entries: Vec<Entry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measurements: Vec<Measurement>,
    /// Hypotheses taken for granted by the certificates.
    pub assumed: Vec<String>,
    /// Hypotheses verified along the way.
    pub checked: Vec<String>,
}

impl Report {
    pub fn new(command: &str, subject: &str, tol: &Tol) -> Report {
        Report {
            command: command.to_string(),
            subject: subject.to_string(),
            tol: *tol,
            entries: Vec::new(),
            measurements: Vec::new(),
            assumed: Vec::new(),
            checked: Vec::new(),
        }
    }

    pub fn push(&mut self, e: Entry) {
        for n in &e.certificate.notes {
            let (list, rest) = if let Some(r) = n.strip_prefix("assumed: ") {
                (&mut self.assumed, r)
            } else if let Some(r) = n.strip_prefix("checked: ") {
                (&mut self.checked, r)
            } else {
                continue;
            };
            if !list.iter().any(|x| x == rest) {
                list.push(rest.to_string());
            }
        }
        self.entries.push(e);
    }

    pub fn measure(&mut self, name: &str, value: f64, expected: Option<f64>, abs_tol: Option<f64>) {
        self.measurements.push(Measurement {
            name: name.to_string(),
            value,
            expected,
            abs_tol,
        });
    }

    pub fn all_match(&self) -> bool {
        self.entries.iter().all(Entry::matches)
            && self.measurements.iter().all(Measurement::matches)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Report> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} (membership tol {:e})",
            self.command, self.subject, self.tol.membership
        );
        for e in &self.entries {
            let c = &e.certificate;
            let verdict = format!("{:?}", c.verdict).to_lowercase();
            let _ = write!(
                s,
                "  {:<28} {:<12} residual {:.3e}",
                e.name, verdict, c.residual
            );
            if let Some(x) = e.expected {
                let tag = if e.matches() { "ok" } else { "MISMATCH" };
                let _ = write!(s, "  [expected {}: {tag}]", format!("{x:?}").to_lowercase());
            }
            let _ = writeln!(s);
            let _ = writeln!(s, "      method: {}", c.method);
            if let Some(w) = &c.witness {
                let parts: Vec<String> = w.iter().map(|v| format!("{v:.6}")).collect();
                let _ = writeln!(s, "      witness: [{}]", parts.join(", "));
            }
            for n in c
                .notes
                .iter()
                .filter(|n| !n.starts_with("assumed: ") && !n.starts_with("checked: "))
            {
                let _ = writeln!(s, "      note: {n}");
            }
        }
        for m in &self.measurements {
            let _ = write!(s, "  {:<28} {:.12e}", m.name, m.value);
            if let Some(x) = m.expected {
                let tag = if m.matches() { "ok" } else { "MISMATCH" };
                let _ = write!(s, "  [expected {x:.12e}: {tag}]");
            }
            let _ = writeln!(s);
        }
        if !self.checked.is_empty() {
            let _ = writeln!(s, "checked:");
            for h in &self.checked {
                let _ = writeln!(s, "  - {h}");
            }
        }
        if !self.assumed.is_empty() {
            let _ = writeln!(s, "assumed:");
            for h in &self.assumed {
                let _ = writeln!(s, "  - {h}");
            }
        }
        s
    }
}
