use std::fmt;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    LogisticRegression,
    Mlp,
    CmaEsReliability,
    Fourier,
}

impl AttackKind {
    pub fn label(&self) -> &'static str {
        match self {
            AttackKind::LogisticRegression => "LR",
            AttackKind::Mlp => "MLP",
            AttackKind::CmaEsReliability => "CMA-ES",
            AttackKind::Fourier => "Fourier",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Outcome of one attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub attack: AttackKind,
    pub target: String,
    pub n: usize,
    pub train_crps: usize,
    pub test_crps: usize,
    /// Test challenges also present in the training set; always 0 for a valid run.
    pub overlap: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_seconds: f64,
    pub seed: u64,
    /// Hex digest of the resolved training configuration.
    pub config_digest: String,
    pub converged: bool,
    pub failed: bool,
    pub notes: Vec<String>,
}

pub(crate) fn digest(config: &str) -> String {
    let d = Sha256::digest(config.as_bytes());
    d[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl AttackReport {
    pub const CSV_HEADER: &'static str = "attack,target,n,train_crps,test_crps,overlap,train_accuracy,test_accuracy,wall_seconds,seed,config_digest,converged,failed,notes";

    /// Copy with wall time zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_seconds: 0.0,
            ..self.clone()
        }
    }

    pub fn csv_row(&self) -> String {
        let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.3},{},{},{},{},{}",
            self.attack,
            quote(&self.target),
            self.n,
            self.train_crps,
            self.test_crps,
            self.overlap,
            self.train_accuracy,
            self.test_accuracy,
            self.wall_seconds,
            self.seed,
            self.config_digest,
            self.converged,
            self.failed,
            quote(&self.notes.join("; "))
        )
    }

    /// Multi-line `key: value` record with every field.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "attack: {}", self.attack);
        let _ = writeln!(s, "target: {}", self.target);
        let _ = writeln!(s, "n: {}", self.n);
        let _ = writeln!(s, "train_crps: {}", self.train_crps);
        let _ = writeln!(s, "test_crps: {}", self.test_crps);
        let _ = writeln!(s, "overlap: {}", self.overlap);
        let _ = writeln!(s, "train_accuracy: {:.6}", self.train_accuracy);
        let _ = writeln!(s, "test_accuracy: {:.6}", self.test_accuracy);
        let _ = writeln!(s, "wall_seconds: {:.3}", self.wall_seconds);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "config_digest: {}", self.config_digest);
        let _ = writeln!(s, "converged: {}", self.converged);
        let _ = writeln!(s, "failed: {}", self.failed);
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        s
    }

    /// One line in the layout of a learning-attack results table.
    pub fn table_row(&self) -> String {
        format!(
            "{:<28} {:>5} {:>9} {:<8} {:>8.1}% {:>9.1} s",
            self.target,
            self.n,
            self.train_crps,
            self.attack.label(),
            self.test_accuracy * 100.0,
            self.wall_seconds
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AttackReport {
        AttackReport {
            attack: AttackKind::Fourier,
            target: "NMQ-RO (g=200)".into(),
            n: 32,
            train_crps: 900,
            test_crps: 100,
            overlap: 0,
            train_accuracy: 0.61,
            test_accuracy: 0.5,
            wall_seconds: 1.25,
            seed: 3,
            config_digest: digest("degree=2"),
            converged: true,
            failed: false,
            notes: vec!["a \"quoted\" note".into()],
        }
    }

    #[test]
    fn csv_row_has_one_cell_per_column() {
        let row = sample().csv_row();
        assert!(row.starts_with("Fourier,\"NMQ-RO (g=200)\",32,900,100,0,"));
        assert!(row.ends_with("\"a \"\"quoted\"\" note\""));
        assert_eq!(AttackReport::CSV_HEADER.split(',').count(), 14);
    }

    #[test]
    fn record_lists_every_field() {
        let rec = sample().to_record();
        for key in AttackReport::CSV_HEADER.split(',') {
            let key = if key == "notes" { "note" } else { key };
            assert!(rec.contains(&format!("{key}: ")), "{key}");
        }
    }

    #[test]
    fn digest_is_stable_hex() {
        assert_eq!(digest("x"), digest("x"));
        assert_eq!(digest("x").len(), 16);
        assert_ne!(digest("x"), digest("y"));
    }
}
