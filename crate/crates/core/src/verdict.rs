//! Structured pass/fail results for property checkers.

use serde::Serialize;

/// Result of a property check. A failing verdict carries a witness that a
/// human (or a test) can inspect; a passing verdict never does.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict<W> {
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<W>,
}

impl<W> Verdict<W> {
    pub fn ok() -> Self {
        Verdict { pass: true, witness: None }
    }

    pub fn fail(witness: W) -> Self {
        Verdict { pass: false, witness: Some(witness) }
    }

    pub fn witness(&self) -> Option<&W> {
        self.witness.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failing_verdicts_carry_their_witness() {
        let v: Verdict<u32> = Verdict::ok();
        assert!(v.pass);
        assert!(v.witness().is_none());

        let v = Verdict::fail(7u32);
        assert!(!v.pass);
        assert_eq!(v.witness(), Some(&7));
    }
}
