//! Exact operation accounting.
//!
//! Every counted kernel takes a `&mut CostLedger` and charges a fixed amount
//! determined only by operand shapes:
//!
//! * multiply (a x b)(b x c): `a*b*c` mul_adds (fused multiply-add units);
//! * add / sub / scale: one elementwise op per entry;
//! * transpose: free;
//! * n x n inverse: exactly `n^3` mul_adds regardless of pivoting detail.
//!
//! Charges are attributed to the current scope label, so per-statement and
//! per-update breakdowns fall out of `set_scope` calls. The ledger totals
//! always equal the sum over labels.

use std::collections::BTreeMap;

/// Counts for one scope label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub mul_adds: u64,
    pub adds: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.mul_adds + self.adds
    }
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            mul_adds: self.mul_adds - rhs.mul_adds,
            adds: self.adds - rhs.adds,
        }
    }
}

impl std::ops::Add for OpCounts {
    type Output = OpCounts;
    fn add(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            mul_adds: self.mul_adds + rhs.mul_adds,
            adds: self.adds + rhs.adds,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CostLedger {
    totals: OpCounts,
    /// Largest single mat_mul charge seen so far; lets tests assert that a
    /// code path never performed a full matrix-matrix product.
    max_single_mul: u64,
    scope: String,
    per_label: BTreeMap<String, OpCounts>,
}

impl CostLedger {
    pub fn new() -> Self {
        CostLedger::default()
    }

    /// Attribute subsequent charges to `label`. The empty label is the default.
    pub fn set_scope(&mut self, label: impl Into<String>) {
        self.scope = label.into();
    }

    pub fn scope(&self) -> &str {
        &self.scope
    }

    pub fn charge_mul_adds(&mut self, n: u64) {
        self.totals.mul_adds += n;
        self.per_label.entry(self.scope.clone()).or_default().mul_adds += n;
    }

    /// Like `charge_mul_adds` but also records the charge as one multiply for
    /// the `max_single_mul` statistic.
    pub fn charge_single_mul(&mut self, n: u64) {
        self.charge_mul_adds(n);
        if n > self.max_single_mul {
            self.max_single_mul = n;
        }
    }

    pub fn charge_adds(&mut self, n: u64) {
        self.totals.adds += n;
        self.per_label.entry(self.scope.clone()).or_default().adds += n;
    }

    pub fn totals(&self) -> OpCounts {
        self.totals
    }

    pub fn mul_adds(&self) -> u64 {
        self.totals.mul_adds
    }

    pub fn adds(&self) -> u64 {
        self.totals.adds
    }

    pub fn max_single_mul(&self) -> u64 {
        self.max_single_mul
    }

    pub fn label_counts(&self, label: &str) -> OpCounts {
        self.per_label.get(label).copied().unwrap_or_default()
    }

    pub fn labels(&self) -> impl Iterator<Item = (&str, OpCounts)> {
        self.per_label.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Sum of counts over labels matching a predicate.
    pub fn counts_where(&self, mut pred: impl FnMut(&str) -> bool) -> OpCounts {
        self.per_label
            .iter()
            .filter(|(k, _)| pred(k))
            .fold(OpCounts::default(), |acc, (_, v)| acc + *v)
    }
}
