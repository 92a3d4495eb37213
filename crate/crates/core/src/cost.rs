//! Token usage and exact cost accounting.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub retries_used: u32,
}

impl Usage {
    pub fn add(&mut self, other: &Usage) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.retries_used += other.retries_used;
    }
}

/// Per-token prices in currency units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Price {
    pub input_cost_per_token: Decimal,
    pub output_cost_per_token: Decimal,
}

impl Price {
    pub fn new(input_cost_per_token: Decimal, output_cost_per_token: Decimal) -> Self {
        Self {
            input_cost_per_token,
            output_cost_per_token,
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.input_cost_per_token.is_sign_negative() && !self.output_cost_per_token.is_sign_negative()
    }
}

pub fn estimate_cost(usage: &Usage, price: &Price) -> Decimal {
    (Decimal::from(usage.input_tokens) * price.input_cost_per_token
        + Decimal::from(usage.output_tokens) * price.output_cost_per_token)
        .normalize()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub agent: String,
    pub round_id: String,
    pub row: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: Decimal,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn total_cost(&self) -> Decimal {
        self.entries
            .iter()
            .map(|e| e.cost)
            .sum::<Decimal>()
            .normalize()
    }

    pub fn total_input_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.input_tokens).sum()
    }

    pub fn total_output_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.output_tokens).sum()
    }

    pub fn cost_by_agent(&self) -> BTreeMap<&str, Decimal> {
        let mut out: BTreeMap<&str, Decimal> = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.agent.as_str()).or_default() += e.cost;
        }
        out.values_mut().for_each(|v| *v = v.normalize());
        out
    }

    pub fn cost_by_round(&self) -> BTreeMap<&str, Decimal> {
        let mut out: BTreeMap<&str, Decimal> = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.round_id.as_str()).or_default() += e.cost;
        }
        out.values_mut().for_each(|v| *v = v.normalize());
        out
    }
}
