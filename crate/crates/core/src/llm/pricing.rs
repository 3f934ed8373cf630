use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::TokenUsage;

/// USD per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_usd_per_million: f64,
    pub output_usd_per_million: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable {
    prices: BTreeMap<String, ModelPrice>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PriceError {
    MissingPrice(String),
    NegativePrice(String),
}

impl fmt::Display for PriceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriceError::MissingPrice(model) => write!(f, "no price known for model {model:?}"),
            PriceError::NegativePrice(model) => write!(f, "negative price for model {model:?}"),
        }
    }
}

impl core::error::Error for PriceError {}

impl PriceTable {
    pub fn new() -> Self {
        PriceTable::default()
    }

    /// List prices of the three reference models, under both their short
    /// names and their dated API identifiers.
    pub fn builtin() -> Self {
        let mut table = PriceTable::new();
        let rows: [(&str, &str, f64, f64); 3] = [
            ("GPT-4.1", "gpt-4.1-2025-04-14", 2.00, 8.00),
            ("DeepSeekV3.1", "deepseek-v3-1-250821", 0.56, 1.68),
            ("Claude-Sonnet-4", "claude-sonnet-4-20250514", 3.00, 15.00),
        ];
        for (short, full, input, output) in rows {
            let price = ModelPrice {
                input_usd_per_million: input,
                output_usd_per_million: output,
            };
            table.prices.insert(String::from(short), price);
            table.prices.insert(String::from(full), price);
        }
        table
    }

    pub fn insert(&mut self, model: impl Into<String>, price: ModelPrice) -> Result<(), PriceError> {
        let model = model.into();
        if !(price.input_usd_per_million >= 0.0 && price.output_usd_per_million >= 0.0) {
            return Err(PriceError::NegativePrice(model));
        }
        self.prices.insert(model, price);
        Ok(())
    }

    pub fn get(&self, model: &str) -> Option<&ModelPrice> {
        self.prices.get(model)
    }

    pub fn merge(&mut self, other: &PriceTable) {
        for (model, price) in &other.prices {
            self.prices.insert(model.clone(), *price);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ModelPrice)> {
        self.prices.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// USD cost of `usage` on `model`.
pub fn cost(usage: TokenUsage, model: &str, prices: &PriceTable) -> Result<f64, PriceError> {
    let price = prices
        .get(model)
        .ok_or_else(|| PriceError::MissingPrice(String::from(model)))?;
    Ok(usage.input_tokens as f64 * price.input_usd_per_million / 1e6
        + usage.output_tokens as f64 * price.output_usd_per_million / 1e6)
}
