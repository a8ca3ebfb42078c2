use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Money, Timestamp};

pub const MAX_TXN_ID_LEN: usize = 64;
pub const MAX_ACCOUNT_ID_LEN: usize = 64;
pub const MAX_DESCRIPTION_LEN: usize = 255;

/// The only currency this crate exports.
pub const CURRENCY: &str = "USD";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TxnType {
    Debit,
    Credit,
}

impl TxnType {
    pub fn for_amount(amount: Money) -> Self {
        if amount.is_negative() {
            TxnType::Debit
        } else {
            TxnType::Credit
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TxnType::Debit => "DEBIT",
            TxnType::Credit => "CREDIT",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            TxnType::Debit => 0,
            TxnType::Credit => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TxnType::Debit),
            1 => Some(TxnType::Credit),
            _ => None,
        }
    }
}

impl fmt::Display for TxnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("txn_id must be 1..=64 characters of [A-Za-z0-9-], got {0:?}")]
    TxnId(String),
    #[error("account_id must be 1..=64 characters of [A-Za-z0-9._-], got {0:?}")]
    AccountId(String),
    #[error("description longer than 255 characters or containing non-printable characters")]
    Description,
    #[error("txn_type {declared} contradicts amount {amount}")]
    TypeMismatch { declared: TxnType, amount: Money },
}

pub fn is_valid_txn_id(s: &str) -> bool {
    (1..=MAX_TXN_ID_LEN).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

pub fn is_valid_account_id(s: &str) -> bool {
    (1..=MAX_ACCOUNT_ID_LEN).contains(&s.len())
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

/// Printable ASCII plus tab, CR and LF.
pub fn is_valid_description(s: &str) -> bool {
    s.len() <= MAX_DESCRIPTION_LEN && s.bytes().all(|b| matches!(b, 0x20..=0x7e | b'\t' | b'\n' | b'\r'))
}

/// A stored transaction row. Construction enforces every field rule, and the
/// transaction type is always derived from the sign of the amount.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransactionRecord {
    txn_id: String,
    account_id: String,
    posted_at: Timestamp,
    amount: Money,
    txn_type: TxnType,
    description: String,
}

impl TransactionRecord {
    pub fn new(
        txn_id: impl Into<String>,
        account_id: impl Into<String>,
        posted_at: Timestamp,
        amount: Money,
        description: impl Into<String>,
    ) -> Result<Self, RecordError> {
        let txn_id = txn_id.into();
        let account_id = account_id.into();
        let description = description.into();
        if !is_valid_txn_id(&txn_id) {
            return Err(RecordError::TxnId(txn_id));
        }
        if !is_valid_account_id(&account_id) {
            return Err(RecordError::AccountId(account_id));
        }
        if !is_valid_description(&description) {
            return Err(RecordError::Description);
        }
        Ok(Self { txn_id, account_id, posted_at, amount, txn_type: TxnType::for_amount(amount), description })
    }

    /// Like [`TransactionRecord::new`] but also checks a stored type code
    /// against the amount sign.
    pub fn with_declared_type(
        txn_id: impl Into<String>,
        account_id: impl Into<String>,
        posted_at: Timestamp,
        amount: Money,
        declared: TxnType,
        description: impl Into<String>,
    ) -> Result<Self, RecordError> {
        if declared != TxnType::for_amount(amount) {
            return Err(RecordError::TypeMismatch { declared, amount });
        }
        Self::new(txn_id, account_id, posted_at, amount, description)
    }

    pub fn txn_id(&self) -> &str {
        &self.txn_id
    }
    pub fn account_id(&self) -> &str {
        &self.account_id
    }
    pub fn posted_at(&self) -> Timestamp {
        self.posted_at
    }
    pub fn amount(&self) -> Money {
        self.amount
    }
    pub fn txn_type(&self) -> TxnType {
        self.txn_type
    }
    pub fn description(&self) -> &str {
        &self.description
    }

    /// Store ordering key.
    pub fn sort_key(&self) -> (Timestamp, &str) {
        (self.posted_at, &self.txn_id)
    }
}

/// Normalized record consumed by every serializer. Borrows from the row it
/// was mapped from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportRecord<'a> {
    pub txn_id: &'a str,
    pub account_id: &'a str,
    pub posted_at: Timestamp,
    pub amount: Money,
    pub txn_type: TxnType,
    pub description: &'a str,
    pub currency: &'static str,
}

/// The record-map stage.
pub fn map_record(row: &TransactionRecord) -> ExportRecord<'_> {
    ExportRecord {
        txn_id: &row.txn_id,
        account_id: &row.account_id,
        posted_at: row.posted_at,
        amount: row.amount,
        txn_type: row.txn_type,
        description: &row.description,
        currency: CURRENCY,
    }
}
