//! Core value types shared by every stage of an export: amounts, instants,
//! stored rows, the normalized export record, and request validation.

mod money;
mod record;
mod request;
mod time;

pub use money::{render_money, Money, ParseMoneyError, MONEY_SCALE};
pub use record::{
    is_valid_account_id, is_valid_description, is_valid_txn_id, map_record, ExportRecord, RecordError,
    TransactionRecord, TxnType, CURRENCY, MAX_ACCOUNT_ID_LEN, MAX_DESCRIPTION_LEN, MAX_TXN_ID_LEN,
};
pub use request::{
    is_valid_correlation_id, new_correlation_id, validate_request, ExportFormat, ExportRequest, FieldError,
    RequestValidator, UnknownFormat, ValidationError, DEFAULT_FETCH_SIZE, MAX_FETCH_SIZE,
};
pub use time::{Timestamp, TimestampError};
