//! Row retrieval: the transaction store, forward-only cursors over it, and
//! the synthetic data generator.

mod cursor;
pub mod file_format;
mod generator;
mod store;

pub use cursor::{
    close_cursor, open_cursor, Batch, Cursor, CursorError, CursorQuery, CursorState, RowGauge, RowSource,
};
pub use generator::{generate, GeneratorSpec, DEFAULT_ACCOUNT, DEFAULT_FROM, DEFAULT_TO, ESCAPE_TRIGGER_PERIOD};
pub use store::{Backing, StoreError, TransactionStore};
