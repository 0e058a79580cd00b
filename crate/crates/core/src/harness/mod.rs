//! Log ingestion and the leave-one-day-out evaluation protocol.

mod lodo;
mod native;
mod report;
mod yandex;

pub use lodo::{
    evaluate, evaluate_splits, inverse_rank, leave_one_day_out, m_sweep, prepare_splits, DayResult, DaySlicedLog,
    Reference, Split,
};
pub use native::{parse_native, parse_native_str, to_native_string, write_native};
pub use report::{rmse, rmse_multi_query, EvaluationReport, SweepRow, SweepTable};
pub use yandex::{parse_yandex, parse_yandex_reader, YandexStats};
