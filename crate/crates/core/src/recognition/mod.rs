//! OCR-based recognition scoring: edit distances, exact match, CER/WER and
//! character precision/recall from the edit alignment.

mod adapter;
mod edit;
mod report;

pub use adapter::{run_ocr_eval, CommandOcr, OcrAdapter, OcrSample};
pub use edit::{align, edit_distance, l_similarity, levenshtein, Alignment};
pub use report::{evaluate_plates, PlateResult, RecognitionReport};
