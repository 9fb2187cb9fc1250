//! WebAssembly bindings for the browser demo in `www/`. Every export takes
//! and returns JSON strings.

pub mod ops;

use wasm_bindgen::prelude::*;

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Generates an evolving SBM; see [`ops::sbm`].
#[wasm_bindgen(js_name = generateSbm)]
pub fn generate_sbm(config_json: &str) -> Result<String, JsError> {
    js(ops::sbm(config_json))
}

#[wasm_bindgen(js_name = trainAndPredict)]
pub fn train_and_predict(snapfile: &str, request_json: &str) -> Result<String, JsError> {
    js(ops::train_and_predict(snapfile, request_json))
}

#[wasm_bindgen(js_name = scoreRanking)]
pub fn score_ranking(request_json: &str) -> Result<String, JsError> {
    js(ops::score(request_json))
}
