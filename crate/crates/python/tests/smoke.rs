use std::ffi::CString;

use pyo3::prelude::*;

use conjure_py::conjure_module;

/// Runs `python/smoke_test.py` against the module registered in-process.
#[test]
fn python_smoke_script_passes() {
    pyo3::append_to_inittab!(conjure_module);
    Python::initialize();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../python/smoke_test.py");
    let source = std::fs::read_to_string(path).expect("smoke script present");
    let code = CString::new(source).unwrap();
    Python::attach(|py| {
        let module = PyModule::from_code(py, &code, c"smoke_test.py", c"smoke_test")
            .unwrap_or_else(|e| panic!("loading smoke script: {e}"));
        module
            .getattr("main")
            .and_then(|main| main.call0())
            .unwrap_or_else(|e| panic!("smoke script failed: {e}"));
    });
}
