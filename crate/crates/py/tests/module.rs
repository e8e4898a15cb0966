use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(&Bound<'_, PyModule>)>(f: F) {
    Python::attach(|py| {
        let m = PyModule::new(py, "fedgcn").unwrap();
        fedgcn::register(&m).unwrap();
        f(&m);
    });
}

#[test]
fn graph_and_partition_round_trip() {
    with_module(|m| {
        let py = m.py();
        let kwargs = PyDict::new(py);
        kwargs.set_item("seed", 4).unwrap();
        let g = m
            .getattr("Graph")
            .unwrap()
            .call_method("sbm", (120, 3, 0.1, 0.2, 5), Some(&kwargs))
            .unwrap();
        let n: usize = g.getattr("num_nodes").unwrap().extract().unwrap();
        assert_eq!(n, 120);
        let labels: Vec<usize> = g.call_method0("labels").unwrap().extract().unwrap();
        let part: Vec<usize> = g
            .call_method1("partition", (3, 0.0, 1))
            .unwrap()
            .extract()
            .unwrap();
        assert!(part.iter().zip(&labels).all(|(a, y)| *a == y % 3));
    });
}

#[test]
fn errors_become_value_errors() {
    with_module(|m| {
        let err = m
            .getattr("unpack_bits")
            .unwrap()
            .call1((vec![0u64], 65usize))
            .unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(m.py()));
        assert!(err.to_string().contains("bounds"));
        let bytes: u64 = m
            .getattr("ciphertext_bytes")
            .unwrap()
            .call1((1000u64,))
            .unwrap()
            .extract()
            .unwrap();
        assert_eq!(bytes, 398_000);
    });
}
