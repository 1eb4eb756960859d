use pyo3::prelude::*;
use pyo3::types::PyModule;

/// Registers the module under its import name and runs `code` against it.
fn run_python(code: &std::ffi::CStr) {
    Python::attach(|py| {
        let m = PyModule::new(py, "adapted_ot").unwrap();
        adapted_ot_py::register(&m).unwrap();
        py.import("sys").unwrap().getattr("modules").unwrap().set_item("adapted_ot", &m).unwrap();
        if let Err(e) = py.run(code, None, None) {
            e.print(py);
            panic!("python check failed");
        }
    });
}

#[test]
fn lattice_round_trip_and_distance() {
    run_python(
        c"
import adapted_ot as ao
lx = ao.Lattice.build('kind=ou,theta=1', '1', n_steps=4)
assert lx.n_stages == 4
assert lx.fosd_certified()
ly = ao.Lattice.from_json(lx.to_json())
assert ao.aw_distance(lx, ly, p=2.0, scaled=True) == 0.0
lz = ao.Lattice.build('0', '0.5', n_steps=4)
d = ao.aw_distance(lx, lz, 2.0, True)
assert abs(d - ao.kr_cost(lx, lz, 2.0, True)) < 1e-9, d
mean, var = lx.moments(4)
assert abs(mean) < 1e-12 and var > 0
assert abs(sum(lx.marginals()[2]) - 1.0) < 1e-12
",
    );
}

#[test]
fn tree_metrics() {
    run_python(
        c"
import adapted_ot as ao
mu = [[0.5, 1.0], [-0.5, -1.0]]
nu = [[0.0, 1.0], [0.0, -1.0]]
m = ao.metrics(mu, nu, 2.0)
assert abs(m['adapted'] - 2.25) < 1e-10
assert abs(m['wasserstein'] - 0.25) < 1e-10
assert abs(ao.transport_lp(mu, nu, 2.0, 'causal') - 0.25) < 1e-10
try:
    ao.transport_lp(mu, nu, 2.0, 'sideways')
    raise AssertionError('mode accepted')
except ValueError:
    pass
",
    );
}

#[test]
fn experiments_and_errors() {
    run_python(
        c"
import adapted_ot as ao
assert 'drift-gap' in ao.preset_names()
assert abs(ao.closed_form('drift-gap') - 1.0 / 3.0) < 1e-15
assert ao.closed_form('abs-drift') is None
est, se = ao.sync_distance('drift-gap', n_steps=8, samples=200)
assert abs(est - 1.0 / 3.0) < 1e-9
(s, _), (a, _) = ao.counterexample(samples=500, n_steps=20)
assert a < s
rows = ao.convergence('drift-gap', [2, 4])
assert [r[0] for r in rows] == [2, 4]
paths = ao.simulate('kind=ou,theta=1', '1', n_steps=4, samples=3)
assert len(paths) == 3 and all(len(p) == 5 for p in paths)
try:
    ao.simulate('kind=affine,a=1,slope=1000', '1', n_steps=8, scheme='em')
    raise AssertionError('divergence not reported')
except RuntimeError:
    pass
try:
    ao.Lattice.build('kind=nope', '1')
    raise AssertionError('bad spec accepted')
except ValueError:
    pass
r = ao.selftest(quick=True, only=[3])
assert r[0][0] == 3 and r[0][2]
",
    );
}
